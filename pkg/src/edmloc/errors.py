"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Argument fails a shape, finiteness, or value precondition."""


class DegenerateGeometry(RuntimeError):
    """Eigenstructure is incompatible with a realizable point set."""


class InfeasibleCombination(RuntimeError):
    """A candidate-TDOA combination admits no physically valid distance."""


class InfeasibleScenario(RuntimeError):
    """Scenario sampling exhausted its retry budget."""
