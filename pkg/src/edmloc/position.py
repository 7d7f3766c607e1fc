"""EDM-based source position estimation.

For every combination of candidate TDOAs, the unknown source-to-reference
distance is the single free variable of a source-augmented EDM; the cost is
the absolute eigenvalue mass of its Gram matrix beyond the ambient
dimension, which vanishes exactly when the distances are realizable. A grid
search with parabolic refinement per combination, followed by selection of
the lowest minima subject to a combination-diversity rule, yields one
reconstructed position per source via Procrustes alignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateGeometry, InfeasibleCombination, InvalidInput
from .geometry import (
    Edm,
    GramEval,
    MicArray,
    RANK_TOL,
    absolute_position_from_relative,
    edm_to_gram,
    eigendecompose_sym,
    procrustes,
    reconstruct_relative_positions,
    source_centering_vector,
)
from .signals import StftConfig, gcc_phat, stft_multichannel
from .tdoa import (
    CandidateSet,
    combination_overlap,
    enumerate_combinations,
    select_reference_mic,
)

SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class DistanceGrid:
    """Search grid for the source-to-reference distance, in meters."""

    min: float = 0.0
    max: float = 6.0
    step: float = 0.01

    def __post_init__(self):
        if self.min < 0.0 or self.max <= self.min or self.step <= 0.0:
            raise InvalidInput("require 0 <= min < max and step > 0")

    def points(self) -> np.ndarray:
        n = int(round((self.max - self.min) / self.step)) + 1
        return self.min + self.step * np.arange(n)


def min_feasible_distance(tdoas, nu: float = SPEED_OF_SOUND) -> float:
    """Smallest reference distance keeping every implied distance >= 0."""
    tau = np.asarray(tdoas, dtype=float)
    return max(0.0, -nu * float(tau.min()))


def source_edm(array: MicArray, ref_distance: float, tdoas, nu: float = SPEED_OF_SOUND) -> Edm:
    """EDM of the microphones plus one source at the given reference distance.

    The source block uses d_m = ref_distance + nu * tdoa_m, so the
    reference microphone entry equals ref_distance itself.
    """
    tau = np.asarray(tdoas, dtype=float)
    if tau.shape != (array.count,):
        raise InvalidInput("tdoas must have one entry per microphone")
    d = ref_distance + nu * tau
    if d.min() < -1e-12:
        raise InfeasibleCombination(
            f"ref_distance {ref_distance:.4f} implies a negative source distance"
        )
    m = array.count
    out = np.zeros((m + 1, m + 1))
    out[:m, :m] = array.edm().matrix
    out[:m, m] = d**2
    out[m, :m] = d**2
    return Edm(matrix=out)


def _cost_curve(array: MicArray, tdoas, distances: np.ndarray, nu: float) -> np.ndarray:
    """Vectorized rank-excess cost over a vector of reference distances."""
    tau = np.asarray(tdoas, dtype=float)
    m = array.count
    d = distances[:, None] + nu * tau[None, :]
    dsq = d**2
    edm = np.zeros((distances.size, m + 1, m + 1))
    edm[:, :m, :m] = array.edm().matrix
    edm[:, :m, m] = dsq
    edm[:, m, :m] = dsq
    a = source_centering_vector(m)
    left = np.eye(m + 1) - np.outer(np.ones(m + 1), a)
    gram = -0.5 * (left @ edm @ left.T)
    gram = 0.5 * (gram + gram.transpose(0, 2, 1))
    eig = np.linalg.eigvalsh(gram)  # ascending
    return np.abs(eig[:, : m + 1 - array.dim]).sum(axis=1)


def position_cost(array: MicArray, ref_distance: float, tdoas, nu: float = SPEED_OF_SOUND) -> float:
    """Absolute eigenvalue mass of the source Gram beyond the ambient dim.

    Zero exactly when ref_distance and the TDOAs describe a realizable
    source location for this array.
    """
    if ref_distance < min_feasible_distance(tdoas, nu) - 1e-12:
        raise InfeasibleCombination("ref_distance below the feasible minimum")
    return float(_cost_curve(array, tdoas, np.array([ref_distance]), nu)[0])


def minimize_ref_distance(
    array: MicArray,
    tdoas,
    grid: DistanceGrid = DistanceGrid(),
    nu: float = SPEED_OF_SOUND,
) -> tuple[float, float]:
    """Grid-search the cost over feasible distances and refine the minimum.

    The vertex of a parabola through the best grid sample and its two
    neighbors is clamped to the bracketing interval; the returned cost is
    re-evaluated at the refined distance, never interpolated.
    """
    lo = min_feasible_distance(tdoas, nu)
    pts = grid.points()
    pts = pts[pts >= lo - 1e-12]
    if pts.size == 0:
        raise InfeasibleCombination("no feasible grid point for this combination")
    costs = _cost_curve(array, tdoas, pts, nu)
    i = int(np.argmin(costs))
    if 0 < i < pts.size - 1:
        y0, y1, y2 = costs[i - 1], costs[i], costs[i + 1]
        denom = y0 - 2.0 * y1 + y2
        delta = 0.0 if denom <= 0.0 else float(np.clip(0.5 * (y0 - y2) / denom, -1.0, 1.0))
        refined = float(np.clip(pts[i] + delta * grid.step, max(lo, pts[i] - grid.step), pts[i] + grid.step))
        cost = float(_cost_curve(array, tdoas, np.array([refined]), nu)[0])
        if cost <= costs[i]:
            return refined, cost
    return float(pts[i]), float(costs[i])


@dataclass
class PositionEstimate:
    """One estimated source position with its supporting evidence."""

    position: np.ndarray
    ref_distance: float
    combination: tuple[int, ...]
    cost: float
    gram_eval: GramEval
    degenerate: bool = False


@dataclass
class EstimateBatch:
    """Estimates in selection order; shortfall marks fewer than requested."""

    estimates: list
    shortfall: bool = False


def _admissible(combination, selected, max_overlap: int) -> bool:
    return all(combination_overlap(combination, s) <= max_overlap for s in selected)


def _reconstruct_position(array, tau, ref_distance, cost, nu):
    edm = source_edm(array, ref_distance, tau, nu)
    ev = eigendecompose_sym(edm_to_gram(edm, source_centering_vector(array.count)))
    ev.cost = cost
    top = ev.eigenvalues[: array.dim]
    degenerate = bool(top[-1] < RANK_TOL * max(top[0], 0.0))
    rel = reconstruct_relative_positions(ev, array.dim)
    pmap = procrustes(rel[:, : array.count], array.positions)
    pos = absolute_position_from_relative(rel, pmap) + array.centroid
    return pos, ev, degenerate


def estimate_positions(
    array: MicArray,
    cset: CandidateSet,
    sources: int = 1,
    grid: DistanceGrid = DistanceGrid(),
    nu: float = SPEED_OF_SOUND,
    min_combination_diff: int | None = None,
) -> EstimateBatch:
    """Estimate positions for `sources` sources from a candidate set.

    Every combination is minimized over the distance grid; minima are
    ranked ascending and combinations are selected greedily, requiring at
    least `min_combination_diff` differing candidate picks (default: two
    fewer than the microphone count) against every prior selection.
    Combinations whose Gram cannot be realized are skipped. Positions are
    returned in the coordinate frame of the array input.
    """
    if sources < 1:
        raise InvalidInput("sources must be >= 1")
    if min_combination_diff is None:
        min_combination_diff = array.count - 2
    max_overlap = (array.count - 1) - min_combination_diff

    combos = list(enumerate_combinations(cset))
    costs = np.full(len(combos), np.inf)
    dists = np.full(len(combos), np.nan)
    for k, comb in enumerate(combos):
        tau = cset.tau_vector(comb)
        try:
            dists[k], costs[k] = minimize_ref_distance(array, tau, grid, nu)
        except InfeasibleCombination:
            continue

    order = np.argsort(costs, kind="stable")
    estimates: list[PositionEstimate] = []
    chosen: list[tuple[int, ...]] = []
    for k in order:
        if len(estimates) >= sources:
            break
        if not np.isfinite(costs[k]):
            break
        comb = combos[k]
        if not _admissible(comb, chosen, max_overlap):
            continue
        tau = cset.tau_vector(comb)
        try:
            pos, ev, degenerate = _reconstruct_position(array, tau, dists[k], costs[k], nu)
        except DegenerateGeometry:
            continue
        estimates.append(
            PositionEstimate(
                position=pos,
                ref_distance=float(dists[k]),
                combination=comb,
                cost=float(costs[k]),
                gram_eval=ev,
                degenerate=degenerate,
            )
        )
        chosen.append(comb)
    return EstimateBatch(estimates=estimates, shortfall=len(estimates) < sources)


@dataclass(frozen=True)
class PositionEstimatorConfig:
    """Knobs of the signal-to-position chain."""

    sources: int = 1
    candidates: int = 3
    gamma: float = 30.0
    interp: int = 20
    frame_len: int = 512
    nu: float = SPEED_OF_SOUND
    grid: DistanceGrid = field(default_factory=DistanceGrid)
    min_combination_diff: int | None = None
    band: tuple[float, float] | None = None
    reference: int | None = None
    reference_mode: str = "distributed"

    def with_sources(self, sources: int) -> "PositionEstimatorConfig":
        return replace(self, sources=sources)


def candidate_set_from_signals(
    signals,
    sample_rate: float,
    array: MicArray,
    candidates: int,
    gamma: float,
    interp: int,
    frame_len: int,
    nu: float,
    band=None,
    reference: int | None = None,
    reference_mode: str = "distributed",
) -> CandidateSet:
    """Run the STFT/GCC-PHAT front-end and pick candidate TDOAs per mic."""
    x = np.asarray(signals, dtype=float)
    if x.ndim != 2 or x.shape[0] != array.count:
        raise InvalidInput("signals must be (mic_count, samples)")
    cfg = StftConfig(sample_rate=sample_rate, frame_len=frame_len)
    specs = stft_multichannel(x, cfg)
    ref = select_reference_mic(array, reference_mode) if reference is None else reference
    dist = array.distance_matrix()
    curves = {
        m: gcc_phat(
            specs[m],
            specs[ref],
            cfg,
            pair_distance=float(dist[m, ref]),
            nu=nu,
            interp=interp,
            gamma=gamma,
            band=band,
            pair=(m, ref),
        )
        for m in range(array.count)
        if m != ref
    }
    return CandidateSet.from_curves(curves, ref, candidates)


def estimate_positions_from_signals(
    signals,
    sample_rate: float,
    array: MicArray,
    cfg: PositionEstimatorConfig = PositionEstimatorConfig(),
) -> EstimateBatch:
    """Full chain: signals -> GCC-PHAT candidates -> EDM position estimates."""
    cset = candidate_set_from_signals(
        signals,
        sample_rate,
        array,
        candidates=cfg.candidates,
        gamma=cfg.gamma,
        interp=cfg.interp,
        frame_len=cfg.frame_len,
        nu=cfg.nu,
        band=cfg.band,
        reference=cfg.reference,
        reference_mode=cfg.reference_mode,
    )
    return estimate_positions(
        array,
        cset,
        sources=cfg.sources,
        grid=cfg.grid,
        nu=cfg.nu,
        min_combination_diff=cfg.min_combination_diff,
    )


def cost_curves(
    array: MicArray,
    cset: CandidateSet,
    grid: DistanceGrid = DistanceGrid(),
    nu: float = SPEED_OF_SOUND,
):
    """Yield (combination_index, distances, costs) per combination.

    Infeasible grid points are omitted; fully infeasible combinations yield
    empty arrays. Intended for cost-curve dumps.
    """
    for k, comb in enumerate(enumerate_combinations(cset)):
        tau = cset.tau_vector(comb)
        pts = grid.points()
        pts = pts[pts >= min_feasible_distance(tau, nu) - 1e-12]
        costs = _cost_curve(array, tau, pts, nu) if pts.size else np.array([])
        yield k, pts, costs
