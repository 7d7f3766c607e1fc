"""EDM-based far-field DOA estimation.

Subtracting the scaled outer product of centroid-centered TDOAs from the
microphone Gram matrix removes the coordinate aligned with the source
direction, so the remainder has rank one below the ambient dimension
exactly when the TDOAs match a plane wave. The residual eigenvalue mass
ranks candidate TDOA combinations without any continuous search; the
direction is recovered by Procrustes-aligning a reconstructed
source-aligned frame to the known microphone positions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateGeometry, InvalidInput
from .geometry import GramEval, MicArray, RANK_TOL, eigendecompose_sym, procrustes
from .position import SPEED_OF_SOUND, candidate_set_from_signals
from .tdoa import CandidateSet, center_tdoas, enumerate_combinations

CENTERING_TOL = 1e-9


def angles_from_direction(direction) -> tuple[float, float]:
    """(azimuth, elevation) in radians; azimuth is 0 by convention at the poles."""
    v = np.asarray(direction, dtype=float)
    elevation = float(np.arcsin(np.clip(v[2], -1.0, 1.0)))
    if abs(v[2]) >= 1.0 - 1e-12:
        return 0.0, elevation
    return float(np.arctan2(v[1], v[0])), elevation


def direction_from_angles(azimuth: float, elevation: float) -> np.ndarray:
    return np.array(
        [
            np.cos(azimuth) * np.cos(elevation),
            np.sin(azimuth) * np.cos(elevation),
            np.sin(elevation),
        ]
    )


def _check_centered(centered_tdoas) -> np.ndarray:
    tau = np.asarray(centered_tdoas, dtype=float)
    if abs(tau.sum()) > CENTERING_TOL * max(1.0, np.abs(tau).max() * tau.size):
        raise InvalidInput("TDOAs must be centered (zero sum)")
    return tau


@dataclass(frozen=True)
class RankReducedGram:
    """Microphone Gram minus the rank-1 TDOA outer product."""

    matrix: np.ndarray
    combination: tuple[int, ...] | None = None


def rank_reduced_gram(
    array: MicArray, centered_tdoas, nu: float = SPEED_OF_SOUND, combination=None
) -> RankReducedGram:
    tau = _check_centered(centered_tdoas)
    if tau.shape != (array.count,):
        raise InvalidInput("need one centered TDOA per microphone")
    g = array.gram() - nu**2 * np.outer(tau, tau)
    return RankReducedGram(matrix=g, combination=combination)


def direction_cost(array: MicArray, centered_tdoas, nu: float = SPEED_OF_SOUND) -> float:
    """Absolute eigenvalue mass beyond rank dim-1 of the rank-reduced Gram.

    Zero exactly when the centered TDOAs correspond to a plane wave over
    this array.
    """
    g = rank_reduced_gram(array, centered_tdoas, nu).matrix
    eig = np.linalg.eigvalsh(g)
    return float(np.abs(eig[: array.count - (array.dim - 1)]).sum())


def _direction_cost_batch(array: MicArray, centered: np.ndarray, nu: float) -> np.ndarray:
    grams = array.gram()[None, :, :] - nu**2 * centered[:, :, None] * centered[:, None, :]
    eig = np.linalg.eigvalsh(grams)
    return np.abs(eig[:, : array.count - (array.dim - 1)]).sum(axis=1)


def reconstruct_source_frame(
    ev: GramEval, centered_tdoas, nu: float = SPEED_OF_SOUND, dim: int = 3
) -> np.ndarray:
    """Microphone coordinates in a frame whose first axis faces the source.

    Row one is -nu times the centered TDOAs (the along-direction
    coordinates); the remaining dim-1 rows come from the leading eigenpairs
    of the rank-reduced Gram. Small negative leading eigenvalues are
    clamped; larger ones mark the combination as unrealizable.
    """
    tau = _check_centered(centered_tdoas)
    w = ev.eigenvalues[: dim - 1].copy()
    scale = max(ev.eigenvalues[0], 0.0)
    if np.any(w < -RANK_TOL * scale):
        raise DegenerateGeometry("negative leading eigenvalue beyond tolerance")
    w[w < 0.0] = 0.0
    frame = np.empty((dim, tau.size))
    frame[0] = -nu * tau
    frame[1:] = np.sqrt(w)[:, None] * ev.eigenvectors[:, : dim - 1].T
    return frame


@dataclass
class DoaEstimate:
    """One estimated source direction with its supporting evidence."""

    direction: np.ndarray
    azimuth: float
    elevation: float
    combination: tuple[int, ...]
    cost: float


def _reconstruct_direction(array, centered, cost, nu):
    g = rank_reduced_gram(array, centered, nu)
    ev = eigendecompose_sym(g.matrix)
    ev.cost = cost
    frame = reconstruct_source_frame(ev, centered, nu, array.dim)
    pmap = procrustes(frame, array.positions)
    direction = pmap.rotation[:, 0].copy()
    return direction, ev


def estimate_doas(
    array: MicArray,
    cset: CandidateSet,
    sources: int = 1,
    nu: float = SPEED_OF_SOUND,
    min_combination_diff: int | None = None,
) -> "EstimateBatch":
    """Estimate `sources` far-field directions from a candidate set.

    Costs for all combinations are computed in one batch; selection mirrors
    the position estimator (ascending cost, combination-diversity rule,
    unrealizable combinations skipped).
    """
    from .position import EstimateBatch, _admissible  # shared selection helpers

    if sources < 1:
        raise InvalidInput("sources must be >= 1")
    if min_combination_diff is None:
        min_combination_diff = array.count - 2
    max_overlap = (array.count - 1) - min_combination_diff

    combos = list(enumerate_combinations(cset))
    centered = np.stack([center_tdoas(cset, comb) for comb in combos])
    costs = _direction_cost_batch(array, centered, nu)

    order = np.argsort(costs, kind="stable")
    estimates: list[DoaEstimate] = []
    chosen: list[tuple[int, ...]] = []
    for k in order:
        if len(estimates) >= sources:
            break
        comb = combos[k]
        if not _admissible(comb, chosen, max_overlap):
            continue
        try:
            direction, _ = _reconstruct_direction(array, centered[k], float(costs[k]), nu)
        except DegenerateGeometry:
            continue
        azimuth, elevation = angles_from_direction(direction)
        estimates.append(
            DoaEstimate(
                direction=direction,
                azimuth=azimuth,
                elevation=elevation,
                combination=comb,
                cost=float(costs[k]),
            )
        )
        chosen.append(comb)
    return EstimateBatch(estimates=estimates, shortfall=len(estimates) < sources)


@dataclass(frozen=True)
class DoaEstimatorConfig:
    """Knobs of the signal-to-DOA chain."""

    sources: int = 1
    candidates: int = 2
    gamma: float = 50.0
    interp: int = 20
    frame_len: int = 512
    nu: float = SPEED_OF_SOUND
    min_combination_diff: int | None = None
    band: tuple[float, float] | None = None
    reference: int | None = None
    reference_mode: str = "compact"

    def with_sources(self, sources: int) -> "DoaEstimatorConfig":
        return replace(self, sources=sources)


def estimate_doas_from_signals(
    signals,
    sample_rate: float,
    array: MicArray,
    cfg: DoaEstimatorConfig = DoaEstimatorConfig(),
) -> "EstimateBatch":
    """Full chain: signals -> GCC-PHAT candidates -> EDM DOA estimates."""
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
    return estimate_doas(
        array,
        cset,
        sources=cfg.sources,
        nu=cfg.nu,
        min_combination_diff=cfg.min_combination_diff,
    )


def sorted_direction_costs(
    array: MicArray, cset: CandidateSet, nu: float = SPEED_OF_SOUND
) -> list[tuple[int, float]]:
    """(combination_index, cost) pairs sorted ascending, for curve dumps."""
    combos = list(enumerate_combinations(cset))
    centered = np.stack([center_tdoas(cset, comb) for comb in combos])
    costs = _direction_cost_batch(array, centered, nu)
    order = np.argsort(costs, kind="stable")
    return [(int(k), float(costs[k])) for k in order]
