"""Candidate TDOA extraction and combination bookkeeping.

Peak picking with parabolic refinement on GCC-PHAT curves, assembly of
per-microphone candidate sets against a reference microphone, enumeration
of candidate combinations, and centering of combined TDOAs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .geometry import MicArray
from .signals import GccCurve

CENTERED_SUM_TOL = 1e-12


def pick_candidates(curve: GccCurve, count: int) -> list[tuple[float, float]]:
    """Up to `count` highest strict local maxima as (lag_seconds, height).

    Each peak is refined by a parabola through the sample and its two
    neighbors, with the vertex clamped to one lag step; heights are the raw
    sample values. Equal heights break toward smaller |lag|, then smaller
    lag. Fewer maxima than requested yields a shorter list.
    """
    if count < 1:
        raise InvalidInput("count must be >= 1")
    v = np.asarray(curve.values, dtype=float)
    if v.size == 0:
        raise InvalidInput("empty curve")
    if v.size < 3:
        return []
    inner = slice(1, v.size - 1)
    is_peak = (v[inner] > v[:-2]) & (v[inner] > v[2:])
    peak_idx = np.nonzero(is_peak)[0] + 1
    if peak_idx.size == 0:
        return []

    lags = peak_idx - curve.max_lag_samples
    order = sorted(range(peak_idx.size), key=lambda i: (-v[peak_idx[i]], abs(lags[i]), lags[i]))
    chosen = [peak_idx[i] for i in order[:count]]

    out = []
    limit = curve.max_lag_samples + 1  # plausibility bound in lag samples
    for idx in chosen:
        y0, y1, y2 = v[idx - 1], v[idx], v[idx + 1]
        denom = y0 - 2.0 * y1 + y2
        delta = 0.0 if denom == 0.0 else 0.5 * (y0 - y2) / denom
        delta = float(np.clip(delta, -1.0, 1.0))
        lag = idx - curve.max_lag_samples + delta
        lag = float(np.clip(lag, -(limit - 1e-9), limit - 1e-9))
        out.append((lag / curve.rate, float(y1)))
    return out


@dataclass(frozen=True)
class CandidateSet:
    """Candidate TDOAs per microphone relative to a reference microphone.

    taus[m] holds the candidates for microphone m in seconds, sorted by
    descending peak height; the reference entry is exactly (0.0,). A
    combination assigns one candidate index to every non-reference
    microphone, in ascending microphone order.
    """

    reference: int
    taus: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if not (0 <= self.reference < len(self.taus)):
            raise InvalidInput("reference index out of range")
        if self.taus[self.reference] != (0.0,):
            raise InvalidInput("reference microphone must have the single candidate 0.0")
        if any(len(t) == 0 for t in self.taus):
            raise InvalidInput("every microphone needs at least one candidate")

    @property
    def mic_count(self) -> int:
        return len(self.taus)

    @property
    def free_mics(self) -> tuple[int, ...]:
        return tuple(m for m in range(self.mic_count) if m != self.reference)

    @property
    def counts(self) -> tuple[int, ...]:
        """Candidates available per non-reference microphone."""
        return tuple(len(self.taus[m]) for m in self.free_mics)

    @property
    def total_combinations(self) -> int:
        q = 1
        for c in self.counts:
            q *= c
        return q

    def tau_vector(self, combination: tuple[int, ...]) -> np.ndarray:
        """Raw TDOAs (seconds) for one combination, reference entry zero."""
        if len(combination) != self.mic_count - 1:
            raise InvalidInput("combination length must be mic_count - 1")
        tau = np.zeros(self.mic_count)
        for m, c in zip(self.free_mics, combination):
            tau[m] = self.taus[m][c]
        return tau

    @classmethod
    def from_curves(cls, curves: dict[int, GccCurve], reference: int, count: int) -> "CandidateSet":
        """Build from per-microphone GCC curves keyed by microphone index."""
        mic_count = len(curves) + 1
        taus: list[tuple[float, ...]] = [()] * mic_count
        taus[reference] = (0.0,)
        for m, curve in curves.items():
            if m == reference:
                raise InvalidInput("curves must not include the reference microphone")
            picked = pick_candidates(curve, count)
            if not picked:
                # a flat curve still has a best sample: fall back to its argmax
                idx = int(np.argmax(curve.values))
                picked = [((idx - curve.max_lag_samples) / curve.rate, float(curve.values[idx]))]
            taus[m] = tuple(lag for lag, _ in picked)
        return cls(reference=reference, taus=tuple(taus))


def enumerate_combinations(cset: CandidateSet):
    """All candidate-index combinations in lexicographic order."""
    return itertools.product(*(range(c) for c in cset.counts))


def combination_overlap(comb_a, comb_b) -> int:
    """Number of positions where two combinations pick the same candidate."""
    if len(comb_a) != len(comb_b):
        raise InvalidInput("combinations must have equal length")
    return sum(1 for a, b in zip(comb_a, comb_b) if a == b)


def center_tdoas(cset: CandidateSet, combination: tuple[int, ...]) -> np.ndarray:
    """TDOAs of one combination re-referenced to the array centroid.

    Subtracts the mean over all microphones (the reference contributes its
    implicit zero), so the result sums to zero.
    """
    tau = cset.tau_vector(combination)
    return tau - tau.mean()


def select_reference_mic(array: MicArray, mode: str) -> int:
    """Reference microphone for GCC pairing.

    distributed: the microphone closest to the array centroid.
    compact: the microphone on average farthest from the others.
    Ties break toward the lowest index.
    """
    if mode == "distributed":
        return int(np.argmin(np.linalg.norm(array.positions, axis=0)))
    if mode == "compact":
        dist = array.distance_matrix()
        mean_dist = dist.sum(axis=1) / (array.count - 1)
        return int(np.argmax(mean_dist))
    raise InvalidInput(f"unknown reference mode {mode!r}")
