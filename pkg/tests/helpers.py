"""Shared oracle helpers: exact geometric TDOAs and random geometries."""

import numpy as np

from edmloc import CandidateSet, MicArray


def random_array(rng, count=6, dim=3, spread=1.0, min_spacing=0.05) -> MicArray:
    """Random centered microphone geometry with a minimum spacing.

    Positions are centered before construction so the input frame and the
    centered frame coincide (sources can be specified directly in it).
    """
    while True:
        pos = rng.uniform(-spread, spread, size=(dim, count))
        diff = pos[:, :, None] - pos[:, None, :]
        dist = np.sqrt((diff**2).sum(axis=0)) + np.eye(count) * 10 * spread
        if dist.min() >= min_spacing:
            return MicArray.from_positions(pos - pos.mean(axis=1, keepdims=True))


def forward_tdoas(array: MicArray, source, reference: int, nu: float = 343.0) -> np.ndarray:
    """Exact arrival-time differences (d_m - d_ref)/nu for a near source."""
    p = np.asarray(source, dtype=float)
    d = np.linalg.norm(array.positions - p[:, None], axis=0)
    return (d - d[reference]) / nu


def plane_wave_tdoas(array: MicArray, direction, reference: int, nu: float = 343.0) -> np.ndarray:
    """Exact arrival-time differences for a far-field plane wave."""
    v = np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    arrivals = -(array.positions.T @ v) / nu
    return arrivals - arrivals[reference]


def single_candidate_set(tdoas, reference: int) -> CandidateSet:
    """Candidate set holding exactly one (exact) TDOA per microphone."""
    taus = tuple((0.0,) if m == reference else (float(t),) for m, t in enumerate(tdoas))
    return CandidateSet(reference=reference, taus=taus)


def interleaved_candidate_set(tdoa_lists, reference: int) -> CandidateSet:
    """Candidates holding one TDOA per source per microphone, source order
    preserved, so source s corresponds to the all-s combination."""
    count = len(tdoa_lists[0])
    taus = []
    for m in range(count):
        if m == reference:
            taus.append((0.0,))
        else:
            taus.append(tuple(float(t[m]) for t in tdoa_lists))
    return CandidateSet(reference=reference, taus=tuple(taus))


def random_rotation(rng, dim=3) -> np.ndarray:
    """Haar-ish random proper rotation from a QR decomposition."""
    a = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
