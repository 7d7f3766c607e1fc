"""SRP-PHAT baselines for position and DOA estimation.

The steered-response functional sums, over all microphone pairs and DFT
bins, the frame-averaged unit-modulus cross spectra delayed by the TDOA a
candidate location would produce; its real part is maximized over a coarse
grid, then refined on local fine grids, with a spatial exclusion radius
between successive sources.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .doa import direction_from_angles
from .errors import InvalidInput
from .geometry import MicArray
from .position import SPEED_OF_SOUND
from .signals import StftConfig, band_mask, phase_spectrum, stft_multichannel

_CHUNK = 4096


def mic_pairs(count: int) -> list[tuple[int, int]]:
    """All (i, j) pairs with i > j."""
    return [(i, j) for i in range(count) for j in range(i)]


@dataclass(frozen=True)
class PairPhases:
    """Frame-averaged normalized cross spectra for all microphone pairs.

    mean_phase holds, per pair, the conjugate-symmetric full-bin spectrum
    (length frame_len); averaging over frames first is exact because the
    functional is linear in the per-frame phase spectra.
    """

    pairs: tuple[tuple[int, int], ...]
    mean_phase: np.ndarray
    frame_len: int
    sample_rate: float

    @classmethod
    def from_spectrograms(cls, specs, cfg: StftConfig, band=None) -> "PairPhases":
        s = np.asarray(specs)
        if s.ndim != 3:
            raise InvalidInput("spectrograms must be (channels, bins, frames)")
        mask = band_mask(cfg, band)
        pairs = mic_pairs(s.shape[0])
        k = cfg.frame_len
        full = np.zeros((len(pairs), k), dtype=complex)
        for n, (i, j) in enumerate(pairs):
            psi = phase_spectrum(s[i], s[j]) * mask[:, None]
            mean = psi.mean(axis=1)
            full[n, : k // 2 + 1] = mean
            full[n, k // 2 + 1:] = np.conj(mean[1 : k // 2][::-1])
        return cls(
            pairs=tuple(pairs),
            mean_phase=full,
            frame_len=k,
            sample_rate=cfg.sample_rate,
        )

    @classmethod
    def from_signals(cls, signals, sample_rate: float, frame_len: int = 512, band=None) -> "PairPhases":
        cfg = StftConfig(sample_rate=sample_rate, frame_len=frame_len)
        return cls.from_spectrograms(stft_multichannel(signals, cfg), cfg, band)


@dataclass(frozen=True)
class SrpValue:
    location: np.ndarray
    value: float


@dataclass(frozen=True)
class SrpGrid:
    """Coarse-to-fine search layout; lengths in meters or degrees by kind."""

    kind: str
    coarse_step: float
    fine_step: float
    fine_extent: float
    beta: int
    exclusion: float

    def __post_init__(self):
        if self.kind not in ("position", "doa"):
            raise InvalidInput("kind must be 'position' or 'doa'")
        if self.fine_step >= self.coarse_step:
            raise InvalidInput("fine_step must be smaller than coarse_step")
        if self.beta < 1:
            raise InvalidInput("beta must be >= 1")

    @classmethod
    def position_default(cls) -> "SrpGrid":
        return cls(kind="position", coarse_step=0.10, fine_step=0.01, fine_extent=0.10, beta=3, exclusion=0.50)

    @classmethod
    def doa_default(cls) -> "SrpGrid":
        return cls(kind="doa", coarse_step=5.0, fine_step=0.5, fine_extent=10.0, beta=2, exclusion=20.0)


def _pair_tdoas_position(points, mics, pairs, nu):
    d = np.linalg.norm(points[:, None, :] - mics.T[None, :, :], axis=2)
    i = np.fromiter((p[0] for p in pairs), int)
    j = np.fromiter((p[1] for p in pairs), int)
    return (d[:, j] - d[:, i]) / nu


def _pair_tdoas_doa(directions, mics, pairs, nu):
    proj = directions @ mics
    i = np.fromiter((p[0] for p in pairs), int)
    j = np.fromiter((p[1] for p in pairs), int)
    return (proj[:, i] - proj[:, j]) / nu


def _functional(phases: PairPhases, tdoas: np.ndarray) -> np.ndarray:
    """Real part of the pair/bin sum for a block of candidate TDOAs.

    tdoas has shape (n_locations, n_pairs); the sum runs over all
    frame-averaged bins k = 0..frame_len-1 of each pair spectrum.
    """
    k = np.arange(phases.frame_len)
    out = np.zeros(tdoas.shape[0])
    scale = -2j * np.pi * phases.sample_rate / phases.frame_len
    for start in range(0, tdoas.shape[0], _CHUNK):
        block = slice(start, min(start + _CHUNK, tdoas.shape[0]))
        acc = np.zeros(block.stop - block.start, dtype=complex)
        for n in range(len(phases.pairs)):
            kernel = np.exp(scale * tdoas[block, n][:, None] * k[None, :])
            acc += kernel @ phases.mean_phase[n]
        out[block] = acc.real
    return out


def srp_value_position(phases: PairPhases, point, mics, nu: float = SPEED_OF_SOUND) -> float:
    """SRP-PHAT functional at one candidate position (absolute coordinates)."""
    p = np.asarray(point, dtype=float)[None, :]
    m = np.asarray(mics, dtype=float)
    td = _pair_tdoas_position(p, m, phases.pairs, nu)
    return float(_functional(phases, td)[0])


def srp_value_doa(phases: PairPhases, direction, mics, nu: float = SPEED_OF_SOUND) -> float:
    """SRP-PHAT functional at one candidate unit direction."""
    v = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(v)
    if not np.isclose(norm, 1.0, atol=1e-6):
        raise InvalidInput("direction must be unit norm")
    td = _pair_tdoas_doa(v[None, :], np.asarray(mics, dtype=float), phases.pairs, nu)
    return float(_functional(phases, td)[0])


def position_coarse_points(room, step: float) -> np.ndarray:
    """Interior lattice at multiples of `step`, walls excluded.

    A 6 x 6 x 2.4 m room at 0.1 m spacing yields 59 x 59 x 23 points.
    """
    axes = []
    for length in room:
        n = int(round(length / step)) - 1
        axes.append(step * np.arange(1, n + 1))
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


def position_fine_points(center, step: float, extent: float) -> np.ndarray:
    n = int(round(extent / step))
    offs = step * np.arange(-n, n + 1)
    gx, gy, gz = np.meshgrid(*([offs] * 3), indexing="ij")
    return np.asarray(center)[None, :] + np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


def doa_coarse_angles(step_deg: float) -> np.ndarray:
    """(azimuth, elevation) degree pairs: full sphere plus the two poles.

    At 5 degrees this is 72 x 35 + 2 = 2,522 points.
    """
    n_az = int(round(360.0 / step_deg))
    azimuths = -180.0 + step_deg * np.arange(1, n_az + 1)
    n_el = int(round(180.0 / step_deg)) - 1
    elevations = -90.0 + step_deg * np.arange(1, n_el + 1)
    grid = np.array([(a, e) for a in azimuths for e in elevations])
    poles = np.array([(0.0, -90.0), (0.0, 90.0)])
    return np.vstack([grid, poles])


def doa_fine_angles(center_deg, step_deg: float, extent_deg: float) -> np.ndarray:
    n = int(round(extent_deg / step_deg))
    offs = step_deg * np.arange(-n, n + 1)
    az, el = np.asarray(center_deg, dtype=float)
    ga, ge = np.meshgrid(az + offs, el + offs, indexing="ij")
    return np.column_stack([ga.ravel(), ge.ravel()])


def _directions(angles_deg: np.ndarray) -> np.ndarray:
    rad = np.deg2rad(angles_deg)
    return np.stack([direction_from_angles(a, e) for a, e in rad])


def _angular_distance_deg(u, v) -> float:
    return float(np.degrees(np.arccos(np.clip(np.dot(u, v), -1.0, 1.0))))


class _CoarseToFine:
    """Shared selection logic: rank coarse values, refine the best beta,
    then pick sources while holding an exclusion radius at coarse level,
    pulling additional coarse candidates when exclusion empties the pool."""

    def __init__(self, coarse_values, refine, separation, beta):
        self.order = np.argsort(-coarse_values, kind="stable")
        self.refine = refine
        self.separation = separation
        self.beta = beta

    def select(self, sources: int):
        candidates = list(self.order[: self.beta])
        refined = {int(i): self.refine(int(i)) for i in candidates}
        selected = []
        used = []
        cursor = self.beta
        shortfall = False
        for _ in range(sources):
            while True:
                eligible = [
                    i
                    for i in candidates
                    if i not in used and all(self.separation(i, u) >= 0.0 for u in used)
                ]
                if eligible:
                    break
                if cursor >= len(self.order):
                    break
                extra = int(self.order[cursor])
                cursor += 1
                if all(self.separation(extra, u) >= 0.0 for u in used):
                    candidates.append(extra)
                    refined[extra] = self.refine(extra)
            if not eligible:
                shortfall = True
                break
            rank = {c: n for n, c in enumerate(candidates)}
            best = min(eligible, key=lambda i: (-refined[i][1], rank[i]))
            selected.append(refined[best])
            used.append(best)
        return selected, shortfall


def srp_localize_position(
    phases: PairPhases,
    mics,
    room,
    sources: int = 1,
    grid: SrpGrid | None = None,
    nu: float = SPEED_OF_SOUND,
):
    """Coarse-to-fine SRP-PHAT position search over a shoebox room.

    Returns (list of SrpValue in selection order, shortfall flag).
    """
    grid = grid or SrpGrid.position_default()
    if grid.kind != "position":
        raise InvalidInput("grid kind must be 'position'")
    m = np.asarray(mics, dtype=float)
    coarse = position_coarse_points(room, grid.coarse_step)
    values = _functional(phases, _pair_tdoas_position(coarse, m, phases.pairs, nu))

    def refine(idx: int):
        pts = position_fine_points(coarse[idx], grid.fine_step, grid.fine_extent)
        vals = _functional(phases, _pair_tdoas_position(pts, m, phases.pairs, nu))
        best = int(np.argmax(vals))
        return SrpValue(location=pts[best], value=float(vals[best])), float(vals[best])

    def separation(a: int, b: int) -> float:
        return float(np.linalg.norm(coarse[a] - coarse[b])) - grid.exclusion

    picker = _CoarseToFine(values, lambda i: refine(i), separation, grid.beta)
    selected, shortfall = picker.select(sources)
    return [sv for sv, _ in selected], shortfall


def srp_localize_doa(
    phases: PairPhases,
    mics,
    sources: int = 1,
    grid: SrpGrid | None = None,
    nu: float = SPEED_OF_SOUND,
):
    """Coarse-to-fine SRP-PHAT direction search over the full sphere.

    Returns (list of SrpValue holding unit direction vectors, shortfall).
    """
    grid = grid or SrpGrid.doa_default()
    if grid.kind != "doa":
        raise InvalidInput("grid kind must be 'doa'")
    m = np.asarray(mics, dtype=float)
    angles = doa_coarse_angles(grid.coarse_step)
    dirs = _directions(angles)
    values = _functional(phases, _pair_tdoas_doa(dirs, m, phases.pairs, nu))

    def refine(idx: int):
        fine = doa_fine_angles(angles[idx], grid.fine_step, grid.fine_extent)
        fdirs = _directions(fine)
        vals = _functional(phases, _pair_tdoas_doa(fdirs, m, phases.pairs, nu))
        best = int(np.argmax(vals))
        return SrpValue(location=fdirs[best], value=float(vals[best])), float(vals[best])

    def separation(a: int, b: int) -> float:
        return _angular_distance_deg(dirs[a], dirs[b]) - grid.exclusion

    picker = _CoarseToFine(values, lambda i: refine(i), separation, grid.beta)
    selected, shortfall = picker.select(sources)
    return [sv for sv, _ in selected], shortfall


def srp_positions_from_signals(
    signals,
    sample_rate: float,
    array: MicArray,
    room,
    sources: int = 1,
    grid: SrpGrid | None = None,
    nu: float = SPEED_OF_SOUND,
    frame_len: int = 512,
    band=None,
):
    phases = PairPhases.from_signals(signals, sample_rate, frame_len, band)
    return srp_localize_position(phases, array.absolute_positions, room, sources, grid, nu)


def srp_doas_from_signals(
    signals,
    sample_rate: float,
    array: MicArray,
    sources: int = 1,
    grid: SrpGrid | None = None,
    nu: float = SPEED_OF_SOUND,
    frame_len: int = 512,
    band=None,
):
    phases = PairPhases.from_signals(signals, sample_rate, frame_len, band)
    return srp_localize_doa(phases, array.positions, sources, grid, nu)
