"""Deterministic acoustic scenario simulator.

Samples room/array/source geometries under spacing constraints, renders
multichannel signals with windowed-sinc fractional delays, 1/distance
attenuation and an optional low-order shoebox image-source model, injects
per-channel pink noise at a target SNR, and exposes exact geometric TDOA
and DOA oracles. Every operation is a pure function of (config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.fft
import scipy.signal

from .errors import InfeasibleScenario, InvalidInput
from .geometry import MicArray
from .position import SPEED_OF_SOUND

FRAC_DELAY_TAPS = 64
FRAC_DELAY_BETA = 8.6
MIN_GAIN_DISTANCE = 0.1  # meters; floors the 1/d gain for sources at the array


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and signal parameters of one simulated scene."""

    mode: str = "distributed"  # distributed | compact
    room: tuple[float, float, float] = (6.0, 6.0, 2.4)
    mic_count: int = 6
    source_distances: tuple[float, ...] = (2.0, 2.0)
    snr_db: float | None = 20.0
    reflection_order: int = 1
    reflection_coeff: float = 0.5
    sample_rate: float = 16000.0
    duration: float = 5.0
    nu: float = SPEED_OF_SOUND
    source_min_separation: float = 1.0
    source_min_angle_deg: float = 20.0
    wall_margin: float = 0.1
    max_tries: int = 10000

    def __post_init__(self):
        if self.mode not in ("distributed", "compact"):
            raise InvalidInput("mode must be 'distributed' or 'compact'")
        if self.reflection_order < 0 or not 0.0 <= self.reflection_coeff < 1.0:
            raise InvalidInput("need reflection_order >= 0 and coefficient in [0, 1)")
        if any(d < 0 for d in self.source_distances):
            raise InvalidInput("source distances must be nonnegative")

    @property
    def cube_side(self) -> float:
        return 2.0 if self.mode == "distributed" else 0.10

    @property
    def mic_min_spacing(self) -> float:
        return 0.10 if self.mode == "distributed" else 0.04

    @property
    def samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass(frozen=True)
class Scenario:
    """A sampled scene: absolute mic and source positions plus its config."""

    config: ScenarioConfig
    mic_positions: np.ndarray  # (3, M), absolute
    source_positions: np.ndarray  # (S, 3), absolute
    seed: int

    @property
    def centroid(self) -> np.ndarray:
        return self.mic_positions.mean(axis=1)

    def mic_array(self) -> MicArray:
        return MicArray.from_positions(self.mic_positions)

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "mic_positions": self.mic_positions.T.tolist(),
            "source_positions": self.source_positions.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        cfg = dict(data["config"])
        cfg["room"] = tuple(cfg["room"])
        cfg["source_distances"] = tuple(cfg["source_distances"])
        return cls(
            config=ScenarioConfig(**cfg),
            mic_positions=np.asarray(data["mic_positions"], dtype=float).T,
            source_positions=np.asarray(data["source_positions"], dtype=float),
            seed=int(data["seed"]),
        )


def _angle_between(u, v) -> float:
    c = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def sample_scenario(cfg: ScenarioConfig, seed: int) -> Scenario:
    """Rejection-sample a scenario satisfying all spacing constraints.

    Deterministic per (cfg, seed); raises InfeasibleScenario when the retry
    budget runs out.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5CE0]))
    room = np.asarray(cfg.room, dtype=float)
    side = cfg.cube_side
    margin = cfg.wall_margin
    lo = np.full(3, margin)
    hi = room - margin
    if np.any(hi - lo < side):
        raise InfeasibleScenario("microphone cube does not fit the room")

    budget = cfg.max_tries
    for _ in range(cfg.max_tries):
        budget -= 1
        corner = rng.uniform(lo, hi - side)
        mics = np.empty((cfg.mic_count, 3))
        placed = 0
        while placed < cfg.mic_count and budget > 0:
            budget -= 1
            p = corner + rng.uniform(0.0, side, size=3)
            if placed == 0 or np.linalg.norm(mics[:placed] - p, axis=1).min() >= cfg.mic_min_spacing:
                mics[placed] = p
                placed += 1
        if placed < cfg.mic_count:
            continue
        centroid = mics.mean(axis=0)

        sources = np.empty((len(cfg.source_distances), 3))
        ok = True
        for s, dist in enumerate(cfg.source_distances):
            found = False
            while budget > 0:
                budget -= 1
                direction = rng.standard_normal(3)
                norm = np.linalg.norm(direction)
                if norm < 1e-9:
                    continue
                p = centroid + dist * direction / norm
                if np.any(p < lo) or np.any(p > hi):
                    continue
                if s > 0:
                    if np.linalg.norm(sources[:s] - p, axis=1).min() < cfg.source_min_separation:
                        continue
                    angles = [_angle_between(q - centroid, p - centroid) for q in sources[:s]]
                    if min(angles) < cfg.source_min_angle_deg:
                        continue
                sources[s] = p
                found = True
                break
            if not found:
                ok = False
                break
        if ok:
            return Scenario(config=cfg, mic_positions=mics.T, source_positions=sources, seed=int(seed))
        if budget <= 0:
            break
    raise InfeasibleScenario(f"no valid scenario within {cfg.max_tries} tries (seed {seed})")


def speech_like_source(seed: int, duration: float, sample_rate: float) -> np.ndarray:
    """Amplitude-modulated band-limited pink noise at unit RMS.

    Pink (-10 dB/decade power) between roughly 80 Hz and 7 kHz with a 4 Hz
    syllabic envelope; deterministic per seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x50EC]))
    n = int(round(duration * sample_rate))
    white = rng.standard_normal(n)
    spectrum = scipy.fft.rfft(white)
    freqs = scipy.fft.rfftfreq(n, d=1.0 / sample_rate)
    shape = 1.0 / np.sqrt(np.maximum(freqs, 80.0))
    shape[freqs < 60.0] = 0.0
    rolloff = freqs > 7000.0
    shape[rolloff] *= np.exp(-(freqs[rolloff] - 7000.0) / 300.0)
    x = scipy.fft.irfft(spectrum * shape, n=n)
    t = np.arange(n) / sample_rate
    phase = rng.uniform(0.0, 2.0 * np.pi)
    envelope = 0.15 + 0.85 * 0.5 * (1.0 + np.sin(2.0 * np.pi * 4.0 * t + phase))
    x = x * envelope
    return x / np.sqrt(np.mean(x**2))


def fractional_delay_kernel(frac: float, taps: int = FRAC_DELAY_TAPS, beta: float = FRAC_DELAY_BETA) -> np.ndarray:
    """Kaiser-windowed sinc interpolation kernel for a 0..1 sample delay.

    The kernel's group delay is taps/2 - 1 + frac samples.
    """
    center = taps // 2 - 1
    n = np.arange(taps)
    kernel = np.sinc(n - center - frac) * np.kaiser(taps, beta)
    return kernel / kernel.sum()


def image_sources(room, position, order: int, coeff: float):
    """Shoebox image positions up to a reflection order.

    Yields (image_position, gain) with gain = coeff**reflections.
    """
    room = np.asarray(room, dtype=float)
    p = np.asarray(position, dtype=float)
    axes = []
    for ax in range(3):
        variants = []
        for m in (-1, 0, 1):
            for sign in (1, -1):
                coord = sign * p[ax] + 2.0 * m * room[ax]
                hits = abs(2 * m) if sign == 1 else abs(2 * m - 1)
                if hits <= order:
                    variants.append((coord, hits))
        axes.append(variants)
    for cx, hx in axes[0]:
        for cy, hy in axes[1]:
            for cz, hz in axes[2]:
                total = hx + hy + hz
                if total <= order:
                    yield np.array([cx, cy, cz]), coeff**total


def _render_channel(signal: np.ndarray, delays_gains) -> np.ndarray:
    """Sum of attenuated fractionally delayed copies, truncated to length."""
    n = signal.size
    center = FRAC_DELAY_TAPS // 2 - 1
    max_delay = max(d for d, _ in delays_gains)
    rir = np.zeros(int(np.floor(max_delay)) + FRAC_DELAY_TAPS + 1)
    for delay, gain in delays_gains:
        base = int(np.floor(delay))
        kernel = fractional_delay_kernel(delay - base)
        rir[base : base + FRAC_DELAY_TAPS] += gain * kernel
    full = scipy.signal.fftconvolve(signal, rir)
    return full[center : center + n]


def synthesize(scenario: Scenario, source_signals) -> np.ndarray:
    """Render sources to all microphones and add noise at the target SNR.

    Returns a (mic_count, samples) matrix. Each propagation path applies a
    windowed-sinc fractional delay and 1/max(distance, 0.1 m) gain; image
    sources follow the configured order and reflection coefficient.
    Per-channel pink noise is scaled so the mean across microphones of the
    per-channel SNR (in dB) matches config.snr_db; None or +inf disables it.
    """
    cfg = scenario.config
    x = np.asarray(source_signals, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] != scenario.source_positions.shape[0]:
        raise InvalidInput("one signal per source required")
    if x.shape[1] != cfg.samples:
        raise InvalidInput("signal length must equal duration * sample_rate")
    room = np.asarray(cfg.room, dtype=float)
    if np.any(scenario.source_positions < 0) or np.any(scenario.source_positions > room):
        raise InvalidInput("source outside the room")

    mics = scenario.mic_positions
    out = np.zeros((cfg.mic_count, cfg.samples))
    for s in range(x.shape[0]):
        images = list(
            image_sources(room, scenario.source_positions[s], cfg.reflection_order, cfg.reflection_coeff)
        )
        for m in range(cfg.mic_count):
            paths = []
            for pos, gain in images:
                dist = float(np.linalg.norm(pos - mics[:, m]))
                delay = dist / cfg.nu * cfg.sample_rate
                paths.append((delay, gain / max(dist, MIN_GAIN_DISTANCE)))
            out[m] += _render_channel(x[s], paths)

    if cfg.snr_db is not None and np.isfinite(cfg.snr_db):
        rng_root = np.random.SeedSequence([scenario.seed, 0x401E])
        children = rng_root.spawn(cfg.mic_count)
        noise = np.stack(
            [_pink_noise(np.random.default_rng(children[m]), cfg.samples, cfg.sample_rate) for m in range(cfg.mic_count)]
        )
        sig_db = 10.0 * np.log10(np.maximum(np.mean(out**2, axis=1), 1e-300))
        noise_db = 10.0 * np.log10(np.mean(noise**2, axis=1))
        # one global scale: mean over mics of (sig_db - noise_db - scale_db) = snr
        scale_db = np.mean(sig_db - noise_db) - cfg.snr_db
        out = out + noise * 10.0 ** (scale_db / 20.0)
    return out


def _pink_noise(rng, n: int, sample_rate: float) -> np.ndarray:
    white = rng.standard_normal(n)
    spectrum = scipy.fft.rfft(white)
    freqs = scipy.fft.rfftfreq(n, d=1.0 / sample_rate)
    shape = 1.0 / np.sqrt(np.maximum(freqs, 20.0))
    x = scipy.fft.irfft(spectrum * shape, n=n)
    return x / np.sqrt(np.mean(x**2))


@dataclass(frozen=True)
class TruthOracle:
    """Exact geometric TDOAs and DOAs for a scenario, recomputed on demand."""

    scenario: Scenario

    def distances(self, source: int) -> np.ndarray:
        p = self.scenario.source_positions[source]
        return np.linalg.norm(self.scenario.mic_positions - p[:, None], axis=0)

    def near_field_tdoas(self, source: int, reference: int) -> np.ndarray:
        """Arrival-time differences vs the reference mic: (d_m - d_ref)/nu."""
        d = self.distances(source)
        return (d - d[reference]) / self.scenario.config.nu

    def doa_vector(self, source: int) -> np.ndarray:
        v = self.scenario.source_positions[source] - self.scenario.centroid
        return v / np.linalg.norm(v)

    def plane_wave_centered_tdoas(self, source: int) -> np.ndarray:
        """Centroid-referenced arrival delays of a plane wave from the source.

        Microphones displaced toward the source receive earlier, so the
        entry for mic m is -m_m . v / nu with centered positions m_m.
        """
        array = self.scenario.mic_array()
        return -(array.positions.T @ self.doa_vector(source)) / self.scenario.config.nu


def scenario_sidecar(scenario: Scenario) -> dict:
    """Ground-truth sidecar: geometry, DOAs, and per-source TDOAs."""
    oracle = TruthOracle(scenario)
    n_src = scenario.source_positions.shape[0]
    return {
        "schema_version": 1,
        "scenario": scenario.to_dict(),
        "centroid": scenario.centroid.tolist(),
        "doa_vectors": [oracle.doa_vector(s).tolist() for s in range(n_src)],
        "tdoas_vs_mic0": [oracle.near_field_tdoas(s, 0).tolist() for s in range(n_src)],
        "centered_plane_wave_tdoas": [
            oracle.plane_wave_centered_tdoas(s).tolist() for s in range(n_src)
        ],
    }


def write_sidecar(path, scenario: Scenario) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_sidecar(scenario), fh, indent=2)


def render_scenario(cfg: ScenarioConfig, seed: int) -> tuple[Scenario, np.ndarray]:
    """Sample a scenario and synthesize its microphone signals."""
    scenario = sample_scenario(cfg, seed)
    sigs = np.stack(
        [
            speech_like_source(int(np.random.SeedSequence([seed, 0x51D0 + s]).generate_state(1)[0]), cfg.duration, cfg.sample_rate)
            for s in range(len(cfg.source_distances))
        ]
    )
    return scenario, synthesize(scenario, sigs)
