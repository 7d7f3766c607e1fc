"""STFT front-end and GCC-PHAT.

Square-root-Hann framing with 50% overlap, unit-modulus cross-power phase
spectra, and interpolated, exponentially weighted, frame-averaged GCC-PHAT
curves restricted to geometrically plausible lags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy.io import wavfile

from .errors import InvalidInput

PHASE_GUARD = 1e-12


@dataclass(frozen=True)
class StftConfig:
    sample_rate: float
    frame_len: int = 512

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise InvalidInput("sample_rate must be positive")
        k = self.frame_len
        if k < 2 or (k & (k - 1)) != 0:
            raise InvalidInput("frame_len must be a power of two")

    @property
    def hop(self) -> int:
        return self.frame_len // 2

    @property
    def bins(self) -> int:
        return self.frame_len // 2 + 1

    def frame_count(self, n_samples: int) -> int:
        return (n_samples - self.frame_len) // self.hop + 1


def sqrt_hann(length: int) -> np.ndarray:
    """Square root of a periodic Hann window."""
    n = np.arange(length)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / length))


def stft(signal, cfg: StftConfig) -> np.ndarray:
    """Complex spectrogram, shape (frame_len/2+1, frames).

    Frames are windowed with a square-root-Hann window and hop at half the
    frame length; a trailing partial frame is dropped.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise InvalidInput("signal must be 1-D")
    k = cfg.frame_len
    if x.size < k:
        raise InvalidInput(f"signal shorter ({x.size}) than one frame ({k})")
    frames = cfg.frame_count(x.size)
    idx = np.arange(k)[None, :] + cfg.hop * np.arange(frames)[:, None]
    windowed = x[idx] * sqrt_hann(k)[None, :]
    return scipy.fft.rfft(windowed, axis=1).T


def stft_multichannel(signals, cfg: StftConfig) -> np.ndarray:
    """Spectrograms of a (channels, samples) matrix: (channels, bins, frames)."""
    x = np.asarray(signals, dtype=float)
    if x.ndim != 2:
        raise InvalidInput("signals must be (channels, samples)")
    return np.stack([stft(ch, cfg) for ch in x])


def phase_spectrum(spec_i, spec_j) -> np.ndarray:
    """Unit-modulus normalized cross-power spectrum of two spectra.

    Bins where |Y_i Y_j*| falls below PHASE_GUARD are set to zero instead of
    dividing out noise-level phase.
    """
    a = np.asarray(spec_i)
    b = np.asarray(spec_j)
    if a.shape != b.shape:
        raise InvalidInput("spectra must have identical shapes")
    cross = a * np.conj(b)
    mag = np.abs(cross)
    out = np.zeros_like(cross)
    ok = mag >= PHASE_GUARD
    out[ok] = cross[ok] / mag[ok]
    return out


@dataclass(frozen=True)
class GccCurve:
    """Frame-averaged GCC-PHAT curve over plausible interpolated lags.

    values[i] corresponds to integer lag (i - max_lag_samples) at sampling
    rate `rate` = interp * f_s; positive lag means the first microphone of
    `pair` receives later than the second.
    """

    values: np.ndarray
    max_lag_samples: int
    rate: float
    pair: tuple[int, int]

    @property
    def lags_seconds(self) -> np.ndarray:
        n = np.arange(-self.max_lag_samples, self.max_lag_samples + 1)
        return n / self.rate

    @property
    def max_lag_seconds(self) -> float:
        # Upper bound implied by the pair distance, not the last grid lag.
        return (self.max_lag_samples + 1) / self.rate


def plausible_lag_count(pair_distance: float, sample_rate: float, interp: int, nu: float) -> int:
    """Largest integer interpolated lag strictly inside +-distance/nu."""
    limit = interp * sample_rate * pair_distance / nu
    n = int(np.floor(limit))
    if n >= limit:
        n -= 1
    return max(n, 0)


def band_mask(cfg: StftConfig, band=None) -> np.ndarray:
    """Boolean mask over rfft bins for an optional [f_lo, f_hi] passband."""
    freqs = np.arange(cfg.bins) * cfg.sample_rate / cfg.frame_len
    if band is None:
        return np.ones(cfg.bins, dtype=bool)
    lo, hi = band
    return (freqs >= lo) & (freqs <= hi)


def gcc_phat(
    spec_i,
    spec_ref,
    cfg: StftConfig,
    pair_distance: float,
    nu: float = 343.0,
    interp: int = 20,
    gamma: float = 0.0,
    band=None,
    pair: tuple[int, int] = (0, 1),
) -> GccCurve:
    """Frame-averaged GCC-PHAT between two spectrograms.

    Per frame the unit-modulus phase spectrum is taken back to the lag
    domain on a grid refined by `interp` via spectral zero padding, cut to
    plausible lags for the pair distance, weighted as exp(gamma * value)
    (gamma = 0 leaves the curve unweighted), and finally averaged across
    frames.
    """
    if pair_distance <= 0.0:
        raise InvalidInput("pair_distance must be positive")
    if interp < 1:
        raise InvalidInput("interp must be >= 1")
    if gamma < 0.0:
        raise InvalidInput("gamma must be >= 0")
    psi = phase_spectrum(np.asarray(spec_i), np.asarray(spec_ref))
    if psi.ndim == 1:
        psi = psi[:, None]
    bins, frames = psi.shape
    if bins != cfg.bins:
        raise InvalidInput("spectrogram bin count does not match config")
    psi = psi * band_mask(cfg, band)[:, None]

    k = cfg.frame_len
    n_fft = k * interp
    padded = np.zeros((frames, n_fft // 2 + 1), dtype=complex)
    padded[:, :bins] = psi.T
    padded[:, bins - 1] *= 0.5  # Nyquist bin splits across +-K/2 when upsampled
    # interp * irfft matches (1/K) * sum_k psi[k] e^{+j 2 pi n k / K} at the
    # original lags, so curve values stay in [-1, 1].
    curve = interp * scipy.fft.irfft(padded, n=n_fft, axis=1, workers=-1)

    n_max = plausible_lag_count(pair_distance, cfg.sample_rate, interp, nu)
    if 2 * n_max + 1 > n_fft:
        raise InvalidInput("plausible lag range exceeds the transform length")
    window = np.concatenate([curve[:, n_fft - n_max:], curve[:, : n_max + 1]], axis=1)
    if gamma > 0.0:
        window = np.exp(gamma * window)
    values = window.mean(axis=0)
    return GccCurve(values=values, max_lag_samples=n_max, rate=interp * cfg.sample_rate, pair=pair)


def read_wav(path) -> tuple[float, np.ndarray]:
    """Read a WAV file to (sample_rate, float64 samples in [-1, 1]).

    Multichannel files come back as (channels, samples). Integer PCM
    (16/32-bit) is rescaled; float data passes through.
    """
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        x = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(float)
    else:
        raise InvalidInput(f"unsupported WAV sample format {data.dtype}")
    if x.ndim == 2:
        x = x.T
    return float(rate), x


def write_wav(path, sample_rate: float, signals) -> None:
    """Write (channels, samples) or mono float data as a float32 WAV."""
    x = np.asarray(signals, dtype=np.float32)
    if x.ndim == 2:
        x = x.T
    wavfile.write(path, int(sample_rate), x)
