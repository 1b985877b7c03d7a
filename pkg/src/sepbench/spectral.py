"""STFT / inverse STFT and log-Mel analysis."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import AudioClip
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class SpectroConfig:
    window_len: int = 2048
    hop_len: int | None = None  # defaults to window_len // 4
    window_fn: str = "hann"
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float | None = None  # defaults to Nyquist
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.hop_len is None:
            object.__setattr__(self, "hop_len", max(1, self.window_len // 4))
        if not 0 < self.hop_len <= self.window_len:
            raise ConfigError(f"need 0 < hop_len <= window_len, got {self.hop_len}/{self.window_len}")
        if self.n_mels < 1:
            raise ConfigError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")
        if self.window_fn not in _WINDOWS:
            raise ConfigError(f"unknown window {self.window_fn!r}")

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1

    def check_power_of_two(self):
        n = self.window_len
        if n < 2 or n & (n - 1):
            raise ConfigError(f"window_len must be a power of two, got {n}")

    def mel_range(self, sample_rate: int) -> tuple[float, float]:
        fmax = sample_rate / 2 if self.fmax is None else float(self.fmax)
        if not 0 <= self.fmin < fmax <= sample_rate / 2:
            raise ConfigError(f"need 0 <= fmin < fmax <= {sample_rate / 2}, got [{self.fmin}, {fmax}]")
        return float(self.fmin), fmax


_WINDOWS = {
    "hann": lambda n: 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n),
    "hamming": lambda n: 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(n) / n),
    "rect": np.ones,
}


def get_window(name: str, n: int) -> np.ndarray:
    """Periodic analysis window."""
    return _WINDOWS[name](n)


def _frame_count(n: int, cfg: SpectroConfig) -> int:
    return 1 + -(-n // cfg.hop_len)


def stft(clip: AudioClip, cfg: SpectroConfig) -> np.ndarray:
    """Complex STFT of a mono clip, shape ``(frames, window_len // 2 + 1)``.

    The signal is padded with ``window_len // 2`` zeros in front and zero-filled
    at the tail so every sample is covered by full windows.
    """
    cfg.check_power_of_two()
    x = clip.data
    win = get_window(cfg.window_fn, cfg.window_len)
    pad = cfg.window_len // 2
    frames = _frame_count(x.size, cfg)
    total = (frames - 1) * cfg.hop_len + cfg.window_len
    padded = np.zeros(total)
    padded[pad:pad + x.size] = x
    windows = np.lib.stride_tricks.sliding_window_view(padded, cfg.window_len)[::cfg.hop_len]
    return np.fft.rfft(windows * win, axis=1)


def istft(spec: np.ndarray, cfg: SpectroConfig, length: int) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft` (synthesis window normalised)."""
    cfg.check_power_of_two()
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != cfg.n_bins:
        raise ShapeError(f"spectrogram shape {spec.shape} does not match config bins {cfg.n_bins}")
    frames = spec.shape[0]
    win = get_window(cfg.window_fn, cfg.window_len)
    total = (frames - 1) * cfg.hop_len + cfg.window_len
    out = np.zeros(total)
    norm = np.zeros(total)
    chunks = np.fft.irfft(spec, n=cfg.window_len, axis=1) * win
    for k in range(frames):
        s = k * cfg.hop_len
        out[s:s + cfg.window_len] += chunks[k]
        norm[s:s + cfg.window_len] += win * win
    nz = norm > 1e-10
    out[nz] /= norm[nz]
    pad = cfg.window_len // 2
    y = out[pad:pad + length]
    if y.size < length:
        y = np.concatenate([y, np.zeros(length - y.size)])
    return y


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=64)
def _mel_filterbank_cached(sample_rate, n_fft, n_mels, fmin, fmax):
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / np.maximum(mid - lo, 1e-12)
    falling = (hi - bins[None, :]) / np.maximum(hi - mid, 1e-12)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    # coarse FFT grids can leave narrow low filters empty; pin them to the nearest bin
    for m in np.flatnonzero(fb.sum(axis=1) == 0):
        fb[m, int(np.argmin(np.abs(bins - mid[m, 0])))] = 1.0
    fb.setflags(write=False)
    return fb


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular Mel (HTK scale) filterbank of shape ``(n_mels, n_fft // 2 + 1)``."""
    return _mel_filterbank_cached(int(sample_rate), int(n_fft), int(n_mels), float(fmin), float(fmax))


def mel_spectrogram(clip: AudioClip, cfg: SpectroConfig) -> np.ndarray:
    """``log(log_floor + mel_weights @ |STFT|)``, shape ``(frames, n_mels)``."""
    fmin, fmax = cfg.mel_range(clip.sample_rate)
    fb = mel_filterbank(clip.sample_rate, cfg.window_len, cfg.n_mels, fmin, fmax)
    mag = np.abs(stft(clip, cfg))
    return np.log(cfg.log_floor + mag @ fb.T)
