"""Waveform container, WAV I/O, resampling and frame-wise RMS."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .errors import DegenerateSignalError, FormatError, SepbenchError, UnsupportedCodecError


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Uniformly sampled audio, stored planar as ``(channels, frames)`` float64."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[0] not in (1, 2):
            raise SepbenchError(f"expected 1 or 2 channels, got array of shape {x.shape}")
        if int(self.sample_rate) <= 0:
            raise SepbenchError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @classmethod
    def mono(cls, data, sample_rate: int) -> "AudioClip":
        return cls(np.asarray(data, dtype=np.float64).reshape(1, -1), sample_rate)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_frames(self) -> int:
        return self.samples.shape[1]

    def __len__(self) -> int:
        return self.num_frames

    @property
    def duration(self) -> float:
        return self.num_frames / self.sample_rate

    @property
    def data(self) -> np.ndarray:
        """The single channel of a mono clip as a 1-D array."""
        if self.channels != 1:
            raise SepbenchError("clip is not mono; call downmix_mono first")
        return self.samples[0]

    def with_samples(self, samples) -> "AudioClip":
        return AudioClip(samples, self.sample_rate)

    def __repr__(self) -> str:
        return (f"AudioClip(channels={self.channels}, frames={self.num_frames}, "
                f"sample_rate={self.sample_rate})")


def power(x: np.ndarray) -> float:
    """Mean-square power of an array."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x * x)) if x.size else 0.0


def normalize_peak(clip: AudioClip, peak: float = 1.0) -> tuple[AudioClip, float]:
    """Scale ``clip`` so its absolute peak is at most ``peak``.

    Returns the (possibly unchanged) clip and the factor that was applied.
    Clips already within range are returned untouched with factor 1.0.
    """
    current = float(np.max(np.abs(clip.samples))) if clip.num_frames else 0.0
    if current <= peak:
        return clip, 1.0
    factor = peak / current
    return clip.with_samples(np.clip(clip.samples * factor, -peak, peak)), factor


# ---------------------------------------------------------------------------
# WAV I/O


def read_wav(path) -> AudioClip:
    """Read a little-endian RIFF/WAVE file (PCM-16, PCM-24 or float32)."""
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a WAVE file")
    if head[:4] != b"RIFF":
        # scipy also accepts big-endian RIFX, which we do not
        raise FormatError(f"{path}: unsupported container magic {head[:4]!r}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported bit depth" in msg:
            raise UnsupportedCodecError(f"{path}: {msg}") from exc
        raise FormatError(f"{path}: {msg}") from exc

    if data.dtype == np.int16:
        data = data / 32768.0
    elif data.dtype == np.int32:
        # 24-bit PCM arrives left-justified in int32
        data = data / 2.0 ** 31
    elif data.dtype == np.float32:
        data = data.astype(np.float64)
    else:
        raise UnsupportedCodecError(f"{path}: sample type {data.dtype} not supported")
    data = data.reshape(data.shape[0], -1).T
    if data.shape[0] not in (1, 2):
        raise UnsupportedCodecError(f"{path}: {data.shape[0]} channels not supported")
    if rate <= 0:
        raise FormatError(f"{path}: invalid sample rate {rate}")
    return AudioClip(data, rate)


def write_wav(clip: AudioClip, path, encoding: str = "float32") -> None:
    """Write ``clip`` as little-endian RIFF/WAVE (``pcm16`` or ``float32``)."""
    if clip.num_frames == 0:
        raise SepbenchError("refusing to write an empty clip")
    if encoding == "float32":
        data = clip.samples.T.astype(np.float32)
    elif encoding == "pcm16":
        data = np.clip(np.round(clip.samples.T * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise SepbenchError(f"unknown encoding {encoding!r}")
    wavfile.write(path, clip.sample_rate, data[:, 0] if clip.channels == 1 else data)


# ---------------------------------------------------------------------------
# channel / rate conversion


def downmix_mono(clip: AudioClip) -> AudioClip:
    if clip.channels == 1:
        return clip
    return AudioClip(0.5 * (clip.samples[0] + clip.samples[1]), clip.sample_rate)


@lru_cache(maxsize=32)
def _lowpass(up: int, down: int, half_width: int) -> np.ndarray:
    # scipy's default kernel is short and droops near Nyquist; this one keeps
    # 2 * half_width taps per polyphase branch
    m = max(up, down)
    return signal.firwin(2 * half_width * m + 1, 1.0 / m, window=("kaiser", 6.0))


def rational_resample(x: np.ndarray, up: int, down: int, n_out: int, half_width: int = 64) -> np.ndarray:
    """Polyphase Kaiser-windowed resampling by ``up / down``, cut or padded to ``n_out``."""
    g = math.gcd(up, down)
    up, down = up // g, down // g
    y = signal.resample_poly(np.asarray(x, dtype=np.float64), up, down, window=_lowpass(up, down, half_width))
    if y.size >= n_out:
        return y[:n_out]
    return np.concatenate([y, np.zeros(n_out - y.size)])


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited resampling to ``target_rate``."""
    if int(target_rate) <= 0:
        raise SepbenchError(f"target_rate must be positive, got {target_rate}")
    target_rate = int(target_rate)
    if target_rate == clip.sample_rate:
        return clip
    n_out = int(round(clip.num_frames * target_rate / clip.sample_rate))
    chans = [rational_resample(ch, target_rate, clip.sample_rate, n_out) for ch in clip.samples]
    return AudioClip(np.vstack(chans), target_rate)


def load_mono(path, sample_rate: int | None = None) -> AudioClip:
    """Read a WAV file, mean-downmix it and optionally resample."""
    clip = downmix_mono(read_wav(path))
    if sample_rate is not None:
        clip = resample(clip, sample_rate)
    return clip


# ---------------------------------------------------------------------------
# framing


def frame_starts(n: int, hop: float) -> np.ndarray:
    """Start sample of each frame; there are ``ceil(n / hop)`` of them."""
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    count = math.ceil(n / hop - 1e-9)
    return np.floor(np.arange(count) * hop + 1e-9).astype(np.int64)


def rms_frames(clip: AudioClip, frame_len: int, hop_len: float) -> np.ndarray:
    """Frame-wise RMS; the final partial frames are zero-padded.

    ``hop_len`` may be fractional (e.g. 1102.5 samples for 40 Hz at 44.1 kHz).
    """
    return np.sqrt(power_frames(clip, frame_len, hop_len))


def power_frames(clip: AudioClip, frame_len: int, hop_len: float) -> np.ndarray:
    """Frame-wise mean-square power, framed as in :func:`rms_frames`."""
    if frame_len < 1 or hop_len <= 0:
        raise SepbenchError("frame_len and hop_len must be positive")
    x = clip.data
    starts = frame_starts(x.size, hop_len)
    if starts.size == 0:
        return np.zeros(0)
    padded = np.concatenate([x, np.zeros(int(starts[-1]) + frame_len - x.size)])
    sq = padded * padded
    out = np.empty(starts.size)
    rows = max(1, (1 << 22) // frame_len)
    offsets = np.arange(frame_len)
    for i in range(0, starts.size, rows):
        block = starts[i:i + rows]
        out[i:i + block.size] = np.mean(sq[block[:, None] + offsets], axis=1)
    return out


def require_non_silent(x: np.ndarray, what: str = "signal") -> float:
    p = power(x)
    if not p > 0.0:
        raise DegenerateSignalError(f"{what} is silent")
    return p
