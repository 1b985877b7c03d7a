"""Vocal-imitation conditioning: augmentation, pairing manifests and
RMS / pitch control curves at 40 Hz."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .audio import AudioClip, power, require_non_silent, rational_resample, rms_frames
from .errors import DataError, FormatError, IncompletePairError, SepbenchError
from .scene import snr_gain

CURVE_RATE = 40
MEDIAN_SIZES = (0, 3, 6, 9, 12, 15, 19)


@dataclass(frozen=True, eq=False)
class ControlCurves:
    rms: np.ndarray
    pitch_hz: np.ndarray
    rate: int = CURVE_RATE
    median_size: int = 0

    def __post_init__(self):
        if len(self.rms) != len(self.pitch_hz):
            raise SepbenchError("rms and pitch curves must have equal length")

    def __len__(self):
        return len(self.rms)


@dataclass(frozen=True)
class AugmentConfig:
    """Ranges for the imitation augmentations (uniform draws)."""

    shift_s: tuple[float, float] = (-0.5, 0.5)
    semitones: tuple[float, float] = (-2.0, 2.0)
    noise_snr_db: tuple[float, float] = (10.0, 30.0)


# ---------------------------------------------------------------------------
# augmentation


def time_shift(clip: AudioClip, shift_s: float) -> AudioClip:
    """Delay (positive) or advance (negative) without wrap-around."""
    if abs(shift_s) > clip.duration:
        raise SepbenchError(f"shift {shift_s}s exceeds clip duration {clip.duration}s")
    k = int(round(shift_s * clip.sample_rate))
    out = np.zeros_like(clip.samples)
    n = clip.num_frames
    if k >= 0:
        out[:, k:] = clip.samples[:, :n - k]
    else:
        out[:, :n + k] = clip.samples[:, -k:]
    return clip.with_samples(out)


def pitch_shift(clip: AudioClip, semitones: float) -> AudioClip:
    """Shift pitch by playing the clip ``2**(semitones/12)`` times faster.

    There is no time-stretch compensation: the result is truncated or
    zero-padded back to the original length.
    """
    if abs(semitones) > 12:
        raise SepbenchError("pitch shift limited to +/-12 semitones")
    if semitones == 0:
        return clip
    ratio = Fraction(2.0 ** (semitones / 12.0)).limit_denominator(1000)
    n = clip.num_frames
    chans = [rational_resample(ch, ratio.denominator, ratio.numerator, n) for ch in clip.samples]
    return clip.with_samples(np.vstack(chans))


def add_ambient_noise(clip: AudioClip, noise: AudioClip, snr_db: float, rng: np.random.Generator) -> AudioClip:
    """Mix in a randomly positioned (looped) noise segment at ``snr_db``."""
    x = clip.samples
    p_clip = require_non_silent(x, "clip")
    nz = noise.samples.mean(axis=0)
    require_non_silent(nz, "noise")
    start = int(rng.integers(nz.size))
    seg = np.take(nz, np.arange(start, start + clip.num_frames), mode="wrap")
    gain = snr_gain(p_clip, power(seg), snr_db)
    # mono noise added to every channel
    return clip.with_samples(x + gain * seg[None, :])


def augment_imitation(clip: AudioClip, rng: np.random.Generator, noise: AudioClip | None = None,
                      cfg: AugmentConfig = AugmentConfig()) -> tuple[AudioClip, dict]:
    """Random time shift, pitch shift and (optionally) ambient noise."""
    params = {"shift_s": float(rng.uniform(*cfg.shift_s)),
              "semitones": float(rng.uniform(*cfg.semitones))}
    out = time_shift(clip, max(-clip.duration, min(clip.duration, params["shift_s"])))
    out = pitch_shift(out, params["semitones"])
    if noise is not None and power(out.samples) > 0:
        params["noise_snr_db"] = float(rng.uniform(*cfg.noise_snr_db))
        out = add_ambient_noise(out, noise, params["noise_snr_db"], rng)
    return out, params


# ---------------------------------------------------------------------------
# control curves


def curve_length(clip: AudioClip, rate: int = CURVE_RATE) -> int:
    return math.ceil(clip.num_frames * rate / clip.sample_rate - 1e-9)


def extract_rms_curve(clip: AudioClip, rate: int = CURVE_RATE) -> np.ndarray:
    hop = clip.sample_rate / rate
    return rms_frames(clip, int(round(2 * hop)), hop)


def _yin_cmnd(frames: np.ndarray, window: int, max_lag: int) -> np.ndarray:
    """Cumulative mean normalised difference for each row of ``frames``."""
    n_fft = 1 << int(math.ceil(math.log2(window + max_lag + window)))
    head = frames[:, :window]
    cross = np.fft.irfft(np.conj(np.fft.rfft(head, n_fft)) * np.fft.rfft(frames, n_fft), n_fft)
    cross = cross[:, :max_lag + 1]
    sq = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    lags = np.arange(max_lag + 1)
    e0 = sq[:, window][:, None]
    e_lag = sq[:, lags + window] - sq[:, lags]
    diff = np.maximum(e0 + e_lag - 2.0 * cross, 0.0)
    cmnd = np.ones_like(diff)
    running = np.cumsum(diff[:, 1:], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmnd[:, 1:] = np.where(running > 0, diff[:, 1:] * lags[1:] / running, 1.0)
    return cmnd


def extract_pitch_curve(clip: AudioClip, f_lo: float = 60.0, f_hi: float = 1000.0,
                        threshold: float = 0.15, rate: int = CURVE_RATE) -> np.ndarray:
    """YIN-style F0 per curve frame; unvoiced frames are 0."""
    sr = clip.sample_rate
    if not 20 <= f_lo < f_hi <= sr / 4:
        raise SepbenchError(f"need 20 <= f_lo < f_hi <= {sr / 4}, got [{f_lo}, {f_hi}]")
    x = clip.data
    hop = sr / rate
    count = curve_length(clip, rate)
    min_lag = max(2, int(math.floor(sr / f_hi)))
    max_lag = int(math.ceil(sr / f_lo)) + 1
    window = max(max_lag, int(round(2 * hop)) - max_lag)
    span = window + max_lag

    # frames are centred on the middle of the matching RMS frame
    centres = np.floor(np.arange(count) * hop + hop).astype(np.int64)
    starts = centres - span // 2
    pad = span
    padded = np.concatenate([np.zeros(pad), x, np.zeros(pad + span)])
    frames = padded[starts[:, None] + pad + np.arange(span)[None, :]]

    cmnd = _yin_cmnd(frames, window, max_lag)
    energy = np.sum(frames[:, :window] ** 2, axis=1)
    f0 = np.zeros(count)
    for k in range(count):
        if energy[k] < 1e-10 * window:
            continue
        d = cmnd[k]
        below = np.flatnonzero(d[min_lag:max_lag] < threshold)
        if below.size == 0:
            continue
        tau = int(below[0]) + min_lag
        while tau + 1 < max_lag and d[tau + 1] < d[tau]:
            tau += 1
        a, b, c = d[tau - 1], d[tau], d[tau + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom > 0 else 0.0
        freq = sr / (tau + float(np.clip(shift, -0.5, 0.5)))
        if f_lo <= freq <= f_hi:
            f0[k] = freq
    return f0


def median_filter(curve, size: int) -> np.ndarray:
    """Sliding median with edge replication.

    Odd sizes are centred; even sizes use the window ``[i - size/2, i + size/2 - 1]``.
    Sizes 0 and 1 return the curve unchanged.
    """
    curve = np.asarray(curve, dtype=np.float64)
    if size < 0:
        raise SepbenchError("median filter size must be >= 0")
    if size <= 1 or curve.size == 0:
        return curve.copy()
    left = size // 2
    right = size - 1 - left
    padded = np.pad(curve, (left, right), mode="edge")
    return np.median(np.lib.stride_tricks.sliding_window_view(padded, size), axis=1)


def control_curves(clip: AudioClip, median_size: int = 0, f_lo: float = 60.0, f_hi: float = 1000.0) -> ControlCurves:
    rms = median_filter(extract_rms_curve(clip), median_size)
    pitch = median_filter(extract_pitch_curve(clip, f_lo, f_hi), median_size)
    return ControlCurves(rms, pitch, CURVE_RATE, median_size)


def save_curves(curves: ControlCurves, path) -> None:
    """Raw little-endian float32 (rms then pitch) plus a ``.json`` sidecar."""
    path = Path(path)
    payload = np.concatenate([curves.rms, curves.pitch_hz]).astype("<f4")
    path.write_bytes(payload.tobytes())
    meta = {"rate": curves.rate, "median_size": curves.median_size, "length": len(curves)}
    Path(f"{path}.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")


def load_curves(path) -> ControlCurves:
    path = Path(path)
    meta = json.loads(Path(f"{path}.json").read_text(encoding="utf-8"))
    data = np.frombuffer(path.read_bytes(), dtype="<f4").astype(np.float64)
    n = int(meta["length"])
    if data.size != 2 * n:
        raise FormatError(f"{path}: expected {2 * n} floats, found {data.size}")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite curve values")
    return ControlCurves(data[:n], data[n:], int(meta["rate"]), int(meta["median_size"]))


# ---------------------------------------------------------------------------
# pairing manifests


@dataclass(frozen=True)
class ImitationPair:
    imitation_id: str
    imitation_path: str
    sound_paths: tuple[str, ...]
    label: str
    split: str

    def to_record(self) -> dict:
        return {"imitation_id": self.imitation_id, "imitation_path": self.imitation_path,
                "sound_paths": list(self.sound_paths), "median_sizes": list(MEDIAN_SIZES),
                "label": self.label, "split": self.split}


def build_imitation_manifest(imitations: Mapping[str, Mapping], sounds: Mapping[str, Mapping[int, str]],
                             out) -> list[ImitationPair]:
    """Pair each imitation with its seven median-filter sound variants.

    ``imitations`` maps id -> ``{"path", "label", "split"}``; ``sounds`` maps
    the same id -> ``{median_size: path}``. Records are written as JSON lines
    sorted by imitation id.
    """
    pairs = []
    for imitation_id in sorted(imitations):
        info = imitations[imitation_id]
        variants = {int(k): v for k, v in sounds.get(imitation_id, {}).items()}
        if set(variants) != set(MEDIAN_SIZES):
            missing = sorted(set(MEDIAN_SIZES) - set(variants))
            raise IncompletePairError(f"imitation {imitation_id!r}: variants for sizes {missing} missing"
                                      if missing else f"imitation {imitation_id!r}: unexpected sizes")
        split = info.get("split", "train")
        if split not in ("train", "val", "test"):
            raise SepbenchError(f"imitation {imitation_id!r}: bad split {split!r}")
        pairs.append(ImitationPair(imitation_id, str(info["path"]),
                                   tuple(str(variants[s]) for s in MEDIAN_SIZES),
                                   info.get("label", ""), split))
    Path(out).write_text("".join(json.dumps(p.to_record()) + "\n" for p in pairs), encoding="utf-8")
    return pairs
