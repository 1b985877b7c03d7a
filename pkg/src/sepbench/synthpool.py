"""Procedural sound-event pool for demos and tests.

Each category has its own spectral and temporal signature so that masking,
gating and activity metrics behave like they would on real event libraries.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .audio import AudioClip, write_wav

CAPTIONS = {
    "dog": ["dog barking", "a dog barks several times", "barking"],
    "rain": ["rain", "steady rain falling on a roof"],
    "siren": ["siren", "an emergency siren wailing"],
    "engine": ["engine idling", "a low rumbling motor"],
    "bird": ["bird chirping", "small birds tweeting", "birdsong"],
    "bell": ["bell ringing", "a church bell tolls"],
    "footsteps": ["footsteps", "someone walking on a hard floor"],
    "wind": ["wind", "gusts of wind blowing"],
}


def _shaped_noise(rng, n, sr, lo, hi):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / sr)
    spec[(f < lo) | (f > hi)] = 0
    x = np.fft.irfft(spec, n)
    return x / (np.max(np.abs(x)) + 1e-12)


def _bursts(rng, n, sr, count, length_s):
    env = np.zeros(n)
    ln = int(length_s * sr)
    for start in rng.integers(0, max(1, n - ln), size=count):
        env[start:start + ln] = np.maximum(env[start:start + ln], np.hanning(ln)[:n - start][:ln])
    return env


def _event(category, rng, n, sr):
    t = np.arange(n) / sr
    if category == "dog":
        f0 = rng.uniform(350, 550)
        tone = sum(np.sin(2 * np.pi * k * f0 * t) / k for k in range(1, 5))
        return tone * _bursts(rng, n, sr, int(rng.integers(3, 7)), 0.25)
    if category == "rain":
        return _shaped_noise(rng, n, sr, 2000, 9000) * (0.8 + 0.2 * rng.random())
    if category == "siren":
        f = 900 + 300 * np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * t)
        return np.sin(2 * np.pi * np.cumsum(f) / sr)
    if category == "engine":
        f0 = rng.uniform(40, 70)
        return sum(np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 6)) / k for k in range(1, 8)) * 0.5
    if category == "bird":
        out = np.zeros(n)
        for start in rng.integers(0, max(1, n - sr // 10), size=int(rng.integers(6, 14))):
            ln = int(0.08 * sr)
            seg_t = np.arange(ln) / sr
            f = rng.uniform(3000, 5000) + 8000 * seg_t
            chirp = np.sin(2 * np.pi * np.cumsum(f) / sr) * np.hanning(ln)
            out[start:start + ln] += chirp[:n - start]
        return out
    if category == "bell":
        f0 = rng.uniform(500, 800)
        out = np.zeros(n)
        starts = [0, *rng.integers(0, max(1, n - sr), size=int(rng.integers(0, 3)))]
        for start in starts:
            seg_t = np.arange(n - start) / sr
            ring = sum(np.sin(2 * np.pi * r * f0 * seg_t) * np.exp(-seg_t * d)
                       for r, d in ((1.0, 1.5), (2.76, 2.5), (5.4, 4.0)))
            out[start:] += ring
        return out
    if category == "footsteps":
        out = np.zeros(n)
        step = int(rng.uniform(0.45, 0.7) * sr)
        click = _shaped_noise(rng, int(0.04 * sr), sr, 100, 1500) * np.hanning(int(0.04 * sr))
        for start in range(int(rng.integers(0, step)), n - click.size, step):
            out[start:start + click.size] += click
        return out
    if category == "wind":
        am = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.1, 0.4) * t + rng.uniform(0, 6))
        return _shaped_noise(rng, n, sr, 150, 900) * am
    raise KeyError(category)


def make_pool(out_dir, sample_rate: int = 44100, clips_per_category: int = 2, seed: int = 0,
              duration_range: tuple[float, float] = (3.0, 12.0), categories=None) -> Path:
    """Write ``<category>__<k>.wav`` files and a ``catalog.jsonl`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    for category in categories or CAPTIONS:
        for k in range(clips_per_category):
            n = int(rng.uniform(*duration_range) * sample_rate)
            x = _event(category, rng, n, sample_rate)
            x = 0.5 * x / (np.max(np.abs(x)) + 1e-12)
            name = f"{category}__{k}.wav"
            write_wav(AudioClip.mono(x, sample_rate), out / name)
            lines.append(json.dumps({"path": name, "captions": CAPTIONS[category], "category": category}))
    (out / "catalog.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
