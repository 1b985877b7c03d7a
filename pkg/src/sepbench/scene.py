"""Mixture-scene simulation: presets, scene construction, rendering, manifests."""

from __future__ import annotations

import json
import logging
import math
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio import AudioClip, load_mono, power, require_non_silent, write_wav
from .errors import DegenerateSignalError, InsufficientPoolError, InvalidOperatorError, SepbenchError
from .prompts import caption_variants, compose_prompt

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 44100
MANIFEST_NAME = "manifest.jsonl"

# Rendered stems live on a 2**-24 grid: every sum or difference of up to a few
# dozen stems is then exact in float64, and stays exact in float32 while |x| < 1.
_QUANTUM = 2.0 ** -24
_PEAK_TARGET = 1.0 - 2.0 ** -20
DEFAULT_PERTURB_SNR_DB = 40.0
_CROP_ATTEMPTS = 16


def quantize(x: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(x, dtype=np.float64) / _QUANTUM) * _QUANTUM


# ---------------------------------------------------------------------------
# presets


@dataclass(frozen=True)
class DatasetPreset:
    """Parameterisation of one mixture construction recipe.

    ``snr_db`` is the range each non-reference stem's level is drawn from,
    relative to stem 0. ``operator_mix`` is the probability of a removal scene.
    ``target_subset_rule`` is one of ``any_subset``, ``proper_subset`` or ``first``.
    """

    name: str
    n_events: tuple[int, int]
    snr_db: tuple[float, float]
    duration_s: float = 10.0
    operator_mix: float = 0.0
    target_subset_rule: str = "any_subset"

    def __post_init__(self):
        lo, hi = self.n_events
        if lo < 1 or hi < lo:
            raise SepbenchError(f"preset {self.name}: bad event range {self.n_events}")
        if self.snr_db[0] > self.snr_db[1]:
            raise SepbenchError(f"preset {self.name}: bad SNR range {self.snr_db}")
        if not 0.0 <= self.operator_mix <= 1.0:
            raise SepbenchError(f"preset {self.name}: operator_mix must be a probability")
        if self.target_subset_rule not in ("any_subset", "proper_subset", "first"):
            raise SepbenchError(f"preset {self.name}: unknown rule {self.target_subset_rule!r}")


PRESETS = {
    p.name: p
    for p in (
        DatasetPreset("train", (2, 5), (-3.0, 10.0), 10.0, 0.5, "any_subset"),
        DatasetPreset("audiocaps", (2, 2), (-15.0, 15.0), 10.0, 0.0, "first"),
        DatasetPreset("esc50", (2, 2), (0.0, 0.0), 5.0, 0.0, "first"),
        DatasetPreset("fsd_mix", (3, 5), (-10.0, 10.0), 10.0, 0.0, "proper_subset"),
        DatasetPreset("asfx", (2, 5), (-10.0, 10.0), 10.0, 0.0, "proper_subset"),
        DatasetPreset("imitation_mix", (2, 4), (-3.0, 10.0), 8.0, 0.0, "first"),
    )
}


def get_preset(name: str) -> DatasetPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise SepbenchError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# ---------------------------------------------------------------------------
# event pool


@dataclass(frozen=True)
class PoolEntry:
    path: str
    captions: tuple[str, ...]
    category: str


@lru_cache(maxsize=512)
def load_source(path: str, sample_rate: int) -> np.ndarray:
    """Mono, resampled source audio; cached and read-only."""
    x = load_mono(path, sample_rate).data.copy()
    x.setflags(write=False)
    return x


@lru_cache(maxsize=512)
def _energy_prefix(path: str, sample_rate: int) -> np.ndarray:
    """Cumulative sum of squares of a source, with a leading zero."""
    x = load_source(path, sample_rate)
    c = np.concatenate([[0.0], np.cumsum(x * x)])
    c.setflags(write=False)
    return c


class EventPool:
    """Catalogue of captioned, categorised sound events on disk."""

    def __init__(self, entries: Sequence[PoolEntry], sample_rate: int = DEFAULT_SAMPLE_RATE):
        self.entries = tuple(entries)
        self.sample_rate = int(sample_rate)
        by_cat: dict[str, list[PoolEntry]] = {}
        for e in self.entries:
            by_cat.setdefault(e.category, []).append(e)
        self.by_category = {c: tuple(v) for c, v in sorted(by_cat.items())}

    @property
    def categories(self) -> list[str]:
        return list(self.by_category)

    def audio(self, entry: PoolEntry) -> np.ndarray:
        return load_source(entry.path, self.sample_rate)

    @classmethod
    def from_dir(cls, root, sample_rate: int = DEFAULT_SAMPLE_RATE) -> "EventPool":
        """Read ``catalog.jsonl`` under ``root``; without one, every ``*.wav``
        named ``<category>__<anything>.wav`` becomes an entry captioned by its
        category."""
        root = Path(root).resolve()
        if not root.is_dir():
            raise FileNotFoundError(f"pool directory not found: {root}")
        catalog = root / "catalog.jsonl"
        entries = []
        if catalog.exists():
            for line in catalog.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                caps = rec.get("captions") or [rec["caption"]]
                entries.append(PoolEntry(str((root / rec["path"]).resolve()), tuple(caps), rec["category"]))
        else:
            for wav in sorted(root.glob("*.wav")):
                category = wav.stem.split("__")[0]
                entries.append(PoolEntry(str(wav), (category.replace("_", " "),), category))
        return cls(entries, sample_rate)


# ---------------------------------------------------------------------------
# scenes


@dataclass(frozen=True)
class Stem:
    source_path: str
    caption: str
    category: str
    gain_db: float
    offset_s: float
    duration_s: float
    source_start_s: float = 0.0


@dataclass(frozen=True)
class MixtureScene:
    id: str
    duration_s: float
    sample_rate: int
    stems: tuple[Stem, ...]
    target_indices: tuple[int, ...]
    operator: str
    snr_db_per_stem: tuple[float, ...]
    seed: int
    perturb_snr_db: float | None = None
    prompt: str = ""
    template_id: int | None = None
    normalization: float | None = None
    preset: str = ""
    index: int = 0

    @property
    def num_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate))

    @property
    def complement_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.stems)) if i not in self.target_indices)


def snr_gain(target_power: float, interferer_power: float, snr_db: float) -> float:
    """Linear gain putting the interferer ``snr_db`` below the target."""
    if not (target_power > 0 and interferer_power > 0):
        raise DegenerateSignalError("SNR gain needs two non-silent signals")
    return math.sqrt(target_power / (interferer_power * 10.0 ** (snr_db / 10.0)))


def _place(audio: np.ndarray, stem: Stem, n: int, sr: int) -> np.ndarray:
    out = np.zeros(n)
    offset = int(round(stem.offset_s * sr))
    start = int(round(stem.source_start_s * sr))
    length = int(round(stem.duration_s * sr))
    seg = audio[start:start + length]
    out[offset:offset + seg.size] = seg[:n - offset]
    return out


def _draw_subset(rng: np.random.Generator, n: int, allow_full: bool) -> tuple[int, ...]:
    hi = (1 << n) - (0 if allow_full else 1)
    mask = int(rng.integers(1, hi))
    return tuple(i for i in range(n) if mask >> i & 1)


def _draw_crop(rng: np.random.Generator, audio: np.ndarray, energy: np.ndarray, n: int) -> int:
    """Random crop start.

    Crops holding under 1% of the clip's mean power are redrawn; after
    ``_CROP_ATTEMPTS`` misses the crop is drawn among those covering the peak.
    """
    floor = 0.01 * energy[-1] / audio.size
    for _ in range(_CROP_ATTEMPTS):
        start = int(rng.integers(0, audio.size - n + 1))
        if (energy[start + n] - energy[start]) / n >= floor:
            return start
    peak = int(np.argmax(np.abs(audio)))
    return int(rng.integers(max(0, peak - n + 1), min(peak, audio.size - n) + 1))


def build_scene(pool: EventPool, preset: DatasetPreset, rng: np.random.Generator, *,
                scene_id: str = "scene", seed: int = 0, index: int = 0,
                duration_s: float | None = None, perturb_snr_db: float | None = None) -> MixtureScene:
    """Draw one mixture scene from ``pool`` following ``preset``."""
    lo, hi = preset.n_events
    if len(pool.categories) < hi:
        raise InsufficientPoolError(
            f"preset {preset.name} needs {hi} distinct categories, pool has {len(pool.categories)}")
    sr = pool.sample_rate
    duration_s = preset.duration_s if duration_s is None else float(duration_s)
    n_samples = int(round(duration_s * sr))

    n = int(rng.integers(lo, hi + 1))
    cat_idx = rng.choice(len(pool.categories), size=n, replace=False)
    entries = []
    for c in cat_idx:
        group = pool.by_category[pool.categories[int(c)]]
        entries.append(group[int(rng.integers(len(group)))])

    placed = []
    geometry = []
    for e in entries:
        audio = pool.audio(e)
        if audio.size > n_samples:
            start = _draw_crop(rng, audio, _energy_prefix(e.path, sr), n_samples)
            offset, length = 0, n_samples
        else:
            start, offset, length = 0, int(rng.integers(0, n_samples - audio.size + 1)), audio.size
        geometry.append((offset / sr, length / sr, start / sr))
        placed.append(_place(audio, Stem(e.path, "", e.category, 0.0, offset / sr, length / sr, start / sr),
                             n_samples, sr))

    snr_lo, snr_hi = preset.snr_db
    snrs = [0.0] + [float(rng.uniform(snr_lo, snr_hi)) if snr_hi > snr_lo else float(snr_lo)
                    for _ in range(n - 1)]
    ref_power = require_non_silent(placed[0], f"stem {entries[0].path}")
    gains_db = [0.0]
    for i in range(1, n):
        p = require_non_silent(placed[i], f"stem {entries[i].path}")
        gains_db.append(20.0 * math.log10(snr_gain(ref_power, p, snrs[i])))

    captions = caption_variants({f"{i:02d}": e.captions for i, e in enumerate(entries)}, rng)
    operator = "remove" if n >= 2 and rng.random() < preset.operator_mix else "extract"
    if preset.target_subset_rule == "first":
        targets = (0,)
    else:
        allow_full = operator == "extract" and preset.target_subset_rule == "any_subset"
        targets = _draw_subset(rng, n, allow_full) if n >= 2 else (0,)
    stems = tuple(Stem(e.path, captions[f"{i:02d}"], e.category, gains_db[i], *geometry[i])
                  for i, e in enumerate(entries))
    prompt = compose_prompt(operator, [stems[i].caption for i in targets], rng)

    scene = MixtureScene(scene_id, duration_s, sr, stems, targets, operator, tuple(snrs), int(seed),
                         perturb_snr_db, prompt.text, prompt.template_id, None, preset.name, int(index))
    return replace(scene, normalization=_normalization(_raw_stems(scene)))


def _raw_stems(scene: MixtureScene) -> np.ndarray:
    n = scene.num_samples
    out = np.empty((len(scene.stems), n))
    for i, stem in enumerate(scene.stems):
        audio = load_source(stem.source_path, scene.sample_rate)
        out[i] = quantize(_place(audio, stem, n, scene.sample_rate) * 10.0 ** (stem.gain_db / 20.0))
    return out


def _normalization(raw: np.ndarray) -> float:
    peak = float(np.max(np.abs(raw.sum(axis=0)))) if raw.size else 0.0
    return 1.0 if peak <= 1.0 else _PEAK_TARGET / peak


def render_stems(scene: MixtureScene) -> np.ndarray:
    """Gain-scaled, placed and normalised stems, shape ``(n_stems, samples)``."""
    raw = _raw_stems(scene)
    factor = scene.normalization if scene.normalization is not None else _normalization(raw)
    return raw if factor == 1.0 else quantize(raw * factor)


def render_mixture(scene: MixtureScene, stems: np.ndarray | None = None) -> AudioClip:
    stems = render_stems(scene) if stems is None else stems
    return AudioClip.mono(stems.sum(axis=0), scene.sample_rate)


def render_target(scene: MixtureScene, operator: str, stems: np.ndarray | None = None) -> AudioClip:
    """Ground truth for ``operator``: the targets (extract) or the rest (remove)."""
    if not scene.target_indices:
        raise SepbenchError("scene has no target stems")
    if operator == "extract":
        idx = scene.target_indices
    elif operator == "remove":
        idx = scene.complement_indices
        if not idx:
            raise InvalidOperatorError("removal of every stem leaves nothing")
    else:
        raise InvalidOperatorError(f"unknown operator {operator!r}")
    stems = render_stems(scene) if stems is None else stems
    return AudioClip.mono(stems[list(idx)].sum(axis=0), scene.sample_rate)


def perturb_input(clip: AudioClip, perturb_snr_db: float | None, rng: np.random.Generator) -> AudioClip:
    """Add white Gaussian noise exactly ``perturb_snr_db`` below the signal.

    ``None`` or ``+inf`` disables the perturbation. Training-style inputs use
    :data:`DEFAULT_PERTURB_SNR_DB`.
    """
    if perturb_snr_db is None or math.isinf(perturb_snr_db) and perturb_snr_db > 0:
        return clip
    p_sig = require_non_silent(clip.samples, "clip")
    noise = rng.standard_normal(clip.samples.shape)
    noise *= math.sqrt(p_sig / (power(noise) * 10.0 ** (perturb_snr_db / 10.0)))
    return clip.with_samples(clip.samples + noise)


# ---------------------------------------------------------------------------
# manifests


def scene_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent per-scene generator derived from ``(seed, index)``."""
    return np.random.default_rng([int(seed), int(index), int(stream)])


def scene_to_record(scene: MixtureScene, files: dict[str, str | None] | None = None) -> dict:
    files = files or {}
    return {
        "id": scene.id,
        "preset": scene.preset,
        "index": scene.index,
        "mixture": files.get("mixture"),
        "target_extract": files.get("target_extract"),
        "target_remove": files.get("target_remove"),
        "duration_s": scene.duration_s,
        "sample_rate": scene.sample_rate,
        "stems": [{"path": s.source_path, "caption": s.caption, "category": s.category,
                   "gain_db": s.gain_db, "offset_s": s.offset_s, "duration_s": s.duration_s,
                   "source_start_s": s.source_start_s} for s in scene.stems],
        "target_indices": list(scene.target_indices),
        "operator": scene.operator,
        "prompt": scene.prompt,
        "template_id": scene.template_id,
        "snr_db_per_stem": list(scene.snr_db_per_stem),
        "normalization": scene.normalization,
        "perturb_snr_db": scene.perturb_snr_db,
        "seed": scene.seed,
    }


def scene_from_record(rec: dict) -> MixtureScene:
    stems = tuple(Stem(s["path"], s["caption"], s["category"], float(s["gain_db"]), float(s["offset_s"]),
                       float(s["duration_s"]), float(s.get("source_start_s", 0.0))) for s in rec["stems"])
    return MixtureScene(rec["id"], float(rec["duration_s"]), int(rec["sample_rate"]), stems,
                        tuple(rec["target_indices"]), rec["operator"], tuple(rec["snr_db_per_stem"]),
                        int(rec["seed"]), rec.get("perturb_snr_db"), rec.get("prompt", ""),
                        rec.get("template_id"), rec.get("normalization"), rec.get("preset", ""),
                        int(rec.get("index", 0)))


def read_manifest(path) -> list[dict]:
    """Parse a JSON-lines manifest; relative file fields are resolved against its folder."""
    path = Path(path)
    root = path.resolve().parent
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        for key in ("mixture", "target_extract", "target_remove"):
            if rec.get(key):
                rec[key] = str(root / rec[key])
        records.append(rec)
    return records


def _simulate_one(pool, preset, seed, index, staging, duration_s, perturb_snr_db):
    scene_id = f"{preset.name}-{seed}-{index:06d}"
    scene = build_scene(pool, preset, scene_rng(seed, index), scene_id=scene_id, seed=seed, index=index,
                        duration_s=duration_s, perturb_snr_db=perturb_snr_db)
    stems = render_stems(scene)
    mixture = perturb_input(render_mixture(scene, stems), perturb_snr_db, scene_rng(seed, index, 1))
    files = {"mixture": f"mixtures/{scene_id}.wav", "target_extract": f"targets_extract/{scene_id}.wav"}
    write_wav(mixture, staging / files["mixture"])
    write_wav(render_target(scene, "extract", stems), staging / files["target_extract"])
    if scene.complement_indices:
        files["target_remove"] = f"targets_remove/{scene_id}.wav"
        write_wav(render_target(scene, "remove", stems), staging / files["target_remove"])
    return scene_to_record(scene, files)


def simulate_dataset(pool: EventPool, preset: DatasetPreset, count: int, seed: int, out_dir, *,
                     threads: int = 1, duration_s: float | None = None,
                     perturb_snr_db: float | None = None) -> Path:
    """Render ``count`` scenes plus ``manifest.jsonl`` into ``out_dir``.

    Output depends only on ``(pool, preset, count, seed)`` and the overrides,
    never on ``threads``. Nothing is left behind if any scene fails.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        for sub in ("mixtures", "targets_extract", "targets_remove"):
            (staging / sub).mkdir()

        def job(i):
            return _simulate_one(pool, preset, seed, i, staging, duration_s, perturb_snr_db)

        if threads > 1 and count > 1:
            with ThreadPoolExecutor(threads) as ex:
                records = list(ex.map(job, range(count)))
        else:
            records = [job(i) for i in range(count)]
        lines = "".join(json.dumps(r) + "\n" for r in records)
        (staging / MANIFEST_NAME).write_text(lines, encoding="utf-8")

        for src in sorted(staging.rglob("*")):
            if src.is_file():
                dst = out_dir / src.relative_to(staging)
                dst.parent.mkdir(parents=True, exist_ok=True)
                os.replace(src, dst)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    log.info("wrote %d scenes to %s", count, out_dir)
    return out_dir / MANIFEST_NAME
