"""Objective separation metrics and the manifest-level evaluation driver."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .audio import AudioClip, downmix_mono, power_frames, read_wav
from .errors import DataError, DegenerateSignalError, FormatError, ShapeError
from .spectral import SpectroConfig, mel_spectrogram

log = logging.getLogger(__name__)

SDR_CAP_DB = 100.0
ACTIVITY_THRESHOLD = 0.01
F1_FRAME_LEN = 1024
F1_HOP_LEN = 512
_BOUNDARY_RTOL = 1e-12

DEFAULT_MEL_RESOLUTIONS = tuple(
    SpectroConfig(window_len=w, hop_len=w // 4, n_mels=m, log_floor=1e-5)
    for w, m in zip((64, 128, 256, 512, 1024, 2048), (8, 16, 32, 64, 128, 128))
)

METRICS = ("sdri", "mel", "f1", "clap", "fad")


def _pair(est: AudioClip, ref: AudioClip) -> tuple[np.ndarray, np.ndarray]:
    if est.sample_rate != ref.sample_rate:
        raise ShapeError(f"sample rates differ: {est.sample_rate} vs {ref.sample_rate}")
    a, b = downmix_mono(est).data, downmix_mono(ref).data
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def sdr(est: AudioClip, ref: AudioClip) -> float:
    """Plain SDR in dB, capped at +100 dB for a zero residual."""
    e, r = _pair(est, ref)
    num = float(np.sum(r * r))
    if num <= 0:
        raise DegenerateSignalError("reference is silent")
    den = float(np.sum((r - e) ** 2))
    if den <= 0:
        return SDR_CAP_DB
    return min(SDR_CAP_DB, 10.0 * math.log10(num / den))


def sdri(est: AudioClip, ref: AudioClip, mix: AudioClip) -> float:
    return sdr(est, ref) - sdr(mix, ref)


def mel_l2_multires(a: AudioClip, b: AudioClip,
                    resolutions: Sequence[SpectroConfig] = DEFAULT_MEL_RESOLUTIONS) -> float:
    """Mean over resolutions of the RMS difference between log-Mel spectrograms."""
    x, y = _pair(a, b)
    ca, cb = AudioClip.mono(x, a.sample_rate), AudioClip.mono(y, b.sample_rate)
    dists = []
    for cfg in resolutions:
        d = mel_spectrogram(ca, cfg) - mel_spectrogram(cb, cfg)
        dists.append(math.sqrt(float(np.mean(d * d))))
    return float(np.mean(dists))


@dataclass(frozen=True, eq=False)
class ActivitySequence:
    frames: np.ndarray
    frame_len: int
    hop_len: int
    threshold: float

    def __len__(self):
        return len(self.frames)


def activity_sequence(clip: AudioClip, threshold: float = ACTIVITY_THRESHOLD,
                      frame_len: int = F1_FRAME_LEN, hop_len: int = F1_HOP_LEN) -> ActivitySequence:
    """Frames whose RMS reaches ``threshold`` are active.

    The comparison runs on mean-square power against ``threshold**2``, with a
    1e-12 relative allowance so a frame sitting exactly on the threshold is not
    lost to summation rounding.
    """
    ms = power_frames(downmix_mono(clip), frame_len, hop_len)
    return ActivitySequence(ms >= threshold * threshold * (1.0 - _BOUNDARY_RTOL), frame_len, hop_len, threshold)


def f1_from_activity(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ShapeError(f"activity lengths differ: {pred.size} vs {truth.size}")
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def f1_decision_error(est: AudioClip, ref: AudioClip, threshold: float = ACTIVITY_THRESHOLD,
                      frame_len: int = F1_FRAME_LEN, hop_len: int = F1_HOP_LEN) -> float:
    """F1 agreement of thresholded frame-RMS activity (higher is better).

    Two all-silent sequences count as perfect agreement.
    """
    _pair(est, ref)
    a = activity_sequence(est, threshold, frame_len, hop_len)
    b = activity_sequence(ref, threshold, frame_len, hop_len)
    return f1_from_activity(a.frames, b.frames)


# ---------------------------------------------------------------------------
# embeddings


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    vectors: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[0] < 1:
            raise ShapeError(f"embeddings must be N x D with N >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError(f"non-finite embedding values in {self.source_tag or 'set'}")
        object.__setattr__(self, "vectors", v)

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def save_embeddings(vectors, path) -> None:
    """Row-major little-endian float32 payload plus ``<path>.json`` sidecar."""
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    Path(path).write_bytes(v.astype("<f4").tobytes())
    meta = {"dtype": "f32", "endianness": "little", "layout": "row-major", "shape": list(v.shape)}
    Path(f"{path}.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")


def load_embeddings(path) -> EmbeddingSet:
    path = Path(path)
    meta = json.loads(Path(f"{path}.json").read_text(encoding="utf-8"))
    if meta.get("dtype", "f32") != "f32" or meta.get("endianness", "little") != "little" \
            or meta.get("layout", "row-major") != "row-major":
        raise FormatError(f"{path}: only little-endian row-major f32 embeddings are supported")
    shape = tuple(int(s) for s in meta["shape"])
    if len(shape) != 2:
        raise FormatError(f"{path}: shape must be [N, D], got {shape}")
    payload = path.read_bytes()
    if len(payload) != shape[0] * shape[1] * 4:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, shape {list(shape)} needs "
                          f"{shape[0] * shape[1] * 4}")
    v = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(shape)
    return EmbeddingSet(v, source_tag=str(path))


def cosine_score(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateSignalError("cosine similarity of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.T)
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(m + 1e-6 * np.eye(m.shape[0]))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(set_a: EmbeddingSet, set_b: EmbeddingSet) -> float:
    """Fréchet distance between Gaussians fitted to two embedding sets."""
    a, b = set_a.vectors, set_b.vectors
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    d = a.shape[1]
    if min(a.shape[0], b.shape[0]) < d + 1:
        warnings.warn(f"fewer than D+1={d + 1} embeddings; covariance estimate is rank-deficient",
                      stacklevel=2)
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)

    def cov(x, mu):
        if x.shape[0] < 2:
            return np.zeros((d, d))
        c = x - mu
        return c.T @ c / (x.shape[0] - 1)

    sa, sb = cov(a, mu_a), cov(b, mu_b)
    root_a = _sqrtm_psd(sa)
    cross = _sqrtm_psd(root_a @ sb @ root_a)
    value = float(np.sum((mu_a - mu_b) ** 2) + np.trace(sa) + np.trace(sb) - 2.0 * np.trace(cross))
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    """Per-scene metric values plus aggregate means.

    Non-finite per-scene values are kept and counted, but excluded from means.
    """

    per_item: dict[str, dict[str, float]] = field(default_factory=dict)
    global_metrics: dict[str, float] = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)

    def aggregates(self) -> dict[str, dict[str, float]]:
        by_metric: dict[str, list[float]] = {}
        for scene in sorted(self.per_item):
            for name, value in self.per_item[scene].items():
                by_metric.setdefault(name, []).append(value)
        out = {}
        for name in sorted(by_metric):
            vals = np.asarray(by_metric[name], dtype=np.float64)
            finite = vals[np.isfinite(vals)]
            out[name] = {"mean": float(np.mean(finite)) if finite.size else float("nan"),
                         "count": int(finite.size), "nonfinite": int(vals.size - finite.size)}
        return out

    def to_dict(self) -> dict:
        d = {}
        if self.per_item:
            d["per_item"] = {k: dict(sorted(v.items())) for k, v in sorted(self.per_item.items())}
            d["aggregate"] = self.aggregates()
        if self.global_metrics:
            d["global"] = dict(sorted(self.global_metrics.items()))
        if self.missing:
            d["missing"] = sorted(self.missing)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls({k: dict(v) for k, v in d.get("per_item", {}).items()},
                   dict(d.get("global", {})), list(d.get("missing", [])))

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def report_render(report: EvalReport, path, fmt: str = "json") -> None:
    """Write ``report`` as sorted-key JSON or as ``scene_id,metric,value`` CSV."""
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scene_id", "metric", "value"])
        for scene in sorted(report.per_item):
            for name, value in sorted(report.per_item[scene].items()):
                writer.writerow([scene, name, repr(float(value))])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8")


def _reference_key(rec: dict) -> str:
    return "target_remove" if rec.get("operator") == "remove" else "target_extract"


def _score_scene(rec: dict, estimates_dir: Path, metrics: set, emb_dirs: dict) -> tuple[str, dict | None]:
    sid = rec["id"]
    est_path = estimates_dir / f"{sid}.wav"
    if not est_path.exists():
        return sid, None
    est = downmix_mono(read_wav(est_path))
    ref = downmix_mono(read_wav(rec[_reference_key(rec)]))
    values = {}
    if "sdri" in metrics:
        mix = downmix_mono(read_wav(rec["mixture"]))
        values["sdri"] = sdri(est, ref, mix)
    if "mel" in metrics:
        values["mel"] = mel_l2_multires(est, ref)
    if "f1" in metrics:
        values["f1"] = f1_decision_error(est, ref)
    if "clap" in metrics and "est" in emb_dirs:
        est_emb = load_embeddings(emb_dirs["est"] / f"{sid}.f32").vectors[0]
        if "text" in emb_dirs:
            values["clap"] = cosine_score(load_embeddings(emb_dirs["text"] / f"{sid}.f32").vectors[0], est_emb)
        if "ref" in emb_dirs:
            values["clap_a"] = cosine_score(load_embeddings(emb_dirs["ref"] / f"{sid}.f32").vectors[0], est_emb)
    return sid, values


def evaluate_manifest(manifest, estimates_dir, metric_selection: Iterable[str],
                      embedding_dirs: dict | None = None, threads: int = 1) -> EvalReport:
    """Score ``<estimates_dir>/<scene_id>.wav`` against each scene's ground truth.

    The reference is the removal target for removal scenes and the extraction
    target otherwise. Scenes without an estimate are listed in ``missing``.
    ``embedding_dirs`` may hold ``est``, ``ref`` and ``text`` folders of
    ``<scene_id>.f32`` embedding files.
    """
    from .scene import read_manifest

    metrics = {m.strip() for m in metric_selection if m.strip()}
    unknown = metrics - set(METRICS)
    if unknown:
        raise ValueError(f"unknown metrics {sorted(unknown)}; choose from {list(METRICS)}")
    records = read_manifest(manifest) if not isinstance(manifest, list) else manifest
    report = EvalReport()
    if not metrics:
        return report
    estimates_dir = Path(estimates_dir)
    emb_dirs = {k: Path(v) for k, v in (embedding_dirs or {}).items() if v}

    def job(rec):
        return _score_scene(rec, estimates_dir, metrics, emb_dirs)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(job, records))
    else:
        results = [job(r) for r in records]
    for sid, values in results:
        if values is None:
            report.missing.append(sid)
        elif values:
            report.per_item[sid] = values

    if "fad" in metrics and {"est", "ref"} <= set(emb_dirs):
        scored = [sid for sid, v in results if v is not None]
        if scored:
            est = np.vstack([load_embeddings(emb_dirs["est"] / f"{s}.f32").vectors for s in scored])
            ref = np.vstack([load_embeddings(emb_dirs["ref"] / f"{s}.f32").vectors for s in scored])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                report.global_metrics["fad"] = frechet_distance(EmbeddingSet(ref), EmbeddingSet(est))
    if report.missing:
        log.warning("%d scenes had no estimate and were excluded", len(report.missing))
    return report
