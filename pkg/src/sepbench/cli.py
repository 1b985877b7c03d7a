"""``sepbench`` command line entry point.

Exit codes: 0 success, 1 validation / precondition failure (including bad
usage), 2 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .audio import load_mono, write_wav
from .baselines import gate_separate, oracle_separate
from .diffusion import GaussianDataModel, GaussianDenoiser, solve, wasserstein2_to_gaussian
from .errors import SepbenchError
from .imitation import control_curves, save_curves
from .metrics import (METRICS, EmbeddingSet, cosine_score, evaluate_manifest, frechet_distance,
                      load_embeddings, report_render, save_embeddings)
from .prompts import compose_prompt
from .scene import EventPool, get_preset, read_manifest, scene_from_record, simulate_dataset

log = logging.getLogger("sepbench")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def resolve_threads(value: int | None) -> int:
    if value is None:
        value = int(os.environ.get("SEPBENCH_THREADS", "1"))
    if value == 0:
        return os.cpu_count() or 1
    if value < 0:
        raise SepbenchError("--threads must be >= 0")
    return value


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    preset = get_preset(args.preset)
    pool = EventPool.from_dir(args.pool, args.sample_rate)
    path = simulate_dataset(pool, preset, args.count, args.seed, args.out, threads=args.threads,
                            duration_s=args.duration, perturb_snr_db=args.perturb_snr)
    log.info("manifest: %s", path)


def cmd_prompt(args):
    rng = np.random.default_rng(args.seed)
    spec = compose_prompt(args.operator, args.captions, rng=rng, template_id=args.template_id)
    print(spec.text)


def cmd_curves(args):
    clip = load_mono(args.input)
    curves = control_curves(clip, args.median, args.f_lo, args.f_hi)
    save_curves(curves, args.out)
    log.info("wrote %d curve frames to %s", len(curves), args.out)


def cmd_oracle_separate(args):
    records = read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    separate = oracle_separate if args.method == "irm" else gate_separate

    def job(rec):
        scene = scene_from_record(rec)
        operator = args.operator or scene.operator
        mixture = load_mono(rec["mixture"]) if rec.get("mixture") else None
        write_wav(separate(scene, operator, mixture=mixture), out / f"{scene.id}.wav")

    _map(job, records, args.threads)
    log.info("separated %d scenes into %s", len(records), out)


def cmd_evaluate(args):
    metrics = [m for m in args.metrics.split(",") if m.strip()]
    emb = {"ref": args.ref_emb, "est": args.est_emb, "text": args.text_emb}
    if not Path(args.manifest).exists():
        raise FileNotFoundError(f"manifest not found: {args.manifest}")
    report = evaluate_manifest(args.manifest, args.estimates, metrics, emb, threads=args.threads)
    if args.report:
        report_render(report, args.report, "json")
    if args.csv:
        report_render(report, args.csv, "csv")
    if not args.report and not args.csv:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))


def cmd_embed_metrics(args):
    a, b = load_embeddings(args.a), load_embeddings(args.b)
    if args.metric == "fad":
        result = {"fad": frechet_distance(a, b)}
    else:
        if a.vectors.shape != b.vectors.shape:
            raise SepbenchError("cosine needs row-aligned embedding sets of equal shape")
        scores = [cosine_score(x, y) for x, y in zip(a.vectors, b.vectors)]
        result = {"cosine_mean": float(np.mean(scores)), "count": len(scores)}
    print(json.dumps(result, sort_keys=True))


def cmd_diffusion_demo(args):
    rng = np.random.default_rng(args.seed)
    x1 = rng.standard_normal(args.samples)
    denoiser = GaussianDenoiser(GaussianDataModel(args.mu, args.std))
    n_chunks = max(1, args.threads)
    chunks = np.array_split(x1, n_chunks)
    parts = _map(lambda c: solve(denoiser, c, args.steps, args.order, grid=args.grid), chunks, args.threads)
    samples = np.concatenate(parts)
    result = {"mean": float(samples.mean()), "std": float(samples.std(ddof=1)),
              "w2": wasserstein2_to_gaussian(samples, args.mu, args.std),
              "target_mean": args.mu, "target_std": args.std, "steps": args.steps,
              "order": args.order, "samples": args.samples}
    print(json.dumps(result, sort_keys=True))
    if args.dump:
        save_embeddings(samples[:, None], args.dump)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads; 0 = all cores (env SEPBENCH_THREADS)")
    common.add_argument("--log-level", default="WARNING", help="logging level")

    parser = _Parser(prog="sepbench", description="Prompt-driven separation simulation and evaluation toolkit.")
    parser.add_argument("--version", action="version", version=f"sepbench {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="render a simulated mixture dataset")
    p.add_argument("--preset", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--pool", required=True, help="directory of source WAVs (+ optional catalog.jsonl)")
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=None, help="override scene duration (s)")
    p.add_argument("--perturb-snr", type=float, default=None, help="input perturbation SNR in dB")
    p.add_argument("--sample-rate", type=int, default=44100)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("prompt", parents=[common], help="print a realised operator prompt")
    p.add_argument("--operator", required=True, choices=["extract", "remove"])
    p.add_argument("--captions", required=True, nargs="+")
    p.add_argument("--template-id", type=int, default=None)
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("curves", parents=[common], help="extract 40 Hz RMS and pitch curves")
    p.add_argument("--input", required=True)
    p.add_argument("--median", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--f-lo", type=float, default=60.0)
    p.add_argument("--f-hi", type=float, default=1000.0)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("oracle-separate", parents=[common], help="run a reference separator over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--operator", choices=["extract", "remove"], default=None,
                   help="default: each scene's own operator")
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=["irm", "gate"], default="irm")
    p.set_defaults(func=cmd_oracle_separate)

    p = sub.add_parser("evaluate", parents=[common], help="score estimates against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--estimates", required=True)
    p.add_argument("--metrics", default="sdri,mel,f1", help=f"comma list from {','.join(METRICS)}")
    p.add_argument("--ref-emb")
    p.add_argument("--est-emb")
    p.add_argument("--text-emb")
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--csv", help="per-scene CSV path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed-metrics", parents=[common], help="FAD or mean cosine between embedding files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", choices=["fad", "cosine"], default="fad")
    p.set_defaults(func=cmd_embed_metrics)

    p = sub.add_parser("diffusion-demo", parents=[common], help="sample the Gaussian oracle with DPM-Solver")
    p.add_argument("--mu", type=float, default=3.0)
    p.add_argument("--std", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--order", type=int, choices=[1, 2], default=2)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--grid", choices=["time", "logsnr"], default="time")
    p.add_argument("--dump", help="write samples as an embedding file")
    p.set_defaults(func=cmd_diffusion_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.threads = resolve_threads(args.threads)
        args.func(args)
    except OSError as exc:
        print(f"sepbench: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SepbenchError, ValueError, KeyError) as exc:
        print(f"sepbench: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
