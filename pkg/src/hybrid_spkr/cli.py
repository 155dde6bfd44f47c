"""hybrid-spkr command line.

Subcommands: gen-corpus, enroll, identify, evaluate, sweep, cost.
Exit codes: 0 ok, 2 validation, 3 I/O, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as cp
from ._parallel import default_jobs
from .errors import DataIOError, HybridSpkrError, NumericError, ValidationError
from .frontend import FrontendConfig, extract_lpcc, read_wav, write_wav
from .hybrid import (
    CostModelParams,
    HybridConfig,
    best_alpha,
    cost_ratio_curve,
    default_alpha_grid,
    error_rate,
    evaluate,
    hybrid_identify,
    score_utterances,
    sweep_alpha,
    sweep_k,
)
from .neural import TrainConfig, mlp_identify
from .vq import MAX_SIZE_BITS, DistortionCriterion, vq_identify

SEED_ENV = "HYBRID_SPKR_SEED"
K_SWEEP_HEADER = ["k", "combined_error", "mlp_only_error"]
ALPHA_SWEEP_HEADER = ["alpha", "error"]
COST_HEADER = ["n", "cost_vq", "cost_combined", "ratio"]


# --- argument types ------------------------------------------------------------


def _int_in(lo, hi=None):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
        if v < lo or (hi is not None and v > hi):
            rng = f">= {lo}" if hi is None else f"in [{lo}, {hi}]"
            raise argparse.ArgumentTypeError(f"{v} must be {rng}")
        return v
    return parse


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not (v >= 0 and np.isfinite(v)):
        raise argparse.ArgumentTypeError(f"{v} must be a finite value >= 0")
    return v


def _float_list(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _bits_list(text):
    parse = _int_in(1, MAX_SIZE_BITS)
    return [parse(v) for v in str(text).split(",") if v.strip()]


def _default_seed() -> int | None:
    env = os.environ.get(SEED_ENV)
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise ValidationError(f"{SEED_ENV}={env!r} is not an integer") from None


# --- helpers ----------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def csv_text(header, rows) -> str:
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _cell(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def parse_csv(text: str) -> tuple[list, list]:
    """Inverse of :func:`csv_text`; numeric cells come back as int or float."""
    lines = text.strip().splitlines()
    return lines[0].split(","), [[_cell(v) for v in line.split(",")] for line in lines[1:]]


def _train_config(args) -> TrainConfig:
    return TrainConfig(n_starts=args.n_starts, epochs_per_start=args.epochs_per_start,
                       final_epochs=args.final_epochs, n_hidden=args.n_hidden,
                       normalize=args.normalize, seed=args.seed)


def _frontend_from_index(index: dict) -> FrontendConfig:
    fe = index.get("config", {}).get("frontend")
    return FrontendConfig(**fe) if fe else FrontendConfig()


def _write_or_print(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands ------------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    doc = cp.synthetic_manifest(args.n_speakers, args.clips_per_speaker, args.seed,
                                args.test_snr_db, args.spread)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"version": cp.MANIFEST_VERSION, "seed": args.seed, "speakers": []}
    for spk in doc["speakers"]:
        entry = {"id": spk["id"], "train": [], "test": []}
        for split in ("train", "test"):
            (out / spk["id"] / split).mkdir(parents=True, exist_ok=True)
            for clip_doc in spk[split]:
                name, clip = cp.load_clip(clip_doc, out)
                rel = f"{spk['id']}/{split}/{Path(name).name}.wav"
                write_wav(out / rel, clip)
                entry[split].append(rel)
        manifest["speakers"].append(entry)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    print(path)
    return 0


def _enroll(args, corpus, size_bits, mlps=None, features=None):
    cfg = cp.EnrollConfig(size_bits=size_bits, train=_train_config(args), seed=args.seed)
    return cp.enroll(corpus, cfg, jobs=args.jobs, mlps=mlps, features=features), cfg


def _load_corpus(args) -> cp.Corpus:
    """Load the manifest's corpus; its root seed fills in when no seed was given."""
    corpus = cp.load_corpus(args.manifest)
    if args.seed is None:
        args.seed = corpus.manifest.seed
    return corpus


def cmd_enroll(args) -> int:
    corpus = _load_corpus(args)
    models, cfg = _enroll(args, corpus, args.size_bits)
    cp.save_models(args.models_dir, models, {"corpus_hash": corpus.digest, "config": cfg.to_dict()})
    rows = [(m.id, m.codebook.size, m.codebook.train_distortion, m.mlp.train_sse) for m in models]
    sys.stdout.write(csv_text(["speaker", "centroids", "train_distortion", "mlp_sse"], rows))
    return 0


def cmd_identify(args) -> int:
    models, index = cp.load_models(args.models_dir)
    frames = extract_lpcc(read_wav(args.wav), _frontend_from_index(index))
    crit = DistortionCriterion.parse(args.criterion)
    if args.mode == "vq":
        ranked = [(models[i].id, v) for i, v in vq_identify(frames, [m.codebook for m in models], crit)]
    elif args.mode == "mlp":
        ranked = [(models[i].id, v) for i, v in mlp_identify(frames, [m.mlp for m in models])]
    else:
        ranked = hybrid_identify(frames, models, HybridConfig(args.alpha, args.k, crit))
    rows = [(r + 1, sid, score) for r, (sid, score) in enumerate(ranked)]
    sys.stdout.write(csv_text(["rank", "speaker", "score"], rows))
    return 0


def _columns(mode: str, criterion: str) -> list[tuple[str, str, str | None]]:
    """(column name, mode, criterion) triples for the evaluation table."""
    if mode == "all":
        return [("vq_mse", "vq", "mse"), ("vq_mad", "vq", "mad"), ("mlp", "mlp", None),
                ("hybrid_mse", "hybrid", "mse"), ("hybrid_mad", "hybrid", "mad")]
    if mode == "mlp":
        return [("mlp", "mlp", None)]
    return [(f"{mode}_{criterion}", mode, criterion)]


def _eval_models(models, utts, columns, k, alpha, jobs):
    tables = {}
    rates = {}
    for name, mode, crit in columns:
        crit = crit or "mse"
        if crit not in tables:
            tables[crit] = score_utterances(utts, models, crit, jobs)
        rates[name] = error_rate(tables[crit], mode, k, alpha)
    return rates, tables


def human_table(rows, columns) -> str:
    names = [c[0] for c in columns]
    head = f"{'bits':>4}  " + "  ".join(f"{n:>10}" for n in names)
    lines = [head, "-" * len(head)]
    for row in rows:
        bits = "-" if row["size_bits"] is None else str(row["size_bits"])
        lines.append(f"{bits:>4}  " + "  ".join(f"{100 * row['errors'][n]:>9.2f}%" for n in names))
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    corpus = _load_corpus(args)
    columns = _columns(args.mode, args.criterion)
    rows, reports = [], []
    if args.codebook_sizes:
        fe = FrontendConfig()
        utts = cp.load_test_utterances(corpus, fe, args.jobs)
        feats = cp.train_features(corpus, fe, args.jobs)
        mlps = cp.train_mlps(feats, _train_config(args), args.seed, args.jobs)
        for bits in args.codebook_sizes:
            models, _ = _enroll(args, corpus, bits, mlps=mlps, features=feats)
            rates, _ = _eval_models(models, utts, columns, args.k, args.alpha, args.jobs)
            rows.append({"size_bits": bits, "errors": rates})
    else:
        if not args.models_dir:
            raise ValidationError("evaluate needs --models-dir or --codebook-sizes")
        models, index = cp.load_models(args.models_dir)
        utts = cp.load_test_utterances(corpus, _frontend_from_index(index), args.jobs)
        rates, tables = _eval_models(models, utts, columns, args.k, args.alpha, args.jobs)
        rows.append({"size_bits": models[0].codebook.size_bits, "errors": rates})
        for name, mode, crit in columns:
            cfg = HybridConfig(args.alpha, args.k, crit or "mse")
            rep = evaluate(tables[crit or "mse"], cfg=cfg, mode=mode).to_dict()
            rep["column"] = name
            reports.append(rep)
    result = {
        "config": {"mode": args.mode, "criterion": args.criterion, "k": args.k, "alpha": args.alpha, "seed": args.seed},
        "table": rows,
        "reports": reports,
    }
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=1) + "\n")
    sys.stdout.write(human_table(rows, columns))
    return 0


def cmd_sweep(args) -> int:
    corpus = _load_corpus(args)
    models, index = cp.load_models(args.models_dir)
    utts = cp.load_test_utterances(corpus, _frontend_from_index(index), args.jobs)
    table = score_utterances(utts, models, args.criterion, args.jobs)
    if args.param == "k":
        text = csv_text(K_SWEEP_HEADER, sweep_k(table, alpha=args.alpha))
    else:
        if args.alpha_grid:
            grid = np.array(args.alpha_grid)
        elif args.alpha_max is not None:
            lo = args.alpha_min if args.alpha_min is not None else args.alpha_max * 1e-4
            if not 0 < lo <= args.alpha_max:
                raise ValidationError("need 0 < --alpha-min <= --alpha-max")
            grid = np.logspace(np.log10(lo), np.log10(args.alpha_max), args.alpha_steps)
        else:
            grid = default_alpha_grid(table, args.alpha_steps)
        if args.k > len(models):
            raise ValidationError(f"--k {args.k} exceeds the {len(models)} enrolled speakers")
        rows = sweep_alpha(table, alphas=grid, k=args.k)
        text = csv_text(ALPHA_SWEEP_HEADER, rows)
        if args.out:
            a, err = best_alpha(rows)
            print(f"best alpha {a!r} error {err!r}")
    _write_or_print(text, args.out)
    return 0


def cmd_cost(args) -> int:
    params = CostModelParams(1, args.p, args.tcl, args.k, args.ni, args.nh1, args.ctg)
    n_values = [args.n] if args.n is not None else range(1, args.n_max + 1)
    rows = cost_ratio_curve(n_values, params, args.tcl_baseline)
    sys.stdout.write(csv_text(COST_HEADER, rows))
    return 0


# --- parser -----------------------------------------------------------------------


def _add_train_flags(p):
    p.add_argument("--n-starts", type=_int_in(1), default=4)
    p.add_argument("--epochs-per-start", type=_int_in(1), default=8)
    p.add_argument("--final-epochs", type=_int_in(0), default=50)
    p.add_argument("--n-hidden", type=_int_in(1), default=16)
    p.add_argument("--normalize", action="store_true", help="standardize MLP inputs")


def _add_hybrid_flags(p, mode_choices=None):
    if mode_choices:
        p.add_argument("--mode", choices=mode_choices, default=mode_choices[-1])
    p.add_argument("--k", type=_int_in(1), default=2)
    p.add_argument("--alpha", type=_nonneg_float, default=1.0)
    p.add_argument("--criterion", choices=["mse", "mad"], default="mad")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"root seed (fallback: ${SEED_ENV}, then the manifest's seed, then 0)")
    common.add_argument("--jobs", type=_int_in(1), default=None, help="worker processes (default: all cores)")
    common.add_argument("--config", help="JSON file of flag defaults; explicit flags win")

    parser = argparse.ArgumentParser(prog="hybrid-spkr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", parents=[common], help="write a synthetic AR-voice corpus")
    p.add_argument("--n-speakers", type=_int_in(1), default=10)
    p.add_argument("--clips-per-speaker", type=_int_in(2), default=10)
    p.add_argument("--test-snr-db", type=float, default=None, help="add white noise to test clips")
    p.add_argument("--spread", type=_nonneg_float, default=0.15, help="voice dissimilarity")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("enroll", parents=[common], help="train codebooks and MLPs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--size-bits", type=_int_in(1, MAX_SIZE_BITS), default=5)
    p.add_argument("--models-dir", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("identify", parents=[common], help="rank speakers for one WAV file")
    p.add_argument("wav")
    p.add_argument("--models-dir", required=True)
    _add_hybrid_flags(p, ["vq", "mlp", "hybrid"])
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("evaluate", parents=[common], help="error rates on the manifest's test clips")
    p.add_argument("--manifest", required=True)
    p.add_argument("--models-dir")
    p.add_argument("--codebook-sizes", type=_bits_list, default=None,
                   help="comma list of size_bits; re-enrolls per size and prints one row each")
    p.add_argument("--out", help="JSON report path")
    _add_hybrid_flags(p, ["vq", "mlp", "hybrid", "all"])
    _add_train_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="error vs K or alpha, as CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--models-dir", required=True)
    p.add_argument("--param", choices=["k", "alpha"], required=True)
    p.add_argument("--alpha-grid", type=_float_list, default=None, help="explicit comma list")
    p.add_argument("--alpha-min", type=_nonneg_float, default=None)
    p.add_argument("--alpha-max", type=_nonneg_float, default=None)
    p.add_argument("--alpha-steps", type=_int_in(1), default=100)
    p.add_argument("--out", help="CSV path (default: stdout)")
    _add_hybrid_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cost", parents=[common], help="operation counts, VQ baseline vs combined")
    p.add_argument("--n", type=_int_in(1), default=None, help="single speaker count")
    p.add_argument("--n-max", type=_int_in(1), default=100, help="curve over N = 1..n-max")
    p.add_argument("--p", type=_int_in(1), default=12)
    p.add_argument("--tcl", type=_int_in(1), default=32)
    p.add_argument("--tcl-baseline", type=_int_in(1), default=128)
    p.add_argument("--k", type=_int_in(0), default=2)
    p.add_argument("--ni", type=_int_in(1), default=12)
    p.add_argument("--nh1", type=_int_in(1), default=16)
    p.add_argument("--ctg", type=_int_in(1), default=10)
    p.set_defaults(func=cmd_cost)
    return parser


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except FileNotFoundError as exc:
            raise DataIOError(f"missing config file: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {args.config}: {exc}") from exc
        sub = parser._subparsers._group_actions[0].choices[args.command]
        overrides = {k.replace("-", "_"): v for k, v in overrides.items()}
        unknown = sorted(set(overrides) - {a.dest for a in sub._actions})
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = _default_seed()
    if args.seed is None and getattr(args, "manifest", None) is None:
        args.seed = 0
    if args.jobs is None:
        args.jobs = default_jobs()
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except HybridSpkrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataIOError.exit_code
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return NumericError.exit_code


if __name__ == "__main__":
    sys.exit(main())
