#!/usr/bin/env python3
"""Error-rate matrix (codebook size x method) on a seeded synthetic corpus.

Columns: VQ-only under both distortion criteria, MLP alone, and the combined
rule at its swept-optimal (K, alpha). MLPs are trained once and shared across
codebook sizes, so only the codebooks change between rows.

    python scripts/reproduce_tables.py --bits 3 4 5 6 7 --snr-db 30
"""

import argparse
import csv
import sys
import time

from hybrid_spkr import corpus as cp
from hybrid_spkr.hybrid import SpeakerModel, default_alpha_grid, error_rate, score_correlation, score_utterances
from hybrid_spkr.neural import TrainConfig


def swept_best(table):
    best = (2.0, 0, 0.0)
    for alpha in default_alpha_grid(table):
        for k in range(1, len(table.speaker_ids) + 1):
            e = error_rate(table, "hybrid", k, float(alpha))
            if e < best[0]:
                best = (e, k, float(alpha))
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-speakers", type=int, default=10)
    ap.add_argument("--clips", type=int, default=10)
    ap.add_argument("--snr-db", type=float, default=30.0)
    ap.add_argument("--spread", type=float, default=0.15)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bits", type=int, nargs="+", default=[3, 4, 5, 6, 7])
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    corpus = cp.load_corpus(cp.synthetic_manifest(args.n_speakers, args.clips, args.seed, args.snr_db, args.spread))
    feats = cp.train_features(corpus, jobs=args.jobs)
    utts = cp.load_test_utterances(corpus, jobs=args.jobs)
    mlps = cp.train_mlps(feats, TrainConfig(), args.seed, args.jobs)
    print(f"# {len(utts)} test utterances, MLPs trained in {time.perf_counter() - t0:.1f} s", file=sys.stderr)

    out = csv.writer(sys.stdout)
    out.writerow(["bits", "vq_mse", "vq_mad", "mlp", "combined_mse", "k_mse", "alpha_mse",
                  "combined_mad", "k_mad", "alpha_mad", "corr_mse"])
    for bits in args.bits:
        cbs = cp.train_codebooks(feats, bits, args.seed, args.jobs)
        models = [SpeakerModel(s, cb, m) for s, cb, m in zip(corpus.speaker_ids, cbs, mlps)]
        tabs = {c: score_utterances(utts, models, c, args.jobs) for c in ("mse", "mad")}
        comb = {c: swept_best(tabs[c]) for c in tabs}
        out.writerow([bits, error_rate(tabs["mse"], "vq"), error_rate(tabs["mad"], "vq"), error_rate(tabs["mse"], "mlp"),
                      *comb["mse"], *comb["mad"], score_correlation(tabs["mse"])])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
