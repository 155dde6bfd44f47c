#!/usr/bin/env python3
"""Error vs. K and error vs. alpha for one codebook size, written as two CSVs.

    python scripts/sweeps.py --bits 5 --out-dir sweeps/
"""

import argparse
from pathlib import Path

from hybrid_spkr import corpus as cp
from hybrid_spkr.cli import ALPHA_SWEEP_HEADER, K_SWEEP_HEADER, csv_text
from hybrid_spkr.hybrid import best_alpha, score_utterances, sweep_alpha, sweep_k


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-speakers", type=int, default=10)
    ap.add_argument("--clips", type=int, default=10)
    ap.add_argument("--snr-db", type=float, default=30.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bits", type=int, default=5)
    ap.add_argument("--criterion", choices=["mse", "mad"], default="mad")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out-dir", type=Path, default=Path("sweeps"))
    args = ap.parse_args(argv)

    corpus = cp.load_corpus(cp.synthetic_manifest(args.n_speakers, args.clips, args.seed, args.snr_db))
    models = cp.enroll(corpus, cp.EnrollConfig(size_bits=args.bits, seed=args.seed), jobs=args.jobs)
    table = score_utterances(cp.load_test_utterances(corpus, jobs=args.jobs), models, args.criterion, args.jobs)

    alpha_rows = sweep_alpha(table, k=2)
    alpha, err = best_alpha(alpha_rows)
    k_rows = sweep_k(table, alpha=alpha)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "alpha.csv").write_text(csv_text(ALPHA_SWEEP_HEADER, alpha_rows))
    (args.out_dir / "k.csv").write_text(csv_text(K_SWEEP_HEADER, k_rows))
    print(f"best alpha at K=2: {alpha:.6g} (error {err:.4f}); K sweep uses that alpha")
    for k, comb, mlp in k_rows:
        print(f"K={k:2d}  combined {comb:.4f}  preselect+mlp {mlp:.4f}")


if __name__ == "__main__":
    main()
