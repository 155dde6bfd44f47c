#!/usr/bin/env python3
"""Operation counts of the 7-bit VQ baseline vs. the combined system, N = 1..n_max.

Prints the CSV to stdout and a short summary (first N where the ratio passes
3.5, value at the last N) to stderr.
"""

import argparse
import sys
from fractions import Fraction

from hybrid_spkr.cli import COST_HEADER, csv_text
from hybrid_spkr.hybrid import CostModelParams, cost_ratio_curve


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-max", type=int, default=200)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--tcl", type=int, default=32)
    ap.add_argument("--tcl-baseline", type=int, default=128)
    args = ap.parse_args(argv)

    rows = cost_ratio_curve(range(1, args.n_max + 1), CostModelParams(1, codebook_size=args.tcl, k=args.k),
                            args.tcl_baseline)
    sys.stdout.write(csv_text(COST_HEADER, rows))
    above = [n for n, base, comb, _ in rows if Fraction(base, comb) > Fraction(7, 2)]
    first = above[0] if above else None
    print(f"ratio > 3.5 from N = {first}; ratio at N = {rows[-1][0]}: {rows[-1][3]:.4f}", file=sys.stderr)


if __name__ == "__main__":
    main()
