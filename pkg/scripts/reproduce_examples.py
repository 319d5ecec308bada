"""Recompute the headline numbers of the fixture corpus and print them as a table.

Usage: python3 scripts/reproduce_examples.py [--epsilon 1/1000000] [--fixtures tests/fixtures]
"""
from __future__ import annotations

import argparse
import time
from fractions import Fraction
from pathlib import Path

from mdpx.approx import approx_ce, approx_pe
from mdpx.errors import InfiniteValueError
from mdpx.fmt import parse_mdp
from mdpx.preprocess import classify_finiteness

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epsilon", type=Fraction, default=Fraction(1, 10 ** 6))
    ap.add_argument("--ce-epsilon", type=Fraction, default=Fraction(1, 10 ** 4))
    ap.add_argument("--fixtures", type=Path, default=ROOT / "tests" / "fixtures")
    args = ap.parse_args()

    print(f"{'model':<10} {'PE fin':>6} {'CE fin':>6} {'PE lower':>14} {'PE upper':>14} {'CE':>12} {'secs':>7}")
    for path in sorted(args.fixtures.glob("*.mdpw")):
        model = parse_mdp(path.read_text())
        v = classify_finiteness(model)
        t0 = time.perf_counter()
        lo = hi = ce = "-"
        if v.pe_finite:
            res = approx_pe(model, args.epsilon)
            lo, hi = f"{float(res.lower):.10f}", f"{float(res.upper):.10f}"
        if v.ce_finite:
            try:
                ce = f"{float(approx_ce(model, args.ce_epsilon)[0]):.8f}"
            except InfiniteValueError as e:  # pragma: no cover - classification already excludes this
                ce = e.reason
        secs = time.perf_counter() - t0
        print(f"{path.stem:<10} {str(v.pe_finite):>6} {str(v.ce_finite):>6} {lo:>14} {hi:>14} {ce:>12} {secs:7.2f}")


if __name__ == "__main__":
    main()
