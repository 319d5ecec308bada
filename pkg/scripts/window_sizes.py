"""Compare the window chosen in tight mode with the generic-bound window across epsilon.

Only the plan is computed (no solve), so even huge generic-mode windows are cheap to report.
Usage: python3 scripts/window_sizes.py [--fixtures tests/fixtures] [--digits 1 2 3 6]
"""
from __future__ import annotations

import argparse
from fractions import Fraction
from pathlib import Path

from mdpx.approx import Analysis
from mdpx.fmt import parse_mdp
from mdpx.preprocess import classify_finiteness, prepare

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fixtures", type=Path, default=ROOT / "tests" / "fixtures")
    ap.add_argument("--digits", type=int, nargs="+", default=[1, 2, 3, 6])
    args = ap.parse_args()

    print(f"{'model':<10} {'eps':>8} {'mode':>6} {'lo':>10} {'hi':>10} {'cells':>14}")
    for path in sorted(args.fixtures.glob("*.mdpw")):
        model = parse_mdp(path.read_text())
        if not classify_finiteness(model).pe_finite:
            continue
        prep = prepare(model)
        if prep.goal_unreachable or prep.model.is_absorbing(prep.model.initial):
            continue
        live = sum(not prep.model.is_absorbing(s) for s in range(prep.model.n))
        for mode in ("tight", "generic"):
            an = Analysis(prep, mode)
            for d in args.digits:
                plan = an.plan(Fraction(1, 10 ** d), Fraction(0))
                cells = live * (plan.hi - plan.lo + 1)
                print(f"{path.stem:<10} {'1e-' + str(d):>8} {mode:>6} {plan.lo:>10} {plan.hi:>10} {cells:>14}")


if __name__ == "__main__":
    main()
