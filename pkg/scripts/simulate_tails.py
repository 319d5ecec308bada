"""Monte-Carlo tail frequencies inside negatively drifting end components versus lambda**k.

For each end component of each fixture, random schedulers that stay inside it are
simulated from its smallest state; the frequency of runs whose weight ever climbs
(k + 1) * c above the start is compared with the analytic bound lambda**k.
Usage: python3 scripts/simulate_tails.py [--samples 100000] [--schedulers 5]
"""
from __future__ import annotations

import argparse
import random
from pathlib import Path

from mdpx.bounds import ec_tail_constants, super_potential
from mdpx.fmt import parse_mdp
from mdpx.model import model_constants
from mdpx.oracle import simulate
from mdpx.preprocess import classify_finiteness, nonabsorbing_mecs, prepare
from mdpx.schedulers import MemorylessScheduler, WindowScheduler

ROOT = Path(__file__).resolve().parent.parent


def ec_scheduler(m, ec, rng) -> WindowScheduler:
    def pick(s):
        return rng.choice(sorted(ec.actions[s])) if s in ec.actions else 0
    choice = MemorylessScheduler(tuple(pick(s) for s in range(m.n)))
    return WindowScheduler(0, -1, {}, choice, choice)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fixtures", type=Path, default=ROOT / "tests" / "fixtures")
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--horizon", type=int, default=1000)
    ap.add_argument("--schedulers", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'model':<10} {'ec':>3} {'sched':>5} {'c':>6} {'lambda':>7}  freq k=1,2,3 (bound)")
    for path in sorted(args.fixtures.glob("*.mdpw")):
        model = parse_mdp(path.read_text())
        if not classify_finiteness(model).pe_finite:
            continue
        m = prepare(model).model
        W = model_constants(m).W
        for k, ec in nonabsorbing_mecs(m):
            tc = ec_tail_constants(super_potential(m, ec), W)
            lam = float(tc.lam)
            for i in range(args.schedulers):
                sched = ec_scheduler(m, ec, random.Random(args.seed + i))
                est = simulate(m, sched, args.samples, args.horizon, args.seed + i,
                               tail_unit=tc.c, start=min(ec.states))
                cols = "  ".join(f"{f:.4f} ({lam ** j:.4f})" for j, f in zip((1, 2, 3), est.tail_freq))
                print(f"{path.stem:<10} {k:>3} {i:>5} {float(tc.c):>6.2f} {lam:>7.4f}  {cols}")


if __name__ == "__main__":
    main()
