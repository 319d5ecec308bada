"""Shared fixtures, model generators and hypothesis strategies for the test suite."""
from __future__ import annotations

import itertools
import random
from fractions import Fraction
from pathlib import Path

from hypothesis import strategies as st

from mdpx.fmt import parse_mdp
from mdpx.model import Mdp, build_mdp

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = ["m_gold", "n_gold", "n_count", "m_parity", "mc_coin", "divergent"]
FINITE = ["m_gold", "n_gold", "n_count", "m_parity", "mc_coin"]

PHI = (1 + 5 ** 0.5) / 2
M_GOLD_PE = 3 - 5 ** 0.5                   # 2 / phi^2
N_GOLD_CE = 3 / (3 + 5 ** 0.5)
N_COUNT_PE = Fraction(13, 12)


def load(name: str) -> Mdp:
    return parse_mdp((FIXTURES / f"{name}.mdpw").read_text())


def fixture_path(name: str) -> str:
    return str(FIXTURES / f"{name}.mdpw")


def _split(rng: random.Random, k: int, den: int) -> list[Fraction]:
    cuts = sorted(rng.sample(range(1, den), k - 1))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [den])]
    return [Fraction(p, den) for p in parts]


def random_model(rng: random.Random, n: int = 3, max_actions: int = 2, weights=(-2, 2),
                 den: int = 4, fail: bool = True) -> Mdp:
    """A random valid model over states q0..q{n-1} plus goal (and fail)."""
    names = [f"q{i}" for i in range(n)]
    sinks = ["goal"] + (["fail"] if fail else [])
    spec = {}
    for s in names:
        acts = []
        for j in range(rng.randint(1, max_actions)):
            targets = rng.sample(names + sinks, rng.randint(1, min(3, den, n + len(sinks))))
            probs = _split(rng, len(targets), den)
            acts.append((f"a{j}", rng.randint(*weights), dict(zip(targets, probs))))
        spec[s] = acts
    return build_mdp("q0", "goal", spec, states=names + ["goal"])


def random_memoryless(model: Mdp, rng: random.Random) -> tuple[int, ...]:
    return tuple(rng.randrange(len(model.actions[s])) for s in range(model.n))


def policies(model: Mdp, states) -> itertools.product:
    return itertools.product(*(range(len(model.actions[s])) for s in states))


@st.composite
def models(draw, max_states: int = 3, weights=(-2, 2), max_actions: int = 2):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    n = draw(st.integers(1, max_states))
    return random_model(random.Random(seed), n, max_actions, weights)


rationals = st.fractions(min_value=-50, max_value=50, max_denominator=50)


def nonneg_fixtures(count: int = 12, seed: int = 5, min_top: int = 2, max_unfolded: int = 200):
    """Prepared random models with weights in 0..3 whose exact table has B_R >= min_top."""
    from mdpx.exact import nonneg_solve_exact
    from mdpx.preprocess import classify_finiteness, prepare

    rng = random.Random(seed)
    out = []
    while len(out) < count:
        m = random_model(rng, rng.randint(2, 4), 3, (0, 3), den=rng.choice([2, 3, 4]))
        if not classify_finiteness(m).pe_finite:
            continue
        prep = prepare(m)
        if prep.goal_unreachable:
            continue
        top = nonneg_solve_exact(prep.model).window_top
        if top < min_top or prep.model.n * (top + 1) > max_unfolded:
            continue
        out.append(prep.model)
    return out


# a negatively drifting random walk with an exit, for tail-bound checks
DRIFT = build_mdp("a", "goal", {
    "a": [("up", 2, {"a": "1/3", "b": "2/3"}), ("stop", 0, {"goal": 1})],
    "b": [("down", -4, {"a": 1}), ("skip", -1, {"a": "1/2", "goal": "1/2"})],
})


def sqrt5_bracket(digits: int = 40) -> tuple[Fraction, Fraction]:
    """Rational lower and upper bounds on sqrt(5) within 10**-digits."""
    from math import isqrt
    scale = 10 ** digits
    r = isqrt(5 * scale * scale)
    return Fraction(r, scale), Fraction(r + 1, scale)


def m_gold_pe_bracket() -> tuple[Fraction, Fraction]:
    lo, hi = sqrt5_bracket()
    return 3 - hi, 3 - lo


def n_gold_ce_bracket() -> tuple[Fraction, Fraction]:
    lo, hi = sqrt5_bracket()
    return 3 / (3 + hi), 3 / (3 + lo)


def random_window_scheduler(model: Mdp, rng: random.Random, span: int = 4):
    """A random finite-memory (window) scheduler with random memoryless boundaries."""
    from mdpx.schedulers import MemorylessScheduler, WindowScheduler

    lo = -rng.randint(0, span)
    hi = rng.randint(0, span)
    table = {(s, w): rng.randrange(len(model.actions[s]))
             for s in range(model.n) if not model.is_absorbing(s) for w in range(lo, hi + 1)}
    above = MemorylessScheduler(random_memoryless(model, rng))
    below = MemorylessScheduler(random_memoryless(model, rng))
    return WindowScheduler(lo, hi, table, above, below)
