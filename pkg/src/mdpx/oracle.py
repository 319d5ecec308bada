"""Independent ground truth for small instances.

``oracle_pe`` finds the best window scheduler for a fixed symmetric window
by brute force: full enumeration of the memoryless choices over all cells
when that is small, otherwise a floating-point linear program (HiGHS)
whose policy is then verified, and if needed repaired, in exact arithmetic.
It shares no code with the approximation engine beyond the model and the
exact linear solver.

``simulate`` runs a scheduler by Monte-Carlo with numpy's PCG64 generator.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from .errors import ResourceLimitError
from .exact import extreme_schedulers
from .graph import reach_probabilities
from .linalg import solve_sparse
from .model import Mdp
from .preprocess import prepare
from .schedulers import MemorylessScheduler, WindowScheduler, evaluate_window_scheduler

ENUMERATION_LIMIT = 4096
COMBINATION_GUARD = 10 ** 6


@dataclass
class OracleResult:
    best: Fraction
    arg_best: WindowScheduler
    enumerated: int
    method: str
    model: Mdp = field(repr=False, default=None)


class _Unfolded:
    """The windowed system over cells (s, w), -window <= w <= window, without any restriction."""

    def __init__(self, model: Mdp, window: int, bias: Fraction):
        prof = reach_probabilities(model)
        self.mx, self.mn = extreme_schedulers(model, prof)
        self.model = model
        lo, hi = -window, window
        self.lo, self.hi = lo, hi
        absorbing = {s for s in range(model.n) if model.is_absorbing(s)}
        self.cells = [(s, w) for w in range(lo, hi + 1) for s in range(model.n) if s not in absorbing]
        self.pos = {c: i for i, c in enumerate(self.cells)}
        self.options: list[list[tuple[int, Fraction, list[tuple[int, Fraction]]]]] = []
        for s, w in self.cells:
            opts = []
            for i, a in enumerate(model.actions[s]):
                w2 = w + a.weight
                e2 = w2 + bias
                const = Fraction(0)
                links = []
                for t, p in a.dist:
                    if t == model.goal:
                        const += p * e2
                    elif t in absorbing:
                        continue
                    elif w2 > hi:
                        const += p * (self.mx.pe[t] + prof.p_max[t] * e2)
                    elif w2 < lo:
                        const += p * (self.mn.pe[t] + prof.p_min[t] * e2)
                    else:
                        links.append((self.pos[(t, w2)], p))
                opts.append((i, const, links))
            self.options.append(opts)

    def combinations(self) -> int:
        return math.prod(len(o) for o in self.options)

    def evaluate(self, policy: list[int]) -> list[Fraction]:
        rows, rhs = [], []
        for c, k in enumerate(policy):
            _, const, links = self.options[c][k]
            row = {c: Fraction(1)}
            for j, p in links:
                row[j] = row.get(j, 0) - p
            rows.append(row)
            rhs.append(const)
        return solve_sparse(rows, rhs)

    def q(self, c: int, k: int, x: list[Fraction]) -> Fraction:
        _, const, links = self.options[c][k]
        return const + sum((p * x[j] for j, p in links), Fraction(0))

    def scheduler(self, policy: list[int]) -> WindowScheduler:
        table = {cell: self.options[c][policy[c]][0] for c, cell in enumerate(self.cells)}
        return WindowScheduler(self.lo, self.hi, table, self.mx, self.mn)

    def lp_policy(self) -> list[int]:
        """Optimal values from the LP min sum x s.t. x >= const + P x, then the greedy policy."""
        n = len(self.cells)
        r, cols, vals, b = [], [], [], []
        for c, opts in enumerate(self.options):
            for _, const, links in opts:
                row = len(b)
                acc = {c: -1.0}
                for j, p in links:
                    acc[j] = acc.get(j, 0.0) + float(p)
                for j, v in acc.items():
                    r.append(row)
                    cols.append(j)
                    vals.append(v)
                b.append(-float(const))
        A = csr_matrix((vals, (r, cols)), shape=(len(b), n))
        res = linprog(np.ones(n), A_ub=A, b_ub=np.array(b), bounds=[(None, None)] * n, method="highs")
        if res.status != 0:  # pragma: no cover - the system is bounded after preprocessing
            raise RuntimeError(f"oracle LP failed: {res.message}")
        x = res.x
        pol = []
        for opts in self.options:
            qs = [float(const) + sum(float(p) * x[j] for j, p in links) for _, const, links in opts]
            pol.append(int(np.argmax(qs)))
        return pol


def _repair(unf: _Unfolded, policy: list[int]) -> tuple[list[int], list[Fraction], int]:
    """Exact verification of Bellman optimality, improving the policy while it fails."""
    rounds = 0
    while True:
        x = unf.evaluate(policy)
        changed = False
        for c in range(len(policy)):
            best, arg = x[c], policy[c]
            for k in range(len(unf.options[c])):
                v = unf.q(c, k, x)
                if v > best:
                    best, arg = v, k
            if arg != policy[c]:
                policy[c] = arg
                changed = True
        if not changed:
            return policy, x, rounds
        rounds += 1


def oracle_pe(model: Mdp, window: int, bias=Fraction(0), prepared: bool = False) -> OracleResult:
    """Exact optimum of PE[bias] over window schedulers on [-window, window]."""
    bias = Fraction(bias)
    if window < 0:
        raise ValueError("window must be non-negative")
    m = model if prepared else prepare(model).model
    s0 = m.initial
    if m.is_absorbing(s0):
        unf = _Unfolded(m, 0, bias)
        best = bias if s0 == m.goal else Fraction(0)
        return OracleResult(best, unf.scheduler([0] * len(unf.cells)), 1, "trivial", m)
    unf = _Unfolded(m, window, bias)
    start = unf.pos[(s0, 0)]
    combos = unf.combinations()
    if combos <= ENUMERATION_LIMIT:
        best, arg = None, None
        for pol in itertools.product(*(range(len(o)) for o in unf.options)):
            v = unf.evaluate(list(pol))[start]
            if best is None or v > best:
                best, arg = v, list(pol)
        return OracleResult(best, unf.scheduler(arg), combos, "enumeration", m)
    if len(unf.cells) * max(len(o) for o in unf.options) > COMBINATION_GUARD:
        raise ResourceLimitError(f"oracle window too large: {len(unf.cells)} cells")
    pol, x, rounds = _repair(unf, unf.lp_policy())
    return OracleResult(x[start], unf.scheduler(pol), rounds + 1, "lp+exact-verification", m)


def threshold_optima(model: Mdp, state: int, weight: int, high: int, low: int, cutoffs
                     ) -> tuple[dict[int, Fraction], list[int]]:
    """Values of the cutoff schedulers "play ``high`` at ``state`` while w > c, else ``low``".

    All other states use their first action.  Returns the value of every
    cutoff c (starting in ``state`` with accumulated ``weight``) and the list
    of cutoffs attaining the maximum, so ties are visible.
    """
    cutoffs = list(cutoffs)
    lo, hi = min(cutoffs + [weight]) - 1, max(cutoffs + [weight]) + 1
    base = [0] * model.n
    values: dict[int, Fraction] = {}
    for c in cutoffs:
        table = {(s, w): ((high if w > c else low) if s == state else 0)
                 for s in range(model.n) if not model.is_absorbing(s) for w in range(lo, hi + 1)}
        up, down = list(base), list(base)
        up[state], down[state] = high, low
        sched = WindowScheduler(lo, hi, table, MemorylessScheduler(tuple(up)), MemorylessScheduler(tuple(down)))
        values[c] = evaluate_window_scheduler(model, sched, start=state, start_weight=weight).pe
    best = max(values.values())
    return values, [c for c in cutoffs if values[c] == best]


# ------------------------------------------------------------------ Monte-Carlo simulation

@dataclass
class SimulationEstimate:
    mean: float
    stderr: float
    samples: int
    horizon: int
    seed: int
    reach_freq: float = 0.0
    truncated: int = 0
    tail_unit: float | None = None
    tail_freq: tuple[float, ...] = ()


def _compile(model: Mdp):
    """Flat arrays: per global action id its weight and padded cumulative distribution."""
    offset = np.zeros(model.n + 1, dtype=np.int64)
    for s in range(model.n):
        offset[s + 1] = offset[s] + len(model.actions[s])
    na = int(offset[-1])
    width = max(len(a.dist) for acts in model.actions for a in acts)
    weight = np.zeros(na, dtype=np.int64)
    cum = np.ones((na, width))
    tgt = np.zeros((na, width), dtype=np.int64)
    for s, i, a in model.state_actions():
        g = offset[s] + i
        weight[g] = a.weight
        acc = Fraction(0)
        for k, (t, p) in enumerate(a.dist):
            acc += p
            cum[g, k] = float(acc)
            tgt[g, k] = t
        cum[g, len(a.dist) - 1:] = 1.0
        tgt[g, len(a.dist):] = a.dist[-1][0]
    return offset, weight, cum, tgt


def _run(model: Mdp, sched: WindowScheduler, n: int, horizon: int, rng: np.random.Generator,
         start: int, start_weight: int):
    offset, weight, cum, tgt = _compile(model)
    absorbing = np.array([model.is_absorbing(s) for s in range(model.n)])
    above = np.array(sched.above.choice, dtype=np.int64)
    below = np.array(sched.below.choice, dtype=np.int64)
    lo, hi = sched.lo, sched.hi
    span = max(0, hi - lo + 1)
    table = np.zeros((model.n, max(span, 1)), dtype=np.int64)
    for (s, w), a in sched.table.items():
        table[s, w - lo] = a
    state = np.full(n, start, dtype=np.int64)
    wgt = np.full(n, start_weight, dtype=np.int64)
    peak = wgt.copy()
    mode = np.zeros(n, dtype=np.int8)  # 0 table, 1 above, 2 below
    mode[wgt > hi] = 1
    mode[wgt < lo] = 2
    active = ~absorbing[state]
    for _ in range(horizon):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        s, w, md = state[idx], wgt[idx], mode[idx]
        act = np.where(md == 1, above[s], below[s])
        intab = md == 0
        if intab.any():
            act[intab] = table[s[intab], w[intab] - lo]
        g = offset[s] + act
        u = rng.random(idx.size)
        k = (u[:, None] >= cum[g]).sum(axis=1)
        k = np.minimum(k, cum.shape[1] - 1)
        nxt = tgt[g, k]
        w2 = w + weight[g]
        md2 = md.copy()
        md2[(md == 0) & (w2 > hi)] = 1
        md2[(md == 0) & (w2 < lo)] = 2
        state[idx], wgt[idx], mode[idx] = nxt, w2, md2
        peak[idx] = np.maximum(peak[idx], w2)
        active[idx] = ~absorbing[nxt]
    hit = state == model.goal
    return np.where(hit, wgt, 0).astype(float), hit, active, peak


def simulate(model: Mdp, scheduler: WindowScheduler, samples: int, horizon: int, seed: int,
             shards: int = 1, tail_unit=None, start: int | None = None, start_weight: int = 0
             ) -> SimulationEstimate:
    """Horizon-truncated estimate of the partial expectation (bias 0).

    Shard i draws from ``PCG64(seed + i)``; the shards' samples are pooled.
    With ``tail_unit`` = c the estimate also reports, for k = 1, 2, 3, the
    frequency of runs whose accumulated weight ever reaches (k + 1) * c.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    s0 = model.initial if start is None else start
    sizes = [samples // shards + (1 if i < samples % shards else 0) for i in range(shards)]
    scores, hits, trunc, peaks = [], [], 0, []
    for i, size in enumerate(sizes):
        rng = np.random.Generator(np.random.PCG64(seed + i))
        sc, hit, active, peak = _run(model, scheduler, size, horizon, rng, s0, start_weight)
        scores.append(sc)
        hits.append(hit)
        peaks.append(peak)
        trunc += int(active.sum())
    sc = np.concatenate(scores)
    peak = np.concatenate(peaks)
    mean = float(sc.mean())
    stderr = float(sc.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    tails: tuple[float, ...] = ()
    if tail_unit is not None:
        c = float(tail_unit)
        tails = tuple(float((peak - start_weight >= (k + 1) * c).mean()) for k in (1, 2, 3))
    return SimulationEstimate(mean, stderr, samples, horizon, seed, float(np.concatenate(hits).mean()),
                              trunc, None if tail_unit is None else float(tail_unit), tails)
