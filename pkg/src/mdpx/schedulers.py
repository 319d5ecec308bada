"""Scheduler representations and their exact evaluation.

A :class:`WindowScheduler` is weight-based: it looks at the current state and
the accumulated weight ``w``.  While every prefix weight stays in
``[lo, hi]`` it follows its table; on the first exit above ``hi`` it switches
for good to the memoryless ``above`` scheduler, on the first exit below
``lo`` to ``below``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .graph import can_reach
from .linalg import solve_sparse
from .model import Mdp


@dataclass(frozen=True)
class MemorylessScheduler:
    choice: tuple[int, ...]
    pe: tuple[Fraction, ...] = ()
    reach: tuple[Fraction, ...] = ()
    pe_by_action: tuple[tuple[Fraction, ...], ...] = ()


def chain_values(model: Mdp, choice: Sequence[int]) -> tuple[list[Fraction], list[Fraction]]:
    """Exact partial expectation (bias 0) and goal probability of a memoryless policy."""
    allowed = [(c,) for c in choice]
    good = can_reach(model, [model.goal], allowed)
    free = [s for s in range(model.n) if s in good and s != model.goal]
    pos = {s: i for i, s in enumerate(free)}
    rows, rr = [], []
    for s in free:
        a = model.actions[s][choice[s]]
        row = {pos[s]: Fraction(1)}
        c = Fraction(0)
        for t, p in a.dist:
            if t in pos:
                row[pos[t]] = row.get(pos[t], 0) - p
            elif t == model.goal:
                c += p
        rows.append(row)
        rr.append(c)
    r = solve_sparse(rows, rr)
    reach = [Fraction(0)] * model.n
    reach[model.goal] = Fraction(1)
    for s, v in zip(free, r):
        reach[s] = v
    rhs = [model.actions[s][choice[s]].weight * reach[s] for s in free]
    x = solve_sparse(rows, rhs)
    pe = [Fraction(0)] * model.n
    for s, v in zip(free, x):
        pe[s] = v
    return pe, reach


@dataclass(frozen=True)
class WindowScheduler:
    lo: int
    hi: int
    table: Mapping[tuple[int, int], int]
    above: MemorylessScheduler
    below: MemorylessScheduler

    @property
    def window(self) -> tuple[int, int]:
        return self.lo, self.hi

    def to_json(self, model: Mdp) -> dict:
        names = model.states

        def lab(s, i):
            return model.actions[s][i].label

        table = {f"{names[s]}@{w}": lab(s, a) for (s, w), a in sorted(self.table.items(), key=lambda kv: (kv[0][1], kv[0][0]))}
        live = [s for s in range(model.n) if not model.is_absorbing(s)]
        return {"window": [self.lo, self.hi], "table": table,
                "above": {names[s]: lab(s, self.above.choice[s]) for s in live},
                "below": {names[s]: lab(s, self.below.choice[s]) for s in live}}

    @staticmethod
    def from_json(model: Mdp, data: Mapping) -> "WindowScheduler":
        lo, hi = (int(v) for v in data["window"])
        table = {}
        for key, label in data["table"].items():
            name, w = key.rsplit("@", 1)
            s = model.index(name)
            table[(s, int(w))] = model.action_index(s, label)

        def memless(d):
            return MemorylessScheduler(tuple(model.action_index(s, d[model.states[s]])
                                             if model.states[s] in d else 0 for s in range(model.n)))
        return WindowScheduler(lo, hi, table, memless(data["above"]), memless(data["below"]))


@dataclass(frozen=True)
class WindowEvaluation:
    pe: Fraction
    reach: Fraction
    ce: Fraction | None


def memoryless_window(model: Mdp, choice: Sequence[int]) -> WindowScheduler:
    """A window scheduler with an empty table that always plays ``choice``."""
    m = MemorylessScheduler(tuple(choice))
    return WindowScheduler(0, -1, {}, m, m)


def evaluate_window_scheduler(model: Mdp, sched: WindowScheduler, bias: Fraction = Fraction(0),
                              start: int | None = None, start_weight: int = 0) -> WindowEvaluation:
    """Exact PE[bias], goal probability and CE of the induced finite Markov chain."""
    bias = Fraction(bias)
    peA, rA = chain_values(model, sched.above.choice)
    peB, rB = chain_values(model, sched.below.choice)
    s0 = model.initial if start is None else start
    goal = model.goal
    absorbing = {s for s in range(model.n) if model.is_absorbing(s)}

    def boundary(t, w):
        """(pe with bias 0 and weight offset w, reach) for memoryless continuations."""
        if t == goal:
            return Fraction(w), Fraction(1)
        if t in absorbing:
            return Fraction(0), Fraction(0)
        if w > sched.hi:
            return peA[t] + rA[t] * w, rA[t]
        return peB[t] + rB[t] * w, rB[t]

    if not sched.lo <= start_weight <= sched.hi or s0 in absorbing:
        pe, r = boundary(s0, start_weight)
        return WindowEvaluation(pe + bias * r, r, pe / r if r else None)

    # enumerate reachable cells from the start
    cells: dict[tuple[int, int], int] = {}
    order = []
    stack = [(s0, start_weight)]
    cells[(s0, start_weight)] = 0
    order.append((s0, start_weight))
    succ: list[list] = []
    while stack:
        s, w = stack.pop()
        a = model.actions[s][sched.table[(s, w)]]
        w2 = w + a.weight
        for t, _ in a.dist:
            if t in absorbing or not sched.lo <= w2 <= sched.hi:
                continue
            if (t, w2) not in cells:
                cells[(t, w2)] = len(order)
                order.append((t, w2))
                stack.append((t, w2))
    # cells with a positive chance of reaching goal
    idx = cells
    n = len(order)
    const_pe = [Fraction(0)] * n
    const_r = [Fraction(0)] * n
    links: list[list[tuple[int, Fraction]]] = [[] for _ in range(n)]
    for i, (s, w) in enumerate(order):
        a = model.actions[s][sched.table[(s, w)]]
        w2 = w + a.weight
        for t, p in a.dist:
            if t not in absorbing and sched.lo <= w2 <= sched.hi:
                links[i].append((idx[(t, w2)], p))
            else:
                pe, r = boundary(t, w2)
                const_pe[i] += p * pe
                const_r[i] += p * r
    pred: dict[int, list[int]] = {}
    for i, ls in enumerate(links):
        for j, _ in ls:
            pred.setdefault(j, []).append(i)
    good = {i for i in range(n) if const_r[i] > 0}
    stack = list(good)
    while stack:
        j = stack.pop()
        for i in pred.get(j, ()):
            if i not in good:
                good.add(i)
                stack.append(i)
    live = sorted(good)
    pos = {c: k for k, c in enumerate(live)}
    rows = []
    for i in live:
        row = {pos[i]: Fraction(1)}
        for j, p in links[i]:
            if j in pos:
                row[pos[j]] = row.get(pos[j], 0) - p
        rows.append(row)
    if 0 not in pos:
        return WindowEvaluation(Fraction(0), Fraction(0), None)
    r = solve_sparse(rows, [const_r[i] for i in live])
    x = solve_sparse(rows, [const_pe[i] for i in live])
    pe0, r0 = x[pos[0]], r[pos[0]]
    return WindowEvaluation(pe0 + bias * r0, r0, pe0 / r0 if r0 else None)
