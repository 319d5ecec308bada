"""Exact solvers: Markov chains, the extreme schedulers Max/Min, non-negative weights."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .graph import ReachabilityProfile, reach_probabilities
from .model import Mdp
from .preprocess import nonabsorbing_mecs
from .schedulers import MemorylessScheduler, WindowScheduler, chain_values, evaluate_window_scheduler
from .solvers import solve_transient


class PreconditionError(ValueError):
    pass


def solve_markov_chain(chain: Mdp, bias: Fraction = Fraction(0)) -> tuple[Fraction, Fraction | None]:
    """PE[bias] and CE of a Markov chain (every state has exactly one action)."""
    if not chain.is_markov_chain():
        raise PreconditionError("not a Markov chain: some state enables several actions")
    pe, reach = chain_values(chain, [0] * chain.n)
    s = chain.initial
    p = reach[s]
    value = pe[s] + Fraction(bias) * p
    return value, (pe[s] / p if p else None)


def _proper_policy(model: Mdp, free: list[int], allowed: dict[int, tuple[int, ...]], target: set[int]) -> dict[int, int]:
    """For each free state an allowed action moving strictly closer to ``target``."""
    done = set(target)
    pol: dict[int, int] = {}
    pending = set(free)
    while pending:
        progress = [s for s in sorted(pending)
                    if any(t in done for t in model.actions[s][allowed[s][0]].targets())
                    or any(any(t in done for t in model.actions[s][a].targets()) for a in allowed[s])]
        if not progress:
            raise PreconditionError("goal not reachable within the restricted actions")
        for s in progress:
            pol[s] = next(k for k, a in enumerate(allowed[s])
                          if any(t in done for t in model.actions[s][a].targets()))
        done.update(progress)
        pending.difference_update(progress)
    return pol


def _extreme(model: Mdp, p: tuple[Fraction, ...], act: tuple[tuple[int, ...], ...],
             p_by_action, maximize_prob: bool) -> MemorylessScheduler:
    goal = model.goal
    free = [s for s in range(model.n) if s != goal and p[s] > 0 and not model.is_absorbing(s)]
    fixed = {s: Fraction(0) for s in range(model.n) if s not in free}
    allowed = {s: act[s] for s in free}
    choices = {s: [(p[s] * model.actions[s][a].weight, model.actions[s][a].dist) for a in act[s]]
               for s in free}
    init = _proper_policy(model, free, allowed, {goal} | {s for s in fixed if p[s] > 0}) if maximize_prob else None
    vals, pol = solve_transient(free, choices, fixed, maximize=True, policy=init)
    pe = [vals.get(s, Fraction(0)) for s in range(model.n)]
    choice = [act[s][pol[s]] if s in pol else act[s][0] for s in range(model.n)]
    by_action = tuple(tuple(p_by_action[s][i] * a.weight + sum((q * pe[t] for t, q in a.dist), Fraction(0))
                            for i, a in enumerate(model.actions[s])) for s in range(model.n))
    return MemorylessScheduler(tuple(choice), tuple(pe), tuple(p), by_action)


def extreme_schedulers(model: Mdp, prof: ReachabilityProfile | None = None
                       ) -> tuple[MemorylessScheduler, MemorylessScheduler]:
    """The schedulers Max and Min (lowest-index tie-breaking)."""
    prof = prof or reach_probabilities(model)
    mx = _extreme(model, prof.p_max, prof.act_max, prof.p_max_by_action, True)
    mn = _extreme(model, prof.p_min, prof.act_min, prof.p_min_by_action, False)
    return mx, mn


# ------------------------------------------------------------------ non-negative weights

def _check_nonneg(model: Mdp) -> None:
    if any(w < 0 for w in model.weights()):
        raise PreconditionError("negative weights: use the approximation instead")
    if nonabsorbing_mecs(model):
        raise PreconditionError("model still has non-absorbing end components: apply the spider transform")


def nonneg_saturation_point(model: Mdp, bias: Fraction = Fraction(0), prof=None, mx=None) -> Fraction:
    if any(w < 0 for w in model.weights()):
        raise PreconditionError("negative weights: use the approximation instead")
    prof = prof or reach_probabilities(model)
    mx = mx or extreme_schedulers(model, prof)[0]
    best = None
    for s in range(model.n):
        for i in range(len(model.actions[s])):
            if i in prof.act_max[s]:
                continue
            gap = prof.p_max[s] - prof.p_max_by_action[s][i]
            v = (mx.pe_by_action[s][i] - mx.pe[s]) / gap
            best = v if best is None or v > best else best
    if best is None:
        return Fraction(0)
    return best - Fraction(bias)


@dataclass(frozen=True)
class ExactPeTable:
    bias: Fraction
    saturation: Fraction
    window_top: int
    values: dict[tuple[int, int], Fraction]   # (state, r) -> PE^sup[r + bias]
    choice: dict[tuple[int, int], int]
    scheduler: WindowScheduler
    max_scheduler: MemorylessScheduler

    def value(self, s: int, r: int = 0) -> Fraction:
        return self.values[(s, r)]


def nonneg_solve_exact(model: Mdp, bias: Fraction = Fraction(0), top: int | None = None,
                       prof=None) -> ExactPeTable:
    """PE^sup[r + bias] for all states and 0 <= r <= B_R by layered policy iteration.

    Rows at or above the saturation point are the affine Max values; the rows
    below are solved from the top layer down, each layer by exact policy
    iteration over its weight-0 transitions.  ``top`` overrides B_R (it may
    only be larger).  A negative B_R is clamped to 0.
    """
    bias = Fraction(bias)
    _check_nonneg(model)
    prof = prof or reach_probabilities(model)
    mx, mn = extreme_schedulers(model, prof)
    sat = nonneg_saturation_point(model, bias, prof, mx)
    wmax = max(model.weights(), default=0)
    B = max(math.ceil(sat + wmax), 0)
    if top is not None:
        if top < B:
            raise ValueError("top below B_R")
        B = top
    goal = model.goal
    live = [s for s in range(model.n) if not model.is_absorbing(s)]
    absorbing = {s for s in range(model.n) if model.is_absorbing(s)}
    values: dict[tuple[int, int], Fraction] = {}
    choice: dict[tuple[int, int], int] = {}

    def affine(t, r):
        return prof.p_max[t] * (r + bias) + mx.pe[t]

    def known(t, r):
        if t == goal:
            return r + bias
        if t in absorbing:
            return Fraction(0)
        if r > B or r >= sat:
            return affine(t, r)
        return values[(t, r)]

    for r in range(B, -1, -1):
        if r >= sat:
            for s in live:
                values[(s, r)] = affine(s, r)
                choice[(s, r)] = mx.choice[s]
            continue
        choices = {}
        for s in live:
            opts = []
            for a in model.actions[s]:
                c = Fraction(0)
                dist = []
                for t, p in a.dist:
                    if a.weight == 0 and t in live:
                        dist.append((t, p))
                    else:
                        c += p * known(t, r + a.weight)
                opts.append((c, dist))
            choices[s] = opts
        prev = {s: choice[(s, r + 1)] for s in live} if (live and (live[0], r + 1) in choice) else None
        vals, pol = solve_transient(live, choices, {}, maximize=True, policy=prev)
        for s in live:
            values[(s, r)] = vals[s]
            choice[(s, r)] = pol[s]
    sched = WindowScheduler(0, B, dict(choice), mx, mn)
    return ExactPeTable(bias, sat, B, values, choice, sched, mx)


def nonneg_ce_exact(model: Mdp, max_rounds: int = 1000) -> tuple[Fraction, list[Fraction]]:
    """Exact CE^sup for non-negative weights (model prepared, p^min(s_init) > 0).

    Fractional programming on the threshold correspondence: starting from
    CE of Max, solve PE^sup[-theta] exactly; zero means theta is optimal,
    otherwise the optimal table scheduler has a strictly larger CE.
    """
    prof = reach_probabilities(model)
    mx, _ = extreme_schedulers(model, prof)
    s0 = model.initial
    theta = mx.pe[s0] / prof.p_max[s0]
    history = [theta]
    for _ in range(max_rounds):
        table = nonneg_solve_exact(model, -theta, prof=prof)
        if table.value(s0) == 0:
            return theta, history
        ev = evaluate_window_scheduler(model, table.scheduler)
        theta = ev.ce
        history.append(theta)
    raise RuntimeError("fractional programming did not converge")  # pragma: no cover
