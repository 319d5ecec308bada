"""Model transformations and the finiteness classification.

* :func:`collapse_to_fail` merges every state that cannot reach goal into ``__fail``.
* :func:`spider_transform` flattens zero-weight end components so that every
  remaining non-absorbing end component has negative maximal mean payoff.
* :func:`posmin_transform` builds a new initial state from which goal is
  reached with positive minimal probability.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .errors import InfiniteValueError
from .graph import (EndComponent, can_reach, is_trivial_absorbing, max_mean_payoff, mec_decompose,
                    reach_probabilities, scc_labels)
from .model import FAIL, Action, Mdp, absorbing_loop, fresh_name


class WeightDivergenceError(InfiniteValueError):
    """The model has a positively weight-divergent end component."""

    reason = "weightDivergentEC"

    def __init__(self, witness):
        super().__init__(f"positively weight-divergent end component: {witness}", witness)


class CriticalSchedulerError(InfiniteValueError):
    reason = "criticalScheduler"

    def __init__(self, witness):
        super().__init__(f"critical scheduler exists (positive cycle {witness})", witness)


@dataclass
class TransformTrace:
    kind: str                       # collapse | spider | posmin
    state_mapping: dict[str, str]
    goal_unreachable: bool = False
    steps: list[dict[str, Any]] = field(default_factory=list)


def _identity(model: Mdp, kind: str) -> TransformTrace:
    return TransformTrace(kind, {s: s for s in model.states})


# ------------------------------------------------------------------ collapse

def collapse_to_fail(model: Mdp) -> tuple[Mdp, TransformTrace]:
    good = can_reach(model, [model.goal])
    dropped = [s for s in range(model.n) if s not in good]
    if not dropped or (len(dropped) == 1 and model.states[dropped[0]] == FAIL
                       and model.is_absorbing(dropped[0])):
        trace = _identity(model, "collapse")
        trace.goal_unreachable = model.initial not in good
        return model, trace
    keep = [s for s in range(model.n) if s in good]
    new_index = {s: i for i, s in enumerate(keep)}
    fail = len(keep)
    for s in dropped:
        new_index[s] = fail
    actions = []
    for s in keep:
        acts = []
        for a in model.actions[s]:
            dist: dict[int, Fraction] = {}
            for t, p in a.dist:
                dist[new_index[t]] = dist.get(new_index[t], 0) + p
            acts.append(Action(a.label, a.weight, tuple(dist.items())))
        actions.append(tuple(acts))
    actions.append((absorbing_loop(fail),))
    states = tuple(model.states[s] for s in keep) + (FAIL,)
    out = Mdp(states, tuple(actions), new_index[model.initial], new_index[model.goal])
    mapping = {model.states[s]: states[new_index[s]] for s in range(model.n)}
    return out, TransformTrace("collapse", mapping, goal_unreachable=model.initial not in good)


# ------------------------------------------------------------------ spider

def nonabsorbing_mecs(model: Mdp) -> list[tuple[int, EndComponent]]:
    dec = mec_decompose(model)
    return [(k, e) for k, e in enumerate(dec.mecs) if not is_trivial_absorbing(model, e)]


def _potential(model: Mdp, states: list[int], policy: dict[int, int], s0: int) -> dict[int, int] | None:
    """Weights w_s of paths s -> s0 under ``policy``; None if cycles are not all 0."""
    pred: dict[int, list[tuple[int, int]]] = {}
    for s in states:
        a = model.actions[s][policy[s]]
        for t in a.targets():
            pred.setdefault(t, []).append((s, a.weight))
    w = {s0: 0}
    stack = [s0]
    while stack:
        t = stack.pop()
        for s, wt in pred.get(t, ()):
            if s not in w:
                w[s] = wt + w[t]
                stack.append(s)
    for s in states:
        a = model.actions[s][policy[s]]
        for t in a.targets():
            if w[s] != a.weight + w[t]:
                return None
    return w


def _spider_step(model: Mdp, sub: list[int], alpha: dict[int, int], w: dict[int, int]) -> Mdp:
    s0 = sub[0]
    states = list(model.states)
    fail = model.fail
    if fail is None:
        fail = len(states)
        states.append(FAIL)
    actions = [list(a) for a in model.actions]
    if fail == len(actions):
        actions.append([absorbing_loop(fail)])
    taken = {a.label for a in actions[s0]}
    new_s0 = [a for i, a in enumerate(actions[s0]) if i != alpha[s0]]
    for s in sub[1:]:
        for i, b in enumerate(model.actions[s]):
            if i == alpha[s]:
                continue
            label = fresh_name(f"__{model.states[s]}_{b.label}", taken)
            new_s0.append(Action(label, b.weight - w[s], b.dist))
        actions[s] = [Action("__tau", w[s], ((s0, Fraction(1)),))]
    new_s0.append(Action(fresh_name("__tau", taken), 0, ((fail, Fraction(1)),)))
    actions[s0] = new_s0
    return Mdp(tuple(states), tuple(tuple(a) for a in actions), model.initial, model.goal)


def _spider_loop(model: Mdp, max_steps: int | None = None):
    """Run the spider construction to completion.

    Returns ``(model, steps, witness)``; ``witness`` is not None when a
    positively weight-divergent end component was found (positive gain, or a
    zero-gain recurrent class containing a cycle of nonzero weight).
    """
    steps: list[dict[str, Any]] = []
    limit = max_steps or 10 * (model.n + sum(len(a) for a in model.actions)) + 10
    for _ in range(limit):
        zero = None
        for k, e in nonabsorbing_mecs(model):
            res = max_mean_payoff(model, e)
            if res.gain > 0:
                return model, steps, {"mec": k, "states": [model.states[s] for s in e.states],
                                      "gain": res.gain}
            if res.gain == 0 and zero is None:
                zero = (k, e, res)
        if zero is None:
            return model, steps, None
        k, e, res = zero
        pol = res.policy
        states = list(e.states)
        edges = [(s, t) for s in states for t in model.actions[s][pol[s]].targets()]
        lab = scc_labels(states, edges)
        leaving = {lab[s] for s, t in edges if lab[s] != lab[t]}
        cls = min(lab[s] for s in states if lab[s] not in leaving)
        sub = [s for s in states if lab[s] == cls]
        w = _potential(model, sub, pol, sub[0])
        if w is None:
            return model, steps, {"mec": k, "states": [model.states[s] for s in e.states],
                                  "gain": Fraction(0), "zero_mean_cycle": [model.states[s] for s in sub]}
        steps.append({"pivot": model.states[sub[0]], "states": [model.states[s] for s in sub],
                      "offsets": {model.states[s]: w[s] for s in sub}})
        model = _spider_step(model, sub, pol, w)
    raise RuntimeError("spider construction did not terminate")  # pragma: no cover


def check_weight_divergence(model: Mdp) -> tuple[bool, dict | None]:
    _, _, witness = _spider_loop(model)
    return witness is not None, witness


def spider_transform(model: Mdp) -> tuple[Mdp, TransformTrace]:
    out, steps, witness = _spider_loop(model)
    if witness is not None:
        raise WeightDivergenceError(witness)
    trace = TransformTrace("spider", {s: s for s in model.states}, steps=steps)
    return out, trace


# ------------------------------------------------------------------ critical schedulers / posmin

def _min_subgraph(model: Mdp, prof=None):
    prof = prof or reach_probabilities(model)
    s0 = {model.initial}
    stack = [model.initial]
    while stack:
        s = stack.pop()
        for i in prof.act_min[s]:
            for t in model.actions[s][i].targets():
                if t not in s0:
                    s0.add(t)
                    stack.append(t)
    edges = [(s, i, t, model.actions[s][i].weight) for s in sorted(s0)
             for i in prof.act_min[s] for t in model.actions[s][i].targets()]
    return prof, sorted(s0), edges


def _longest_paths(model: Mdp, S0: list[int], edges):
    """Bellman-Ford longest path weights from s_init; also a positive cycle if one exists."""
    dist: dict[int, int | None] = {s: None for s in S0}
    pred: dict[int, tuple[int, int]] = {}
    dist[model.initial] = 0
    changed_at = None
    for rnd in range(len(S0) + 1):
        changed_at = None
        for s, i, t, wt in edges:
            if dist[s] is not None and (dist[t] is None or dist[s] + wt > dist[t]):
                dist[t] = dist[s] + wt
                pred[t] = (s, i)
                changed_at = t
        if changed_at is None:
            return dist, None, rnd
    # still improving after |S0| rounds: walk back to land on the cycle
    v = changed_at
    for _ in range(len(S0)):
        v = pred[v][0]
    cycle = []
    u = v
    while True:
        s, i = pred[u]
        cycle.append((s, i))
        u = s
        if u == v:
            break
    cycle.reverse()
    return dist, cycle, len(S0) + 1


def check_critical_scheduler(model: Mdp, prof=None) -> tuple[bool, list[tuple[str, str]] | None]:
    prof = prof or reach_probabilities(model)
    if prof.p_min[model.initial] > 0:
        return False, None
    _, S0, edges = _min_subgraph(model, prof)
    _, cycle, _ = _longest_paths(model, S0, edges)
    if cycle is None:
        return False, None
    return True, [(model.states[s], model.actions[s][i].label) for s, i in cycle]


def posmin_transform(model: Mdp) -> tuple[Mdp, TransformTrace]:
    prof = reach_probabilities(model)
    if prof.p_min[model.initial] > 0:
        return model, _identity(model, "posmin")
    _, S0, edges = _min_subgraph(model, prof)
    dist, cycle, rounds = _longest_paths(model, S0, edges)
    if cycle is not None:
        raise CriticalSchedulerError([(model.states[s], model.actions[s][i].label) for s, i in cycle])
    assert rounds <= len(S0)
    states = list(model.states)
    taken = set(states)
    actions = [list(a) for a in model.actions]
    t_init = len(states)
    states.append(fresh_name("__t_init", taken))
    actions.append([])
    betas = []
    for s in S0:
        for i, a in enumerate(model.actions[s]):
            if i in prof.act_min[s]:
                continue
            t = len(states)
            states.append(fresh_name(f"__t_{model.states[s]}_{a.label}", taken))
            actions.append([a])
            betas.append(Action(f"__beta_{len(betas)}", dist[s], ((t, Fraction(1)),)))
    if not betas:  # pragma: no cover - p^min = 0 at s_init forces a non-min action somewhere in S0
        raise RuntimeError("no non-minimal action reachable")
    actions[t_init] = betas
    out = Mdp(tuple(states), tuple(tuple(a) for a in actions), t_init, model.goal)
    trace = TransformTrace("posmin", {s: s for s in model.states},
                           steps=[{"offsets": {model.states[s]: dist[s] for s in S0}}])
    return out, trace


# ------------------------------------------------------------------ classification

@dataclass(frozen=True)
class FinitenessVerdict:
    pe_finite: bool
    ce_finite: bool
    reason: str   # ok | weightDivergentEC | criticalScheduler | goalUnreachable
    witness: Any = None


def classify_finiteness(model: Mdp) -> FinitenessVerdict:
    collapsed, trace = collapse_to_fail(model)
    divergent, witness = check_weight_divergence(collapsed)
    if divergent:
        return FinitenessVerdict(False, False, "weightDivergentEC", witness)
    if trace.goal_unreachable:
        return FinitenessVerdict(True, False, "goalUnreachable")
    critical, cycle = check_critical_scheduler(collapsed)
    if critical:
        return FinitenessVerdict(True, False, "criticalScheduler", cycle)
    return FinitenessVerdict(True, True, "ok")


@dataclass
class Prepared:
    """A model after fail-collapse and the spider construction."""
    original: Mdp
    model: Mdp
    traces: list[TransformTrace]
    goal_unreachable: bool


def prepare(model: Mdp, posmin: bool = False) -> Prepared:
    """collapse -> (posmin) -> spider; raises on infinite values."""
    m, t1 = collapse_to_fail(model)
    traces = [t1]
    if t1.goal_unreachable:
        return Prepared(model, m, traces, True)
    divergent, witness = check_weight_divergence(m)
    if divergent:
        raise WeightDivergenceError(witness)
    if posmin:
        m, t2 = posmin_transform(m)
        traces.append(t2)
    m, t3 = spider_transform(m)
    traces.append(t3)
    return Prepared(model, m, traces, False)
