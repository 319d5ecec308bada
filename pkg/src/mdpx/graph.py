"""End components, reachability probabilities and maximal mean payoff."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .linalg import solve_dense, solve_sparse
from .model import Action, Mdp
from .solvers import solve_transient


def scc_labels(nodes: Sequence[int], edges: Iterable[tuple[int, int]]) -> dict[int, int]:
    """Strongly connected component label for each node."""
    pos = {v: i for i, v in enumerate(nodes)}
    src, dst = [], []
    for u, v in edges:
        if u in pos and v in pos:
            src.append(pos[u])
            dst.append(pos[v])
    m = len(nodes)
    if m == 0:
        return {}
    g = csr_matrix((np.ones(len(src)), (src, dst)), shape=(m, m))
    _, lab = connected_components(g, directed=True, connection="strong")
    return {v: int(lab[pos[v]]) for v in nodes}


@dataclass(frozen=True)
class EndComponent:
    states: tuple[int, ...]
    actions: dict[int, tuple[int, ...]]  # state -> action indices

    def __contains__(self, s: int) -> bool:
        return s in self.actions


@dataclass(frozen=True)
class MecDecomposition:
    mecs: tuple[EndComponent, ...]
    membership: tuple[int | None, ...]


def end_components_within(model: Mdp, allowed: dict[int, set[int]]) -> list[EndComponent]:
    """Maximal end components of the sub-MDP given by ``allowed`` actions."""
    allowed = {s: set(a) for s, a in allowed.items() if a}
    while True:
        alive = sorted(allowed)
        edges = [(s, t) for s in alive for a in allowed[s] for t in model.actions[s][a].targets()]
        lab = scc_labels(alive, edges)
        changed = False
        for s in alive:
            keep = {a for a in allowed[s]
                    if all(t in lab and lab[t] == lab[s] for t in model.actions[s][a].targets())}
            if keep != allowed[s]:
                changed = True
                if keep:
                    allowed[s] = keep
                else:
                    del allowed[s]
        if not changed:
            break
    groups: dict[int, list[int]] = {}
    for s in sorted(allowed):
        groups.setdefault(lab[s], []).append(s)
    comps = [EndComponent(tuple(g), {s: tuple(sorted(allowed[s])) for s in g}) for g in groups.values()]
    comps.sort(key=lambda e: e.states[0])
    return comps


def mec_decompose(model: Mdp) -> MecDecomposition:
    comps = end_components_within(model, {s: set(range(len(model.actions[s]))) for s in range(model.n)})
    member: list[int | None] = [None] * model.n
    for k, e in enumerate(comps):
        for s in e.states:
            member[s] = k
    return MecDecomposition(tuple(comps), tuple(member))


def is_trivial_absorbing(model: Mdp, e: EndComponent) -> bool:
    return len(e.states) == 1 and model.is_absorbing(e.states[0])


@dataclass(frozen=True)
class Quotient:
    model: Mdp
    mapping: tuple[int, ...]          # original state -> quotient state
    dead: frozenset[int]              # quotient states without any action
    origin: tuple[tuple[tuple[int, int], ...], ...]  # per quotient action: (orig state, orig action)


def mec_quotient(model: Mdp, dec: MecDecomposition | None = None, stay: bool = False) -> Quotient:
    """Collapse every MEC into one state keeping only the MEC-leaving actions.

    Absorbing single-state MECs (such as goal) are kept unchanged.  A collapsed
    MEC without leaving actions becomes an action-less state listed in
    ``dead``.  With ``stay=True`` each collapsed MEC additionally gets an
    action ``__stay`` to a fresh action-less state, which models remaining in
    the MEC forever and makes minimal reachability probabilities agree too.
    """
    dec = dec or mec_decompose(model)
    names: list[str] = []
    mapping = [-1] * model.n
    collapsed: dict[int, int] = {}
    for s in range(model.n):
        k = dec.membership[s]
        if k is not None and not is_trivial_absorbing(model, dec.mecs[k]):
            if k not in collapsed:
                collapsed[k] = len(names)
                names.append(f"__mec{k}")
            mapping[s] = collapsed[k]
        else:
            mapping[s] = len(names)
            names.append(model.states[s])
    sink = None
    if stay and collapsed:
        sink = len(names)
        names.append("__stay_sink")
    acts: list[list[Action]] = [[] for _ in names]
    origin: list[list[tuple[int, int]]] = [[] for _ in names]
    for s in range(model.n):
        k = dec.membership[s]
        inside = dec.mecs[k].actions.get(s, ()) if k is not None and k in collapsed else ()
        q = mapping[s]
        for i, a in enumerate(model.actions[s]):
            if i in inside:
                continue
            dist: dict[int, Fraction] = {}
            for t, p in a.dist:
                dist[mapping[t]] = dist.get(mapping[t], 0) + p
            label = a.label if k not in collapsed else f"{model.states[s]}__{a.label}"
            acts[q].append(Action(label, a.weight, tuple(dist.items())))
            origin[q].append((s, i))
    if sink is not None:
        for q in collapsed.values():
            acts[q].append(Action("__stay", 0, ((sink, Fraction(1)),)))
            origin[q].append((-1, -1))
    dead = frozenset(q for q in range(len(names)) if not acts[q])
    qm = Mdp(tuple(names), tuple(tuple(a) for a in acts), mapping[model.initial], mapping[model.goal])
    return Quotient(qm, tuple(mapping), dead, tuple(tuple(o) for o in origin))


@dataclass(frozen=True)
class ReachabilityProfile:
    p_max: tuple[Fraction, ...]
    p_min: tuple[Fraction, ...]
    act_max: tuple[tuple[int, ...], ...]
    act_min: tuple[tuple[int, ...], ...]
    p_max_by_action: tuple[tuple[Fraction, ...], ...]
    p_min_by_action: tuple[tuple[Fraction, ...], ...]


def _expect(a: Action, v: Sequence[Fraction]) -> Fraction:
    return sum((p * v[t] for t, p in a.dist), Fraction(0))


def can_reach(model: Mdp, target: Iterable[int], allowed=None) -> set[int]:
    """States with a path into ``target`` (backward graph search)."""
    pred: dict[int, set[int]] = {}
    for s, i, a in model.state_actions():
        if allowed is not None and i not in allowed[s]:
            continue
        for t in a.targets():
            pred.setdefault(t, set()).add(s)
    seen = set(target)
    stack = list(seen)
    while stack:
        t = stack.pop()
        for s in pred.get(t, ()):
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return seen


def max_reach(model: Mdp) -> list[Fraction]:
    """Exact p^max via the MEC-quotient, which has no end components left."""
    goal = model.goal
    reach = can_reach(model, [goal])
    q = mec_quotient(model)
    qm = q.model
    qgoal = q.mapping[goal]
    qreach = {q.mapping[s] for s in reach}
    fixed = {qgoal: Fraction(1)}
    free = []
    for v in range(qm.n):
        if v == qgoal:
            continue
        if v in q.dead or v not in qreach or qm.is_absorbing(v):
            fixed[v] = Fraction(0)
        else:
            free.append(v)
    choices = {v: [(Fraction(0), a.dist) for a in qm.actions[v]] for v in free}
    vals, _ = solve_transient(free, choices, fixed, maximize=True)
    vals.update(fixed)
    return [vals[q.mapping[s]] for s in range(model.n)]


def min_zero_states(model: Mdp) -> set[int]:
    """States that can avoid goal forever (greatest fixpoint)."""
    X = set(range(model.n)) - {model.goal}
    while True:
        keep = {s for s in X if any(set(a.targets()) <= X for a in model.actions[s])}
        if keep == X:
            return X
        X = keep


def min_reach(model: Mdp) -> list[Fraction]:
    zero = min_zero_states(model)
    fixed = {s: Fraction(0) for s in zero}
    fixed[model.goal] = Fraction(1)
    free = [s for s in range(model.n) if s not in fixed]
    choices = {s: [(Fraction(0), a.dist) for a in model.actions[s]] for s in free}
    vals, _ = solve_transient(free, choices, fixed, maximize=False)
    vals.update(fixed)
    return [vals[s] for s in range(model.n)]


def reach_probabilities(model: Mdp) -> ReachabilityProfile:
    pmax = max_reach(model)
    pmin = min_reach(model)
    by_max = tuple(tuple(_expect(a, pmax) for a in acts) for acts in model.actions)
    by_min = tuple(tuple(_expect(a, pmin) for a in acts) for acts in model.actions)
    # goal's own loop trivially attains 1; by_* already gives that
    act_max = tuple(tuple(i for i, v in enumerate(by_max[s]) if v == pmax[s]) for s in range(model.n))
    act_min = tuple(tuple(i for i, v in enumerate(by_min[s]) if v == pmin[s]) for s in range(model.n))
    return ReachabilityProfile(tuple(pmax), tuple(pmin), act_max, act_min, by_max, by_min)


# ------------------------------------------------------------------ mean payoff

@dataclass(frozen=True)
class MeanPayoffResult:
    gain: Fraction
    policy: dict[int, int]
    bias: dict[int, Fraction]


def _evaluate_multichain(model: Mdp, states: Sequence[int], policy: dict[int, int]):
    """Gain and bias of a memoryless policy on a closed set of states."""
    edges = [(s, t) for s in states for t in model.actions[s][policy[s]].targets()]
    lab = scc_labels(list(states), edges)
    leaves = {lab[s] for s in states}
    for s, t in edges:
        if lab[s] != lab[t]:
            leaves.discard(lab[s])
    g: dict[int, Fraction] = {}
    h: dict[int, Fraction] = {}
    for c in sorted(leaves):
        C = [s for s in states if lab[s] == c]
        pos = {s: i for i, s in enumerate(C)}
        m = len(C)
        # unknowns h_C (m) and g (1); equations h_s + g - sum P h = r_s, h_ref = 0
        A = []
        b = []
        for s in C:
            a = model.actions[s][policy[s]]
            row = [Fraction(0)] * (m + 1)
            row[pos[s]] += 1
            for t, p in a.dist:
                row[pos[t]] -= p
            row[m] = Fraction(1)
            A.append(row)
            b.append(Fraction(a.weight))
        ref = [Fraction(0)] * (m + 1)
        ref[0] = Fraction(1)
        A.append(ref)
        b.append(Fraction(0))
        x = solve_dense(A, b)
        for s in C:
            g[s] = x[m]
            h[s] = x[pos[s]]
    trans = [s for s in states if s not in g]
    if trans:
        pos = {s: i for i, s in enumerate(trans)}
        rows, rg = [], []
        for s in trans:
            a = model.actions[s][policy[s]]
            row = {pos[s]: Fraction(1)}
            c = Fraction(0)
            for t, p in a.dist:
                if t in pos:
                    row[pos[t]] = row.get(pos[t], 0) - p
                else:
                    c += p * g[t]
            rows.append(row)
            rg.append(c)
        gt = solve_sparse(rows, rg)
        for s, v in zip(trans, gt):
            g[s] = v
        rh = []
        for s in trans:
            a = model.actions[s][policy[s]]
            c = a.weight - g[s]
            for t, p in a.dist:
                if t not in pos:
                    c += p * h[t]
            rh.append(c)
        ht = solve_sparse(rows, rh)
        for s, v in zip(trans, ht):
            h[s] = v
    return g, h


def max_mean_payoff(model: Mdp, ec: EndComponent, policy: dict[int, int] | None = None,
                    max_iter: int = 10_000) -> MeanPayoffResult:
    """Exact maximal mean payoff of an end component by multichain policy iteration."""
    states = list(ec.states)
    pol = {s: ec.actions[s][0] for s in states} if policy is None else dict(policy)
    for _ in range(max_iter):
        g, h = _evaluate_multichain(model, states, pol)
        changed = False
        # gain improvement
        for s in states:
            cur = _expect(model.actions[s][pol[s]], g)
            best, arg = cur, pol[s]
            for i in ec.actions[s]:
                v = sum((p * g[t] for t, p in model.actions[s][i].dist), Fraction(0))
                if v > best:
                    best, arg = v, i
            if arg != pol[s]:
                pol[s] = arg
                changed = True
        if changed:
            continue
        # bias improvement among gain-maximizing actions
        for s in states:
            gs = g[s]

            def val(i):
                a = model.actions[s][i]
                return a.weight - gs + sum((p * h[t] for t, p in a.dist), Fraction(0))

            cur = val(pol[s])
            best, arg = cur, pol[s]
            for i in ec.actions[s]:
                a = model.actions[s][i]
                if sum((p * g[t] for t, p in a.dist), Fraction(0)) != gs:
                    continue
                v = val(i)
                if v > best:
                    best, arg = v, i
            if arg != pol[s]:
                pol[s] = arg
                changed = True
        if not changed:
            break
    else:  # pragma: no cover
        raise RuntimeError("mean-payoff policy iteration did not converge")
    gains = {g[s] for s in states}
    if len(gains) != 1:  # pragma: no cover - communicating components have constant gain
        raise RuntimeError("gain not constant on end component")
    return MeanPayoffResult(gains.pop(), pol, h)
