"""Exact policy iteration for transient total-reward problems.

A problem consists of *free* nodes, each with a list of choices
``(reward, [(successor, prob), ...])``, and *fixed* nodes with known values.
Every policy considered must be transient on the free nodes (no closed set of
free nodes), which makes its evaluation a non-singular M-matrix system.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Hashable, Mapping, Sequence

from .linalg import solve_sparse

Choice = tuple[Fraction, Sequence[tuple[Hashable, Fraction]]]


def evaluate_policy(free: Sequence[Hashable], choices: Mapping[Hashable, Sequence[Choice]],
                    fixed: Mapping[Hashable, Fraction], policy: Mapping[Hashable, int]) -> dict:
    pos = {s: i for i, s in enumerate(free)}
    rows, rhs = [], []
    for s in free:
        reward, dist = choices[s][policy[s]]
        row = {pos[s]: Fraction(1)}
        c = Fraction(reward)
        for t, p in dist:
            if t in pos:
                row[pos[t]] = row.get(pos[t], 0) - p
            else:
                c += p * fixed[t]
        rows.append(row)
        rhs.append(c)
    x = solve_sparse(rows, rhs)
    return dict(zip(free, x))


def q_value(choice: Choice, values: Mapping, fixed: Mapping) -> Fraction:
    reward, dist = choice
    acc = Fraction(reward)
    for t, p in dist:
        acc += p * (values[t] if t in values else fixed[t])
    return acc


def solve_transient(free: Sequence[Hashable], choices: Mapping[Hashable, Sequence[Choice]],
                    fixed: Mapping[Hashable, Fraction], maximize: bool = True,
                    policy: Mapping[Hashable, int] | None = None,
                    max_iter: int = 10_000) -> tuple[dict, dict]:
    """Optimal values and the lowest-index optimal policy.

    For maximization the initial ``policy`` must be transient; later policies
    stay transient when every closed set of free nodes has value -infinity
    under maximization (strict improvement never enters such a set).
    """
    pol = {s: 0 for s in free} if policy is None else dict(policy)
    sign = 1 if maximize else -1
    for _ in range(max_iter):
        vals = evaluate_policy(free, choices, fixed, pol)
        changed = False
        for s in free:
            cur = sign * q_value(choices[s][pol[s]], vals, fixed)
            best, arg = cur, pol[s]
            for a, ch in enumerate(choices[s]):
                q = sign * q_value(ch, vals, fixed)
                if q > best:
                    best, arg = q, a
            if arg != pol[s]:
                pol[s] = arg
                changed = True
        if not changed:
            break
    else:  # pragma: no cover - policy iteration terminates finitely
        raise RuntimeError("policy iteration did not converge")
    # deterministic tie-breaking: lowest index among optimal choices
    for s in free:
        qs = [sign * q_value(ch, vals, fixed) for ch in choices[s]]
        m = max(qs)
        pol[s] = qs.index(m)
    return vals, pol
