"""A small exact simplex solver over rationals (two phases, Bland's rule).

Only intended for the low-dimensional programs arising from single end
components, where a dense tableau is perfectly adequate.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence


class Infeasible(ValueError):
    pass


class Unbounded(ValueError):
    pass


def _pivot(T: list[list[Fraction]], basis: list[int], r: int, c: int) -> None:
    pr = T[r]
    piv = pr[c]
    T[r] = pr = [v / piv for v in pr]
    for i, row in enumerate(T):
        if i != r and row[c]:
            f = row[c]
            T[i] = [a - f * b for a, b in zip(row, pr)]
    basis[r] = c


def _run(T, basis, ncols: int, allowed: int) -> None:
    """Minimize the objective held in the last row; columns >= allowed never enter."""
    while True:
        obj = T[-1]
        col = next((j for j in range(allowed) if obj[j] < 0), None)
        if col is None:
            return
        best = None
        for i in range(len(T) - 1):
            a = T[i][col]
            if a > 0:
                ratio = T[i][ncols] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:
            raise Unbounded("objective unbounded below")
        _pivot(T, basis, best[1], col)


def minimize_ge(c: Sequence[Fraction], A: Sequence[Sequence[Fraction]],
                b: Sequence[Fraction]) -> tuple[Fraction, list[Fraction]]:
    """Minimize ``c.x`` subject to ``A x >= b`` and ``x >= 0`` exactly."""
    m, n = len(A), len(c)
    # columns: x (n), surplus (m), artificial (m), rhs
    ncols = n + 2 * m
    T: list[list[Fraction]] = []
    for i in range(m):
        sign = 1 if b[i] >= 0 else -1
        row = [Fraction(sign * v) for v in A[i]]
        row += [Fraction(-sign if j == i else 0) for j in range(m)]
        row += [Fraction(1 if j == i else 0) for j in range(m)]
        row.append(Fraction(sign * b[i]))
        T.append(row)
    basis = [n + m + i for i in range(m)]
    # phase 1 objective: sum of artificials, expressed in non-basic terms
    obj = [Fraction(0)] * (ncols + 1)
    for row in T:
        for j in range(n + m):
            obj[j] -= row[j]
        obj[ncols] -= row[ncols]
    T.append(obj)
    _run(T, basis, ncols, n + m)
    if T[-1][ncols] != 0:
        raise Infeasible("no feasible point")
    # drive remaining artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= n + m:
            j = next((j for j in range(n + m) if T[i][j] != 0), None)
            if j is not None:
                _pivot(T, basis, i, j)
    # phase 2 objective
    obj = [Fraction(v) for v in c] + [Fraction(0)] * (2 * m) + [Fraction(0)]
    for i in range(m):
        bj = basis[i]
        if bj < ncols and obj[bj]:
            f = obj[bj]
            obj = [a - f * r for a, r in zip(obj, T[i])]
    T[-1] = obj
    _run(T, basis, ncols, n + m)
    x = [Fraction(0)] * n
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i][ncols]
    value = sum((ci * xi for ci, xi in zip(c, x)), Fraction(0))
    return value, x
