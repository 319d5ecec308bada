"""Exact rational linear solvers.

Arithmetic runs on ``gmpy2.mpq`` (much faster than ``Fraction``) and results
are converted back to :class:`fractions.Fraction`.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import gmpy2

mpq = gmpy2.mpq


def to_fraction(q) -> Fraction:
    return Fraction(int(q.numerator), int(q.denominator))


class SingularSystem(ArithmeticError):
    pass


def solve_sparse(rows: Sequence[dict[int, Fraction]], rhs: Sequence[Fraction], raw: bool = False) -> list:
    """Solve ``A x = b`` for ``A`` given as one ``{column: value}`` dict per row.

    Gaussian elimination in natural order without pivoting.  This is exact
    and never meets a zero pivot for the systems used here, which are of the
    form ``I - P`` with ``P`` substochastic and transient (non-singular
    M-matrices keep positive pivots under elimination).  A zero pivot raises
    :class:`SingularSystem`.  With ``raw=True`` the solution is returned as
    ``gmpy2.mpq`` values.
    """
    n = len(rows)
    A = [{j: mpq(v) for j, v in r.items() if v} for r in rows]
    b = [mpq(v) for v in rhs]
    # rows below the pivot that still hold an entry in a given column
    below: dict[int, set[int]] = {}
    for i, r in enumerate(A):
        for j in r:
            if j < i:
                below.setdefault(j, set()).add(i)
    for k in range(n):
        rk = A[k]
        d = rk.get(k)
        if not d:
            raise SingularSystem(f"zero pivot at row {k}")
        for i in sorted(below.pop(k, ())):
            ri = A[i]
            f = ri.pop(k, None)
            if not f:
                continue
            f = f / d
            for j, v in rk.items():
                if j == k:
                    continue
                nv = ri.get(j, 0) - f * v
                if nv:
                    if j not in ri and j < i:
                        below.setdefault(j, set()).add(i)
                    ri[j] = nv
                elif j in ri:
                    del ri[j]
            b[i] -= f * b[k]
    x = [mpq(0)] * n
    for k in range(n - 1, -1, -1):
        acc = b[k]
        for j, v in A[k].items():
            if j > k:
                acc -= v * x[j]
        x[k] = acc / A[k][k]
    return x if raw else [to_fraction(v) for v in x]


def solve_dense(A: Sequence[Sequence[Fraction]], b: Sequence[Fraction]) -> list[Fraction]:
    """Exact Gaussian elimination with (nonzero) partial pivoting."""
    n = len(A)
    M = [[mpq(v) for v in row] + [mpq(bi)] for row, bi in zip(A, b)]
    for k in range(n):
        p = next((i for i in range(k, n) if M[i][k] != 0), None)
        if p is None:
            raise SingularSystem(f"singular at column {k}")
        M[k], M[p] = M[p], M[k]
        piv = M[k][k]
        for i in range(k + 1, n):
            f = M[i][k]
            if f:
                f = f / piv
                Mi, Mk = M[i], M[k]
                for j in range(k, n + 1):
                    Mi[j] -= f * Mk[j]
    x = [mpq(0)] * n
    for k in range(n - 1, -1, -1):
        acc = M[k][n]
        for j in range(k + 1, n):
            acc -= M[k][j] * x[j]
        x[k] = acc / M[k][k]
    return [to_fraction(v) for v in x]
