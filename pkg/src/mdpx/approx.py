"""epsilon-approximation of optimal partial and conditional expectations.

The optimal partial expectation is approximated by solving, exactly, the
finite system over ``(state, accumulated weight)`` cells inside a window.
Outside the window the value is affine in the weight: the Max scheduler
above, the Min scheduler below.  The window is sized so that truncation
costs at most epsilon, so the exact optimum ``x*`` of the windowed system
satisfies ``x* <= PE^sup <= x* + epsilon``.

Conditional expectations are found by bisection on the threshold, using
that PE^sup[-theta] changes sign exactly at CE^sup.
"""
from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import gmpy2
import numpy as np
from scipy.sparse import csr_matrix, identity
from scipy.sparse.linalg import spsolve

from .bounds import BoundsReport, TailCertificate, compute_bounds, least_power, q_values, tail_certificate
from .errors import InfiniteValueError, ResourceLimitError
from .exact import extreme_schedulers
from .graph import ReachabilityProfile, reach_probabilities
from .linalg import solve_sparse, to_fraction
from .model import Mdp
from .preprocess import Prepared, classify_finiteness, prepare
from .schedulers import MemorylessScheduler, WindowScheduler, evaluate_window_scheduler  # noqa: F401

mpq = gmpy2.mpq

DEFAULT_MAX_CELLS = 10 ** 7
BYTES_PER_ROW = 2500  # measured peak memory of the exact engine per action row, with headroom


def _available_memory() -> int | None:
    try:
        return os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):  # pragma: no cover - non-POSIX
        return None


@dataclass
class WindowPlan:
    """Table range ``[lo, hi]`` in accumulated weight, for a given bias."""
    mode: str
    lo: int
    hi: int
    r_plus: int
    r_minus: Fraction
    q: Fraction
    q_per_state: dict[int, Fraction | None]
    pe_ub: Fraction
    D: Fraction

    @property
    def layers(self) -> int:
        return max(0, self.hi - self.lo + 1)


@dataclass
class ApproxResult:
    lower: Fraction
    upper: Fraction
    epsilon: Fraction
    scheduler: WindowScheduler
    model: Mdp
    trace: dict[str, Any] = field(default_factory=dict)

    @property
    def midpoint(self) -> Fraction:
        return (self.lower + self.upper) / 2


class Analysis:
    """Everything about a prepared model that does not depend on bias or epsilon."""

    def __init__(self, prepared: Prepared, mode: str = "tight"):
        if mode not in ("tight", "generic"):
            raise ValueError(f"unknown window mode {mode!r}")
        self.prepared = prepared
        self.model = prepared.model
        self.mode = mode
        self.prof: ReachabilityProfile = reach_probabilities(self.model)
        self.mx, self.mn = extreme_schedulers(self.model, self.prof)
        self._reports: dict[Fraction, BoundsReport] = {}
        self._cert: TailCertificate | None = None
        self._cert_done = False

    def report(self, epsilon: Fraction) -> BoundsReport:
        if epsilon not in self._reports:
            self._reports[epsilon] = compute_bounds(self.model, epsilon, self.prof, (self.mx, self.mn))
        return self._reports[epsilon]

    def certificate(self, epsilon: Fraction) -> TailCertificate | None:
        if not self._cert_done:
            cap = float(self.report(epsilon).peUb)
            self._cert = tail_certificate(self.model, epsilon, self.prof, (self.mx, self.mn), pe_ub_cap=cap)
            self._cert_done = True
        return self._cert

    def plan(self, epsilon: Fraction, bias: Fraction) -> WindowPlan:
        rep = self.report(epsilon)
        pe_ub, r_plus, qs, q, D = rep.peUb, rep.rPlus, rep.q_per_state, rep.q, rep.D
        cert = self.certificate(epsilon) if self.mode == "tight" else None
        if cert is not None:
            pe_ub = min(pe_ub, cert.pe_ub)
            qs, q = q_values(self.model, self.prof, self.mn, pe_ub)
            D = pe_ub - min(min(self.mx.pe), min(self.mn.pe))
            if rep.lambdaM == 0:
                k = 0 if 2 * D <= epsilon else 1
            else:
                k = least_power(1 / rep.lambdaM, 2 * D / epsilon)
            r_plus = min(math.ceil((rep.cM + rep.W) * k), cert.r_plus(D, epsilon))
        hi = max(r_plus, math.ceil(-bias))
        lo = math.ceil(q - r_plus - bias)
        return WindowPlan(self.mode, lo, hi, r_plus, q - r_plus, q, qs, pe_ub, D)


# ------------------------------------------------------------------ the windowed system

class WindowSystem:
    """Cells ``(s, w)`` for live states s and lo <= w <= hi with their action rows."""

    def __init__(self, an: Analysis, plan: WindowPlan, bias: Fraction):
        model = an.model
        self.model, self.plan, self.bias = model, plan, bias
        self.live = [s for s in range(model.n) if not model.is_absorbing(s)]
        self.slot = {s: i for i, s in enumerate(self.live)}
        m = len(self.live)
        lo, hi = plan.lo, plan.hi
        self.ncells = m * plan.layers
        goal = model.goal
        prof, mx, mn = an.prof, an.mx, an.mn
        # per (state, action): (weight, live part [(slot, p)], goal prob, other absorbing)
        shapes = []
        for s in self.live:
            opts = []
            for i, a in enumerate(model.actions[s]):
                livep = [(self.slot[t], t, p) for t, p in a.dist if t in self.slot]
                pg = sum((p for t, p in a.dist if t == goal), Fraction(0))
                opts.append((i, a.weight, livep, pg))
            shapes.append(opts)
        self.row_cell: list[int] = []
        self.row_action: list[int] = []
        self.row_const: list[Fraction] = []
        self.row_entries: list[list[tuple[int, Fraction]]] = []
        self.cell_rows: list[tuple[int, int]] = []
        for w in range(lo, hi + 1):
            base = (w - lo) * m
            for k, s in enumerate(self.live):
                qs = plan.q_per_state.get(s)
                restrict = qs is not None and w + bias <= qs
                start = len(self.row_cell)
                for i, wt, livep, pg in shapes[k]:
                    if restrict and i not in prof.act_min[s]:
                        continue
                    w2 = w + wt
                    e2 = w2 + bias
                    c = pg * e2
                    ents = []
                    if w2 > hi:
                        for _, t, p in livep:
                            c += p * (mx.pe[t] + prof.p_max[t] * e2)
                    elif w2 < lo:
                        for _, t, p in livep:
                            c += p * (mn.pe[t] + prof.p_min[t] * e2)
                    else:
                        off = (w2 - lo) * m
                        ents = [(off + j, p) for j, _, p in livep]
                    self.row_cell.append(base + k)
                    self.row_action.append(i)
                    self.row_const.append(c)
                    self.row_entries.append(ents)
                self.cell_rows.append((start, len(self.row_cell)))

    def cell(self, s: int, w: int) -> int:
        return (w - self.plan.lo) * len(self.live) + self.slot[s]

    # -- float warm start
    def float_policy(self, max_iter: int = 200) -> list[int]:
        nrows = len(self.row_cell)
        n = self.ncells
        indptr = [0]
        cols, vals = [], []
        for ents in self.row_entries:
            for j, p in ents:
                cols.append(j)
                vals.append(float(p))
            indptr.append(len(cols))
        P = csr_matrix((np.array(vals, dtype=float), np.array(cols, dtype=np.int64), np.array(indptr)),
                       shape=(nrows, n))
        c = np.array([float(v) for v in self.row_const])
        starts = np.array([a for a, _ in self.cell_rows])
        pol = starts.copy()  # chosen row per cell
        eye = identity(n, format="csr")
        x = None
        for _ in range(max_iter):
            A = (eye - P[pol]).tocsc()
            x = spsolve(A, c[pol]) if n else np.zeros(0)
            q = P @ x + c
            best = np.maximum.reduceat(q, starts) if n else q
            cur = q[pol]
            improve = best > cur + 1e-10 * (1 + np.abs(cur))
            if not improve.any():
                break
            for cell in np.nonzero(improve)[0]:
                a, b = self.cell_rows[cell]
                pol[cell] = a + int(np.argmax(q[a:b]))
        return [int(r) for r in pol]

    # -- exact policy iteration
    def exact_solve(self, pol: list[int] | None = None, max_iter: int = 10_000):
        n = self.ncells
        if pol is None:
            pol = [a for a, _ in self.cell_rows]
        const = [mpq(v) for v in self.row_const]
        ents = [[(j, mpq(p)) for j, p in e] for e in self.row_entries]
        iters = 0
        for _ in range(max_iter):
            iters += 1
            rows = []
            for cell in range(n):
                r = pol[cell]
                row = {cell: mpq(1)}
                for j, p in ents[r]:
                    row[j] = row.get(j, 0) - p
                rows.append(row)
            x = solve_sparse(rows, [const[pol[c]] for c in range(n)], raw=True)
            changed = False
            for cell in range(n):
                a, b = self.cell_rows[cell]
                cur = x[cell]
                best, arg = cur, pol[cell]
                for r in range(a, b):
                    if r == pol[cell]:
                        continue
                    v = const[r]
                    for j, p in ents[r]:
                        v += p * x[j]
                    if v > best:
                        best, arg = v, r
                if arg != pol[cell]:
                    pol[cell] = arg
                    changed = True
            if not changed:
                break
        # lowest-index tie-breaking among exact maximizers
        for cell in range(n):
            a, b = self.cell_rows[cell]
            for r in range(a, b):
                v = const[r]
                for j, p in ents[r]:
                    v += p * x[j]
                if v == x[cell]:
                    pol[cell] = r
                    break
        return x, pol, iters


def _start_value(an: Analysis, plan: WindowPlan, bias: Fraction, x, sysw: WindowSystem | None) -> Fraction:
    model = an.model
    s = model.initial
    if s == model.goal:
        return bias
    if model.is_absorbing(s):
        return Fraction(0)
    if 0 > plan.hi:
        return an.mx.pe[s] + an.prof.p_max[s] * bias
    if 0 < plan.lo:
        return an.mn.pe[s] + an.prof.p_min[s] * bias
    return to_fraction(x[sysw.cell(s, 0)])


def solve_window(an: Analysis, epsilon: Fraction, bias: Fraction = Fraction(0),
                 max_cells: int = DEFAULT_MAX_CELLS, plan: WindowPlan | None = None) -> ApproxResult:
    epsilon, bias = Fraction(epsilon), Fraction(bias)
    t0 = time.perf_counter()
    plan = plan or an.plan(epsilon, bias)
    live = [s for s in range(an.model.n) if not an.model.is_absorbing(s)]
    cells = len(live) * plan.layers
    if cells > max_cells:
        raise ResourceLimitError(f"window needs {cells} cells (limit {max_cells}); "
                                 f"window [{plan.lo}, {plan.hi}] in {plan.mode} mode")
    rows = plan.layers * sum(len(an.model.actions[s]) for s in live)
    avail = _available_memory()
    if avail is not None and rows * BYTES_PER_ROW > 0.7 * avail:
        raise ResourceLimitError(f"window needs about {rows * BYTES_PER_ROW / 2 ** 30:.1f} GiB for {cells} cells "
                                 f"(available {avail / 2 ** 30:.1f} GiB); window [{plan.lo}, {plan.hi}] "
                                 f"in {plan.mode} mode")
    sysw = WindowSystem(an, plan, bias)
    pol = sysw.float_policy() if sysw.ncells else []
    x, pol, iters = sysw.exact_solve(pol)
    value = _start_value(an, plan, bias, x, sysw)
    table = {}
    for w in range(plan.lo, plan.hi + 1):
        for s in live:
            table[(s, w)] = sysw.row_action[pol[sysw.cell(s, w)]]
    sched = WindowScheduler(plan.lo, plan.hi, table, an.mx, an.mn)
    trace = {"mode": plan.mode, "window": [plan.lo, plan.hi], "r_plus": plan.r_plus,
             "r_minus": plan.r_minus, "q": plan.q, "pe_ub": plan.pe_ub, "D": plan.D,
             "cells": sysw.ncells, "exact_iterations": iters,
             "seconds": time.perf_counter() - t0}
    return ApproxResult(value, value + epsilon, epsilon, sched, an.model, trace)


def _trivial(prep: Prepared, epsilon: Fraction) -> ApproxResult:
    m = prep.model
    none = MemorylessScheduler(tuple(0 for _ in range(m.n)))
    return ApproxResult(Fraction(0), Fraction(0), epsilon, WindowScheduler(0, -1, {}, none, none), m,
                        {"goal_unreachable": True})


def approx_pe(model: Mdp, epsilon, bias=Fraction(0), mode: str = "tight",
              max_cells: int = DEFAULT_MAX_CELLS) -> ApproxResult:
    """Interval of width <= epsilon containing PE^sup[bias], plus a witnessing scheduler.

    ``model`` is taken as given by the user; collapse and the spider
    construction run here.  The scheduler refers to ``result.model``.
    """
    epsilon, bias = Fraction(epsilon), Fraction(bias)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    prep = prepare(model)
    if prep.goal_unreachable:
        return _trivial(prep, epsilon)
    an = Analysis(prep, mode)
    return solve_window(an, epsilon, bias, max_cells)


@dataclass
class BinarySearchTrace:
    steps: list[tuple[Fraction, Fraction, Fraction, Fraction]] = field(default_factory=list)
    A0: Fraction = Fraction(0)
    B0: Fraction = Fraction(0)
    p: Fraction = Fraction(0)
    stop: str = ""
    windows: list[list[int]] = field(default_factory=list)


def approx_ce(model: Mdp, epsilon, mode: str = "tight", max_cells: int = DEFAULT_MAX_CELLS
              ) -> tuple[Fraction, BinarySearchTrace]:
    """A value within 3*epsilon of CE^sup by bisection on the threshold."""
    epsilon = Fraction(epsilon)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    verdict = classify_finiteness(model)
    if not verdict.ce_finite:
        raise InfiniteValueError(f"conditional expectation is not finite ({verdict.reason})",
                                 verdict.witness, verdict.reason)
    prep = prepare(model, posmin=True)
    an = Analysis(prep, mode)
    m = an.model
    s0 = m.initial
    p = an.prof.p_min[s0]
    A = an.mx.pe[s0] / an.prof.p_max[s0]
    rep = an.report(p * epsilon)
    ub = rep.peUb
    if mode == "tight":
        ub = min(ub, an.plan(p * epsilon, Fraction(0)).pe_ub)
    B = max(ub / p, A)
    tr = BinarySearchTrace(A0=A, B0=B, p=p)
    # CE of Max is a lower bound; probing it first settles models where it is optimal
    res = solve_window(an, p * epsilon, -A, max_cells)
    tr.steps.append((A, B, A, res.midpoint))
    tr.windows.append(res.trace["window"])
    if abs(res.midpoint) <= 2 * p * epsilon:
        tr.stop = "probe"
        return A, tr
    while True:
        if B - A <= p * epsilon:
            tr.stop = "bracket"
            return (A + B) / 2, tr
        theta = (A + B) / 2
        res = solve_window(an, p * epsilon, -theta, max_cells)
        E = res.midpoint
        tr.steps.append((A, B, theta, E))
        tr.windows.append(res.trace["window"])
        if abs(E) <= 2 * p * epsilon:
            tr.stop = "probe"
            return theta, tr
        if E < 0:
            B = theta
        else:
            A = theta
