"""Quantitative bounds used to size the approximation window.

Two families are provided:

* :func:`compute_bounds` evaluates the constants of the original analysis
  (super-potentials, per-EC tail constants, c_M, lambda_M, PE^ub, the lower
  saturation point and the window R^+ / R^-).
* :func:`tail_certificate` searches for an exponential supermartingale
  ``beta**wgt * y[state]``.  It gives ``Pr_s(<> wgt >= x) <= (y_s / y_min) *
  beta**(-x)`` for every scheduler, usually with a far smaller window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .exact import extreme_schedulers
from .graph import EndComponent, ReachabilityProfile, max_mean_payoff, reach_probabilities
from .lp import minimize_ge
from .model import Mdp, model_constants
from .preprocess import nonabsorbing_mecs
from .schedulers import MemorylessScheduler


@dataclass(frozen=True)
class SuperPotential:
    gain: Fraction            # -t
    u: dict[int, Fraction]
    spread: Fraction
    method: str = "bias"

    @property
    def t(self) -> Fraction:
        return -self.gain


def super_harmonic_violations(model: Mdp, ec: EndComponent, gain: Fraction, u: dict[int, Fraction]) -> list:
    """All (state, action) of the EC where gain + u_s < wgt + sum P u fails."""
    bad = []
    for s, acts in ec.actions.items():
        for i in acts:
            a = model.actions[s][i]
            rhs = a.weight + sum((p * u[t] for t, p in a.dist), Fraction(0))
            if gain + u[s] < rhs:
                bad.append((s, i))
    return bad


def super_potential(model: Mdp, ec: EndComponent, mp=None) -> SuperPotential:
    mp = mp or max_mean_payoff(model, ec)
    if mp.gain >= 0:
        raise ValueError(f"end component has non-negative gain {mp.gain}")
    u = dict(mp.bias)
    method = "bias"
    if super_harmonic_violations(model, ec, mp.gain, u):  # pragma: no cover - PI bias always passes in tests
        states = list(ec.states)
        pos = {s: i for i, s in enumerate(states)}
        A, b = [], []
        for s in states:
            for i in ec.actions[s]:
                a = model.actions[s][i]
                row = [Fraction(0)] * len(states)
                row[pos[s]] += 1
                for t, p in a.dist:
                    row[pos[t]] -= p
                A.append(row)
                b.append(a.weight - mp.gain)
        _, x = minimize_ge([Fraction(1)] * len(states), A, b)
        u = {s: x[pos[s]] for s in states}
        method = "lp"
    lo = min(u.values())
    u = {s: v - lo for s, v in u.items()}
    if super_harmonic_violations(model, ec, mp.gain, u):  # pragma: no cover
        raise RuntimeError("super-potential verification failed")
    return SuperPotential(mp.gain, u, max(u.values()), method)


@dataclass(frozen=True)
class EcTailConstants:
    c: Fraction
    lam: Fraction


def ec_tail_constants(sp: SuperPotential, W: int) -> EcTailConstants:
    c = sp.spread + W
    r = sp.t / c
    return EcTailConstants(c, (1 - r) / (1 + r))


def least_power(base: Fraction, target: Fraction) -> int:
    """Least integer k >= 0 with base**k >= target (base > 1), by exact comparison."""
    if target <= 1:
        return 0
    k = max(0, math.floor(math.log(float(target)) / math.log(float(base))) - 2) if math.isfinite(float(target)) else 0
    if k and base ** k >= target:
        k = 0
    while base ** k < target:
        k += 1
    return k


@dataclass
class BoundsReport:
    W: int
    delta: Fraction
    state_count: int
    per_mec: list[tuple[int, SuperPotential, EcTailConstants]]
    cM: Fraction
    lambdaM: Fraction
    peUb: Fraction
    ceUb: Fraction | None
    q_per_state: dict[int, Fraction | None]
    q: Fraction
    D: Fraction
    rPlus: int
    rMinus: int
    epsilon: Fraction
    k: int = 0
    extra: dict = field(default_factory=dict)


def q_values(model: Mdp, prof: ReachabilityProfile, mn: MemorylessScheduler, pe_ub: Fraction
             ) -> tuple[dict[int, Fraction | None], Fraction]:
    """Per-state lower saturation points; None where every action is minimizing."""
    qs: dict[int, Fraction | None] = {}
    for s in range(model.n):
        others = [prof.p_min_by_action[s][i] for i in range(len(model.actions[s])) if i not in prof.act_min[s]]
        if not others or model.is_absorbing(s):
            qs[s] = None
            continue
        qs[s] = (pe_ub - mn.pe[s]) / (prof.p_min[s] - min(others))
    defined = [v for v in qs.values() if v is not None]
    return qs, (min(defined) if defined else Fraction(0))


def compute_bounds(model: Mdp, epsilon: Fraction, prof: ReachabilityProfile | None = None,
                   ext=None) -> BoundsReport:
    epsilon = Fraction(epsilon)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    prof = prof or reach_probabilities(model)
    mx, mn = ext or extreme_schedulers(model, prof)
    mc = model_constants(model)
    W, delta, n = mc.W, mc.delta, mc.state_count
    per_mec = []
    for k, e in nonabsorbing_mecs(model):
        sp = super_potential(model, e)
        per_mec.append((k, sp, ec_tail_constants(sp, W)))
    cM = n * W + sum((tc.c for _, _, tc in per_mec), Fraction(0))
    prod = Fraction(1)
    for _, _, tc in per_mec:
        prod *= 1 - tc.lam
    lambdaM = 1 - delta ** n * prod
    peUb = (cM + W) / (1 - lambdaM) ** 2
    pmin0 = prof.p_min[model.initial]
    ceUb = peUb / pmin0 if pmin0 > 0 else None
    qs, q = q_values(model, prof, mn, peUb)
    D = peUb - min(min(mx.pe), min(mn.pe))
    target = 2 * D / epsilon
    if lambdaM == 0:
        k = 0 if target <= 1 else 1
    else:
        k = least_power(1 / lambdaM, target)
    rPlus = math.ceil((cM + W) * k)
    rMinus = math.floor(q - rPlus)
    return BoundsReport(W, delta, n, per_mec, cM, lambdaM, peUb, ceUb, qs, q, D, rPlus, rMinus, epsilon, k)


# ------------------------------------------------------------------ exponential tail certificate

@dataclass(frozen=True)
class TailCertificate:
    """``beta**w * y[s]`` is a supermartingale under every scheduler (y = 1 on absorbing states)."""
    beta: Fraction
    y: tuple[Fraction, ...]

    @property
    def y_min(self) -> Fraction:
        return min(self.y)

    @property
    def ratio(self) -> Fraction:
        return max(self.y) / self.y_min

    def state_factor(self, s: int) -> Fraction:
        return self.y[s] / self.y_min

    @property
    def pe_ub(self) -> Fraction:
        return self.ratio / (self.beta - 1)

    def r_plus(self, D: Fraction, epsilon: Fraction) -> int:
        """Least x >= 0 with ratio * beta**-x * D <= epsilon / 2."""
        return least_power(self.beta, 2 * D * self.ratio / epsilon)


def certificate_violations(model: Mdp, beta: Fraction, y) -> list[tuple[int, int]]:
    bad = []
    for s, i, a in model.state_actions():
        if model.is_absorbing(s):
            continue
        rhs = beta ** a.weight * sum((p * y[t] for t, p in a.dist), Fraction(0))
        if rhs > y[s]:
            bad.append((s, i))
    return bad


class _FloatSystem:
    def __init__(self, model: Mdp):
        self.model = model
        self.live = [s for s in range(model.n) if not model.is_absorbing(s)]
        self.pos = {s: i for i, s in enumerate(self.live)}
        self.rows = []  # per live state: list of (weight, P_live(np row), c)
        m = len(self.live)
        for s in self.live:
            opts = []
            for a in model.actions[s]:
                row = np.zeros(m)
                c = 0.0
                for t, p in a.dist:
                    if t in self.pos:
                        row[self.pos[t]] += float(p)
                    else:
                        c += float(p)
                opts.append((a.weight, row, c))
            self.rows.append(opts)

    def solve(self, beta: float, kappa: float, max_iter: int = 200):
        """Largest solution of y = max_a beta^w (P y + c) + kappa, or None if unbounded."""
        m = len(self.live)
        if m == 0:
            return np.zeros(0)
        pol = [0] * m
        y = None
        for _ in range(max_iter):
            B = np.zeros((m, m))
            rhs = np.full(m, kappa)
            for i, opts in enumerate(self.rows):
                w, row, c = opts[pol[i]]
                f = beta ** w
                B[i] = f * row
                rhs[i] += f * c
            try:
                y_new = np.linalg.solve(np.eye(m) - B, rhs)
            except np.linalg.LinAlgError:
                return None
            if not np.all(np.isfinite(y_new)) or np.any(y_new <= 0):
                return None
            y = y_new
            changed = False
            for i, opts in enumerate(self.rows):
                vals = [beta ** w * (row @ y + c) for w, row, c in opts]
                j = int(np.argmax(vals))
                if vals[j] > vals[pol[i]] * (1 + 1e-12) + 1e-300:
                    pol[i] = j
                    changed = True
            if not changed:
                return y
        return None


def _window_cost(model, live, prof, mx, mn, beta, y, epsilon, pe_ub_cap):
    """Float estimate of the window length R^+ - R^- for a candidate certificate."""
    yy = np.ones(model.n)
    for i, s in enumerate(live):
        yy[s] = y[i]
    ratio = yy.max() / yy.min()
    pe_ub = min(ratio / (beta - 1), pe_ub_cap)
    D = pe_ub - min(float(min(mx.pe)), float(min(mn.pe)))
    rplus = max(0.0, math.log(max(2 * D * ratio / epsilon, 1.0)) / math.log(beta))
    q = 0.0
    for s in range(model.n):
        others = [prof.p_min_by_action[s][i] for i in range(len(model.actions[s])) if i not in prof.act_min[s]]
        if others and not model.is_absorbing(s):
            q = min(q, (pe_ub - float(mn.pe[s])) / float(prof.p_min[s] - min(others)))
    return 2 * rplus - q


def tail_certificate(model: Mdp, epsilon: Fraction = Fraction(1, 10 ** 6), prof=None, ext=None,
                     pe_ub_cap: float = math.inf, grid: int = 24) -> TailCertificate | None:
    """Search a base beta > 1 minimizing the resulting window, then verify exactly.

    Returns None when no certificate is found (for example when some end
    component has non-negative gain, in which case none exists).
    """
    prof = prof or reach_probabilities(model)
    mx, mn = ext or extreme_schedulers(model, prof)
    fs = _FloatSystem(model)
    kappa = 1e-9

    def feasible(beta):
        return fs.solve(beta, kappa) is not None

    if not feasible(1.0 + 1e-6):
        return None
    hi = 2.0
    while feasible(hi) and hi < 2.0 ** 20:
        hi *= 2
    lo = 1.0 + 1e-6
    if feasible(hi):
        crit = hi
    else:
        for _ in range(40):
            mid = (lo + hi) / 2
            if feasible(mid):
                lo = mid
            else:
                hi = mid
        crit = lo
    eps = float(epsilon)
    candidates = []
    for j in range(1, grid):
        beta = 1 + (crit - 1) * j / grid
        y = fs.solve(beta, kappa)
        if y is not None:
            candidates.append((_window_cost(model, fs.live, prof, mx, mn, beta, y, eps, pe_ub_cap), beta))
    candidates.sort()
    for _, beta_f in candidates[:6]:
        beta = Fraction(beta_f).limit_denominator(1000)
        if beta <= 1:
            continue
        for kap in (1e-9, 1e-7, 1e-5, 1e-3):
            y = fs.solve(float(beta), kap)
            if y is None:
                break
            yq = [Fraction(1)] * model.n
            for i, s in enumerate(fs.live):
                yq[s] = Fraction(float(y[i])).limit_denominator(10 ** 12) * Fraction(1000001, 1000000)
            if not certificate_violations(model, beta, yq):
                return TailCertificate(beta, tuple(yq))
    return None
