from fractions import Fraction

import pytest

from helpers import DRIFT, FINITE, load
from mdpx.approx import approx_pe
from mdpx.bounds import (EcTailConstants, SuperPotential, certificate_violations, compute_bounds,
                         ec_tail_constants, least_power, super_harmonic_violations, super_potential,
                         tail_certificate)
from mdpx.graph import mec_decompose, reach_probabilities
from mdpx.model import build_mdp
from mdpx.oracle import oracle_pe
from mdpx.preprocess import collapse_to_fail, nonabsorbing_mecs, prepare

EPS = Fraction(1, 100)


def _ec(m, member):
    return next(e for e in mec_decompose(m).mecs if member in e.states)


def test_super_potential_single_loop():
    m = build_mdp("a", "goal", {"a": [("x", -1, {"a": 1}), ("go", 0, {"goal": 1})]})
    sp = super_potential(m, _ec(m, 0))
    assert sp.t == 1 and sp.u == {0: 0}


def test_super_potential_m_gold():
    m = load("m_gold")
    e = _ec(m, m.initial)
    sp = super_potential(m, e)
    assert sp.t == Fraction(1, 4)
    assert min(sp.u.values()) == 0
    assert super_harmonic_violations(m, e, sp.gain, sp.u) == []


def test_super_potential_two_cycle():
    m = build_mdp("a", "goal", {"a": [("x", -1, {"b": 1}), ("go", 0, {"goal": 1})],
                                "b": [("y", -3, {"a": 1})]})
    sp = super_potential(m, _ec(m, 0))
    a, b = m.index("a"), m.index("b")
    assert sp.t == 2 and sp.u[a] - sp.u[b] == 1 and sp.spread == 1


def test_super_potential_rejects_nonnegative_gain():
    m = load("divergent")
    with pytest.raises(ValueError):
        super_potential(m, _ec(m, m.initial))


@pytest.mark.parametrize("t, spread, W, c, lam", [
    (1, 0, 1, 1, 0),
    (Fraction(1, 4), 1, 2, 3, Fraction(11, 13)),
    (3, 1, 2, 3, 0),
])
def test_tail_constants(t, spread, W, c, lam):
    sp = SuperPotential(-Fraction(t), {}, Fraction(spread))
    assert ec_tail_constants(sp, W) == EcTailConstants(c, lam)


def test_least_power_is_exact():
    assert least_power(Fraction(2), Fraction(8)) == 3
    assert least_power(Fraction(2), Fraction(9)) == 4
    assert least_power(Fraction(3, 2), Fraction(1)) == 0
    big = Fraction(10 ** 40 + 1)
    k = least_power(Fraction(10), big)
    assert Fraction(10) ** k >= big > Fraction(10) ** (k - 1)


def test_bounds_mc_coin():
    m = prepare(load("mc_coin")).model
    rep = compute_bounds(m, EPS)
    assert rep.per_mec == []
    assert rep.cM == 3 * 2 and rep.lambdaM == 1 - Fraction(1, 2) ** 3
    assert rep.peUb == (rep.cM + rep.W) / (1 - rep.lambdaM) ** 2


def test_bounds_m_gold():
    rep = compute_bounds(prepare(load("m_gold")).model, EPS)
    assert 0 < rep.lambdaM < 1
    assert rep.rMinus < 0 < rep.rPlus
    assert rep.q <= 0 and rep.rMinus < rep.rPlus


@pytest.mark.parametrize("name", FINITE)
def test_r_plus_monotone_in_epsilon(name):
    m = prepare(load(name)).model
    last = None
    for k in range(1, 6):
        rep = compute_bounds(m, Fraction(1, 10 ** k))
        assert last is None or rep.rPlus >= last
        last = rep.rPlus


@pytest.mark.parametrize("name", FINITE + ["drift"])
def test_super_harmonic_inequalities_hold_exactly(name):
    m = prepare(DRIFT if name == "drift" else load(name)).model
    for _, e in nonabsorbing_mecs(m):
        sp = super_potential(m, e)
        assert super_harmonic_violations(m, e, sp.gain, sp.u) == []


@pytest.mark.parametrize("name", FINITE + ["drift"])
def test_pe_upper_bounds_dominate_approximation(name):
    model = DRIFT if name == "drift" else load(name)
    m = prepare(model).model
    rep = compute_bounds(m, EPS)
    res = approx_pe(model, EPS)
    assert rep.peUb >= res.upper
    cert = tail_certificate(m, EPS)
    if cert is not None:
        assert certificate_violations(m, cert.beta, cert.y) == []
        assert cert.pe_ub >= res.upper


def test_certificate_absent_without_negative_drift():
    m = collapse_to_fail(build_mdp("a", "goal", {"a": [("x", 0, {"a": "1/2", "goal": "1/2"})]}))[0]
    # a weight-0 chain still admits a certificate: every step may end the run
    cert = tail_certificate(m, EPS)
    assert cert is None or certificate_violations(m, cert.beta, cert.y) == []


@pytest.mark.parametrize("name, window", [("m_gold", 12), ("n_count", 34), ("m_parity", 45)])
def test_lower_saturation_sound_on_oracle_schedulers(name, window):
    m = prepare(load(name)).model
    prof = reach_probabilities(m)
    from mdpx.approx import Analysis
    from mdpx.preprocess import Prepared
    an = Analysis(Prepared(m, m, [], False))
    plan = an.plan(Fraction(1, 10 ** 6), Fraction(0))
    orc = oracle_pe(m, window, prepared=True)
    checked = 0
    for (s, w), a in orc.arg_best.table.items():
        qs = plan.q_per_state.get(s)
        if qs is not None and w <= qs:
            assert a in prof.act_min[s]
            checked += 1
    assert checked > 0
