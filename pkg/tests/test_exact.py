from fractions import Fraction

import pytest
from hypothesis import assume, given, settings

from helpers import load, models, nonneg_fixtures
from mdpx.approx import approx_ce
from mdpx.exact import (PreconditionError, extreme_schedulers, nonneg_ce_exact, nonneg_saturation_point,
                        nonneg_solve_exact, solve_markov_chain)
from mdpx.graph import reach_probabilities
from mdpx.model import build_mdp
from mdpx.oracle import oracle_pe
from mdpx.preprocess import classify_finiteness, collapse_to_fail, prepare
from mdpx.schedulers import chain_values

RACE = build_mdp("s", "goal", {"s": [("alpha", 0, {"goal": 1}), ("beta", 1, {"goal": "1/2", "fail": "1/2"})]})
GAP = build_mdp("s", "goal", {"s": [("alpha", 0, {"goal": 1}), ("beta", 2, {"goal": "1/2", "fail": "1/2"})]})


def test_markov_chain_examples():
    coin = collapse_to_fail(load("mc_coin"))[0]
    assert solve_markov_chain(coin) == (1, 2)
    assert solve_markov_chain(coin, Fraction(3))[0] == Fraction(5, 2)
    two = build_mdp("a", "goal", {"a": [("x", 1, {"b": 1})], "b": [("y", 1, {"goal": 1})]})
    assert solve_markov_chain(two) == (2, 2)


def test_markov_chain_solver_rejects_choices():
    with pytest.raises(PreconditionError):
        solve_markov_chain(load("m_gold"))


def test_extreme_schedulers_m_gold():
    m = load("m_gold")
    mx, mn = extreme_schedulers(m)
    s0 = m.initial
    assert m.actions[s0][mx.choice[s0]].label == "tau"
    assert m.actions[s0][mn.choice[s0]].label == "sigma"
    assert mn.pe[s0] == 0 and mx.pe[s0] == 0


def test_extreme_schedulers_coin():
    m = collapse_to_fail(load("mc_coin"))[0]
    mx, mn = extreme_schedulers(m)
    assert mx.choice == mn.choice and mx.pe[m.initial] == mn.pe[m.initial] == 1


def test_max_prefers_higher_probability():
    m = build_mdp("s", "goal", {"s": [("lo", 5, {"goal": "1/3", "fail": "2/3"}), ("hi", 0, {"goal": 1})]})
    mx, _ = extreme_schedulers(collapse_to_fail(m)[0])
    assert mx.choice[0] == 1


@pytest.mark.parametrize("name", ["m_gold", "n_gold", "n_count", "m_parity", "mc_coin"])
def test_extreme_reach_vectors_match(name):
    m = prepare(load(name)).model
    prof = reach_probabilities(m)
    mx, mn = extreme_schedulers(m, prof)
    pe_x, r_x = chain_values(m, mx.choice)
    pe_n, r_n = chain_values(m, mn.choice)
    assert tuple(r_x) == prof.p_max and tuple(r_n) == prof.p_min
    assert tuple(pe_x) == mx.pe and tuple(pe_n) == mn.pe
    for s in range(m.n):
        assert mx.choice[s] in prof.act_max[s] and mn.choice[s] in prof.act_min[s]


def test_saturation_point_examples():
    m = collapse_to_fail(load("mc_coin"))[0]
    assert nonneg_saturation_point(m) == 0
    g = collapse_to_fail(GAP)[0]
    assert nonneg_saturation_point(g) == 2
    assert nonneg_saturation_point(g, Fraction(3)) == -1
    with pytest.raises(PreconditionError):
        nonneg_saturation_point(load("m_gold"))


def test_race_exact():
    m = collapse_to_fail(RACE)[0]
    table = nonneg_solve_exact(m)
    assert table.value(m.initial) == Fraction(1, 2)
    assert m.actions[m.initial][table.choice[(m.initial, 0)]].label == "beta"


def test_coin_exact_matches_chain():
    m = collapse_to_fail(load("mc_coin"))[0]
    assert nonneg_solve_exact(m).value(m.initial) == 1


def test_race_ce_exact():
    m = prepare(RACE, posmin=True).model
    theta, _ = nonneg_ce_exact(m)
    assert theta == 1
    value, _ = approx_ce(RACE, Fraction(1, 1000))
    assert abs(value - theta) <= Fraction(3, 1000)


def _check_table(m, table):
    prof = reach_probabilities(m)
    mx = table.max_scheduler
    bias = table.bias
    for (s, r), v in table.values.items():
        if r >= table.saturation:
            assert v == prof.p_max[s] * (r + bias) + mx.pe[s]

    def known(t, r):
        if t == m.goal:
            return r + bias
        if m.is_absorbing(t):
            return 0
        if r > table.window_top:
            return prof.p_max[t] * (r + bias) + mx.pe[t]
        return table.values[(t, r)]

    for (s, r), v in table.values.items():
        qs = [sum((p * known(t, r + a.weight) for t, p in a.dist), Fraction(0)) for a in m.actions[s]]
        assert v == max(qs)
        assert qs[table.choice[(s, r)]] == v


@pytest.mark.parametrize("m", nonneg_fixtures(), ids=lambda m: f"n{m.n}")
def test_nonneg_exact_properties(m):
    table = nonneg_solve_exact(m)
    _check_table(m, table)
    wider = nonneg_solve_exact(m, top=table.window_top + 5)
    for r in range(table.window_top + 1):
        for s in range(m.n):
            if (s, r) in table.values:
                assert wider.values[(s, r)] == table.values[(s, r)]
    orc = oracle_pe(m, max(table.window_top, 1), prepared=True)
    assert orc.best == table.value(m.initial)


@settings(max_examples=25, deadline=None)
@given(models(max_states=3, weights=(0, 2)))
def test_bias_shifts_table(m):
    assume(classify_finiteness(m).pe_finite)
    prep = prepare(m)
    assume(not prep.goal_unreachable)
    t0 = nonneg_solve_exact(prep.model)
    t1 = nonneg_solve_exact(prep.model, Fraction(1))
    # PE^sup[r + 1] read from either table
    for s in range(prep.model.n):
        if (s, 1) in t0.values and (s, 0) in t1.values:
            assert t0.values[(s, 1)] == t1.values[(s, 0)]
