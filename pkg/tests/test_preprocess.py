import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings

from helpers import load, models, random_model
from mdpx.approx import approx_pe
from mdpx.errors import InfiniteValueError
from mdpx.fmt import canonical
from mdpx.graph import max_mean_payoff, reach_probabilities
from mdpx.model import FAIL, build_mdp, validate
from mdpx.preprocess import (CriticalSchedulerError, _longest_paths, _min_subgraph, check_critical_scheduler,
                             check_weight_divergence, classify_finiteness, collapse_to_fail, nonabsorbing_mecs,
                             posmin_transform, prepare, spider_transform)
from mdpx.schedulers import chain_values

ZERO_CYCLE = build_mdp("a", "goal", {
    "a": [("x", 1, {"b": 1}), ("ex", 4, {"goal": 1})],
    "b": [("y", -1, {"a": 1}), ("ex", 2, {"goal": "1/2", "fail": "1/2"})],
})


def test_collapse_normalizes_existing_fail():
    m = load("n_count")
    out, trace = collapse_to_fail(m)
    assert trace.state_mapping["fail"] == FAIL
    assert FAIL in out.states and "fail" not in out.states
    assert out.n == m.n


def test_collapse_merges_sinks():
    m = build_mdp("a", "goal", {"a": [("x", 0, {"goal": "1/2", "s": "1/2"})], "s": [("l", 1, {"s": 1})]})
    out, trace = collapse_to_fail(m)
    assert trace.state_mapping["s"] == FAIL
    assert validate(out) == []


def test_collapse_identity_on_m_gold():
    m = load("m_gold")
    out, trace = collapse_to_fail(m)
    assert out is m and not trace.goal_unreachable


def test_goal_unreachable_is_flagged():
    m = build_mdp("a", "goal", {"a": [("x", 0, {"a": 1})]})
    _, trace = collapse_to_fail(m)
    assert trace.goal_unreachable
    assert classify_finiteness(m).reason == "goalUnreachable"
    res = approx_pe(m, Fraction(1, 100))
    assert res.lower == res.upper == 0


def test_weight_divergence_examples():
    assert check_weight_divergence(load("m_gold"))[0] is False
    div, witness = check_weight_divergence(load("divergent"))
    assert div and witness["states"] == ["s"]
    zero = build_mdp("a", "goal", {"a": [("x", 0, {"a": "1/2", "goal": "1/2"}), ("y", 0, {"a": 1})]})
    assert check_weight_divergence(zero)[0] is False


def test_zero_mean_gambling_class_diverges():
    m = build_mdp("a", "goal", {"a": [("up", 1, {"b": "1/2", "c": "1/2"}), ("stop", 0, {"goal": 1})],
                                "b": [("back", 0, {"a": 1})], "c": [("down", -2, {"a": 1})]})
    # mean zero per round but unbounded swings
    div, w = check_weight_divergence(m)
    assert div and w["gain"] == 0


def test_spider_flattens_zero_cycle():
    out, trace = spider_transform(collapse_to_fail(ZERO_CYCLE)[0])
    a, b = out.index("a"), out.index("b")
    labels = {x.label: x for x in out.actions[a]}
    assert set(labels) == {"ex", "__b_ex", "__tau"}
    assert labels["__b_ex"].weight == 3
    assert labels["__tau"].dist == ((out.fail, 1),)
    assert [(x.label, x.weight) for x in out.actions[b]] == [("__tau", -1)]
    assert trace.steps[0]["offsets"] == {"a": 0, "b": -1}
    assert validate(out) == []


def test_spider_identity_cases():
    m = load("m_gold")
    assert canonical(spider_transform(m)[0]) == canonical(m)
    coin = collapse_to_fail(load("mc_coin"))[0]
    assert canonical(spider_transform(coin)[0]) == canonical(coin)


def test_critical_scheduler_examples():
    crit, cycle = check_critical_scheduler(load("m_gold"))
    assert crit and sorted(cycle) == [("s_init", "sigma"), ("t", "alpha")]
    assert check_critical_scheduler(load("n_gold")) == (False, None)
    neg = build_mdp("a", "goal", {"a": [("x", -1, {"a": 1}), ("y", 0, {"goal": 1})]})
    assert check_critical_scheduler(neg)[0] is False


def test_posmin_single_state():
    m = build_mdp("s_init", "goal", {"s_init": [("stay", 0, {"s_init": 1}),
                                                ("alpha", 0, {"goal": "1/2", "fail": "1/2"})]})
    out, _ = posmin_transform(collapse_to_fail(m)[0])
    t0 = out.initial
    assert [(a.label, a.weight) for a in out.actions[t0]] == [("__beta_0", 0)]
    copy = out.actions[t0][0].dist[0][0]
    assert [a.label for a in out.actions[copy]] == ["alpha"]
    assert reach_probabilities(out).p_min[t0] > 0


def test_posmin_identity_on_n_gold():
    m = load("n_gold")
    out, _ = posmin_transform(m)
    assert out is m


def test_posmin_offset_along_path():
    m = build_mdp("s_init", "goal", {"s_init": [("m", 3, {"s": 1})],
                                     "s": [("loop", 0, {"s": 1}), ("alpha", 0, {"goal": 1})]})
    out, trace = posmin_transform(m)
    assert [a.weight for a in out.actions[out.initial]] == [3]
    assert trace.steps[0]["offsets"]["s"] == 3


def test_posmin_refuses_critical_models():
    with pytest.raises(CriticalSchedulerError):
        posmin_transform(load("m_gold"))


def test_classification_matrix():
    v = classify_finiteness(load("m_gold"))
    assert (v.pe_finite, v.ce_finite, v.reason) == (True, False, "criticalScheduler")
    v = classify_finiteness(load("n_gold"))
    assert (v.pe_finite, v.ce_finite, v.reason) == (True, True, "ok")
    v = classify_finiteness(load("divergent"))
    assert (v.pe_finite, v.ce_finite, v.reason) == (False, False, "weightDivergentEC")
    with pytest.raises(InfiniteValueError):
        prepare(load("divergent"))


@settings(max_examples=60, deadline=None)
@given(models(max_states=4, weights=(-1, 1)))
def test_spider_leaves_only_negative_ecs(m):
    c = collapse_to_fail(m)[0]
    assume(not check_weight_divergence(c)[0])
    out, _ = spider_transform(c)
    assert validate(out) == []
    for _, e in nonabsorbing_mecs(out):
        assert max_mean_payoff(out, e).gain < 0


@settings(max_examples=60, deadline=None)
@given(models(max_states=4, weights=(-1, 2)))
def test_longest_paths_stabilize(m):
    c = collapse_to_fail(m)[0]
    prof = reach_probabilities(c)
    assume(prof.p_min[c.initial] == 0)
    _, S0, edges = _min_subgraph(c, prof)
    _, cycle, rounds = _longest_paths(c, S0, edges)
    if cycle is None:
        assert rounds <= len(S0)
    assert (cycle is not None) == check_critical_scheduler(c)[0]


def test_spider_preserves_value_on_zero_cycle():
    eps = Fraction(1, 1000)
    r = approx_pe(ZERO_CYCLE, eps)
    assert r.lower <= 4 <= r.upper
    direct = approx_pe(spider_transform(collapse_to_fail(ZERO_CYCLE)[0])[0], eps)
    assert abs(direct.lower - r.lower) <= 2 * eps


def _memoryless_best(m):
    best = None
    for pol in itertools.product(*(range(len(a)) for a in m.actions)):
        pe, _ = chain_values(m, pol)
        v = pe[m.initial]
        best = v if best is None or v > best else best
    return best


def test_spider_keeps_memoryless_values_reachable():
    rng = random.Random(11)
    checked = 0
    while checked < 12:
        m = random_model(rng, 3, 2, (-1, 1))
        if not classify_finiteness(m).pe_finite or not nonabsorbing_mecs(collapse_to_fail(m)[0]):
            continue
        r = approx_pe(m, Fraction(1, 1000))
        assert _memoryless_best(m) <= r.upper
        checked += 1
