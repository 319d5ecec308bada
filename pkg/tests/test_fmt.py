from fractions import Fraction

import pytest
from hypothesis import given, settings

from helpers import CORPUS, FIXTURES, load, models
from mdpx.fmt import (ParseError, canonical, decimal_string, parse_mdp, parse_rational, rational_json,
                      serialize_mdp)
from mdpx.preprocess import collapse_to_fail, spider_transform


def test_m_gold_fixture_shape():
    m = load("m_gold")
    assert m.n == 4
    assert sum(len(a) for a in m.actions) - 1 == 4  # the goal loop is implicit
    assert m.states[m.initial] == "s_init"


def test_minimal_model_parses():
    m = parse_mdp("@initial s\n@goal g\naction s a 0\n-> g 1")
    assert m.n == 2 and m.is_absorbing(m.goal)


def test_sum_error_message():
    with pytest.raises(ParseError, match="distribution sums to 7/6"):
        parse_mdp("@initial s\n@goal g\naction s a 0\n-> g 2/3\n-> s 1/2\n")


@pytest.mark.parametrize("text, fragment", [
    ("@goal g\naction s a 0\n-> g 1\n", "missing @initial"),
    ("@initial s\naction s a 0\n-> g 1\n", "missing @goal"),
    ("@initial s\n@initial s\n@goal g\naction s a 0\n-> g 1\n", "duplicate @initial"),
    ("@initial s\n@goal g\naction s a 0\n-> g 1\naction s a 1\n-> g 1\n", "duplicate action label"),
    ("@initial s\n@goal g\naction s a 0\n", "has no branch"),
    ("@initial s\n@goal g\n-> g 1\n", "branch without"),
    ("@initial s\n@goal __fail\naction s a 0\n-> __fail 1\n", "reserved"),
    ("@initial s\n@goal g\naction s a 0.5\n-> g 1\n", "integer"),
    ("@initial s\n@goal g\naction s a 0\n-> g 0.5\n-> s 0.5\n", "rational"),
    ("@initial s\n@goal g\naction s a 0\n-> g 0\n-> g 1\n", "positive"),
    ("@initial s\n@goal g\naction s a 0\n-> g 1\naction g a 1\n-> g 1\n", "goal not absorbing"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError) as exc:
        parse_mdp(text)
    assert fragment in str(exc.value)


def test_parse_error_carries_span():
    with pytest.raises(ParseError) as exc:
        parse_mdp("@initial s\n@goal g\naction s a 0\n-> g 1/0\n")
    assert exc.value.span is not None and exc.value.span.line == 4


def test_crlf_and_comments():
    m = parse_mdp("# c\r\n@initial s # here\r\n@goal g\r\naction s a 3\r\n-> g 1\r\n")
    assert m.actions[m.initial][0].weight == 3


def test_parse_rational():
    assert parse_rational("-3/6") == Fraction(-1, 2)
    with pytest.raises(ValueError):
        parse_rational("1/0")


@pytest.mark.parametrize("name", CORPUS)
def test_round_trip_on_corpus(name):
    m = load(name)
    again = parse_mdp(serialize_mdp(m))
    assert canonical(again) == canonical(m)
    assert serialize_mdp(again) == serialize_mdp(m)


def test_reserved_names_need_internal_mode():
    m, _ = collapse_to_fail(load("n_count"))
    text = serialize_mdp(m)
    assert "__fail" in text
    with pytest.raises(ParseError, match="reserved"):
        parse_mdp(text)
    assert canonical(parse_mdp(text, internal=True)) == canonical(m)


@settings(max_examples=40, deadline=None)
@given(models())
def test_round_trip_random_models(m):
    assert canonical(parse_mdp(serialize_mdp(m))) == canonical(m)


@settings(max_examples=25, deadline=None)
@given(models(weights=(0, 0)))
def test_round_trip_after_transform(m):
    out, _ = spider_transform(collapse_to_fail(m)[0])
    assert canonical(parse_mdp(serialize_mdp(out), internal=True)) == canonical(out)


@pytest.mark.parametrize("name", CORPUS)
def test_single_token_deletion_is_rejected(name):
    text = (FIXTURES / f"{name}.mdpw").read_text()
    lines = [ln.split("#", 1)[0] for ln in text.splitlines()]
    count = 0
    for i, ln in enumerate(lines):
        toks = ln.split()
        for j in range(len(toks)):
            mutated = lines[:i] + [" ".join(toks[:j] + toks[j + 1:])] + lines[i + 1:]
            with pytest.raises(ParseError):
                parse_mdp("\n".join(mutated))
            count += 1
    assert count > 10


def test_decimal_rendering_half_even():
    assert decimal_string(Fraction(1, 8), 2) == "0.12"
    assert decimal_string(Fraction(3, 8), 2) == "0.38"
    assert decimal_string(Fraction(-5, 2), 0) == "-2"
    assert decimal_string(Fraction(2, 3), 10) == "0.6666666667"
    assert rational_json(Fraction(1, 3), 3) == {"exact": "1/3", "decimal": "0.333"}
