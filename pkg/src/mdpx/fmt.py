"""Text format for weighted MDPs (``.mdpw``) and JSON rendering helpers.

Grammar, one item per line::

    # comment
    @initial ID
    @goal ID
    action STATE LABEL INT
    -> TARGET RAT

``RAT`` is ``INT`` or ``INT/INT``.  Branch lines attach to the most recent
action header.  States are declared implicitly and indexed in order of first
mention.  A state without action headers is absorbing: it receives a weight-0
self-loop labelled ``__loop``, which the serializer leaves implicit.
Identifiers starting with ``__`` are reserved for generated objects and are
accepted only with ``internal=True``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from .model import LOOP, RESERVED_PREFIX, Action, Mdp, absorbing_loop, validate

ID_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
INT_RE = re.compile(r"[+-]?[0-9]+\Z")
RAT_RE = re.compile(r"([+-]?[0-9]+)(?:/([0-9]+))?\Z")


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int

    def __str__(self):
        return f"{self.line}:{self.column}"


class ParseError(ValueError):
    def __init__(self, message: str, span: SourceSpan | None = None):
        self.message = message
        self.span = span
        super().__init__(f"{span}: {message}" if span else message)


def parse_rational(text: str) -> Fraction:
    """Parse ``INT`` or ``INT/INT`` exactly; raise ``ValueError`` otherwise."""
    m = RAT_RE.match(text.strip())
    if not m:
        raise ValueError(f"not a rational: {text!r}")
    num = int(m.group(1))
    if m.group(2) is None:
        return Fraction(num)
    den = int(m.group(2))
    if den == 0:
        raise ValueError("zero denominator")
    return Fraction(num, den)


def _tokens(line: str):
    """Yield (column, token) pairs of a comment-stripped line."""
    for m in re.finditer(r"\S+", line):
        yield m.start() + 1, m.group(0)


def parse_mdp(text: str, internal: bool = False) -> Mdp:
    order: list[str] = []
    index: dict[str, int] = {}
    headers: dict[int, list[list]] = {}
    directives: dict[str, tuple[str, SourceSpan]] = {}
    current = None  # [label, weight, dist(dict), span, state]

    def state_id(tok: str, span: SourceSpan) -> int:
        if not ID_RE.match(tok):
            raise ParseError(f"invalid identifier {tok!r}", span)
        if tok.startswith(RESERVED_PREFIX) and not internal:
            raise ParseError(f"reserved identifier {tok!r}", span)
        if tok not in index:
            index[tok] = len(order)
            order.append(tok)
        return index[tok]

    def close(cur):
        if cur is None:
            return
        if not cur[2]:
            raise ParseError(f"action {cur[0]} has no branch", cur[3])
        total = sum(cur[2].values(), Fraction(0))
        if total != 1:
            raise ParseError(f"distribution sums to {total} ≠ 1", cur[3])

    lines = text.splitlines()
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0]
        toks = list(_tokens(line))
        if not toks:
            continue
        col, head = toks[0]
        span = SourceSpan(ln, col)
        if head in ("@initial", "@goal"):
            if len(toks) != 2:
                raise ParseError(f"{head} expects one identifier", span)
            if head in directives:
                raise ParseError(f"duplicate {head} directive", span)
            tspan = SourceSpan(ln, toks[1][0])
            state_id(toks[1][1], tspan)
            directives[head] = (toks[1][1], tspan)
        elif head == "action":
            if len(toks) != 4:
                raise ParseError("action header expects STATE LABEL INT", span)
            close(current)
            s = state_id(toks[1][1], SourceSpan(ln, toks[1][0]))
            label, lspan = toks[2][1], SourceSpan(ln, toks[2][0])
            if not ID_RE.match(label):
                raise ParseError(f"invalid action label {label!r}", lspan)
            if label.startswith(RESERVED_PREFIX) and not internal:
                raise ParseError(f"reserved identifier {label!r}", lspan)
            if any(h[0] == label for h in headers.get(s, ())):
                raise ParseError(f"duplicate action label {label} at state {toks[1][1]}", lspan)
            if not INT_RE.match(toks[3][1]):
                raise ParseError(f"weight must be an integer, got {toks[3][1]!r}", SourceSpan(ln, toks[3][0]))
            current = [label, int(toks[3][1]), {}, span, s]
            headers.setdefault(s, []).append(current)
        elif head == "->":
            if current is None:
                raise ParseError("branch without a preceding action header", span)
            if len(toks) != 3:
                raise ParseError("branch expects TARGET RAT", span)
            t = state_id(toks[1][1], SourceSpan(ln, toks[1][0]))
            pspan = SourceSpan(ln, toks[2][0])
            try:
                p = parse_rational(toks[2][1])
            except ValueError as exc:
                raise ParseError(str(exc), pspan) from None
            if p <= 0:
                raise ParseError(f"probability {p} must be positive", pspan)
            if t in current[2]:
                raise ParseError(f"repeated target {toks[1][1]}", SourceSpan(ln, toks[1][0]))
            current[2][t] = p
        else:
            raise ParseError(f"unexpected token {head!r}", span)
    close(current)
    for d in ("@initial", "@goal"):
        if d not in directives:
            raise ParseError(f"missing {d} directive", SourceSpan(max(len(lines), 1), 1))

    actions = []
    for i in range(len(order)):
        hs = headers.get(i)
        if not hs:
            actions.append((absorbing_loop(i),))
        else:
            actions.append(tuple(Action(h[0], h[1], tuple(h[2].items())) for h in hs))
    model = Mdp(tuple(order), tuple(actions), index[directives["@initial"][0]],
                index[directives["@goal"][0]])
    problems = validate(model)
    if problems:
        where = directives["@goal"][1] if problems[0].kind == "goal" else None
        raise ParseError("; ".join(p.message for p in problems), where)
    return model


def format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def serialize_mdp(model: Mdp) -> str:
    names = model.states
    out = [f"@initial {names[model.initial]}", f"@goal {names[model.goal]}"]
    mentioned = {model.initial, model.goal}
    for s, _, a in model.state_actions():
        mentioned.update(t for t in a.targets() if t != s)
    for s, acts in enumerate(model.actions):
        # implicit loops are re-created by the parser for every state it sees
        if len(acts) == 1 and acts[0].label == LOOP and model.is_absorbing(s) and s in mentioned:
            continue
        for a in acts:
            out.append(f"action {names[s]} {a.label} {a.weight}")
            for t, p in a.dist:
                out.append(f"-> {names[t]} {format_rational(p)}")
    return "\n".join(out) + "\n"


def canonical(model: Mdp) -> tuple:
    """Name-based normal form; two models are structurally identical iff equal."""
    names = model.states
    return (names[model.initial], names[model.goal],
            tuple(sorted((names[s], tuple((a.label, a.weight,
                                           tuple(sorted((names[t], p) for t, p in a.dist)))
                                          for a in acts))
                         for s, acts in enumerate(model.actions))))


# ---------------------------------------------------------------- JSON helpers

def decimal_string(q: Fraction, digits: int = 10) -> str:
    """Round-half-even decimal rendering of an exact rational."""
    q = Fraction(q)
    scaled = round(q * 10 ** digits)  # Fraction.__round__ is exact half-even
    sign = "-" if scaled < 0 else ""
    scaled = abs(scaled)
    if digits == 0:
        return f"{sign}{scaled}"
    whole, frac = divmod(scaled, 10 ** digits)
    return f"{sign}{whole}.{frac:0{digits}d}"


def rational_json(q: Fraction | int | None, digits: int = 10) -> Any:
    if q is None:
        return None
    q = Fraction(q)
    return {"exact": format_rational(q), "decimal": decimal_string(q, digits)}
