"""Exact data model for weighted MDPs.

States and actions are positional: state ``i`` is ``model.states[i]`` and its
actions are ``model.actions[i]``.  Names are kept only for I/O and reporting.
All probabilities are :class:`fractions.Fraction` and all weights are ``int``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

FAIL = "__fail"
LOOP = "__loop"
RESERVED_PREFIX = "__"


@dataclass(frozen=True)
class Action:
    """One enabled action: a label, an integer weight and a distribution.

    ``dist`` is a tuple of ``(target index, probability)`` pairs with distinct
    targets.
    """

    label: str
    weight: int
    dist: tuple[tuple[int, Fraction], ...]

    def targets(self) -> tuple[int, ...]:
        return tuple(t for t, _ in self.dist)

    def prob(self, target: int) -> Fraction:
        for t, p in self.dist:
            if t == target:
                return p
        return Fraction(0)


@dataclass(frozen=True)
class Mdp:
    states: tuple[str, ...]
    actions: tuple[tuple[Action, ...], ...]
    initial: int
    goal: int
    _index: Mapping[str, int] = field(default=None, compare=False, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self._index is None:
            object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})

    @property
    def n(self) -> int:
        return len(self.states)

    def index(self, name: str) -> int:
        return self._index[name]

    def has_state(self, name: str) -> bool:
        return name in self._index

    @property
    def fail(self) -> int | None:
        return self._index.get(FAIL)

    def action_index(self, s: int, label: str) -> int:
        for i, a in enumerate(self.actions[s]):
            if a.label == label:
                return i
        raise KeyError(f"no action {label!r} at state {self.states[s]!r}")

    def is_absorbing(self, s: int) -> bool:
        acts = self.actions[s]
        return len(acts) == 1 and acts[0].dist == ((s, Fraction(1)),)

    def absorbing_states(self) -> list[int]:
        return [s for s in range(self.n) if self.is_absorbing(s)]

    def is_markov_chain(self) -> bool:
        return all(len(a) == 1 for a in self.actions)

    def weights(self) -> Iterable[int]:
        for acts in self.actions:
            for a in acts:
                yield a.weight

    def state_actions(self) -> Iterable[tuple[int, int, Action]]:
        for s, acts in enumerate(self.actions):
            for i, a in enumerate(acts):
                yield s, i, a


def absorbing_loop(s: int, label: str = LOOP) -> Action:
    return Action(label, 0, ((s, Fraction(1)),))


def build_mdp(initial: str, goal: str,
              spec: Mapping[str, Sequence[tuple[str, int, Mapping[str, object]]]],
              states: Sequence[str] | None = None) -> Mdp:
    """Build a model from a nested description keyed by state name.

    ``spec[s]`` lists ``(label, weight, {target: prob})``.  Probabilities may
    be anything :class:`Fraction` accepts (``"1/2"``, ``1``, ...).  States
    mentioned only as targets, as well as the goal, get an absorbing
    weight-0 loop when they have no actions.
    """
    order: list[str] = list(states) if states is not None else []
    seen = set(order)

    def note(name: str):
        if name not in seen:
            seen.add(name)
            order.append(name)

    note(initial)
    for s, acts in spec.items():
        note(s)
        for _, _, dist in acts:
            for t in dist:
                note(t)
    note(goal)
    index = {s: i for i, s in enumerate(order)}
    actions: list[tuple[Action, ...]] = []
    for i, s in enumerate(order):
        acts = spec.get(s, ())
        if not acts:
            actions.append((absorbing_loop(i),))
            continue
        built = []
        for label, weight, dist in acts:
            built.append(Action(label, int(weight),
                                tuple((index[t], Fraction(p)) for t, p in dist.items())))
        actions.append(tuple(built))
    return Mdp(tuple(order), tuple(actions), index[initial], index[goal])


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    state: str | None = None
    action: str | None = None


def validate(model: Mdp) -> list[Violation]:
    """Return all well-formedness violations; an empty list means valid."""
    out: list[Violation] = []
    n = model.n
    if n == 0:
        return [Violation("empty", "model has no states")]
    if len(set(model.states)) != n:
        out.append(Violation("duplicate-state", "state names are not unique"))
    if len(model.actions) != n:
        out.append(Violation("shape", "actions table does not match states"))
        return out
    for idx, what in ((model.initial, "initial"), (model.goal, "goal")):
        if not 0 <= idx < n:
            out.append(Violation("bad-index", f"{what} state index {idx} out of range"))
            return out
    for s, acts in enumerate(model.actions):
        name = model.states[s]
        if not acts:
            out.append(Violation("no-action", f"state {name} has no enabled action", name))
        labels = [a.label for a in acts]
        for lab in sorted({x for x in labels if labels.count(x) > 1}):
            out.append(Violation("duplicate-label", f"action label {lab} repeated", name, lab))
        for a in acts:
            if not isinstance(a.weight, int):
                out.append(Violation("weight", "weight is not an integer", name, a.label))
            targets = [t for t, _ in a.dist]
            if len(set(targets)) != len(targets):
                out.append(Violation("duplicate-target", "repeated target in distribution", name, a.label))
            total = Fraction(0)
            for t, p in a.dist:
                if not 0 <= t < n:
                    out.append(Violation("bad-target", f"target index {t} out of range", name, a.label))
                if p <= 0:
                    out.append(Violation("nonpositive-prob", f"probability {p} is not positive", name, a.label))
                total += p
            if total != 1:
                out.append(Violation("sum", f"distribution sums to {total} ≠ 1", name, a.label))
    if not model.is_absorbing(model.goal) or model.actions[model.goal][0].weight != 0:
        out.append(Violation("goal", "goal not absorbing", model.states[model.goal]))
    return out


@dataclass(frozen=True)
class ModelConstants:
    W: int
    delta: Fraction
    state_count: int


def model_constants(model: Mdp) -> ModelConstants:
    W = max((abs(w) for w in model.weights()), default=0)
    delta = min(p for _, _, a in model.state_actions() for _, p in a.dist)
    return ModelConstants(W, delta, model.n)


def replace_actions(model: Mdp, actions: Sequence[Sequence[Action]], *,
                    states: Sequence[str] | None = None, initial: int | None = None) -> Mdp:
    return Mdp(tuple(states) if states is not None else model.states,
               tuple(tuple(a) for a in actions),
               model.initial if initial is None else initial, model.goal)


def fresh_name(base: str, taken: set[str]) -> str:
    """Return ``base`` or ``base_k`` for the least k making it unused; record it."""
    name, k = base, 1
    while name in taken:
        name = f"{base}_{k}"
        k += 1
    taken.add(name)
    return name
