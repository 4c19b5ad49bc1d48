"""Correlation-set routing: which session does a message belong to.

Each input operation may declare a correlation function mapping message
field names to state variable names.  A message matches a session when
every correlated field either equals the session's bound value or the
session has not bound that variable yet.  The correlation set of a service
is the union of all declared function codomains, computed rather than
written by hand.

Matching a message against a session with unbound correlation variables
binds them, so the session's identity solidifies on first contact.  When
several sessions match, one is picked pseudo-randomly from the given seed;
deliberately under-programmed correlation keeps that residual
nondeterminism.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import ValidationError
from .state import EMPTY, State, UNDEFINED, check_var_name, values_equal


@dataclass(frozen=True)
class Message:
    """An operation invocation in flight: name, flat payload, addressing."""

    operation: str
    payload: State = EMPTY
    resource: str = ""
    channel_id: Any = None
    request_id: str = ""


class CorrelationFunction:
    """Injective map from message field names to state variable names."""

    __slots__ = ("_mapping",)

    def __init__(self, mapping: dict[str, str] | None = None):
        mapping = dict(mapping or {})
        seen_vars: dict[str, str] = {}
        for field_name, var_name in mapping.items():
            check_var_name(field_name)
            check_var_name(var_name)
            if var_name in seen_vars.values():
                raise ValidationError(
                    f"correlation function is not injective: two fields map to {var_name!r}"
                )
            seen_vars[field_name] = var_name
        self._mapping = mapping

    def get(self, field_name: str) -> str | None:
        return self._mapping.get(field_name)

    def codomain(self) -> frozenset[str]:
        return frozenset(self._mapping.values())

    def items(self):
        return self._mapping.items()

    def __len__(self) -> int:
        return len(self._mapping)

    def __eq__(self, other) -> bool:
        return isinstance(other, CorrelationFunction) and self._mapping == other._mapping

    def __repr__(self) -> str:
        return f"CorrelationFunction({self._mapping!r})"


_EMPTY_FUNCTION = CorrelationFunction()


@dataclass(frozen=True)
class CorrelationConfig:
    """Per-operation correlation functions plus the derived correlation set."""

    functions: dict[str, CorrelationFunction] = field(default_factory=dict)

    @property
    def cset(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for f in self.functions.values():
            out |= f.codomain()
        return out

    def function_for(self, op: str) -> CorrelationFunction:
        return self.functions.get(op, _EMPTY_FUNCTION)

    @classmethod
    def from_json_obj(cls, obj) -> "CorrelationConfig":
        """Parse ``{opName: {messageField: stateVar, ...}, ...}``."""
        if obj is None:
            return cls({})
        if not isinstance(obj, dict):
            raise ValidationError("correlation config must be an object")
        functions = {}
        for op, mapping in obj.items():
            if not isinstance(op, str) or not op:
                raise ValidationError(f"bad operation name in correlation config: {op!r}")
            if not isinstance(mapping, dict):
                raise ValidationError(f"correlation for {op!r} must be an object")
            functions[op] = CorrelationFunction(mapping)
        return cls(functions)

    def to_json_obj(self) -> dict:
        return {op: dict(f.items()) for op, f in sorted(self.functions.items())}


def correlates(message: Message, cfun: CorrelationFunction, s: State) -> bool:
    """Routing predicate: may this message be routed to a session in state s?

    True iff every payload field the function correlates maps to a state
    variable that is either unbound or bound to exactly the field's value.
    """
    for field_name in message.payload:
        var = cfun.get(field_name)
        if var is None:
            continue
        bound = s.lookup(var)
        if bound is UNDEFINED:
            continue
        if not values_equal(bound, message.payload.lookup(field_name)):
            return False
    return True


def bind_correlation(message: Message, cfun: CorrelationFunction, s: State) -> State:
    """Bind still-undefined correlation variables from the message's fields.

    Callers must have checked ``correlates`` first; bound variables are
    left untouched and non-correlated fields never bind anything.
    """
    out = s
    for field_name in sorted(message.payload.names()):
        var = cfun.get(field_name)
        if var is None:
            continue
        if out.lookup(var) is UNDEFINED:
            out = out.update(var, message.payload.lookup(field_name))
    return out


def select_session(
    message: Message,
    candidates: Iterable[tuple[Any, State]],
    config: CorrelationConfig,
    seed: int,
) -> Any | None:
    """Pick the session a message is routed to, or None when none matches.

    Candidates are (session id, state) pairs.  All matching candidates are
    equally eligible; ties are broken pseudo-randomly from the seed over
    the matches sorted by session id, so a fixed seed picks the same
    session every time.
    """
    cfun = config.function_for(message.operation)
    matched = [sid for sid, st in sorted(candidates, key=lambda c: c[0])
               if correlates(message, cfun, st)]
    if not matched:
        return None
    if len(matched) == 1:
        return matched[0]
    return matched[random.Random(seed).randrange(len(matched))]
