"""Lifting relaxed agreement to full BA: majority dissemination, committees and extraction."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, FrozenSet, Iterable, NamedTuple, Optional, Sequence, Tuple

from .core import (BALabError, ConfigError, ExecutionTrace, Message, Output, SystemParams,
                   decode_signed_output, majority_value, signed_output_payload, value_payload)
from .netsim import Protocol, SignatureRegistry
from .protocols.engine import count_values

DISSEMINATION_DEPTH = -1


class TerminationViolation(BALabError):
    """A correct processor could not extract a value after dissemination."""


class SignedOutput(NamedTuple):
    member: int
    value: int
    signer: int

    def to_json(self) -> dict:
        return {"member": self.member, "value": self.value, "signer": self.signer}


def signed_outputs(messages: Iterable[Message]) -> FrozenSet[SignedOutput]:
    """Every (signer, value) endorsement carried by signed-output messages."""
    out = set()
    for m in messages:
        v = decode_signed_output(m.payload)
        if v is None:
            continue
        for s in m.signatures:
            out.add(SignedOutput(s, v, s))
    return frozenset(out)


def committee_size_m(f: int, epsilon) -> int:
    """floor(f / (1/3 - eps)) + 1, exactly."""
    eps = Fraction(epsilon)
    if not 0 < eps < Fraction(1, 3):
        raise ConfigError("epsilon must lie in (0, 1/3)")
    return math.floor(Fraction(f) / (Fraction(1, 3) - eps)) + 1


def extract_f(messages: Iterable[SignedOutput], m: int, f: int, committee: Optional[Sequence[int]] = None,
              registry: Optional[SignatureRegistry] = None) -> str:
    """Extraction function on a set of signed outputs: "0", "1" or "".

    Members that signed both values count toward the m - f quorum but not
    toward either value.
    """
    members = set(range(m) if committee is None else committee)
    signed = {}
    for so in messages:
        if so.member not in members or so.signer != so.member:
            continue
        if registry is not None and not registry.verify(so.signer, signed_output_payload(so.value)):
            continue
        signed.setdefault(so.member, set()).add(so.value)
    if len(signed) < m - f:
        return ""
    tally = {0: 0, 1: 0}
    for values in signed.values():
        if len(values) == 1:
            tally[next(iter(values))] += 1
    return str(majority_value(tally))


def signed_alphabet(sender: int, m: int):
    """A Byzantine committee member may sign either value, both, or neither; outsiders' signatures never count."""
    if sender >= m:
        return ((),)
    s0 = (signed_output_payload(0), (sender,))
    s1 = (signed_output_payload(1), (sender,))
    return ((), (s0,), (s1,), (s0, s1))


class _LiftState(NamedTuple):
    pid: int
    inner: object
    output: Optional[Output] = None


class LiftEpsilonToBA(Protocol):
    """Run an epsilon-BA protocol, then one all-to-all slot; output the majority received."""

    name = "lift-eps"

    def __init__(self, inner: Protocol, params: Optional[SystemParams] = None):
        params = params or inner.params
        eps = params.epsilon
        if eps is None or not 0 < eps < Fraction(1, 2):
            raise ConfigError("epsilon must lie in (0, 1/2)")
        if params.strict and not params.f < params.n * (Fraction(1, 2) - eps):
            raise ConfigError(f"dissemination needs f < n(1/2 - epsilon) = {params.n * (Fraction(1, 2) - eps)}")
        self.inner = inner
        self.params = params
        self.name = f"lift-{inner.name}"
        self.inner_end = inner.slot_budget() - 1

    def slot_budget(self) -> int:
        return self.inner_end + 2

    def init(self, pid, value):
        return _LiftState(pid, self.inner.init(pid, value))

    def listens(self, pid, slot):
        return slot == self.inner_end + 1 or (slot <= self.inner_end and self.inner.listens(pid, slot))

    def depth_at(self, slot):
        return DISSEMINATION_DEPTH if slot == self.inner_end else self.inner.depth_at(slot)

    def output(self, state):
        return state.output

    def inner_output(self, state) -> Optional[Output]:
        return self.inner.output(state.inner)

    def on_slot(self, state, slot, inbox):
        if slot < self.inner_end:
            out, inner = self.inner.on_slot(state.inner, slot, inbox)
            return out, state._replace(inner=inner)
        if slot == self.inner_end:
            out, inner = self.inner.on_slot(state.inner, slot, inbox)
            res = self.inner.output(inner)
            payload = value_payload(res.value)
            out = out + tuple(Message(state.pid, q, slot, payload) for q in range(self.params.n))
            return out, state._replace(inner=inner)
        if slot == self.inner_end + 1 and state.output is None:
            tally = count_values(inbox, range(self.params.n))
            return (), state._replace(output=Output(majority_value(tally), slot))
        return (), state


def lift_epsilon_to_ba(eps_protocol: Protocol, params: Optional[SystemParams] = None) -> LiftEpsilonToBA:
    return LiftEpsilonToBA(eps_protocol, params)


class _ExtState(NamedTuple):
    pid: int
    inner: object
    held: FrozenSet[SignedOutput]
    output: Optional[Output] = None


class Extractable(Protocol):
    """epsilon-BA on the committee of the m lowest ids; members sign their output to one collector.

    Each processor's output value is the extraction over the signed outputs it
    holds (None when that is the empty string).
    """

    name = "extractable"

    def __init__(self, params: SystemParams, inner_factory: Callable[[SystemParams], Protocol]):
        if params.epsilon is None:
            raise ConfigError("extractable BA needs epsilon")
        self.params = params
        self.m = committee_size_m(params.f, params.epsilon)
        if self.m > params.n:
            raise ConfigError(f"committee size m = floor(f/(1/3 - eps)) + 1 = {self.m} exceeds n = {params.n}")
        self.committee_params = params.replace(n=self.m)
        self.inner = inner_factory(self.committee_params)
        self.collector = self.m if self.m < params.n else 0
        self.inner_end = self.inner.slot_budget() - 1
        self.name = f"extractable-{self.inner.name}"

    def slot_budget(self) -> int:
        return self.inner_end + 2

    @property
    def output_slot(self) -> int:
        return self.inner_end + 1

    def extract(self, messages: Iterable[SignedOutput], registry=None) -> str:
        return extract_f(messages, self.m, self.params.f, registry=registry)

    def init(self, pid, value):
        inner = self.inner.init(pid, value) if pid < self.m else value
        return _ExtState(pid, inner, frozenset())

    def listens(self, pid, slot):
        if slot == self.inner_end + 1:
            return True
        return pid < self.m and slot <= self.inner_end and self.inner.listens(pid, slot)

    def depth_at(self, slot):
        return DISSEMINATION_DEPTH if slot >= self.inner_end else self.inner.depth_at(slot)

    def output(self, state):
        return state.output

    def byzantine_alphabet(self, slot, sender, receiver):
        if slot < self.inner_end:
            return self.inner.byzantine_alphabet(slot, sender, receiver) if sender < self.m and receiver < self.m else ((),)
        if slot == self.inner_end:
            return signed_alphabet(sender, self.m)
        return ((),)

    def _finish(self, state, slot, inbox):
        held = state.held | signed_outputs(inbox)
        got = self.extract(held)
        return state._replace(held=held, output=Output(int(got) if got else None, slot))

    def on_slot(self, state, slot, inbox):
        pid = state.pid
        if slot <= self.inner_end and pid < self.m:
            out, inner = self.inner.on_slot(state.inner, slot, inbox)
            state = state._replace(inner=inner)
            if slot == self.inner_end:
                v = self.inner.output(inner).value
                so = SignedOutput(pid, v, pid)
                out = out + (Message(pid, self.collector, slot, signed_output_payload(v), (pid,)),)
                state = state._replace(held=state.held | {so})
            return out, state
        if slot == self.inner_end + 1 and state.output is None:
            return (), self._finish(state, slot, inbox)
        return (), state


def build_extractable(params: SystemParams, inner_factory: Callable[[SystemParams], Protocol]) -> Extractable:
    return Extractable(params, inner_factory)


class _LiftExtState(NamedTuple):
    pid: int
    inner: object
    held: FrozenSet[SignedOutput]
    output: Optional[Output] = None


class LiftExtractableToBA(Protocol):
    """After the extractable protocol, everyone relays every signed output it holds to all, then extracts."""

    name = "lift-extractable"

    def __init__(self, extractable: Extractable):
        self.ext = extractable
        self.params = extractable.params
        self.relay_slot = extractable.output_slot
        self.name = f"lift-{extractable.name}"

    def slot_budget(self) -> int:
        return self.relay_slot + 2

    def init(self, pid, value):
        return _LiftExtState(pid, self.ext.init(pid, value), frozenset())

    def listens(self, pid, slot):
        return slot == self.relay_slot + 1 or (slot <= self.relay_slot and self.ext.listens(pid, slot))

    def depth_at(self, slot):
        return DISSEMINATION_DEPTH if slot >= self.ext.inner_end else self.ext.depth_at(slot)

    def output(self, state):
        return state.output

    def byzantine_alphabet(self, slot, sender, receiver):
        if slot == self.relay_slot:
            return signed_alphabet(sender, self.ext.m)
        return self.ext.byzantine_alphabet(slot, sender, receiver)

    def on_slot(self, state, slot, inbox):
        pid = state.pid
        if slot < self.relay_slot:
            out, inner = self.ext.on_slot(state.inner, slot, inbox)
            return out, state._replace(inner=inner)
        if slot == self.relay_slot:
            _, inner = self.ext.on_slot(state.inner, slot, inbox)
            held = inner.held
            out = tuple(Message(pid, q, slot, signed_output_payload(so.value), (so.signer,))
                        for so in sorted(held) for q in range(self.params.n))
            return out, state._replace(inner=inner, held=held)
        if slot == self.relay_slot + 1 and state.output is None:
            held = state.held | signed_outputs(inbox)
            got = self.ext.extract(held)
            if not got:
                raise TerminationViolation(f"processor {pid} extracted the empty string after dissemination")
            return (), state._replace(held=held, output=Output(int(got), slot))
        return (), state


def lift_extractable_to_ba(extractable: Extractable) -> LiftExtractableToBA:
    return LiftExtractableToBA(extractable)


def message_sets(trace: ExecutionTrace) -> Tuple[FrozenSet[SignedOutput], FrozenSet[SignedOutput]]:
    """(M_c, M_a) restricted to signed outputs: sent or received by correct / by anyone."""
    faulty = trace.faults.faulty
    msgs = list(trace.sent())
    mc = signed_outputs(m for m in msgs if m.sender not in faulty or m.receiver not in faulty)
    ma = signed_outputs(msgs)
    return mc, ma
