"""Small reference protocols used as degenerate inputs to reductions and lower-bound scenarios."""

from __future__ import annotations

from typing import NamedTuple, Optional, Sequence

from ..core import Message, Output, SystemParams, majority_value, value_payload
from ..netsim import Protocol
from .engine import count_values


class _Simple(NamedTuple):
    pid: int
    value: int
    output: Optional[Output] = None


class EchoInput(Protocol):
    """Outputs its own input at slot 0 and never sends anything."""

    name = "echo-input"

    def __init__(self, params: SystemParams):
        self.params = params

    def slot_budget(self) -> int:
        return 1

    def init(self, pid, value):
        return _Simple(pid, value)

    def on_slot(self, state, slot, inbox):
        if slot == 0:
            return (), state._replace(output=Output(state.value, 0))
        return (), state

    def output(self, state):
        return state.output

    def listens(self, pid, slot):
        return False


class AllToAll(Protocol):
    """Every processor sends its value to every other processor in each of ``rounds`` slots,
    then outputs the majority of the last values it heard (its own included)."""

    name = "all-to-all"

    def __init__(self, params: SystemParams, rounds: int = 2):
        self.params = params
        self.rounds = rounds

    def slot_budget(self) -> int:
        return self.rounds + 1

    def init(self, pid, value):
        return _Simple(pid, value)

    def on_slot(self, state, slot, inbox: Sequence[Message]):
        if state.output is not None:
            return (), state
        value = state.value
        if slot > 0:
            tally = count_values(inbox, range(self.params.n))
            tally[value] += 1
            value = majority_value(tally)
        if slot == self.rounds:
            return (), _Simple(state.pid, value, Output(value, slot))
        payload = value_payload(value)
        out = tuple(Message(state.pid, q, slot, payload) for q in range(self.params.n) if q != state.pid)
        return out, _Simple(state.pid, value)

    def output(self, state):
        return state.output


class Chain(Protocol):
    """Processor i forwards its value to i+1 once per slot; processor 0 is never messaged."""

    name = "chain"

    def __init__(self, params: SystemParams, rounds: int = 2):
        self.params = params
        self.rounds = rounds

    def slot_budget(self) -> int:
        return self.rounds + 1

    def init(self, pid, value):
        return _Simple(pid, value)

    def on_slot(self, state, slot, inbox):
        if state.output is not None:
            return (), state
        value = state.value
        for m in inbox:
            if m.sender == state.pid - 1 and len(m.payload) == 1 and m.payload[0] in (0, 1):
                value = m.payload[0]
                break
        if slot == self.rounds:
            return (), _Simple(state.pid, value, Output(value, slot))
        out = ()
        if state.pid + 1 < self.params.n:
            out = (Message(state.pid, state.pid + 1, slot, value_payload(value)),)
        return out, _Simple(state.pid, value)

    def output(self, state):
        return state.output
