"""The two-execution construction behind the message lower bound for BA."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from ..core import ConfigError, ExecutionTrace, FaultAssignment, Message, SystemParams
from ..netsim import Machine, Protocol, run_lockstep
from .adversaries import ScriptedAdversary


class _Deaf(Machine):
    """Runs the protocol honestly on an empty inbox (ignores everything it is sent)."""

    def step(self, slot, inbox):
        return super().step(slot, ())


class _DropAdversary(ScriptedAdversary):
    """Drops every message matching a predicate, slot by slot."""

    def __init__(self, predicate):
        super().__init__()
        self.predicate = predicate

    def act(self, view):
        action = super().act(view)
        wire = list(view.correct_outbox) + list(view.omission_outbox)
        action.drop = [m for m in wire if self.predicate(m)]
        return action


@dataclass
class LowerBoundReport:
    case: str
    p1: List[int]
    received_from_p2: Dict[int, int]
    p: Optional[int] = None
    p_received_in_e2: Optional[int] = None
    withholding: List[int] = field(default_factory=list)
    certificate: Optional[dict] = None
    views_identical: Optional[bool] = None
    checked_processors: List[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"case": self.case, "p1": self.p1,
                "received_from_p2": {str(k): v for k, v in sorted(self.received_from_p2.items())},
                "p": self.p, "p_received_in_e2": self.p_received_in_e2, "withholding": self.withholding,
                "certificate": self.certificate, "views_identical": self.views_identical,
                "checked_processors": self.checked_processors}


def _run(protocol: Protocol, inputs, faults: FaultAssignment, deaf: Sequence[int], drop_pred) -> ExecutionTrace:
    machines = {}
    for p, v in inputs.items():
        cls = _Deaf if p in deaf else Machine
        machines[p] = cls(protocol, p, protocol.init(p, v), v)
    return run_lockstep(protocol.params, machines, faults, _DropAdversary(drop_pred),
                        protocol.slot_budget(), inputs=dict(inputs))


def view_of(trace: ExecutionTrace, q: int) -> str:
    """Canonical JSON of everything ``q`` sent and received, slot by slot."""
    slots = []
    for t, msgs in enumerate(trace.slots):
        slots.append([m.to_json() for m in msgs if m.receiver == q or m.sender == q])
    return json.dumps(slots, sort_keys=True)


def appendix_a_scenario(protocol: Protocol, params: Optional[SystemParams] = None, p1_subset: Sequence[int] = (0,),
                        inputs: Optional[Dict[int, int]] = None):
    """Build E1 (and E2 when some P1 member hears at most floor(f/2) P2 messages).

    Returns (E1, E2 or None, report).
    """
    params = params or protocol.params
    n, f = params.n, params.f
    p1 = sorted(set(p1_subset))
    if not 1 <= f < n - 1:
        raise ConfigError("the construction needs 1 <= f < n - 1")
    if len(p1) != math.ceil(f / 2):
        raise ConfigError(f"|P1| must be ceil(f/2) = {math.ceil(f / 2)}")
    if any(not 0 <= p < n for p in p1):
        raise ConfigError("P1 members must be processor ids")
    p1_set = set(p1)
    p2 = [q for q in range(n) if q not in p1_set]
    inputs = inputs or {q: 0 for q in range(n)}

    e1_faults = FaultAssignment(omission=frozenset(p1))
    e1 = _run(protocol, inputs, e1_faults, p1, lambda m: m.sender in p1_set and m.receiver in p1_set)
    received = {p: sum(1 for m in e1.sent() if m.receiver == p and m.sender not in p1_set) for p in p1}
    half_up, half_down = math.ceil(f / 2), f // 2
    if all(c >= half_up for c in received.values()):
        total = sum(received.values())
        cert = {"per_member_minimum": half_up, "combined": total, "bound": (f * f) / 4,
                "holds": total >= len(p1) * half_up >= (f * f) / 4}
        return e1, None, LowerBoundReport("case-1", p1, received, certificate=cert)

    p = min((c, q) for q, c in received.items() if c <= half_down)[1]
    senders = sorted({m.sender for m in e1.sent() if m.receiver == p and m.sender not in p1_set})
    rest = [q for q in p1 if q != p]
    e2_faults = FaultAssignment(omission=frozenset(rest) | frozenset(senders))
    rest_set, sender_set = set(rest), set(senders)

    def drop(m: Message) -> bool:
        if m.sender in rest_set and m.receiver in p1_set:
            return True
        if m.receiver in rest_set and m.sender in p1_set:
            return True
        return m.receiver == p and m.sender in sender_set

    e2 = _run(protocol, inputs, e2_faults, rest, drop)
    got = sum(1 for m in e2.slots for x in m if x.receiver == p and x.sender != p)
    checked = [q for q in p2 if q not in sender_set]
    same = all(view_of(e1, q) == view_of(e2, q) for q in checked)
    report = LowerBoundReport("case-2", p1, received, p=p, p_received_in_e2=got, withholding=senders,
                             views_identical=same, checked_processors=checked)
    return e1, e2, report
