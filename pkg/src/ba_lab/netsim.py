"""Lock-step synchronous network with a rushing adversary and ideal signatures."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .core import (BALabError, ComplexityReport, ConfigError, ExecutionTrace, FaultAssignment, Message,
                   NonTermination, Output, ProcessorId, SIG_BITS, SystemParams, validate_inputs,
                   value_payload)


VALUE_ALPHABET = ((), ((value_payload(0), ()),), ((value_payload(1), ()),))


class ForgeryAttempt(BALabError):
    """The adversary emitted a signature of a correct processor it never observed."""


class Protocol:
    """A protocol for all n processors, as a pure state-transition system.

    States are immutable and hashable; ``on_slot`` never mutates its input,
    so identical (state, slot, inbox) always yields identical results.
    """

    name = "protocol"
    params: SystemParams

    def slot_budget(self) -> int:
        raise NotImplementedError

    def init(self, pid: ProcessorId, value: int):
        raise NotImplementedError

    def on_slot(self, state, slot: int, inbox: Sequence[Message]) -> Tuple[Tuple[Message, ...], object]:
        raise NotImplementedError

    def output(self, state) -> Optional[Output]:
        raise NotImplementedError

    def listens(self, pid: ProcessorId, slot: int) -> bool:
        """Whether ``pid`` reads its inbox at ``slot``; False lets explorers skip inbox variants."""
        return True

    def depth_at(self, slot: int) -> int:
        """Recursion depth of the messages sent at ``slot``."""
        return 0

    def byzantine_alphabet(self, slot: int, sender: ProcessorId, receiver: ProcessorId):
        """Distinguishable Byzantine moves on one channel: tuples of (payload, signatures)."""
        return VALUE_ALPHABET

    def machine(self, pid: ProcessorId, value: int) -> "Machine":
        return Machine(self, pid, self.init(pid, value), value)

    def machines(self, inputs: Mapping[ProcessorId, int]) -> Dict[ProcessorId, "Machine"]:
        inputs = validate_inputs(inputs, self.params.n)
        return {p: self.machine(p, v) for p, v in inputs.items()}


class Machine:
    """One processor's protocol instance; holds the current immutable state."""

    __slots__ = ("protocol", "pid", "state", "input")

    def __init__(self, protocol: Protocol, pid: ProcessorId, state, input=None):
        self.protocol = protocol
        self.pid = pid
        self.state = state
        self.input = input

    def step(self, slot: int, inbox: Sequence[Message]) -> Tuple[Message, ...]:
        outbox, self.state = self.protocol.on_slot(self.state, slot, inbox)
        return outbox

    @property
    def output(self) -> Optional[Output]:
        return self.protocol.output(self.state)


class SignatureRegistry:
    """Append-only record of (signer, payload) endorsements seen on the wire."""

    def __init__(self):
        self._records: Set[Tuple[ProcessorId, bytes]] = set()

    def sign(self, signer: ProcessorId, payload: bytes) -> Tuple[ProcessorId, bytes]:
        self._records.add((signer, payload))
        return (signer, payload)

    def verify(self, signer: ProcessorId, payload: bytes, sender: Optional[ProcessorId] = None) -> bool:
        return signer == sender or (signer, payload) in self._records

    def __contains__(self, item):
        return item in self._records

    def __len__(self):
        return len(self._records)

    def records(self):
        return sorted(self._records)


@dataclass
class SlotView:
    """What the (rushing) adversary sees before choosing its slot-t moves."""

    slot: int
    params: SystemParams
    faults: FaultAssignment
    history: List[List[Message]]
    correct_outbox: List[Message]
    byzantine_honest: Dict[ProcessorId, Tuple[Message, ...]]
    crashing: Dict[ProcessorId, Tuple[Message, ...]]
    omission_outbox: List[Message]
    registry: SignatureRegistry


@dataclass
class Action:
    byzantine: List[Message] = field(default_factory=list)
    crash_deliver: Optional[Dict[ProcessorId, List[Message]]] = None
    drop: List[Message] = field(default_factory=list)


class Adversary:
    """Base strategy: Byzantine processors stay silent, crashes deliver everything, no drops."""

    name = "silent"

    def act(self, view: SlotView) -> Action:
        return Action()


def _register(registry: SignatureRegistry, msg: Message, faults: FaultAssignment):
    for signer in msg.signatures:
        if signer == msg.sender or signer in faults.byzantine:
            registry.sign(signer, msg.payload)
        elif (signer, msg.payload) not in registry:
            raise ForgeryAttempt(f"processor {msg.sender} sent an endorsement by {signer} "
                                 f"on {msg.payload.hex()} that was never signed")


def run_lockstep(params: SystemParams, machines: Mapping[ProcessorId, Machine], faults: FaultAssignment,
                 adversary: Optional[Adversary] = None, max_slots: Optional[int] = None,
                 inputs: Optional[Mapping[ProcessorId, int]] = None,
                 registry: Optional[SignatureRegistry] = None, partial: bool = False) -> ExecutionTrace:
    """Drive the machines slot by slot; messages sent at t are delivered at t+1.

    With ``partial=True`` hitting ``max_slots`` returns the run so far instead
    of raising NonTermination.
    """
    if set(machines) != set(range(params.n)):
        raise ConfigError("machines must be defined for every processor id")
    faults.check(params)
    adversary = adversary or Adversary()
    registry = registry if registry is not None else SignatureRegistry()
    if max_slots is None:
        max_slots = max(m.protocol.slot_budget() for m in machines.values())
    if inputs is None:
        inputs = {p: getattr(m, "input", None) for p, m in machines.items()}
    protocol_name = next(iter(machines.values())).protocol.name
    trace = ExecutionTrace(params, faults, dict(inputs), protocol=protocol_name)
    correct = [p for p in range(params.n) if faults.is_correct(p)]
    pending: List[Message] = []
    for t in range(max_slots):
        inboxes: Dict[ProcessorId, List[Message]] = defaultdict(list)
        for m in pending:
            inboxes[m.receiver].append(m)
        correct_out: List[Message] = []
        byz_honest: Dict[ProcessorId, Tuple[Message, ...]] = {}
        crashing: Dict[ProcessorId, Tuple[Message, ...]] = {}
        omission_out: List[Message] = []
        for p in range(params.n):
            crash_at = faults.crash.get(p)
            if crash_at is not None and t > crash_at:
                continue
            out = machines[p].step(t, inboxes.get(p, ()))
            if p in faults.byzantine:
                byz_honest[p] = out
            elif crash_at is not None and t == crash_at:
                crashing[p] = out
            elif p in faults.omission:
                omission_out.extend(out)
            else:
                correct_out.extend(out)
        for m in correct_out:
            if m.signatures:
                _register(registry, m, faults)
        view = SlotView(t, params, faults, trace.slots, correct_out, byz_honest, crashing, omission_out, registry)
        action = adversary.act(view)
        for m in action.byzantine:
            if m.sender not in faults.byzantine or m.slot != t:
                raise ConfigError(f"adversary produced a message it does not control: {m}")
            _register(registry, m, faults)
        sent = list(correct_out) + list(omission_out) + list(action.byzantine)
        for p, out in crashing.items():
            chosen = out if action.crash_deliver is None else action.crash_deliver.get(p, out)
            if not set(chosen) <= set(out):
                raise ConfigError(f"crash delivery for {p} is not a subset of its outbox")
            for m in chosen:
                _register(registry, m, faults)
            sent.extend(chosen)
        for m in omission_out:
            _register(registry, m, faults)
        drop = set(action.drop)
        for m in drop:
            if m.sender not in faults.omission and m.receiver not in faults.omission:
                raise ConfigError("only messages to or from omission-faulty processors can be dropped")
        sent.sort(key=Message.sort_key)
        if drop:
            delivered = [m for m in sent if m not in drop]
            trace.dropped.append([m for m in sent if m in drop])
        else:
            delivered = sent
            trace.dropped.append([])
        trace.slots.append(delivered)
        pending = delivered
        for p in correct:
            out = machines[p].output
            if out is not None and p not in trace.outputs:
                trace.outputs[p] = out
        if all(p in trace.outputs for p in correct):
            return trace
    if partial:
        return trace
    missing = [p for p in correct if p not in trace.outputs]
    raise NonTermination(f"correct processors {missing} produced no output within {max_slots} slots")


def simulate(protocol: Protocol, inputs: Mapping[ProcessorId, int], faults: Optional[FaultAssignment] = None,
             adversary: Optional[Adversary] = None, max_slots: Optional[int] = None,
             registry: Optional[SignatureRegistry] = None) -> ExecutionTrace:
    """Convenience wrapper: build machines for ``protocol`` and run them."""
    faults = faults or FaultAssignment()
    machines = protocol.machines(inputs)
    return run_lockstep(protocol.params, machines, faults, adversary, max_slots,
                        inputs=dict(inputs), registry=registry)


def account(trace: ExecutionTrace, depth_of: Optional[Callable[[Message], int]] = None,
            sig_bits: int = SIG_BITS) -> ComplexityReport:
    """Messages and bits sent by correct processors; self-addressed messages are free."""
    report = ComplexityReport()
    faulty = trace.faults.faulty
    for m in trace.sent():
        if m.sender in faulty or m.sender == m.receiver:
            continue
        report.add(depth_of(m) if depth_of else 0, m.bits(sig_bits))
    return report


def replay(protocol: Protocol, trace: ExecutionTrace, pid: ProcessorId,
           upto: Optional[int] = None) -> Tuple[object, List[Tuple[Message, ...]]]:
    """Re-drive ``pid``'s machine on its recorded inboxes; returns (state, outboxes)."""
    state = protocol.init(pid, trace.inputs[pid])
    outs = []
    upto = len(trace.slots) if upto is None else upto
    for t in range(upto):
        inbox = sorted(trace.inbox(pid, t), key=Message.sort_key)
        out, state = protocol.on_slot(state, t, inbox)
        outs.append(out)
    return state, outs


def verify_authentication(trace: ExecutionTrace) -> List[Message]:
    """Messages carrying a correct signer's endorsement that the signer never issued itself."""
    issued = {(s, m.payload) for m in trace.sent() for s in m.signatures if s == m.sender}
    faulty = trace.faults.faulty
    return [m for m in trace.sent() for s in m.signatures
            if s not in faulty and (s, m.payload) not in issued]
