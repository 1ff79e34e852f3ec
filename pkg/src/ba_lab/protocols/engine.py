"""Schedule interpreter shared by every protocol in the suite.

A protocol is compiled once into a global slot schedule: a list of ops per
slot. Because committees recurse sequentially, at any slot a single node is
active and every processor knows from the schedule alone what to do. A
processor's state is ``(pid, frames, output)``: one frame per recursion
depth it is currently inside.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from ..core import (BOT, ONE, ZERO, CommitteeNode, Message, Output, SystemParams, decode_value,
                    majority_value, partition_committees, value_payload)
from ..netsim import Protocol

# op codes
GC_SEND, GC_ECHO, GC_OUT = 1, 2, 3
LEADER_SEND, LEADER_RECV = 4, 5
PUSH, POP = 6, 7
REPORT_SEND, REPORT_RECV = 8, 9
S1_SEND, S1_RECV, S2_RECV, S3_SEND, S3_RECV = 10, 11, 12, 13, 14
P_SEND, P_RECV = 15, 16
FINISH = 17

RECEIVE_OPS = {GC_ECHO, GC_OUT, LEADER_RECV, REPORT_RECV, S1_RECV, S2_RECV, S3_RECV, P_RECV}
SEND_OPS = {GC_SEND, GC_ECHO, LEADER_SEND, REPORT_SEND, S1_SEND, S1_RECV, S3_SEND, P_SEND}


class Frame(NamedTuple):
    value: int
    grade: int = 0
    cout: Optional[int] = None  # committee output collected at the end of a recursive call


class State(NamedTuple):
    pid: int
    frames: Tuple[Frame, ...]
    output: Optional[Output] = None


@dataclass(frozen=True)
class NodeInfo:
    path: Tuple[int, ...]
    members: Tuple[int, ...]
    f: int
    children: Tuple["NodeInfo", ...] = ()

    @property
    def depth(self) -> int:
        return len(self.path)

    @property
    def n(self) -> int:
        return len(self.members)


class Op(NamedTuple):
    code: int
    node: NodeInfo
    rnd: int = 0
    actors: frozenset = frozenset()  # processors that execute this op


def build_tree(members: Sequence[int], f: int, path=(), leaf_size: int = 1) -> NodeInfo:
    """Committee tree with per-node fault budgets scaled to committee size."""
    members = tuple(sorted(members))
    if len(members) <= leaf_size:
        return NodeInfo(tuple(path), members, f)
    c1, c2 = partition_committees(CommitteeNode(tuple(path), members))
    n = len(members)
    kids = tuple(build_tree(c.members, (f * len(c.members)) // n, c.path, leaf_size) for c in (c1, c2))
    return NodeInfo(tuple(path), members, f, kids)


def count_values(inbox: Sequence[Message], allowed, allow_bot: bool = False) -> Dict[int, int]:
    """One vote per allowed sender: the first decodable value it sent this slot."""
    seen = set()
    tally = {ZERO: 0, ONE: 0}
    for m in inbox:
        s = m.sender
        if s in seen or s not in allowed or m.signatures:
            continue
        v = decode_value(m.payload, allow_bot)
        if v is None:
            continue
        seen.add(s)
        if v != BOT:
            tally[v] += 1
    return tally


def first_values(inbox: Sequence[Message], allow_bot: bool = False) -> Dict[int, int]:
    seen: Dict[int, int] = {}
    for m in inbox:
        if m.sender in seen or m.signatures:
            continue
        v = decode_value(m.payload, allow_bot)
        if v is not None:
            seen[m.sender] = v
    return seen


def sampled_multiset(inbox: Sequence[Message], samples: Sequence[int], allow_bot: bool = False) -> List[Optional[int]]:
    """Per sample slot (with multiplicity): the sampled processor's value, or None for silence."""
    got = first_values(inbox, allow_bot)
    return [got.get(q) for q in samples]


def classify_step1(received: Sequence[Optional[int]], k: int, epsilon: Fraction) -> int:
    """Response value: b if at least k(2/3 - eps/2) received values equal b, else BOT."""
    threshold = k * (Fraction(2, 3) - epsilon / 2)
    for b in (ZERO, ONE):
        if sum(1 for v in received if v == b) >= threshold:
            return b
    return BOT


def classify_step2(responses: Sequence[Optional[int]], k: int, current: int) -> Tuple[int, int]:
    """(value, grade) from the step-2 responses; BOT and silence never count."""
    c0 = sum(1 for v in responses if v == ZERO)
    c1 = sum(1 for v in responses if v == ONE)
    for b, c in ((ZERO, c0), (ONE, c1)):
        if 3 * c >= 2 * k:
            return b, 2
    hits = [b for b, c in ((ZERO, c0), (ONE, c1)) if 3 * c >= k]
    if len(hits) == 1:
        return hits[0], 1
    return current, 0


class ScheduledProtocol(Protocol):
    """Interpreter for a compiled op schedule; subclasses only build the schedule."""

    report_grade = False

    def __init__(self, params: SystemParams):
        self.params = params
        self.root: Optional[NodeInfo] = None
        self._ops: Dict[int, List[Op]] = defaultdict(list)
        self._end = 0
        self._samples: Dict[Tuple[Tuple[int, ...], int, int], Tuple[int, ...]] = {}
        self._targets: Dict[Tuple[Tuple[int, ...], int, int], Tuple[int, ...]] = {}

    # -- schedule construction -------------------------------------------

    def emit(self, slot: int, code: int, node: NodeInfo, rnd: int = 0, actors=None):
        self._ops[slot].append(Op(code, node, rnd, frozenset(node.members if actors is None else actors)))

    def finalize(self, end: int):
        self.emit(end, FINISH, self.root)
        self._end = end
        program: Dict[int, Dict[int, List[Op]]] = defaultdict(lambda: defaultdict(list))
        listens = defaultdict(set)
        depth = {}
        for slot in sorted(self._ops):
            for op in self._ops[slot]:
                for p in op.actors:
                    program[p][slot].append(op)
                    if op.code in RECEIVE_OPS:
                        listens[p].add(slot)
                if op.code in SEND_OPS and slot not in depth:
                    depth[slot] = op.node.depth
        self._program = {p: {s: tuple(ops) for s, ops in by_slot.items()} for p, by_slot in program.items()}
        self._listens = {p: frozenset(s) for p, s in listens.items()}
        self._depth = depth

    def slot_budget(self) -> int:
        return self._end + 1

    @property
    def output_slot(self) -> int:
        return self._end

    def schedule(self) -> Dict[int, List[Op]]:
        return {s: list(ops) for s, ops in sorted(self._ops.items())}

    def node_span(self) -> Dict[Tuple[int, ...], Tuple[int, int]]:
        """(first slot, last slot) of every scheduled node, from the compiled schedule."""
        span: Dict[Tuple[int, ...], List[int]] = {}
        for slot, ops in self._ops.items():
            for op in ops:
                if op.code in (PUSH, POP, FINISH):
                    continue
                lo_hi = span.setdefault(op.node.path, [slot, slot])
                lo_hi[0] = min(lo_hi[0], slot)
                lo_hi[1] = max(lo_hi[1], slot)
        return {k: (v[0], v[1]) for k, v in span.items()}

    # -- Protocol interface ----------------------------------------------

    def init(self, pid: int, value: int) -> State:
        return State(pid, (Frame(value),), None)

    def output(self, state: State) -> Optional[Output]:
        return state.output

    def listens(self, pid: int, slot: int) -> bool:
        return slot in self._listens.get(pid, ())

    def depth_at(self, slot: int) -> int:
        return self._depth.get(slot, 0)

    def on_slot(self, state: State, slot: int, inbox: Sequence[Message]):
        ops = self._program.get(state.pid, {}).get(slot)
        if not ops:
            return (), state
        pid = state.pid
        frames = list(state.frames)
        output = state.output
        out: List[Message] = []
        for op in ops:
            code, node = op.code, op.node
            d = node.depth
            if code == GC_SEND:
                payload = value_payload(frames[d].value)
                out.extend(Message(pid, q, slot, payload) for q in node.members)
            elif code == GC_ECHO:
                tally = count_values(inbox, node.members)
                quorum = node.n - node.f
                for b in (ZERO, ONE):
                    if tally[b] >= quorum:
                        payload = value_payload(b)
                        out.extend(Message(pid, q, slot, payload) for q in node.members)
                        break
            elif code == GC_OUT:
                tally = count_values(inbox, node.members)
                fr = frames[d]
                hi, lo = node.n - node.f, node.f + 1
                if tally[ZERO] >= hi or tally[ONE] >= hi:
                    frames[d] = fr._replace(value=ZERO if tally[ZERO] >= hi else ONE, grade=2)
                elif tally[ZERO] >= lo or tally[ONE] >= lo:
                    frames[d] = fr._replace(value=ZERO if tally[ZERO] >= lo else ONE, grade=1)
                else:
                    frames[d] = fr._replace(grade=0)
            elif code == LEADER_SEND:
                payload = value_payload(frames[d].value)
                out.extend(Message(pid, q, slot, payload) for q in node.members)
            elif code == LEADER_RECV:
                leader = op.rnd
                if frames[d].grade != 2:
                    got = first_values([m for m in inbox if m.sender == leader])
                    frames[d] = frames[d]._replace(value=got.get(leader, ZERO))
                frames[d] = frames[d]._replace(grade=None)
            elif code == PUSH:
                frames.append(Frame(frames[d].value))
            elif code == POP:
                child = frames.pop()
                frames[d] = frames[d]._replace(cout=child.value)
            elif code == REPORT_SEND:
                payload = value_payload(frames[d].cout)
                out.extend(Message(pid, q, slot, payload) for q in node.members)
                frames[d] = frames[d]._replace(cout=None)
            elif code == REPORT_RECV:
                if frames[d].grade != 2:
                    committee = node.children[op.rnd - 1].members
                    frames[d] = frames[d]._replace(value=majority_value(count_values(inbox, committee)))
                frames[d] = frames[d]._replace(grade=None)
            elif code == S1_SEND:
                payload = value_payload(frames[d].value)
                out.extend(Message(pid, q, slot, payload)
                           for q in self._targets.get((node.path, 3 * op.rnd - 2, pid), ()))
            elif code == S1_RECV:
                step = 3 * op.rnd - 2
                got = sampled_multiset(inbox, self._samples[(node.path, step, pid)])
                resp = classify_step1(got, self.params.k, self.params.epsilon)
                payload = value_payload(resp)
                out.extend(Message(pid, q, slot, payload)
                           for q in self._targets.get((node.path, step + 1, pid), ()))
            elif code == S2_RECV:
                got = sampled_multiset(inbox, self._samples[(node.path, 3 * op.rnd - 1, pid)], allow_bot=True)
                v, g = classify_step2(got, self.params.k, frames[d].value)
                frames[d] = frames[d]._replace(value=v, grade=g)
            elif code == S3_SEND:
                payload = value_payload(frames[d].cout)
                out.extend(Message(pid, q, slot, payload)
                           for q in self._targets.get((node.path, 3 * op.rnd, pid), ()))
                frames[d] = frames[d]._replace(cout=None)
            elif code == S3_RECV:
                if frames[d].grade != 2:
                    got = sampled_multiset(inbox, self._samples[(node.path, 3 * op.rnd, pid)])
                    tally = {ZERO: got.count(ZERO), ONE: got.count(ONE)}
                    frames[d] = frames[d]._replace(value=majority_value(tally))
                frames[d] = frames[d]._replace(grade=None)
            elif code == P_SEND:
                payload = value_payload(frames[d].value)
                out.extend(Message(pid, q, slot, payload) for q in node.members if q != pid)
            elif code == P_RECV:
                lead = node.members[0]
                got = first_values([m for m in inbox if m.sender == lead])
                if lead in got:
                    frames[d] = frames[d]._replace(value=got[lead])
            elif code == FINISH:
                fr = frames[0]
                output = Output(fr.value, slot, fr.grade if self.report_grade else None)
        return tuple(out), State(pid, tuple(frames), output)
