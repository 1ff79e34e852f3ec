"""Shared domain types: parameters, messages, traces, committees."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

ProcessorId = int

ZERO = 0
ONE = 1
BOT = 2  # explicit "no value" response, only legal in step-2/5 responses
VALUES = (ZERO, ONE)

SIG_BITS = 256
SIGNED_OUTPUT_TAG = 0x10


class BALabError(Exception):
    pass


class ConfigError(BALabError, ValueError):
    pass


class PartitionError(BALabError, ValueError):
    pass


class NonTermination(BALabError):
    pass


def parse_fraction(text) -> Fraction:
    """Parse "p/q" (or an int/Fraction) into an exact rational."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a rational: {text!r}") from exc


def format_fraction(x: Optional[Fraction]) -> Optional[str]:
    if x is None:
        return None
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class SystemParams:
    """Processor count, fault budget, slack epsilon and per-step sample size.

    ``epsilon=None`` is used by the classical protocols (Gradecast, Phase
    King, Recursive Phase King), whose resilience bound is ``3f < n``.
    ``strict=False`` skips the resilience bound; lower-bound scenarios and
    valency probes deliberately run protocols outside it.
    """

    n: int
    f: int = 0
    epsilon: Optional[Fraction] = None
    k: int = 1
    strict: bool = field(default=True, compare=False)

    def __post_init__(self):
        if self.epsilon is not None and not isinstance(self.epsilon, Fraction):
            object.__setattr__(self, "epsilon", parse_fraction(self.epsilon))
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n!r}")
        if not isinstance(self.f, int) or self.f < 0:
            raise ConfigError(f"f must be a non-negative integer, got {self.f!r}")
        if not isinstance(self.k, int) or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k!r}")
        if self.epsilon is not None and not (0 < self.epsilon < Fraction(1, 3)):
            raise ConfigError(f"epsilon must lie in (0, 1/3), got {format_fraction(self.epsilon)}")
        if self.strict:
            violated = self.resilience_violation()
            if violated:
                raise ConfigError(violated)

    def resilience_violation(self) -> Optional[str]:
        if self.epsilon is None:
            if not 3 * self.f < self.n:
                return f"resilience bound violated: need f < n/3, got f={self.f}, n={self.n}"
            return None
        bound = self.n * (Fraction(1, 3) - self.epsilon)
        if not self.f < bound:
            return (f"resilience bound violated: need f < n(1/3 - epsilon) = {format_fraction(bound)}, "
                    f"got f={self.f}")
        return None

    def replace(self, **kw) -> "SystemParams":
        data = dict(n=self.n, f=self.f, epsilon=self.epsilon, k=self.k, strict=self.strict)
        data.update(kw)
        return SystemParams(**data)

    def to_json(self) -> dict:
        return {"n": self.n, "f": self.f, "epsilon": format_fraction(self.epsilon), "k": self.k}

    @classmethod
    def from_json(cls, data: Mapping, strict: bool = False) -> "SystemParams":
        eps = data.get("epsilon")
        return cls(n=data["n"], f=data.get("f", 0), epsilon=None if eps is None else parse_fraction(eps),
                   k=data.get("k", 1), strict=strict)


def check_value(v) -> int:
    if v not in VALUES:
        raise ConfigError(f"value must be 0 or 1, got {v!r}")
    return v


def check_grade(g) -> int:
    if g not in (0, 1, 2):
        raise ConfigError(f"grade must be 0, 1 or 2, got {g!r}")
    return g


# -- payload codec ---------------------------------------------------------

def value_payload(v: int) -> bytes:
    return bytes((v,))


def decode_value(payload: bytes, allow_bot: bool = False) -> Optional[int]:
    """Return the binary value carried by ``payload``, or None if it is not one."""
    if len(payload) != 1:
        return None
    v = payload[0]
    if v in VALUES or (allow_bot and v == BOT):
        return v
    return None


def signed_output_payload(v: int) -> bytes:
    return bytes((SIGNED_OUTPUT_TAG, v))


def decode_signed_output(payload: bytes) -> Optional[int]:
    if len(payload) == 2 and payload[0] == SIGNED_OUTPUT_TAG and payload[1] in VALUES:
        return payload[1]
    return None


class Message(NamedTuple):
    sender: ProcessorId
    receiver: ProcessorId
    slot: int
    payload: bytes
    signatures: Tuple[ProcessorId, ...] = ()

    def bits(self, sig_bits: int = SIG_BITS) -> int:
        if self.sender == self.receiver:
            return 0
        return 8 * len(self.payload) + sig_bits * len(self.signatures)

    def sort_key(self):
        return (self.sender, self.receiver, self.payload, self.signatures)

    def to_json(self) -> dict:
        return {"sender": self.sender, "receiver": self.receiver, "slot": self.slot,
                "payload": self.payload.hex(), "signatures": list(self.signatures)}

    @classmethod
    def from_json(cls, data: Mapping) -> "Message":
        return cls(data["sender"], data["receiver"], data["slot"], bytes.fromhex(data["payload"]),
                   tuple(data.get("signatures", ())))


class Output(NamedTuple):
    value: Optional[int]
    slot: int
    grade: Optional[int] = None


# -- committees ------------------------------------------------------------

@dataclass(frozen=True)
class CommitteeNode:
    path: Tuple[int, ...]
    members: Tuple[ProcessorId, ...]

    @classmethod
    def root(cls, n_or_members) -> "CommitteeNode":
        if isinstance(n_or_members, int):
            return cls((), tuple(range(n_or_members)))
        return cls((), tuple(sorted(n_or_members)))

    @property
    def depth(self) -> int:
        return len(self.path)

    def __len__(self):
        return len(self.members)


def partition_committees(node: CommitteeNode) -> Tuple[CommitteeNode, CommitteeNode]:
    """Split a committee into its lower ceil-half and upper floor-half by id."""
    if len(node.members) < 2:
        raise PartitionError(f"cannot partition committee of size {len(node.members)}")
    members = tuple(sorted(node.members))
    cut = (len(members) + 1) // 2
    return (CommitteeNode(node.path + (1,), members[:cut]),
            CommitteeNode(node.path + (2,), members[cut:]))


def committee_tree(node: CommitteeNode) -> List[CommitteeNode]:
    """All nodes of the full recursion tree below ``node`` (pre-order)."""
    out = [node]
    if len(node.members) >= 2:
        for child in partition_committees(node):
            out.extend(committee_tree(child))
    return out


def majority_value(tally: Mapping[int, int]) -> int:
    """Value with the strictly larger count; ties (and empty tallies) go to 0."""
    zeros = tally.get(ZERO, 0)
    ones = tally.get(ONE, 0)
    return ONE if ones > zeros else ZERO


# -- faults, traces, reports ----------------------------------------------

@dataclass(frozen=True)
class FaultAssignment:
    byzantine: frozenset = frozenset()
    crash: Mapping[ProcessorId, int] = field(default_factory=dict)
    omission: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "byzantine", frozenset(self.byzantine))
        object.__setattr__(self, "omission", frozenset(self.omission))
        object.__setattr__(self, "crash", dict(self.crash))
        crash = set(self.crash)
        if self.byzantine & crash or self.byzantine & self.omission or crash & self.omission:
            raise ConfigError("fault sets must be pairwise disjoint")

    @property
    def faulty(self) -> frozenset:
        return self.byzantine | frozenset(self.crash) | self.omission

    def __len__(self):
        return len(self.faulty)

    def is_correct(self, p: ProcessorId) -> bool:
        return p not in self.faulty

    def status(self, p: ProcessorId) -> str:
        if p in self.byzantine:
            return "byzantine"
        if p in self.crash:
            return f"crash@{self.crash[p]}"
        if p in self.omission:
            return "omission"
        return "correct"

    def check(self, params: SystemParams):
        if len(self) > params.f:
            raise ConfigError(f"{len(self)} faulty processors exceed f={params.f}")
        bad = [p for p in self.faulty if not 0 <= p < params.n]
        if bad:
            raise ConfigError(f"faulty ids out of range: {sorted(bad)}")

    def __hash__(self):
        return hash((self.byzantine, tuple(sorted(self.crash.items())), self.omission))

    def to_json(self) -> dict:
        return {"byzantine": sorted(self.byzantine),
                "crash": {str(p): t for p, t in sorted(self.crash.items())},
                "omission": sorted(self.omission)}

    @classmethod
    def from_json(cls, data: Mapping) -> "FaultAssignment":
        return cls(frozenset(data.get("byzantine", ())),
                   {int(p): t for p, t in data.get("crash", {}).items()},
                   frozenset(data.get("omission", ())))


@dataclass
class ExecutionTrace:
    params: SystemParams
    faults: FaultAssignment
    inputs: Dict[ProcessorId, int]
    slots: List[List[Message]] = field(default_factory=list)
    dropped: List[List[Message]] = field(default_factory=list)
    outputs: Dict[ProcessorId, Output] = field(default_factory=dict)
    protocol: str = ""

    @property
    def correct(self) -> List[ProcessorId]:
        return [p for p in range(self.params.n) if self.faults.is_correct(p)]

    def sent(self, slot: Optional[int] = None) -> Iterable[Message]:
        """Every message put on the wire (delivered or dropped)."""
        rng = range(len(self.slots)) if slot is None else (slot,)
        for t in rng:
            yield from self.slots[t]
            if t < len(self.dropped):
                yield from self.dropped[t]

    def prefix(self, length: int) -> "ExecutionTrace":
        """The ``length``-slot run: everything sent at slots < length."""
        return ExecutionTrace(self.params, self.faults, dict(self.inputs),
                              [list(s) for s in self.slots[:length]],
                              [list(s) for s in self.dropped[:length]],
                              {p: o for p, o in self.outputs.items() if o.slot < length},
                              self.protocol)

    def inbox(self, p: ProcessorId, slot: int) -> List[Message]:
        """Messages delivered to ``p`` at ``slot`` (sent at ``slot - 1``)."""
        if slot <= 0 or slot - 1 >= len(self.slots):
            return []
        return [m for m in self.slots[slot - 1] if m.receiver == p]

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol,
            "params": self.params.to_json(),
            "faults": self.faults.to_json(),
            "inputs": {str(p): v for p, v in sorted(self.inputs.items())},
            "slots": [[m.to_json() for m in s] for s in self.slots],
            "dropped": [[m.to_json() for m in s] for s in self.dropped],
            "outputs": {str(p): {"value": o.value, "slot": o.slot, "grade": o.grade}
                        for p, o in sorted(self.outputs.items())},
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ExecutionTrace":
        return cls(
            params=SystemParams.from_json(data["params"]),
            faults=FaultAssignment.from_json(data["faults"]),
            inputs={int(p): v for p, v in data["inputs"].items()},
            slots=[[Message.from_json(m) for m in s] for s in data["slots"]],
            dropped=[[Message.from_json(m) for m in s] for s in data.get("dropped", [])],
            outputs={int(p): Output(o["value"], o["slot"], o.get("grade"))
                     for p, o in data["outputs"].items()},
            protocol=data.get("protocol", ""),
        )


@dataclass
class ComplexityReport:
    total_messages: int = 0
    total_bits: int = 0
    per_depth: Dict[int, Tuple[int, int]] = field(default_factory=dict)

    def add(self, depth: int, bits: int):
        msgs, b = self.per_depth.get(depth, (0, 0))
        self.per_depth[depth] = (msgs + 1, b + bits)
        self.total_messages += 1
        self.total_bits += bits

    def to_json(self) -> dict:
        return {"total_messages": self.total_messages, "total_bits": self.total_bits,
                "per_depth": {str(d): {"messages": m, "bits": b}
                              for d, (m, b) in sorted(self.per_depth.items())}}


def ceil_log2(n: int) -> int:
    return (n - 1).bit_length() if n > 1 else 0


def validate_inputs(inputs: Mapping[ProcessorId, int], n: int) -> Dict[ProcessorId, int]:
    if set(inputs) != set(range(n)):
        raise ConfigError(f"inputs must cover processors 0..{n - 1}")
    return {p: check_value(inputs[p]) for p in range(n)}


def inputs_from_bits(bits: Sequence[int] | str) -> Dict[ProcessorId, int]:
    return {p: check_value(int(b)) for p, b in enumerate(bits)}
