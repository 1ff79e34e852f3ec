"""Exhaustive exploration of all Byzantine behaviours at small n.

Two engines:

* ``enumerate_adversary_executions`` literally runs one simulation per
  behaviour (every channel, every slot, every alphabet letter), in
  lexicographic order.  Exact but exponential.
* ``Explorer`` walks the joint state space of the tracked (correct and crash)
  processors slot by slot.  Each receiver's transition depends only on its own
  state and inbox, and a rushing adversary can pick every channel
  independently, so the successors of a configuration are the product over
  receivers of each receiver's distinct outcomes.  Identical configurations
  are merged, with behaviour counts carried along as multiplicities.
"""

from __future__ import annotations

import itertools
import os
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from math import prod
from typing import Callable, Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from ..core import (ConfigError, ExecutionTrace, FaultAssignment, Message, NonTermination, SystemParams,
                    validate_inputs)
from ..netsim import Protocol, replay, run_lockstep
from ..sampling.badness import EnumerationTooLarge
from .adversaries import ScriptedAdversary

DEFAULT_GUARD = 1 << 24


def guard_limit(guard: Optional[int] = None) -> int:
    if guard is not None:
        return int(guard)
    env = os.environ.get("BA_LAB_GUARD")
    return int(env) if env else DEFAULT_GUARD


class Valency(str, Enum):
    ZERO = "ZeroValent"
    ONE = "OneValent"
    BIVALENT = "Bivalent"

    @classmethod
    def of(cls, values) -> "Valency":
        values = set(values)
        if values == {0}:
            return cls.ZERO
        if values == {1}:
            return cls.ONE
        return cls.BIVALENT


# -- literal enumeration -----------------------------------------------------------

@dataclass
class AdversaryBehaviorSpace:
    """One alphabet letter per (slot, Byzantine sender, receiver) channel."""

    byzantine: Tuple[int, ...]
    receivers: Tuple[int, ...]
    slots: Tuple[int, ...]
    alphabet: Optional[Tuple] = None
    protocol: Optional[Protocol] = None

    @classmethod
    def for_run(cls, protocol: Protocol, faults: FaultAssignment, slots: Optional[Sequence[int]] = None,
                alphabet=None) -> "AdversaryBehaviorSpace":
        n = protocol.params.n
        byz = tuple(sorted(faults.byzantine))
        receivers = tuple(p for p in range(n) if p not in faults.byzantine)
        if slots is None:
            slots = range(protocol.slot_budget() - 1)
        return cls(byz, receivers, tuple(slots), alphabet, protocol)

    def channels(self) -> List[Tuple[int, int, int]]:
        return [(t, b, q) for t in self.slots for b in self.byzantine for q in self.receivers]

    def letters(self, t: int, b: int, q: int):
        if self.alphabet is not None:
            return self.alphabet
        return self.protocol.byzantine_alphabet(t, b, q)

    @property
    def count(self) -> int:
        return prod(len(self.letters(*c)) for c in self.channels())

    def behavior(self, index: int) -> Dict[int, List[Message]]:
        """Byzantine messages per slot; the first channel is the most significant digit."""
        script: Dict[int, List[Message]] = defaultdict(list)
        chans = self.channels()
        digits = []
        for c in reversed(chans):
            letters = self.letters(*c)
            index, d = divmod(index, len(letters))
            digits.append(letters[d])
        for (t, b, q), letter in zip(chans, reversed(digits)):
            script[t].extend(Message(b, q, t, payload, sigs) for payload, sigs in letter)
        return dict(script)


def enumerate_adversary_executions(protocol: Protocol, inputs: Mapping[int, int], faults: FaultAssignment,
                                   space: Optional[AdversaryBehaviorSpace] = None,
                                   max_slots: Optional[int] = None, guard: Optional[int] = None,
                                   reverse: bool = False,
                                   base: Optional[ScriptedAdversary] = None) -> Iterator[ExecutionTrace]:
    """One trace per behaviour in lexicographic order (reverse=True walks it backwards).

    ``base`` supplies fixed moves (e.g. a replayed prefix) merged under each behaviour.
    """
    space = space or AdversaryBehaviorSpace.for_run(protocol, faults)
    total = space.count
    limit = guard_limit(guard)
    if total > limit:
        raise EnumerationTooLarge(f"{total} adversary behaviours exceed the enumeration guard {limit}")
    order = range(total - 1, -1, -1) if reverse else range(total)
    for i in order:
        script = space.behavior(i)
        if base is not None:
            merged = {t: list(v) for t, v in base.byzantine.items()}
            for t, v in script.items():
                merged.setdefault(t, []).extend(v)
            adv = ScriptedAdversary(merged, base.crash_deliver, base.drop)
        else:
            adv = ScriptedAdversary(script)
        machines = protocol.machines(inputs)
        yield run_lockstep(protocol.params, machines, faults, adv, max_slots or protocol.slot_budget(),
                           inputs=dict(inputs))


# -- joint-state exploration --------------------------------------------------------

class Outcome(NamedTuple):
    state: object
    out: Tuple[Message, ...]
    mult: int
    option: Optional[Tuple[Tuple[Message, ...], Tuple[Message, ...]]] = None
    routed: tuple = ()  # per tracked receiver, the messages of ``out`` addressed to it


class Config(NamedTuple):
    """A joint configuration between slots.

    While the run is in progress ``pending`` holds, per tracked processor, the
    id of its interned outcome list for the next slot: two configurations with
    the same ids have exactly the same futures, so they are merged even if the
    underlying states or inboxes differ.  After the last slot ``states`` holds
    the final local states instead.  ``tag`` counts correct inputs (zeros, ones).
    """

    pending: Optional[Tuple[int, ...]]
    states: Optional[tuple]
    tag: Tuple[int, int]


@dataclass
class Exploration:
    """Final layer of an exploration plus bookkeeping for witnesses."""

    explorer: "Explorer"
    final: Dict[Config, int]
    layers: List[Dict[Config, Tuple[Config, Tuple[int, ...]]]] = field(default_factory=list)
    start: int = 0
    end: int = 0
    roots: Dict[Config, Tuple[tuple, tuple]] = field(default_factory=dict)
    initial_inputs: Dict[Config, Dict[int, int]] = field(default_factory=dict)
    peak: int = 0
    fixed_first: bool = False

    @property
    def executions(self) -> int:
        return sum(self.final.values())

    def outputs(self, config: Config) -> Dict[int, Optional[int]]:
        ex = self.explorer
        res = {}
        for i, p in enumerate(ex.tracked):
            if p in ex.correct:
                o = ex.protocol.output(config.states[i])
                res[p] = None if o is None else o.value
        return res

    def path(self, config: Config) -> List[Tuple[Config, Tuple[int, ...]]]:
        """[(root, ()), (config after start, choice), ...] where choice indexes each receiver's outcome list."""
        chain = []
        cur = config
        for layer in reversed(self.layers):
            parent, choice = layer[cur]
            chain.append((cur, choice))
            cur = parent
        chain.reverse()
        return [(cur, ())] + chain

    def witness(self, config: Config) -> ExecutionTrace:
        """A concrete netsim trace reaching ``config`` (explorations started from inputs only)."""
        ex = self.explorer
        chain = self.path(config)
        root = chain[0][0]
        if root not in self.initial_inputs:
            raise ConfigError("witnesses are only available for explorations started from inputs")
        inputs = dict(self.initial_inputs[root])
        states, inflight = self.roots[root]
        byz: Dict[int, List[Message]] = defaultdict(list)
        crash: Dict[int, Dict[int, List[Message]]] = defaultdict(lambda: defaultdict(list))
        parent = root
        for step, (cfg, choice) in enumerate(chain[1:]):
            t = self.start + step
            first = self.fixed_first and t == self.start
            combo = []
            for i, s in enumerate(states):
                target = ex.registry[parent.pending[i]][choice[i]]
                raw = ex._compute(i, t, s, inflight[i], first, keep_options=True)
                hit = next(oc for oc in raw if (oc.state, oc.out, oc.mult) == tuple(target[:3]))
                combo.append(hit)
                if hit.option is not None:
                    b_msgs, c_msgs = hit.option
                    byz[t - 1].extend(b_msgs)
                    for m in c_msgs:
                        crash[t - 1][m.sender].append(m)
            states = tuple(oc.state for oc in combo)
            inflight = ex._route(t, combo)
            parent = cfg
        for p in range(ex.params.n):
            inputs.setdefault(p, 0)
        adv = ScriptedAdversary(dict(byz), {t: dict(v) for t, v in crash.items()})
        machines = ex.protocol.machines(inputs)
        return run_lockstep(ex.params, machines, ex.faults, adv, self.end + 1, inputs=inputs, partial=True)


class Explorer:
    """Joint-state model checker over Byzantine and crash behaviours.

    Omission faults are not modelled here (use netsim directly).
    """

    def __init__(self, protocol: Protocol, faults: FaultAssignment, alphabet=None,
                 guard: Optional[int] = None, witnesses: bool = True, reverse: bool = False):
        if faults.omission:
            raise ConfigError("the explorer does not model omission faults")
        self.protocol = protocol
        self.params: SystemParams = protocol.params
        self.faults = faults
        n = self.params.n
        self.tracked = tuple(p for p in range(n) if p not in faults.byzantine)
        self.index = {p: i for i, p in enumerate(self.tracked)}
        self.correct = frozenset(p for p in self.tracked if p not in faults.crash)
        self.byzantine = tuple(sorted(faults.byzantine))
        self.alphabet = alphabet
        self.guard = guard_limit(guard)
        self.witnesses = witnesses
        self.reverse = reverse
        self.registry: List[Tuple[Outcome, ...]] = []
        self._intern: Dict[tuple, int] = {}
        self._cache: Dict = {}
        self._fast: Dict = {}
        self._byz_cache: Dict = {}

    def _letters(self, t: int, b: int, q: int):
        return self.alphabet if self.alphabet is not None else self.protocol.byzantine_alphabet(t, b, q)

    def _byz_options(self, t: int, q: int) -> List[Tuple[Message, ...]]:
        """Byzantine messages sent at slot t to q, one entry per behaviour."""
        key = (t, q)
        if key not in self._byz_cache:
            per_sender = []
            for b in self.byzantine:
                per_sender.append([tuple(Message(b, q, t, payload, sigs) for payload, sigs in letter)
                                   for letter in self._letters(t, b, q)])
            opts = [tuple(m for part in combo for m in part) for combo in itertools.product(*per_sender)]
            if self.reverse:
                opts.reverse()
            self._byz_cache[key] = opts
        return self._byz_cache[key]

    def _compute(self, i: int, t: int, state, inflight_i, first: bool, keep_options: bool = False):
        """Distinct (next state, outbox) of tracked processor i at slot t over every behaviour on its inbox."""
        p = self.tracked[i]
        if state is None:
            return [Outcome(None, (), 1, None)]
        mand, opt = inflight_i
        byz = [()] if first or t == 0 else self._byz_options(t - 1, p)
        subsets = [()]
        for m in opt:
            subsets = subsets + [s + (m,) for s in subsets]
        if self.reverse:
            subsets.reverse()
        crash_at = self.faults.crash.get(p)
        proto = self.protocol
        groups: Dict = {}
        if not proto.listens(p, t):
            out, ns = proto.on_slot(state, t, tuple(sorted(mand, key=Message.sort_key)))
            groups[(ns, out)] = [len(byz) * len(subsets), None]
        else:
            for b_msgs in byz:
                for c_msgs in subsets:
                    inbox = tuple(sorted(mand + c_msgs + b_msgs, key=Message.sort_key))
                    out, ns = proto.on_slot(state, t, inbox)
                    g = groups.get((ns, out))
                    if g is None:
                        groups[(ns, out)] = [1, (b_msgs, c_msgs)]
                    else:
                        g[0] += 1
        res = []
        for (ns, out), (mult, option) in groups.items():
            if crash_at is not None and t >= crash_at:
                ns = None
            res.append(Outcome(ns, out, mult, option if keep_options else None))
        return res

    def _pending(self, i: int, t: int, state, inflight_i, first: bool) -> int:
        key = (i, t, state, inflight_i, first)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        res = tuple(self._compute(i, t, state, inflight_i, first))
        content = (i, res)
        oid = self._intern.get(content)
        if oid is None:
            oid = len(self.registry)
            entry = tuple(oc._replace(routed=self._split(oc.out)) for oc in res)
            self.registry.append(entry)
            self._intern[content] = oid
        self._cache[key] = oid
        return oid

    def _split(self, out: Sequence[Message]) -> tuple:
        buckets = [[] for _ in self.tracked]
        for m in out:
            j = self.index.get(m.receiver)
            if j is not None:
                buckets[j].append(m)
        return tuple(tuple(sorted(b, key=Message.sort_key)) for b in buckets)

    def _route(self, t: int, outcomes: Sequence[Outcome]):
        buckets_m = [[] for _ in self.tracked]
        buckets_o = [[] for _ in self.tracked]
        for i, oc in enumerate(outcomes):
            optional = self.faults.crash.get(self.tracked[i]) == t
            for m in oc.out:
                j = self.index.get(m.receiver)
                if j is None:
                    continue
                (buckets_o if optional else buckets_m)[j].append(m)
        return tuple((tuple(sorted(a, key=Message.sort_key)), tuple(sorted(b, key=Message.sort_key)))
                     for a, b in zip(buckets_m, buckets_o))

    def _successors(self, t: int, cfg: Config, last: bool, crash_now: Sequence[bool]):
        """Yield (successor, multiplicity, choice) for one configuration at slot t."""
        per = [self.registry[oid] for oid in cfg.pending]
        m = len(per)
        # per outcome, the ids of the buckets it routes to each receiver (transposed per combination below)
        rows = [[tuple(map(id, oc.routed)) for oc in lst] for lst in per] if not last else None
        for choice in itertools.product(*(range(len(lst)) for lst in per)):
            combo = [lst[c] for lst, c in zip(per, choice)]
            mult = 1
            for oc in combo:
                mult *= oc.mult
            if last:
                yield Config(None, tuple(oc.state for oc in combo), cfg.tag), mult, choice
                continue
            ids = []
            columns = tuple(zip(*[r[c] for r, c in zip(rows, choice)]))
            for j in range(m):
                oc_j = combo[j]
                key = (j, id(oc_j), columns[j])
                oid = self._fast.get(key)
                if oid is None:
                    parts = tuple(oc.routed[j] for oc in combo)
                    mand = tuple(x for part, c in zip(parts, crash_now) if not c for x in part)
                    opt = tuple(x for part, c in zip(parts, crash_now) if c for x in part)
                    oid = self._pending(j, t + 1, oc_j.state, (mand, opt), False)
                    self._fast[key] = oid
                ids.append(oid)
            yield Config(tuple(ids), None, cfg.tag), mult, choice

    def initial(self, inputs_list: Optional[Sequence[Mapping[int, int]]] = None):
        """(states, inflight, tag, inputs) for the given (or all) input vectors of tracked processors."""
        if inputs_list is None:
            inputs_list = [dict(zip(self.tracked, bits))
                           for bits in itertools.product((0, 1), repeat=len(self.tracked))]
        empty = tuple(((), ()) for _ in self.tracked)
        starts = []
        for inputs in inputs_list:
            states = tuple(self.protocol.init(p, inputs[p]) for p in self.tracked)
            c0 = sum(1 for p in self.correct if inputs[p] == 0)
            starts.append((states, empty, (c0, len(self.correct) - c0), dict(inputs)))
        return starts

    def from_prefix(self, prefix: ExecutionTrace):
        """The start tuple reached by a recorded prefix, and the next slot."""
        length = len(prefix.slots)
        states = []
        for p in self.tracked:
            crash_at = self.faults.crash.get(p)
            if crash_at is not None and crash_at < length:
                states.append(None)
            else:
                states.append(replay(self.protocol, prefix, p, length)[0])
        last = prefix.slots[length - 1] if length else []
        buckets = [[] for _ in self.tracked]
        for m in last:
            j = self.index.get(m.receiver)
            if j is not None:
                buckets[j].append(m)
        inflight = tuple((tuple(sorted(b, key=Message.sort_key)), ()) for b in buckets)
        c0 = sum(1 for p in self.correct if prefix.inputs[p] == 0)
        return [(tuple(states), inflight, (c0, len(self.correct) - c0), dict(prefix.inputs))], length

    def next_states(self, cfg: Config) -> List[List[object]]:
        """Per tracked processor, the distinct states it may be in after the pending slot."""
        return [list(dict.fromkeys(oc.state for oc in self.registry[oid])) for oid in cfg.pending]

    def explore(self, starts=None, start: int = 0, end: Optional[int] = None,
                fixed_first: bool = False, layer: Optional[Mapping[Config, int]] = None,
                open_end: bool = False) -> Exploration:
        """Step every configuration from slot ``start`` through slot ``end`` (inclusive).

        ``layer`` resumes from pending configurations of an earlier exploration
        (whose next slot is ``start``) instead of building them from ``starts``.
        With ``open_end`` the final configurations stay pending for slot
        ``end + 1`` so that they can be resumed later.
        """
        if end is None:
            end = self.protocol.slot_budget() - 1
        result = Exploration(self, {}, start=start, end=end, fixed_first=fixed_first)
        if layer is not None:
            return self._run(result, dict(layer), start, end, open_end)
        if starts is None:
            starts = self.initial()
        layer: Dict[Config, int] = defaultdict(int)
        for states, inflight, tag, inputs in starts:
            if start > end:
                cfg = Config(None, states, tag)
            else:
                cfg = Config(tuple(self._pending(i, start, s, inflight[i], fixed_first)
                                   for i, s in enumerate(states)), None, tag)
            layer[cfg] += 1
            result.roots.setdefault(cfg, (states, inflight))
            result.initial_inputs.setdefault(cfg, inputs)
        return self._run(result, layer, start, end, open_end)

    def _run(self, result: Exploration, layer: Dict[Config, int], start: int, end: int,
             open_end: bool = False) -> Exploration:
        for t in range(start, end + 1):
            nxt: Dict[Config, int] = defaultdict(int)
            parents: Dict[Config, Tuple[Config, Tuple[int, ...]]] = {}
            last = t == end and not open_end
            crash_now = tuple(self.faults.crash.get(p) == t for p in self.tracked)
            for cfg, count in layer.items():
                for new, mult, choice in self._successors(t, cfg, last, crash_now):
                    nxt[new] += count * mult
                    if self.witnesses and new not in parents:
                        parents[new] = (cfg, choice)
                if len(nxt) > self.guard:
                    raise EnumerationTooLarge(f"more than {self.guard} joint configurations at slot {t}")
            self._cache.clear()
            self._fast.clear()
            layer = nxt
            result.peak = max(result.peak, len(layer))
            if self.witnesses:
                result.layers.append(parents)
        result.final = dict(layer)
        return result


# -- property checking over explorations ---------------------------------------------

@dataclass
class ExhaustiveReport:
    protocol: str
    faults: FaultAssignment
    executions: int
    configurations: int
    violations: List[Tuple[str, ExecutionTrace]] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"protocol": self.protocol, "faults": self.faults.to_json(), "executions": str(self.executions),
                "configurations": self.configurations, "holds": self.holds,
                "violations": [{"reason": r, "trace": t.to_json()} for r, t in self.violations]}


def check_exhaustive(protocol: Protocol, faults: FaultAssignment,
                     verdict: Callable[[Dict[int, Optional[int]], Tuple[int, int]], Optional[str]],
                     alphabet=None, guard: Optional[int] = None, max_witnesses: int = 3) -> ExhaustiveReport:
    """Explore every behaviour and input vector; ``verdict`` returns a reason string for a violation."""
    ex = Explorer(protocol, faults, alphabet, guard, witnesses=False)
    res = ex.explore()
    report = ExhaustiveReport(protocol.name, faults, res.executions, len(res.final))
    if not any(verdict(res.outputs(cfg), cfg.tag) for cfg in res.final):
        return report
    # re-run with parent pointers to reconstruct witness traces
    ex = Explorer(protocol, faults, alphabet, guard, witnesses=True)
    res = ex.explore()
    for cfg in sorted(res.final, key=repr):
        reason = verdict(res.outputs(cfg), cfg.tag)
        if reason:
            report.violations.append((reason, res.witness(cfg)))
            if len(report.violations) >= max_witnesses:
                break
    return report


def ba_config_verdict(outputs: Dict[int, Optional[int]], tag: Tuple[int, int]) -> Optional[str]:
    if any(v is None for v in outputs.values()):
        return "termination"
    values = set(outputs.values())
    if len(values) > 1:
        return "agreement"
    c0, c1 = tag
    if (c1 == 0 and values != {0}) or (c0 == 0 and values != {1}):
        return "validity"
    return None


def epsilon_config_verdict(n: int, epsilon):
    from .checkers import epsilon_agreement_outcome

    def verdict(outputs, tag):
        if any(v is None for v in outputs.values()):
            return "termination"
        holds, v, _ = epsilon_agreement_outcome(list(outputs.values()), n, epsilon)
        if not holds:
            return "epsilon-agreement"
        c0, c1 = tag
        bound = n * epsilon
        for x, other in ((0, c1), (1, c0)):
            if other < bound and v != x:
                return "epsilon-validity"
        return None
    return verdict


# -- valency -------------------------------------------------------------------------

def valency_of(exploration: Exploration, already: Mapping[int, int] = None) -> Valency:
    values = set()
    for cfg in exploration.final:
        for p, v in exploration.outputs(cfg).items():
            if v is None:
                raise NonTermination(f"correct processor {p} has no output in some extension")
            values.add(v)
    return Valency.of(values)


def compute_valency(prefix: ExecutionTrace, protocol: Protocol, alphabet=None, guard: Optional[int] = None,
                    method: str = "explore", reverse: bool = False) -> Valency:
    """Valency of a run prefix over every continuation of the Byzantine (and crash) behaviour.

    ``method="enumerate"`` re-runs one full simulation per continuation
    behaviour instead of exploring joint states.
    """
    faults = prefix.faults
    length = len(prefix.slots)
    budget = protocol.slot_budget()
    space = AdversaryBehaviorSpace.for_run(protocol, faults, range(length, budget - 1), alphabet)
    limit = guard_limit(guard)
    if space.count > limit:
        raise EnumerationTooLarge(f"{space.count} continuation behaviours exceed the enumeration guard {limit}")
    if method == "explore":
        ex = Explorer(protocol, faults, alphabet, guard, witnesses=False, reverse=reverse)
        starts, start = ex.from_prefix(prefix)
        return valency_of(ex.explore(starts, start, fixed_first=True))
    if method != "enumerate":
        raise ConfigError(f"unknown valency method {method!r}")
    base_byz = defaultdict(list)
    base_crash = defaultdict(dict)
    for t, msgs in enumerate(prefix.slots):
        for m in msgs:
            if m.sender in faults.byzantine:
                base_byz[t].append(m)
            elif faults.crash.get(m.sender) == t:
                base_crash[t].setdefault(m.sender, []).append(m)
    base = ScriptedAdversary(dict(base_byz), dict(base_crash))
    values = set()
    correct = [p for p in range(protocol.params.n) if faults.is_correct(p)]
    if any(length <= c < budget - 1 for c in faults.crash.values()):
        raise ConfigError("literal valency enumeration does not branch on crash deliveries after the prefix")
    for trace in enumerate_adversary_executions(protocol, prefix.inputs, faults, space, budget, guard, reverse, base):
        for p in correct:
            if p not in trace.outputs or trace.outputs[p].value is None:
                raise NonTermination(f"correct processor {p} has no output in some extension")
            values.add(trace.outputs[p].value)
    return Valency.of(values)
