"""Named deterministic adversary strategies and a scripted adversary for replaying witnesses."""

from __future__ import annotations

from typing import Dict, List, Mapping, Optional, Sequence

from ..core import ConfigError, Message, decode_signed_output, decode_value, majority_value, \
    signed_output_payload, value_payload
from ..netsim import Action, Adversary, SlotView

STRATEGIES = ("silent", "crash-at", "equivocate-per-receiver", "flip-majority", "mirror")


class Silent(Adversary):
    name = "silent"


class CrashAt(Adversary):
    """Byzantine processors follow the protocol before slot ``t`` and are silent from then on."""

    def __init__(self, t: int):
        self.t = t
        self.name = f"crash-at:{t}"

    def act(self, view: SlotView) -> Action:
        if view.slot >= self.t:
            return Action()
        return Action(byzantine=[m for out in view.byzantine_honest.values() for m in out])


def _signs(out: Sequence[Message]) -> bool:
    return any(decode_signed_output(m.payload) is not None and m.signatures for m in out)


class EquivocatePerReceiver(Adversary):
    """Every slot: 0 to the lower-id half, 1 to the upper-id half (signed when the honest move is signed)."""

    name = "equivocate-per-receiver"

    def act(self, view: SlotView) -> Action:
        n = view.params.n
        half = (n + 1) // 2
        msgs = []
        for b in sorted(view.faults.byzantine):
            signed = _signs(view.byzantine_honest.get(b, ()))
            for q in range(n):
                if q == b:
                    continue
                v = 0 if q < half else 1
                if signed:
                    msgs.append(Message(b, q, view.slot, signed_output_payload(v), (b,)))
                else:
                    msgs.append(Message(b, q, view.slot, value_payload(v)))
        return Action(byzantine=msgs)


class FlipMajority(Adversary):
    """Send everyone the complement of the majority value correct processors are sending this slot."""

    name = "flip-majority"

    def act(self, view: SlotView) -> Action:
        tally = {0: 0, 1: 0}
        for m in view.correct_outbox:
            v = decode_value(m.payload)
            if v is None:
                v = decode_signed_output(m.payload)
            if v is not None:
                tally[v] += 1
        flip = 1 - majority_value(tally)
        msgs = [Message(b, q, view.slot, value_payload(flip))
                for b in sorted(view.faults.byzantine) for q in range(view.params.n) if q != b]
        return Action(byzantine=msgs)


class Mirror(Adversary):
    """Echo back to each processor the last value it sent to the Byzantine sender."""

    name = "mirror"

    def act(self, view: SlotView) -> Action:
        last: Dict[tuple, int] = {}
        for slot_msgs in list(view.history) + [view.correct_outbox]:
            for m in slot_msgs:
                if m.receiver in view.faults.byzantine:
                    v = decode_value(m.payload)
                    if v is None:
                        v = decode_signed_output(m.payload)
                    if v is not None:
                        last[(m.receiver, m.sender)] = v
        msgs = [Message(b, q, view.slot, value_payload(v)) for (b, q), v in sorted(last.items())]
        return Action(byzantine=msgs)


class ScriptedAdversary(Adversary):
    """Replays fixed per-slot Byzantine messages, crash deliveries and drops."""

    name = "scripted"

    def __init__(self, byzantine: Optional[Mapping[int, Sequence[Message]]] = None,
                 crash_deliver: Optional[Mapping[int, Mapping[int, Sequence[Message]]]] = None,
                 drop: Optional[Mapping[int, Sequence[Message]]] = None):
        self.byzantine = {t: list(v) for t, v in (byzantine or {}).items()}
        self.crash_deliver = {t: {p: list(ms) for p, ms in v.items()} for t, v in (crash_deliver or {}).items()}
        self.drop = {t: list(v) for t, v in (drop or {}).items()}

    def act(self, view: SlotView) -> Action:
        t = view.slot
        crash = None
        if view.crashing:
            chosen = self.crash_deliver.get(t, {})
            crash = {p: list(chosen.get(p, ())) for p in view.crashing}
        return Action(byzantine=list(self.byzantine.get(t, ())), crash_deliver=crash, drop=list(self.drop.get(t, ())))


def strategy(name: str, **kw) -> Adversary:
    """Look up a named strategy; ``crash-at`` takes ``t`` (also accepted as ``crash-at:T``)."""
    base, _, arg = name.partition(":")
    if base == "silent":
        return Silent()
    if base == "crash-at":
        t = kw.get("t", arg)
        if t in ("", None):
            raise ConfigError("crash-at needs a slot, e.g. crash-at:3")
        return CrashAt(int(t))
    if base == "equivocate-per-receiver":
        return EquivocatePerReceiver()
    if base == "flip-majority":
        return FlipMajority()
    if base == "mirror":
        return Mirror()
    raise ConfigError(f"unknown adversary strategy {name!r}; choose from {', '.join(STRATEGIES)}")


def strategy_suite(crash_slots: Sequence[int] = (0, 2)) -> List[Adversary]:
    return ([Silent()] + [CrashAt(t) for t in crash_slots]
            + [EquivocatePerReceiver(), FlipMajority(), Mirror()])
