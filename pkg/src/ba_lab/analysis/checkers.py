"""Property checkers over execution traces: BA, epsilon-BA and the Gradecast properties."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

from ..core import BALabError, ExecutionTrace, SystemParams, decode_value


class Incomplete(BALabError):
    """A correct processor has no output in the trace."""


@dataclass
class CheckResult:
    holds: bool
    violations: List[str] = field(default_factory=list)

    def __bool__(self):
        return self.holds

    def to_json(self) -> dict:
        return {"holds": self.holds, "violations": list(self.violations)}


def ba_verdict(outputs: Mapping[int, Optional[int]], inputs: Mapping[int, int]) -> CheckResult:
    """Termination, Agreement and Validity over correct processors' outputs and inputs."""
    problems = []
    missing = sorted(p for p, v in outputs.items() if v is None)
    if missing:
        problems.append(f"termination: processors {missing} did not output")
    values = {v for v in outputs.values() if v is not None}
    if len(values) > 1:
        problems.append(f"agreement: correct outputs {dict(sorted(outputs.items()))}")
    ins = set(inputs.values())
    if len(ins) == 1 and values and values != ins:
        problems.append(f"validity: unanimous input {next(iter(ins))} but outputs {sorted(values)}")
    return CheckResult(not problems, problems)


def _correct_outputs(trace: ExecutionTrace) -> Dict[int, Optional[int]]:
    return {p: (trace.outputs[p].value if p in trace.outputs else None) for p in trace.correct}


def check_ba(trace: ExecutionTrace) -> CheckResult:
    return ba_verdict(_correct_outputs(trace), {p: trace.inputs[p] for p in trace.correct})


def epsilon_agreement_outcome(values: Sequence[int], n: int, epsilon) -> Tuple[bool, Optional[int], int]:
    """(holds, majority value, number of dissenters) for a list of correct outputs."""
    eps = Fraction(epsilon)
    c0 = sum(1 for v in values if v == 0)
    c1 = len(values) - c0
    bound = n * eps
    if c0 == c1:
        ok = c0 < bound
        return ok, (0 if ok else None), c0
    v = 0 if c0 > c1 else 1
    dissent = min(c0, c1)
    return dissent < bound, v, dissent


def check_epsilon_agreement(trace: ExecutionTrace, params: Optional[SystemParams] = None) -> Tuple[bool, FrozenSet[int]]:
    """|X| < n*eps where X are the correct processors outputting other than the majority.

    On an exact split both candidate majorities are tried; X is then the
    processors outputting 1.
    """
    params = params or trace.params
    outs = _correct_outputs(trace)
    missing = [p for p, v in outs.items() if v is None]
    if missing:
        raise Incomplete(f"correct processors {missing} have no output")
    holds, v, _ = epsilon_agreement_outcome(list(outs.values()), params.n, params.epsilon)
    major = v if v is not None else 0
    return holds, frozenset(p for p, o in outs.items() if o != major)


def epsilon_validity_holds(inputs: Sequence[int], v: Optional[int], n: int, epsilon) -> bool:
    bound = n * Fraction(epsilon)
    for x in (0, 1):
        if sum(1 for i in inputs if i != x) < bound:
            return v == x
    return True


def check_epsilon_validity(trace: ExecutionTrace, params: Optional[SystemParams] = None, v: Optional[int] = None) -> bool:
    params = params or trace.params
    if v is None:
        holds, x = check_epsilon_agreement(trace, params)
        outs = _correct_outputs(trace)
        v = next((o for p, o in sorted(outs.items()) if p not in x), None)
    return epsilon_validity_holds([trace.inputs[p] for p in trace.correct], v, params.n, params.epsilon)


def check_gradecast(trace: ExecutionTrace) -> CheckResult:
    """Time-slot 1 Agreement, Validity+ and Knowledge of Agreement."""
    problems = []
    correct = set(trace.correct)
    sent1 = set()
    if len(trace.slots) > 1:
        for m in trace.slots[1] + (trace.dropped[1] if len(trace.dropped) > 1 else []):
            if m.sender in correct:
                v = decode_value(m.payload)
                if v is not None:
                    sent1.add(v)
    if len(sent1) > 1:
        problems.append("time-slot 1 agreement: correct processors echoed both values")
    outs = {p: trace.outputs.get(p) for p in correct}
    if any(o is None for o in outs.values()):
        problems.append("termination: a correct processor did not output")
        return CheckResult(False, problems)
    ins = {trace.inputs[p] for p in correct}
    if len(ins) == 1:
        v = next(iter(ins))
        if any((o.value, o.grade) != (v, 2) for o in outs.values()):
            problems.append(f"validity+: unanimous input {v} not output with grade 2")
    top = {o.value for o in outs.values() if o.grade == 2}
    if len(top) > 1 or (top and any(o.value not in top for o in outs.values())):
        problems.append("knowledge of agreement: a grade-2 value is not output by every correct processor")
    return CheckResult(not problems, problems)
