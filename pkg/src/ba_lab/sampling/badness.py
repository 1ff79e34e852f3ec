"""Badness of sampling choices: exact single-configuration kernel and verifiers."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..core import BALabError, BOT, ConfigError, ONE, ZERO, CommitteeNode, format_fraction
from .choice import STEPS, SamplingChoice, response_set, sampled_nodes, step_alphabet

BYZ = None
STATUS_ORDER = (BYZ, ZERO, ONE, BOT)  # lexicographic order used by every enumeration
PER_STEP_DIVISOR = 24
WHOLE_DIVISOR = 4
MEMBER_GUARD = 16


class EnumerationTooLarge(BALabError):
    pass


@dataclass(frozen=True)
class StepConfiguration:
    """Fault status and response value of each response-set member (None = Byzantine)."""

    step: int
    members: Tuple[int, ...]
    assignment: Tuple[Optional[int], ...]

    def __post_init__(self):
        if len(self.members) != len(self.assignment):
            raise ConfigError("assignment must cover the response set")
        legal = set(STATUS_ORDER if self.step in (2, 5) else STATUS_ORDER[:3])
        if any(a not in legal for a in self.assignment):
            raise ConfigError(f"illegal status in step {self.step} configuration: {self.assignment}")

    def status(self) -> Dict[int, Optional[int]]:
        return dict(zip(self.members, self.assignment))

    def is_byzantine(self, p: int) -> bool:
        return p in self.members and self.status()[p] is BYZ

    def to_json(self) -> dict:
        names = {BYZ: "byz", ZERO: "0", ONE: "1", BOT: "bot"}
        return {"step": self.step, "members": list(self.members),
                "assignment": [names[a] for a in self.assignment]}


@dataclass
class BadnessVerdict:
    bad_for: FrozenSet[int]
    is_bad: bool
    worst_deviation: Fraction


@dataclass
class StepVerdict:
    path: Tuple[int, ...]
    step: int
    is_bad: bool
    worst_deviation: Fraction
    configurations: int
    witness: Optional[StepConfiguration] = None
    mode: str = "exhaustive"

    def to_json(self) -> dict:
        return {"node": list(self.path), "step": self.step, "verdict": "bad" if self.is_bad else "not-bad",
                "worst_deviation": format_fraction(self.worst_deviation), "configurations": self.configurations,
                "witness": self.witness.to_json() if self.witness else None, "mode": self.mode}


def threshold(node_n: int, epsilon: Fraction, divisor: int = PER_STEP_DIVISOR) -> Fraction:
    return node_n * Fraction(epsilon) / divisor


# -- exact single-configuration kernel ----------------------------------------

def alpha_fraction(config: StepConfiguration, b: int) -> Fraction:
    """Fraction of the response set that is correct with response value b."""
    return Fraction(sum(1 for a in config.assignment if a == b), len(config.members))


def alpha_fraction_sampled(config: StepConfiguration, b: int, sampler: int, smp_step: Mapping[int, Sequence[int]]) -> Fraction:
    """Fraction of the sampler's k sample slots (with multiplicity) that are correct with value b."""
    samples = smp_step[sampler]
    status = config.status()
    return Fraction(sum(1 for q in samples if status.get(q, BYZ) == b), len(samples))


def sampler_deviation(config: StepConfiguration, sampler: int, smp_step) -> Fraction:
    return max(abs(alpha_fraction(config, b) - alpha_fraction_sampled(config, b, sampler, smp_step))
               for b in (ZERO, ONE))


def is_bad_for(sampler: int, config: StepConfiguration, smp_step, epsilon) -> bool:
    """Deviation of at least epsilon/2 for some b (inclusive boundary)."""
    return sampler_deviation(config, sampler, smp_step) >= Fraction(epsilon) / 2


def correct_samplers(config: StepConfiguration, samplers) -> List[int]:
    """Samplers outside the response set have no status in z and count as correct."""
    status = config.status()
    return [s for s in samplers if not (s in status and status[s] is BYZ)]


def evaluate_configuration(config: StepConfiguration, smp_step: Mapping[int, Sequence[int]], epsilon,
                           node_n: int, divisor: int = PER_STEP_DIVISOR) -> BadnessVerdict:
    """The shared kernel: which correct samplers the step choice is bad for under ``config``."""
    bad = []
    worst = Fraction(0)
    half = Fraction(epsilon) / 2
    for s in correct_samplers(config, sorted(smp_step)):
        dev = sampler_deviation(config, s, smp_step)
        worst = max(worst, dev)
        if dev >= half:
            bad.append(s)
    return BadnessVerdict(frozenset(bad), len(bad) >= threshold(node_n, epsilon, divisor), worst)


def iter_configurations(step: int, members: Sequence[int]) -> Iterator[StepConfiguration]:
    alphabet = STATUS_ORDER[:step_alphabet(step)]
    for combo in itertools.product(alphabet, repeat=len(members)):
        yield StepConfiguration(step, tuple(members), combo)


def random_configuration(step: int, members: Sequence[int], rng: random.Random) -> StepConfiguration:
    alphabet = STATUS_ORDER[:step_alphabet(step)]
    return StepConfiguration(step, tuple(members), tuple(rng.choice(alphabet) for _ in members))


def config_index(config: StepConfiguration) -> int:
    """Position of ``config`` in the lexicographic enumeration order."""
    a = step_alphabet(config.step)
    idx = 0
    for s in config.assignment:
        idx = idx * a + STATUS_ORDER.index(s)
    return idx


# -- vectorised exhaustive enumeration ---------------------------------------

def _count_matrix(smp_step: Mapping[int, Sequence[int]], members: Sequence[int]) -> Tuple[List[int], np.ndarray]:
    samplers = sorted(smp_step)
    col = {q: j for j, q in enumerate(members)}
    mat = np.zeros((len(samplers), len(members)), dtype=np.int64)
    for i, s in enumerate(samplers):
        for q in smp_step[s]:
            if q not in col:
                raise ConfigError(f"sampler {s} samples {q}, which is outside the response set")
            mat[i, col[q]] += 1
    return samplers, mat


def _batches(total: int, m: int, a: int, batch: int = 1 << 15):
    weights = a ** np.arange(m - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, batch):
        idx = np.arange(start, min(total, start + batch), dtype=np.int64)
        codes = (idx[:, None] // weights[None, :]) % a
        yield start, codes


def exhaustive_bad_counts(smp_step: Mapping[int, Sequence[int]], members: Sequence[int], step: int, epsilon,
                          guard: int = MEMBER_GUARD):
    """For every configuration (lexicographic), the number of correct samplers it is bad for.

    Returns (bad_counts, worst_numerators) with deviation numerators over m*k.
    """
    m = len(members)
    if m > guard:
        raise EnumerationTooLarge(f"response set of {m} members exceeds the enumeration guard of {guard}")
    eps = Fraction(epsilon)
    samplers, cnt = _count_matrix(smp_step, members)
    ks = cnt.sum(axis=1)
    if len(set(ks.tolist())) > 1:
        raise ConfigError("all samplers must draw the same number of samples")
    k = int(ks[0]) if len(ks) else 1
    a = step_alphabet(step)
    total = a ** m
    col = {q: j for j, q in enumerate(members)}
    sampler_col = np.array([col.get(s, -1) for s in samplers], dtype=np.int64)
    counts = np.empty(total, dtype=np.int64)
    worst = np.empty(total, dtype=np.int64)
    lhs_scale = 2 * eps.denominator
    rhs = eps.numerator * m * k
    for start, codes in _batches(total, m, a):
        correct = np.ones((codes.shape[0], len(samplers)), dtype=bool)
        inside = sampler_col >= 0
        if inside.any():
            correct[:, inside] = codes[:, sampler_col[inside]] != 0
        bad = np.zeros_like(correct)
        dev_max = np.zeros(correct.shape, dtype=np.int64)
        for code in (1, 2):  # statuses "correct with 0" and "correct with 1"
            ind = (codes == code).astype(np.int64)
            pop = ind.sum(axis=1)[:, None] * k
            samp = ind @ cnt.T * m
            dev = np.abs(pop - samp)
            dev_max = np.maximum(dev_max, dev)
            bad |= dev * lhs_scale >= rhs
        bad &= correct
        counts[start:start + codes.shape[0]] = bad.sum(axis=1)
        worst[start:start + codes.shape[0]] = np.where(correct, dev_max, 0).max(axis=1, initial=0)
    return counts, worst, m * k


def verify_step_choice_exhaustive(smp_step: Mapping[int, Sequence[int]], members: Sequence[int], step: int,
                                  epsilon, node_n: Optional[int] = None, divisor: int = PER_STEP_DIVISOR,
                                  path=(), guard: int = MEMBER_GUARD) -> StepVerdict:
    """Enumerate all 3^m (or 4^m) configurations; bad iff some one reaches the threshold."""
    node_n = len(smp_step) if node_n is None else node_n
    counts, worst, scale = exhaustive_bad_counts(smp_step, members, step, epsilon, guard)
    thr = threshold(node_n, epsilon, divisor)
    # count >= node_n * eps / divisor, in integers
    eps = Fraction(epsilon)
    bad_mask = counts * divisor * eps.denominator >= node_n * eps.numerator
    witness = None
    if bad_mask.any():
        idx = int(np.argmax(bad_mask))
        witness = config_from_index(idx, step, members)
    return StepVerdict(tuple(path), step, bool(bad_mask.any()), Fraction(int(worst.max(initial=0)), scale),
                       len(counts), witness)


def exhaustive_bad_mask(smp_step, members, step, epsilon, node_n=None, divisor=PER_STEP_DIVISOR) -> np.ndarray:
    node_n = len(smp_step) if node_n is None else node_n
    counts, _, _ = exhaustive_bad_counts(smp_step, members, step, epsilon)
    eps = Fraction(epsilon)
    return counts * divisor * eps.denominator >= node_n * eps.numerator


def config_from_index(idx: int, step: int, members: Sequence[int]) -> StepConfiguration:
    a = step_alphabet(step)
    digits = []
    for _ in members:
        idx, r = divmod(idx, a)
        digits.append(STATUS_ORDER[r])
    return StepConfiguration(step, tuple(members), tuple(reversed(digits)))


def brute_force_step_verdict(smp_step, members, step, epsilon, node_n=None, divisor=PER_STEP_DIVISOR) -> bool:
    """Independent recount with the exact kernel over itertools.product (slow; oracle only)."""
    node_n = len(smp_step) if node_n is None else node_n
    return any(evaluate_configuration(z, smp_step, epsilon, node_n, divisor).is_bad
               for z in iter_configurations(step, members))


# -- whole-choice verification ------------------------------------------------

def _step_keys(smp: SamplingChoice):
    for node in sampled_nodes(smp.n):
        for step in STEPS:
            yield node, step


def verify_choice_exhaustive(smp: SamplingChoice, epsilon=None, divisor: int = PER_STEP_DIVISOR,
                             stop_on_bad: bool = False) -> List[StepVerdict]:
    eps = Fraction(epsilon if epsilon is not None else smp.epsilon)
    out = []
    for node, step in _step_keys(smp):
        v = verify_step_choice_exhaustive(smp.step_choice(node.path, step), response_set(node, step), step, eps,
                                          node_n=len(node.members), divisor=divisor, path=node.path)
        out.append(v)
        if stop_on_bad and v.is_bad:
            break
    return out


def estimate_badness_monte_carlo(smp: SamplingChoice, trials: int, seed: int, epsilon=None,
                                 divisor: int = PER_STEP_DIVISOR, record: bool = False):
    """Per (node path, step): fraction of uniformly drawn configurations under which the step is bad.

    With ``record=True`` also returns the evaluated (path, step, config, verdict) tuples.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    eps = Fraction(epsilon if epsilon is not None else smp.epsilon)
    rng = random.Random(seed)
    rates: Dict[Tuple[Tuple[int, ...], int], Fraction] = {}
    evaluated = []
    for node, step in _step_keys(smp):
        members = response_set(node, step)
        smp_step = smp.step_choice(node.path, step)
        hits = 0
        for _ in range(trials):
            z = random_configuration(step, members, rng)
            verdict = evaluate_configuration(z, smp_step, eps, len(node.members), divisor)
            hits += verdict.is_bad
            if record:
                evaluated.append((node.path, step, z, verdict))
        rates[(node.path, step)] = Fraction(hits, trials)
    return (rates, evaluated) if record else rates


def verify_choice_monte_carlo(smp: SamplingChoice, trials: int, seed: int, epsilon=None,
                              divisor: int = PER_STEP_DIVISOR) -> List[StepVerdict]:
    eps = Fraction(epsilon if epsilon is not None else smp.epsilon)
    rng = random.Random(seed)
    out = []
    for node, step in _step_keys(smp):
        members = response_set(node, step)
        smp_step = smp.step_choice(node.path, step)
        worst = Fraction(0)
        witness = None
        for _ in range(trials):
            z = random_configuration(step, members, rng)
            verdict = evaluate_configuration(z, smp_step, eps, len(node.members), divisor)
            worst = max(worst, verdict.worst_deviation)
            if verdict.is_bad and witness is None:
                witness = z
        out.append(StepVerdict(node.path, step, witness is not None, worst, trials, witness, "monte-carlo"))
    return out


def whole_choice_bad_for(smp: SamplingChoice, configs: Mapping[Tuple[Tuple[int, ...], int], StepConfiguration],
                         epsilon=None) -> Dict[Tuple[int, ...], FrozenSet[int]]:
    """Per node: processors for which some step deviates by at least epsilon/2."""
    eps = Fraction(epsilon if epsilon is not None else smp.epsilon)
    out: Dict[Tuple[int, ...], set] = {}
    for node, step in _step_keys(smp):
        z = configs[(node.path, step)]
        verdict = evaluate_configuration(z, smp.step_choice(node.path, step), eps, len(node.members))
        out.setdefault(node.path, set()).update(verdict.bad_for)
    return {k: frozenset(v) for k, v in out.items()}
