"""Sampling choices: which k processors each processor queries, per node and step."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

from ..core import CommitteeNode, ConfigError, format_fraction, parse_fraction, partition_committees

STEPS = (1, 2, 3, 4, 5, 6)
Key = Tuple[Tuple[int, ...], int, int]  # (node path, step, sampler)


def sampled_nodes(n: int) -> List[CommitteeNode]:
    """Recursion nodes that need a sampling choice (committees larger than 2)."""
    out = []

    def walk(node):
        if len(node.members) <= 2:
            return
        out.append(node)
        for child in partition_committees(node):
            walk(child)

    walk(CommitteeNode.root(n))
    return out


def response_set(node: CommitteeNode, step: int) -> Tuple[int, ...]:
    if step in (1, 2, 4, 5):
        return node.members
    c1, c2 = partition_committees(node)
    if step == 3:
        return c1.members
    if step == 6:
        return c2.members
    raise ConfigError(f"step must be in 1..6, got {step}")


def step_alphabet(step: int) -> int:
    """Number of per-member statuses: Byzantine, 0, 1 (and bottom for steps 2 and 5)."""
    return 4 if step in (2, 5) else 3


@dataclass
class SamplingChoice:
    n: int
    k: int
    epsilon: Optional[Fraction] = None
    entries: Dict[Key, Tuple[int, ...]] = field(default_factory=dict)
    certificate: Optional[dict] = None

    def samples(self, path, step: int, sampler: int) -> Tuple[int, ...]:
        return self.entries[(tuple(path), step, sampler)]

    def step_choice(self, path, step: int) -> Dict[int, Tuple[int, ...]]:
        path = tuple(path)
        return {s: v for (p, st, s), v in self.entries.items() if p == path and st == step}

    def nodes(self) -> List[CommitteeNode]:
        return sampled_nodes(self.n)

    def validate(self):
        """Raise ConfigError unless every (node, step, sampler) has exactly k legal samples."""
        expected = set()
        for node in self.nodes():
            for step in STEPS:
                allowed = set(response_set(node, step))
                for sampler in node.members:
                    key = (node.path, step, sampler)
                    expected.add(key)
                    got = self.entries.get(key)
                    if got is None:
                        raise ConfigError(f"missing samples for node {list(node.path)} step {step} sampler {sampler}")
                    if len(got) != self.k:
                        raise ConfigError(f"sampler {sampler} at node {list(node.path)} step {step} has "
                                          f"{len(got)} samples, expected {self.k}")
                    if not set(got) <= allowed:
                        raise ConfigError(f"sampler {sampler} at node {list(node.path)} step {step} samples "
                                          f"outside the response set: {sorted(set(got) - allowed)}")
        extra = set(self.entries) - expected
        if extra:
            raise ConfigError(f"unexpected sampling entries: {sorted(extra)[:3]}")
        return self

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self._entries_json(), sort_keys=True).encode()).hexdigest()

    def _entries_json(self) -> List[dict]:
        return [{"node": list(path), "step": step, "sampler": s, "samples": list(v)}
                for (path, step, s), v in sorted(self.entries.items())]

    def to_json(self) -> dict:
        data = {"n": self.n, "k": self.k, "epsilon": format_fraction(self.epsilon),
                "entries": self._entries_json()}
        if self.certificate is not None:
            data["certificate"] = self.certificate
        return data

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, data: Mapping) -> "SamplingChoice":
        eps = data.get("epsilon")
        entries = {(tuple(e["node"]), e["step"], e["sampler"]): tuple(e["samples"]) for e in data["entries"]}
        return cls(data["n"], data["k"], None if eps is None else parse_fraction(eps), entries,
                   data.get("certificate"))

    @classmethod
    def load(cls, path) -> "SamplingChoice":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())


def random_choice(n: int, k: int, rng: random.Random, epsilon=None) -> SamplingChoice:
    """Uniform sampling choice: every sampler draws k members with replacement."""
    entries = {}
    for node in sampled_nodes(n):
        for step in STEPS:
            pool = response_set(node, step)
            for sampler in node.members:
                entries[(node.path, step, sampler)] = tuple(rng.choice(pool) for _ in range(k))
    return SamplingChoice(n, k, epsilon, entries)


def uniform_coverage_choice(n: int, k: int, epsilon=None) -> SamplingChoice:
    """Every sampler samples each response-set member equally often.

    Needs k divisible by every response-set size in the tree; then each
    sampled fraction equals the population fraction exactly.
    """
    entries = {}
    for node in sampled_nodes(n):
        for step in STEPS:
            pool = response_set(node, step)
            if k % len(pool):
                raise ConfigError(f"k={k} is not a multiple of response-set size {len(pool)}")
            reps = k // len(pool)
            for sampler in node.members:
                entries[(node.path, step, sampler)] = tuple(q for q in pool for _ in range(reps))
    return SamplingChoice(n, k, epsilon, entries)


def iter_keys(n: int) -> Iterator[Key]:
    for node in sampled_nodes(n):
        for step in STEPS:
            for sampler in node.members:
                yield (node.path, step, sampler)
