"""Gradecast, Phase King, Recursive Phase King, epsilon-RPK and the base protocol P."""

from __future__ import annotations

import random
from typing import Optional

from ..core import ConfigError, SystemParams
from ..sampling.choice import SamplingChoice, random_choice
from .engine import (FINISH, GC_ECHO, GC_OUT, GC_SEND, LEADER_RECV, LEADER_SEND, P_RECV, P_SEND, POP, PUSH,
                     REPORT_RECV, REPORT_SEND, S1_RECV, S1_SEND, S2_RECV, S3_RECV, S3_SEND, NodeInfo,
                     ScheduledProtocol, build_tree)


class Gradecast(ScheduledProtocol):
    """Three slots: broadcast, echo an (n-f)-quorum value, output with a grade."""

    name = "gradecast"
    report_grade = True

    def __init__(self, params: SystemParams):
        super().__init__(params)
        self.root = NodeInfo((), tuple(range(params.n)), params.f)
        self.emit(0, GC_SEND, self.root)
        self.emit(1, GC_ECHO, self.root)
        self.emit(2, GC_OUT, self.root)
        self.finalize(2)


class PhaseKing(ScheduledProtocol):
    """f+1 rounds of Gradecast followed by a rotating leader (ids 0..f)."""

    name = "phase-king"

    def __init__(self, params: SystemParams):
        super().__init__(params)
        if params.f + 1 > params.n:
            raise ConfigError("phase king needs f + 1 <= n leaders")
        self.root = root = NodeInfo((), tuple(range(params.n)), params.f)
        a = 0
        for leader in range(params.f + 1):
            self.emit(a, GC_SEND, root)
            self.emit(a + 1, GC_ECHO, root)
            self.emit(a + 2, GC_OUT, root)
            self.emit(a + 2, LEADER_SEND, root, leader, actors=(leader,))
            self.emit(a + 3, LEADER_RECV, root, leader)
            a += 3
        self.finalize(a)

    def leader(self, rnd: int) -> int:
        return rnd


class RecursivePhaseKing(ScheduledProtocol):
    """Two rounds; the leaders are replaced by the two half-committees recursing."""

    name = "rpk"

    def __init__(self, params: SystemParams):
        super().__init__(params)
        self.root = build_tree(range(params.n), params.f)
        self.finalize(self._build(self.root, 0))

    def _build(self, node: NodeInfo, a: int) -> int:
        if node.n == 1:
            return a
        for r, child in enumerate(node.children, start=1):
            self.emit(a, GC_SEND, node)
            self.emit(a + 1, GC_ECHO, node)
            self.emit(a + 2, GC_OUT, node)
            self.emit(a + 2, PUSH, node, r, actors=child.members)
            end = self._build(child, a + 2)
            self.emit(end, POP, node, r, actors=child.members)
            self.emit(end, REPORT_SEND, node, r, actors=child.members)
            self.emit(end + 1, REPORT_RECV, node, r)
            a = end + 1
        return a


def rpk_duration(n: int) -> int:
    """Output slot of Recursive Phase King on n processors (sequential recursion)."""
    if n == 1:
        return 0
    c1 = (n + 1) // 2
    return 6 + rpk_duration(c1) + rpk_duration(n - c1)


def eps_rpk_duration(n: int) -> int:
    if n <= 2:
        return n - 1
    c1 = (n + 1) // 2
    return 6 + eps_rpk_duration(c1) + eps_rpk_duration(n - c1)


class EpsilonRPK(ScheduledProtocol):
    """Sampling-based RPK: pushes values along a fixed sampling choice.

    Committees of size at most 2 run the base protocol P.
    """

    name = "eps-rpk"

    def __init__(self, params: SystemParams, smp: Optional[SamplingChoice] = None):
        super().__init__(params)
        if params.epsilon is None:
            raise ConfigError("epsilon-RPK needs epsilon")
        self.smp = smp
        if params.n > 2:
            if smp is None:
                raise ConfigError("epsilon-RPK needs a sampling choice for n > 2")
            if smp.n != params.n or smp.k != params.k:
                raise ConfigError(f"sampling choice is for n={smp.n}, k={smp.k}; "
                                  f"protocol has n={params.n}, k={params.k}")
            smp.validate()
            self._samples = dict(smp.entries)
            targets = {}
            for (path, step, sampler), samples in smp.entries.items():
                for q in set(samples):
                    targets.setdefault((path, step, q), set()).add(sampler)
            self._targets = {key: tuple(sorted(v)) for key, v in targets.items()}
        self.root = build_tree(range(params.n), params.f, leaf_size=2)
        self.finalize(self._build(self.root, 0))

    def _build(self, node: NodeInfo, a: int) -> int:
        if node.n == 1:
            return a
        if node.n == 2:
            lead, other = node.members
            self.emit(a, P_SEND, node, actors=(lead,))
            self.emit(a + 1, P_RECV, node, actors=(other,))
            return a + 1
        for r, child in enumerate(node.children, start=1):
            self.emit(a, S1_SEND, node, r)
            self.emit(a + 1, S1_RECV, node, r)
            self.emit(a + 2, S2_RECV, node, r)
            self.emit(a + 2, PUSH, node, r, actors=child.members)
            end = self._build(child, a + 2)
            self.emit(end, POP, node, r, actors=child.members)
            self.emit(end, S3_SEND, node, r, actors=child.members)
            self.emit(end + 1, S3_RECV, node, r)
            a = end + 1
        return a


class ProbabilisticEpsilonRPK(EpsilonRPK):
    """epsilon-RPK whose sampling choice is drawn uniformly (with replacement) from a seed."""

    name = "prob-eps-rpk"

    def __init__(self, params: SystemParams, seed: int):
        self.seed = seed
        smp = random_choice(params.n, params.k, random.Random(seed), params.epsilon) if params.n > 2 else None
        super().__init__(params, smp)


class BaseCaseP(EpsilonRPK):
    """The lowest id sends its input to the other member; both output it."""

    name = "base-p"

    def __init__(self, params: SystemParams):
        if params.n > 2:
            raise ConfigError(f"base protocol P is for committees of size <= 2, got n={params.n}")
        if params.epsilon is None:
            params = params.replace(epsilon="1/4")
        super().__init__(params, None)


def gradecast(params: SystemParams) -> Gradecast:
    return Gradecast(params)


def phase_king(params: SystemParams) -> PhaseKing:
    return PhaseKing(params)


def recursive_phase_king(params: SystemParams) -> RecursivePhaseKing:
    return RecursivePhaseKing(params)


def epsilon_rpk(params: SystemParams, smp: SamplingChoice) -> EpsilonRPK:
    return EpsilonRPK(params, smp)


def probabilistic_epsilon_rpk(params: SystemParams, seed: int) -> ProbabilisticEpsilonRPK:
    return ProbabilisticEpsilonRPK(params, seed)


def base_case_p(params: SystemParams) -> BaseCaseP:
    return BaseCaseP(params)
