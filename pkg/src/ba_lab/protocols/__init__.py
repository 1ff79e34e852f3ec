from .engine import classify_step1, classify_step2
from .suite import (BaseCaseP, EpsilonRPK, Gradecast, PhaseKing, ProbabilisticEpsilonRPK, RecursivePhaseKing,
                    base_case_p, eps_rpk_duration, epsilon_rpk, gradecast, phase_king,
                    probabilistic_epsilon_rpk, recursive_phase_king, rpk_duration)

PROTOCOLS = {
    "gradecast": Gradecast,
    "phase-king": PhaseKing,
    "rpk": RecursivePhaseKing,
    "eps-rpk": EpsilonRPK,
    "prob-eps-rpk": ProbabilisticEpsilonRPK,
    "base-p": BaseCaseP,
}

from .baselines import AllToAll, Chain, EchoInput  # noqa: E402
