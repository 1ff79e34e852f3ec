"""Adversaries, exhaustive exploration, property checkers, valency and lower-bound scenarios."""

from .adversaries import (STRATEGIES, CrashAt, EquivocatePerReceiver, FlipMajority, Mirror, ScriptedAdversary,
                          Silent, strategy, strategy_suite)
from .checkers import (CheckResult, Incomplete, ba_verdict, check_ba, check_epsilon_agreement,
                       check_epsilon_validity, check_gradecast, epsilon_agreement_outcome, epsilon_validity_holds)
from .explorer import (DEFAULT_GUARD, AdversaryBehaviorSpace, Exploration, ExhaustiveReport, Explorer, Valency,
                       ba_config_verdict, check_exhaustive, compute_valency, enumerate_adversary_executions,
                       epsilon_config_verdict, guard_limit, valency_of)
from .scenarios import LowerBoundReport, appendix_a_scenario, view_of
