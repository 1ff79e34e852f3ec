from .badness import (BadnessVerdict, EnumerationTooLarge, StepConfiguration, StepVerdict, alpha_fraction,
                      alpha_fraction_sampled, brute_force_step_verdict, estimate_badness_monte_carlo,
                      evaluate_configuration, is_bad_for, verify_choice_exhaustive, verify_choice_monte_carlo,
                      verify_step_choice_exhaustive)
from .choice import (STEPS, SamplingChoice, random_choice, response_set, sampled_nodes, step_alphabet,
                     uniform_coverage_choice)
from .search import Failure, chernoff_k_bound, search_smp, verify_certificate
