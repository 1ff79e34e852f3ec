"""Randomised search for a not-bad sampling choice, certificates, and the KL sample-size bound."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

import mpmath

from ..core import ConfigError, format_fraction, parse_fraction
from .badness import (PER_STEP_DIVISOR, StepVerdict, verify_choice_exhaustive, verify_choice_monte_carlo)
from .choice import SamplingChoice, random_choice


@dataclass
class Failure:
    draws: int
    steps: List[StepVerdict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"verdict": "failure", "draws": self.draws,
                "worst_deviations": [{"node": list(v.path), "step": v.step,
                                      "worst_deviation": format_fraction(v.worst_deviation),
                                      "verdict": "bad" if v.is_bad else "not-bad"} for v in self.steps]}


def run_verifier(smp: SamplingChoice, mode: str, trials: int = 0, seed: int = 0, epsilon=None) -> List[StepVerdict]:
    if mode == "exhaustive":
        return verify_choice_exhaustive(smp, epsilon)
    if mode == "monte-carlo":
        return verify_choice_monte_carlo(smp, trials, seed, epsilon)
    raise ConfigError(f"unknown verifier mode {mode!r}")


def make_certificate(smp: SamplingChoice, verdicts: List[StepVerdict], mode: str, trials: int, seed: int) -> dict:
    return {"mode": mode, "trials": trials if mode == "monte-carlo" else sum(v.configurations for v in verdicts),
            "seed": seed, "verdict": "bad" if any(v.is_bad for v in verdicts) else "not-bad",
            "divisor": PER_STEP_DIVISOR, "digest": smp.digest()}


def search_smp(n: int, k: int, epsilon, budget: int, seed: int, verifier: str = "exhaustive",
               trials: int = 1000) -> Tuple[Optional[SamplingChoice], Optional[Failure]]:
    """Draw uniformly random choices until one verifies as not bad; Failure after ``budget`` draws."""
    eps = parse_fraction(epsilon)
    rng = random.Random(seed)
    last: List[StepVerdict] = []
    for draw in range(budget):
        smp = random_choice(n, k, rng, eps)
        verdicts = run_verifier(smp, verifier, trials, seed + draw, eps)
        if not any(v.is_bad for v in verdicts):
            smp.certificate = make_certificate(smp, verdicts, verifier, trials, seed + draw)
            smp.certificate["draws"] = draw + 1
            return smp, None
        last = verdicts
    return None, Failure(budget, last)


def verify_certificate(smp: SamplingChoice) -> Tuple[bool, List[str]]:
    """Re-check a stored certificate: digest, then the verdict under the recorded mode and seed."""
    problems = []
    cert = smp.certificate
    if not cert:
        return False, ["no certificate"]
    if cert.get("digest") != smp.digest():
        problems.append("certificate mismatch: sampling entries do not match the recorded digest")
    try:
        smp.validate()
    except ConfigError as exc:
        problems.append(f"malformed sampling choice: {exc}")
        return False, problems
    verdicts = run_verifier(smp, cert["mode"], cert.get("trials", 0), cert.get("seed", 0))
    verdict = "bad" if any(v.is_bad for v in verdicts) else "not-bad"
    if verdict != cert.get("verdict"):
        problems.append(f"verdict mismatch: recorded {cert.get('verdict')}, recomputed {verdict}")
    return not problems, problems


# -- sample-size bound -----------------------------------------------------------

def deviation_probability(k: int, epsilon) -> mpmath.mpf:
    """Per-processor bound on a >= eps/2 deviation: two-sided Hoeffding, union over b in {0,1}."""
    eps = mpmath.mpf(Fraction(epsilon).numerator) / Fraction(epsilon).denominator
    return 4 * mpmath.exp(-2 * k * (eps / 2) ** 2)


def kl_divergence(q, p) -> mpmath.mpf:
    q, p = mpmath.mpf(q), mpmath.mpf(p)
    return q * mpmath.log(q / p) + (1 - q) * mpmath.log((1 - q) / (1 - p))


def kl_condition(k: int, epsilon, alphabet_size: int) -> bool:
    eps = Fraction(epsilon)
    q = mpmath.mpf(eps.numerator) / (PER_STEP_DIVISOR * eps.denominator)
    alpha = deviation_probability(k, eps)
    return alpha < q and kl_divergence(q, alpha) > mpmath.log(alphabet_size)


def chernoff_k_bound(epsilon, alphabet_size: int = 3) -> int:
    """Smallest k with D(eps/24 || alpha(k)) > ln(alphabet_size)."""
    eps = parse_fraction(epsilon)
    if not 0 < eps < Fraction(1, 3):
        raise ConfigError("epsilon must lie in (0, 1/3)")
    if alphabet_size not in (3, 4):
        raise ConfigError("alphabet size must be 3 or 4")
    with mpmath.workdps(60):
        hi = 1
        while not kl_condition(hi, eps, alphabet_size):
            hi *= 2
        lo = hi // 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if kl_condition(mid, eps, alphabet_size):
                hi = mid
            else:
                lo = mid
        return hi
