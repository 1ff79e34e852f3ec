import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from ba_lab.analysis import ScriptedAdversary, check_ba, strategy_suite
from ba_lab.core import ConfigError, FaultAssignment, Message, SystemParams, signed_output_payload, value_payload
from ba_lab.netsim import SignatureRegistry, account, simulate
from ba_lab.protocols import EchoInput, epsilon_rpk, probabilistic_epsilon_rpk
from ba_lab.reductions import (DISSEMINATION_DEPTH, SignedOutput, TerminationViolation, build_extractable,
                               committee_size_m, extract_f, lift_epsilon_to_ba, lift_extractable_to_ba,
                               message_sets, signed_outputs)
from ba_lab.sampling.choice import uniform_coverage_choice

EPS = Fraction(1, 8)


def so(member, value):
    return SignedOutput(member, value, member)


def outputs(trace):
    return {p: o.value for p, o in trace.outputs.items()}


def test_committee_size_examples():
    assert committee_size_m(0, Fraction(1, 5)) == 1
    assert committee_size_m(3, Fraction(1, 6)) == 19
    assert committee_size_m(2, Fraction(1, 4)) == 25
    assert committee_size_m(1, Fraction(1, 4)) == 13
    with pytest.raises(ConfigError):
        committee_size_m(1, Fraction(1, 3))


def test_extract_examples():
    assert extract_f([so(0, 1), so(1, 1), so(2, 0)], 4, 1) == "1"
    assert extract_f([so(0, 1), so(1, 1)], 4, 1) == ""
    assert extract_f([so(0, 1), so(1, 1), so(2, 0), so(3, 0), so(3, 1)], 4, 1) == "1"


def test_extract_ignores_outsiders_and_unverifiable_endorsements():
    base = [so(0, 1), so(1, 1), so(2, 0)]
    assert extract_f(base + [so(7, 0), so(8, 0)], 4, 1) == "1"
    assert extract_f(base + [SignedOutput(3, 0, 2)], 4, 1) == "1"
    reg = SignatureRegistry()
    for s in base:
        reg.sign(s.signer, signed_output_payload(s.value))
    # a member's value that was never signed through the registry does not count
    assert extract_f(base + [so(3, 0)], 4, 1, registry=reg) == "1"
    assert extract_f(base + [so(3, 0)], 4, 1) == "0"


signed_sets = st.lists(st.builds(so, st.integers(0, 6), st.integers(0, 1)), max_size=12)


@given(signed_sets, st.randoms())
def test_extract_permutation_invariant(items, rnd):
    shuffled = list(items)
    rnd.shuffle(shuffled)
    assert extract_f(items, 5, 1) == extract_f(shuffled, 5, 1)


@given(signed_sets)
def test_extract_monotone_when_one_member_equivocates(items):
    # at most f=1 member (id 4) may sign both values; everyone else signs at most one value
    by_member = {}
    for s in items:
        if s.member != 4:
            by_member.setdefault(s.member, s)
    honest = list(by_member.values())
    values = [s.value for s in honest]
    full = honest + [so(4, 0), so(4, 1)]
    top = extract_f(full, 5, 1)
    # with m=5 and eps=1/12 fewer than 5/12 members may dissent: honest signed outputs agree
    assume(len(set(values)) <= 1)
    for r in range(len(full) + 1):
        for subset in itertools.combinations(full, r):
            assert extract_f(subset, 5, 1) in ("", top)


def test_lift_epsilon_degenerate_echo():
    params = SystemParams(5, 0, EPS)
    lifted = lift_epsilon_to_ba(EchoInput(params))
    trace = simulate(lifted, {p: 1 for p in range(5)})
    assert set(outputs(trace).values()) == {1}


def test_lift_epsilon_majority_survives_lying_disseminators():
    params = SystemParams(6, 1, EPS, 6)
    lifted = lift_epsilon_to_ba(epsilon_rpk(params, uniform_coverage_choice(6, 6, EPS)))
    t = lifted.inner_end
    for b in range(6):
        faults = FaultAssignment(byzantine={b})
        for bit in (0, 1):
            lies = ScriptedAdversary({t: [Message(b, q, t, value_payload(1 - bit)) for q in range(6)]})
            trace = simulate(lifted, {p: bit for p in range(6)}, faults, lies)
            assert set(outputs(trace).values()) == {bit}
    rep = account(simulate(lifted, {p: p % 2 for p in range(6)}), lambda m: lifted.depth_at(m.slot))
    assert rep.per_depth[DISSEMINATION_DEPTH][0] == 6 * 5


def test_lift_epsilon_hypothesis_is_implied_by_resilience():
    # f < n(1/3 - eps) already forces f < n(1/2 - eps); relaxed params skip both checks
    for n, f, eps in [(6, 1, EPS), (13, 2, Fraction(1, 6)), (40, 3, Fraction(1, 4))]:
        params = SystemParams(n, f, eps)
        assert f < n * (Fraction(1, 2) - eps)
        lift_epsilon_to_ba(EchoInput(params))
    relaxed = SystemParams(4, 2, Fraction(1, 4), strict=False)
    assert lift_epsilon_to_ba(EchoInput(relaxed)).slot_budget() == 2


def test_build_extractable_rejects_large_committee():
    with pytest.raises(ConfigError, match="13"):
        build_extractable(SystemParams(12, 1, Fraction(1, 4), strict=False),
                          lambda q: probabilistic_epsilon_rpk(q, 0))


def test_extractable_validity_and_consistency_n30():
    params = SystemParams(30, 2, Fraction(1, 6), 4)
    ext = build_extractable(params, lambda q: probabilistic_epsilon_rpk(q, 1))
    assert ext.m == 13 and ext.collector == 13
    faults = FaultAssignment(byzantine={3, 20})
    trace = simulate(ext, {p: 1 for p in range(30)}, faults)
    m_c, m_a = message_sets(trace)
    assert extract_f(m_c, ext.m, params.f) == "1"
    top = extract_f(m_a, ext.m, params.f)
    items = sorted(m_a)
    assert len(items) <= 16
    for r in range(len(items) + 1):
        for subset in itertools.combinations(items, r):
            assert extract_f(subset, ext.m, params.f) in ("", top)


def test_lift_extractable_suite_n30():
    params = SystemParams(30, 2, Fraction(1, 6), 4)
    lifted = lift_extractable_to_ba(build_extractable(params, lambda q: probabilistic_epsilon_rpk(q, 1)))
    rng = random.Random(30)
    for faults in (FaultAssignment(byzantine={0, 1}), FaultAssignment(byzantine={28, 29})):
        for adv in strategy_suite():
            for inputs in ({p: 1 for p in range(30)}, {p: rng.randrange(2) for p in range(30)}):
                assert check_ba(simulate(lifted, inputs, faults, adv)).holds


def test_lift_extractable_unanimous_zero_without_faults():
    params = SystemParams(8, 0, EPS, 4)
    lifted = lift_extractable_to_ba(build_extractable(params, lambda q: probabilistic_epsilon_rpk(q, 2)))
    assert set(outputs(simulate(lifted, {p: 0 for p in range(8)})).values()) == {0}


def test_lift_extractable_ignores_outsider_signatures():
    params = SystemParams(6, 1, Fraction(1, 12), 30)
    ext = build_extractable(params, lambda q: epsilon_rpk(q, uniform_coverage_choice(q.n, 30, q.epsilon)))
    lifted = lift_extractable_to_ba(ext)
    t = lifted.relay_slot
    faults = FaultAssignment(byzantine={5})
    junk = ScriptedAdversary({t: [Message(5, q, t, signed_output_payload(0), (5,)) for q in range(5)]})
    trace = simulate(lifted, {p: 1 for p in range(6)}, faults, junk)
    assert set(outputs(trace).values()) == {1}


def test_lift_extractable_raises_on_missing_quorum():
    params = SystemParams(6, 1, Fraction(1, 12), 30)
    ext = build_extractable(params, lambda q: epsilon_rpk(q, uniform_coverage_choice(q.n, 30, q.epsilon)))
    lifted = lift_extractable_to_ba(ext)
    state = lifted.init(0, 0)
    state = state._replace(held=frozenset())
    with pytest.raises(TerminationViolation):
        lifted.on_slot(state, lifted.relay_slot + 1, ())


def test_signed_outputs_decoding():
    msgs = [Message(0, 5, 3, signed_output_payload(1), (0,)), Message(1, 5, 3, value_payload(1)),
            Message(2, 5, 3, signed_output_payload(0), (2,))]
    assert signed_outputs(msgs) == {so(0, 1), so(2, 0)}
