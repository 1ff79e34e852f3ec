import itertools
import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ba_lab.core import (CommitteeNode, ConfigError, ExecutionTrace, FaultAssignment, Message, PartitionError,
                         SystemParams, ceil_log2, committee_tree, majority_value, parse_fraction,
                         partition_committees)


def test_partition_examples():
    assert [c.members for c in partition_committees(CommitteeNode.root(4))] == [(0, 1), (2, 3)]
    assert [c.members for c in partition_committees(CommitteeNode.root(5))] == [(0, 1, 2), (3, 4)]
    assert [c.members for c in partition_committees(CommitteeNode.root([5, 7, 9]))] == [(5, 7), (9,)]


@pytest.mark.parametrize("members", [(), (3,)])
def test_partition_rejects_small_committees(members):
    with pytest.raises(PartitionError):
        partition_committees(CommitteeNode((), members))


@given(st.integers(min_value=2, max_value=200))
def test_partition_tree_depth_and_determinism(n):
    root = CommitteeNode.root(n)
    assert partition_committees(root) == partition_committees(root)
    left, right = partition_committees(root)
    assert abs(len(left) - len(right)) <= 1
    assert sorted(left.members + right.members) == list(range(n))
    tree = committee_tree(root)
    leaves = [c for c in tree if len(c) == 1]
    assert len(leaves) == n
    assert max(c.depth for c in tree) == ceil_log2(n)


@pytest.mark.parametrize("n", range(2, 11))
def test_some_child_is_no_more_faulty_than_the_parent(n):
    left, right = partition_committees(CommitteeNode.root(n))
    for f in range(n + 1):
        for faulty in itertools.combinations(range(n), f):
            bad = set(faulty)
            fractions = [Fraction(len(bad & set(c.members)), len(c)) for c in (left, right)]
            assert min(fractions) <= Fraction(f, n)


def test_majority_value_examples():
    assert majority_value({0: 3, 1: 5}) == 1
    assert majority_value({0: 4, 1: 4}) == 0
    assert majority_value({}) == 0


@given(st.integers(0, 50), st.integers(0, 50))
def test_majority_value_order_invariant(a, b):
    assert majority_value({0: a, 1: b}) == majority_value(dict(reversed(list({0: a, 1: b}.items()))))


def test_params_resilience():
    SystemParams(4, 1)
    with pytest.raises(ConfigError, match="resilience"):
        SystemParams(3, 1)
    with pytest.raises(ConfigError, match="resilience"):
        SystemParams(6, 1, Fraction(1, 4))
    assert SystemParams(6, 1, Fraction(1, 4), strict=False).resilience_violation()
    SystemParams(6, 1, Fraction(1, 8))
    with pytest.raises(ConfigError):
        SystemParams(6, 0, Fraction(1, 3))
    with pytest.raises(ConfigError):
        SystemParams(0)


def test_parse_fraction():
    assert parse_fraction("1/8") == Fraction(1, 8)
    assert parse_fraction(" 3/12 ") == Fraction(1, 4)
    with pytest.raises(ConfigError):
        parse_fraction("one eighth")
    with pytest.raises(ConfigError):
        parse_fraction("1/0")


def test_message_bits():
    assert Message(0, 1, 0, b"\x01").bits() == 8
    assert Message(0, 1, 0, b"\x10\x01", (0,)).bits() == 16 + 256
    assert Message(0, 1, 0, b"\x10\x01", (0,)).bits(sig_bits=64) == 80
    assert Message(2, 2, 0, b"\x01").bits() == 0


def test_fault_sets_must_be_disjoint():
    with pytest.raises(ConfigError):
        FaultAssignment(byzantine={1}, crash={1: 0})
    fa = FaultAssignment(byzantine={3}, crash={1: 2}, omission={0})
    assert fa.status(3) == "byzantine" and fa.status(1) == "crash@2" and fa.status(0) == "omission"
    assert fa.status(2) == "correct"
    assert FaultAssignment.from_json(fa.to_json()) == fa
    with pytest.raises(ConfigError):
        fa.check(SystemParams(4, 1))


messages = st.builds(Message, st.integers(0, 5), st.integers(0, 5), st.integers(0, 9),
                     st.binary(min_size=1, max_size=3), st.lists(st.integers(0, 5), max_size=2).map(tuple))


@settings(max_examples=50)
@given(st.lists(st.lists(messages, max_size=4), max_size=4), st.lists(st.integers(0, 1), min_size=6, max_size=6))
def test_trace_json_round_trip(slots, bits):
    from ba_lab.core import Output
    trace = ExecutionTrace(SystemParams(6, 1), FaultAssignment(byzantine={5}), dict(enumerate(bits)), slots,
                           [[] for _ in slots], {0: Output(1, 2, 2), 1: Output(0, 3)}, "demo")
    text = json.dumps(trace.to_json(), sort_keys=True)
    back = ExecutionTrace.from_json(json.loads(text))
    assert back == trace
    assert json.dumps(back.to_json(), sort_keys=True) == text


def test_trace_prefix_and_inbox():
    slots = [[Message(0, 1, 0, b"\x01")], [Message(1, 0, 1, b"\x00")]]
    trace = ExecutionTrace(SystemParams(2), FaultAssignment(), {0: 1, 1: 0}, slots, [[], []])
    assert trace.inbox(1, 1) == slots[0]
    assert trace.inbox(1, 0) == []
    assert len(trace.prefix(1).slots) == 1
    rng = random.Random(0)
    assert trace.prefix(rng.randrange(3)).inputs == trace.inputs
