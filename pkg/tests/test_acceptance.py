"""Acceptance suite: one group of tests per criterion, each printed as PASS/FAIL in the summary."""

import itertools
import json
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from ba_lab.analysis import (AdversaryBehaviorSpace, Explorer, Valency, appendix_a_scenario, ba_config_verdict,
                             check_ba, check_epsilon_agreement, check_epsilon_validity, check_exhaustive,
                             check_gradecast, compute_valency, enumerate_adversary_executions,
                             epsilon_agreement_outcome, epsilon_config_verdict, strategy_suite, valency_of)
from ba_lab.cli import main
from ba_lab.core import FaultAssignment, SystemParams
from ba_lab.netsim import account, simulate
from ba_lab.protocols import (AllToAll, Chain, epsilon_rpk, gradecast, phase_king, probabilistic_epsilon_rpk,
                              recursive_phase_king)
from ba_lab.reductions import (SignedOutput, build_extractable, extract_f, lift_epsilon_to_ba,
                               lift_extractable_to_ba, message_sets, signed_alphabet)
from ba_lab.sampling.badness import (PER_STEP_DIVISOR, WHOLE_DIVISOR, config_index, estimate_badness_monte_carlo,
                                     exhaustive_bad_mask, threshold, verify_choice_exhaustive,
                                     whole_choice_bad_for)
from ba_lab.sampling.choice import (SamplingChoice, random_choice, response_set, sampled_nodes,
                                    uniform_coverage_choice)

# n=6, f=1 admits no epsilon-RPK at eps=1/4 (f < n(1/3 - eps) fails); 1/8 is the largest
# power-of-two slack that fits, and k=6 gives a zero-deviation sampling choice.
EPS_SMALL = Fraction(1, 8)
SMALL = SystemParams(6, 1, EPS_SMALL, 6)


def eps_rpk_small(smp=None):
    return epsilon_rpk(SMALL, smp or uniform_coverage_choice(6, 6, EPS_SMALL))


def bad_choice(byzantine: int = 0) -> SamplingChoice:
    """Every root sampler samples only the Byzantine processor (or the first member when it is not eligible)."""
    smp = uniform_coverage_choice(6, 6, EPS_SMALL)
    root = sampled_nodes(6)[0]
    for (path, step, sampler) in list(smp.entries):
        if path == root.path:
            pool = response_set(root, step)
            target = byzantine if byzantine in pool else pool[0]
            smp.entries[(path, step, sampler)] = (target,) * smp.k
    return smp


def placements(n, f):
    return [FaultAssignment(byzantine=frozenset(c)) for c in itertools.combinations(range(n), f)]


# -- 1 -------------------------------------------------------------------------------

@pytest.mark.criterion(1, "gradecast properties, exhaustive at n=4, f=1", budget=10)
def test_gradecast_exhaustive():
    proto = gradecast(SystemParams(4, 1))
    runs = 0
    for faults in placements(4, 1):
        space = AdversaryBehaviorSpace.for_run(proto, faults)
        assert space.count == 3 ** 6
        for bits in itertools.product((0, 1), repeat=4):
            inputs = dict(enumerate(bits))
            for trace in enumerate_adversary_executions(proto, inputs, faults, space):
                res = check_gradecast(trace)
                assert res.holds, res.violations
                runs += 1
    assert runs == 4 * 16 * 729


# -- 2 -------------------------------------------------------------------------------

@pytest.mark.criterion(2, "phase king and recursive phase king satisfy BA", budget=300)
@pytest.mark.parametrize("factory", [phase_king, recursive_phase_king], ids=["phase-king", "rpk"])
@pytest.mark.parametrize("n,f", [(4, 1), (7, 1), (7, 2)])
def test_king_protocols_exhaustive(factory, n, f):
    proto = factory(SystemParams(n, f))
    for faults in placements(n, f):
        report = check_exhaustive(proto, faults, ba_config_verdict)
        assert report.holds, [r for r, _ in report.violations]
        assert report.executions > 0


@pytest.mark.criterion(2, "phase king and recursive phase king satisfy BA", budget=300)
@pytest.mark.parametrize("factory", [phase_king, recursive_phase_king], ids=["phase-king", "rpk"])
def test_king_protocols_strategy_suite(factory):
    for n in range(4, 17):
        f = (n - 1) // 3
        proto = factory(SystemParams(n, f))
        rng = random.Random(n)
        input_sets = [{p: 0 for p in range(n)}, {p: 1 for p in range(n)},
                      {p: p % 2 for p in range(n)}, {p: rng.randrange(2) for p in range(n)}]
        fault_sets = [FaultAssignment(byzantine=frozenset(range(n - f, n))),
                      FaultAssignment(byzantine=frozenset(range(f)))]
        for faults, inputs in itertools.product(fault_sets, input_sets):
            for adv in strategy_suite():
                trace = simulate(proto, inputs, faults, adv)
                res = check_ba(trace)
                assert res.holds, (n, f, type(adv).__name__, res.violations)


# -- 3 -------------------------------------------------------------------------------

@pytest.mark.criterion(3, "epsilon-RPK epsilon-agreement and epsilon-validity, plus bad-choice witness")
def test_eps_rpk_exhaustive_with_verified_choice():
    smp = uniform_coverage_choice(6, 6, EPS_SMALL)
    assert not any(v.is_bad for v in verify_choice_exhaustive(smp))
    proto = eps_rpk_small(smp)
    verdict = epsilon_config_verdict(6, EPS_SMALL)
    for faults in placements(6, 1):
        report = check_exhaustive(proto, faults, verdict)
        assert report.holds, [r for r, _ in report.violations]


@pytest.mark.criterion(3, "epsilon-RPK epsilon-agreement and epsilon-validity, plus bad-choice witness")
def test_eps_rpk_bad_choice_exhibits_dissent(tmp_path):
    smp = bad_choice(0)
    assert any(v.is_bad for v in verify_choice_exhaustive(smp))
    proto = eps_rpk_small(smp)
    faults = FaultAssignment(byzantine=frozenset({0}))
    report = check_exhaustive(proto, faults, epsilon_config_verdict(6, EPS_SMALL))
    assert not report.holds
    reason, witness = report.violations[0]
    agreement, dissenters = check_epsilon_agreement(witness)
    assert not (agreement and check_epsilon_validity(witness))
    doc = {"reason": reason, "dissenters": sorted(dissenters), "trace": witness.to_json()}
    path = tmp_path / "dissent_witness.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=2))
    assert json.loads(path.read_text())["reason"] in ("epsilon-agreement", "epsilon-validity")


# -- 4 -------------------------------------------------------------------------------

@pytest.mark.criterion(4, "sampling verifier oracle equivalence and whole-choice implication")
def test_oracle_equivalence():
    rng = random.Random(2024)
    masks = {}
    compared = 0
    choices = 0
    eps_values = (Fraction(1, 4), Fraction(1, 8), Fraction(1, 6))
    pool = [(6, 6, e) for e in eps_values]  # zero-deviation choices are in the mix too
    while choices < 10_000:
        n = (4, 5, 6)[choices % 3]
        k = rng.choice((2, 3, 4, 6))
        eps = eps_values[choices % len(eps_values)]
        smp = random_choice(n, k, rng, eps) if choices >= len(pool) else uniform_coverage_choice(*pool[choices])
        choices += 1
        _, evaluated = estimate_badness_monte_carlo(smp, 1, choices, record=True)
        per_node_steps_pass = {}
        configs = {}
        for path, step, z, verdict in evaluated:
            node = next(nd for nd in sampled_nodes(smp.n) if nd.path == path)
            smp_step = smp.step_choice(path, step)
            key = (tuple(sorted(smp_step.items())), step, len(node.members), smp.epsilon)
            if key not in masks:
                masks[key] = exhaustive_bad_mask(smp_step, response_set(node, step), step, smp.epsilon,
                                                 node_n=len(node.members))
            mask = masks[key]
            assert bool(mask[config_index(z)]) == verdict.is_bad
            compared += 1
            configs[(path, step)] = z
            per_node_steps_pass.setdefault(path, []).append(not mask.any())
            # union bound, per configuration: a whole-choice bad set of size >= n eps/4 forces
            # some step's bad set to reach n eps/24
        whole = whole_choice_bad_for(smp, configs)
        for node in sampled_nodes(smp.n):
            size = len(node.members)
            whole_bad = len(whole[node.path]) >= threshold(size, smp.epsilon, WHOLE_DIVISOR)
            if all(per_node_steps_pass[node.path]):
                assert not whole_bad
            if whole_bad:
                steps_bad = [len(v.bad_for) >= threshold(size, smp.epsilon, PER_STEP_DIVISOR)
                             for p, s, z, v in evaluated if p == node.path]
                assert any(steps_bad)
    assert choices >= 10_000 and compared >= 10_000
    # larger response sets (up to 8 members) on a smaller sample of choices
    for _ in range(100):
        smp = random_choice(8, rng.choice((2, 4)), rng, Fraction(1, 4))
        _, evaluated = estimate_badness_monte_carlo(smp, 2, rng.randrange(10 ** 6), record=True)
        for path, step, z, verdict in evaluated:
            node = next(nd for nd in sampled_nodes(8) if nd.path == path)
            members = response_set(node, step)
            assert len(members) <= 8
            mask = exhaustive_bad_mask(smp.step_choice(path, step), members, step, smp.epsilon,
                                       node_n=len(node.members))
            assert bool(mask[config_index(z)]) == verdict.is_bad


# -- 5 -------------------------------------------------------------------------------

EPS_EXT = Fraction(1, 12)
EXT_PARAMS = SystemParams(6, 1, EPS_EXT, 30)


def extractable_small():
    return build_extractable(EXT_PARAMS, lambda q: epsilon_rpk(q, uniform_coverage_choice(q.n, 30, EPS_EXT)))


@pytest.mark.criterion(5, "reductions yield BA; extraction consistency over all subsets")
def test_lift_epsilon_to_ba_exhaustive():
    lifted = lift_epsilon_to_ba(eps_rpk_small())
    for faults in placements(6, 1):
        report = check_exhaustive(lifted, faults, ba_config_verdict)
        assert report.holds, [r for r, _ in report.violations]


@pytest.mark.criterion(5, "reductions yield BA; extraction consistency over all subsets")
def test_lift_extractable_to_ba_exhaustive():
    ext = extractable_small()
    assert ext.m == 5 and ext.m <= 6
    lifted = lift_extractable_to_ba(ext)
    for faults in placements(6, 1):
        report = check_exhaustive(lifted, faults, ba_config_verdict)
        assert report.holds, [r for r, _ in report.violations]


@pytest.mark.criterion(5, "reductions yield BA; extraction consistency over all subsets")
def test_extract_consistency_all_subsets():
    ext = extractable_small()
    m, f = ext.m, EXT_PARAMS.f
    checked_sets = 0
    rng = random.Random(5)
    for b in range(m):
        faults = FaultAssignment(byzantine=frozenset({b}))
        # every signing behaviour of the Byzantine member toward every receiver at the signing slot
        space = AdversaryBehaviorSpace.for_run(ext, faults, [ext.inner_end])
        assert space.count == len(signed_alphabet(b, m)) ** 5
        for bits in ([0] * 6, [1] * 6, [rng.randrange(2) for _ in range(6)]):
            inputs = dict(enumerate(bits))
            for trace in enumerate_adversary_executions(ext, inputs, faults, space):
                m_c, m_a = message_sets(trace)
                assert m_c <= m_a and len(m_a) <= 16
                full = extract_f(m_a, m, f)
                assert full in ("0", "1")
                items = sorted(m_a)
                for r in range(len(items) + 1):
                    for subset in itertools.combinations(items, r):
                        assert extract_f(subset, m, f) in ("", full)
                checked_sets += 1
    assert checked_sets == m * 3 * 4 ** 5


# -- 6 -------------------------------------------------------------------------------

def _bits(proto, n, seed=0):
    rng = random.Random(seed)
    trace = simulate(proto, {p: rng.randrange(2) for p in range(n)}, FaultAssignment())
    return account(trace, lambda m: proto.depth_at(m.slot))


@pytest.mark.criterion(6, "complexity separation: quadratic RPK vs n log n epsilon-RPK", budget=600)
def test_rpk_quadratic_growth():
    reports = {n: _bits(recursive_phase_king(SystemParams(n, 0)), n) for n in (16, 32, 64, 128)}
    ns = sorted(reports)
    for a, b in zip(ns, ns[1:]):
        ratio = reports[b].total_bits / reports[a].total_bits
        assert 3.4 <= ratio <= 4.6, (a, b, ratio)
    for n, rep in reports.items():
        # per-instance c: the largest bits-per-|N|^2 over the committees of one depth
        c = max(bits / (2 ** d * (n / 2 ** d) ** 2) for d, (_, bits) in rep.per_depth.items())
        assert rep.total_bits <= 2 * c * n * n


@pytest.mark.criterion(6, "complexity separation: quadratic RPK vs n log n epsilon-RPK", budget=600)
def test_eps_rpk_n_log_n_growth():
    k = 8
    eps = Fraction(1, 4)
    totals = {n: _bits(probabilistic_epsilon_rpk(SystemParams(n, 0, eps, k), 0), n).total_bits
              for n in (128, 256, 512, 1024)}
    ns = sorted(totals)
    for a, b in zip(ns, ns[1:]):
        ratio = totals[b] / totals[a]
        assert 1.9 <= ratio <= 2.5, (a, b, ratio)
    fitted = {n: totals[n] / (k * n * math.log2(n)) for n in ns}
    mean = sum(fitted.values()) / len(fitted)
    for n, c in fitted.items():
        assert abs(c - mean) <= 0.2 * mean, (n, c, mean)
        assert totals[n] <= 1.2 * mean * k * n * math.log2(n)


# -- 7 -------------------------------------------------------------------------------

@pytest.mark.criterion(7, "extractable overhead is exactly m messages")
@pytest.mark.parametrize("params,inner", [
    (EXT_PARAMS, lambda q: epsilon_rpk(q, uniform_coverage_choice(q.n, 30, EPS_EXT))),
    (SystemParams(30, 2, Fraction(1, 6), 4), lambda q: probabilistic_epsilon_rpk(q, 3)),
], ids=["n6-m5", "n30-m13"])
def test_extractable_message_overhead(params, inner):
    ext = build_extractable(params, inner)
    assert ext.m < params.n
    rng = random.Random(params.n)
    for _ in range(3):
        inputs = {p: rng.randrange(2) for p in range(params.n)}
        full = account(simulate(ext, inputs, FaultAssignment()))
        alone = account(simulate(inner(ext.committee_params), {p: inputs[p] for p in range(ext.m)},
                                 FaultAssignment()))
        assert full.total_messages - alone.total_messages == ext.m


# -- 8 -------------------------------------------------------------------------------

@pytest.mark.criterion(8, "univalency after the epsilon-BA phase", budget=600)
def test_univalency_after_epsilon_phase():
    lifted = lift_epsilon_to_ba(eps_rpk_small())
    for faults in placements(6, 1):
        ex = Explorer(lifted, faults, witnesses=True)
        # every prefix ending just before the dissemination slot, grouped by identical futures
        prefixes = ex.explore(end=lifted.inner_end - 1, open_end=True)
        assert prefixes.executions > 0
        for cfg in prefixes.final:
            states = ex.next_states(cfg)
            assert all(len(s) == 1 for s in states)
            inner = [lifted.inner_output(s[0]).value for p, s in zip(ex.tracked, states) if p in ex.correct]
            holds, common, _ = epsilon_agreement_outcome(inner, 6, EPS_SMALL)
            assert holds
            continuation = ex.explore(start=lifted.inner_end, layer={cfg: 1})
            assert valency_of(continuation) == Valency.of({common})
            # the public entry point on a concrete prefix, by exploration and by literal enumeration
            prefix = prefixes.witness(cfg)
            assert len(prefix.slots) == lifted.inner_end
            assert compute_valency(prefix, lifted) == Valency.of({common})
            assert compute_valency(prefix, lifted, method="enumerate") == Valency.of({common})


# -- 9 -------------------------------------------------------------------------------

LOWER_BOUND = SystemParams(6, 2, strict=False)


@pytest.mark.criterion(9, "two-execution message lower-bound scenario", budget=60)
def test_lower_bound_case_one_all_to_all():
    _, e2, report = appendix_a_scenario(AllToAll(LOWER_BOUND), LOWER_BOUND, [0])
    assert report.case == "case-1" and e2 is None
    assert report.certificate["holds"]
    assert report.certificate["combined"] >= (LOWER_BOUND.f / 2) ** 2


@pytest.mark.criterion(9, "two-execution message lower-bound scenario", budget=60)
def test_lower_bound_case_two_sparse():
    e1, e2, report = appendix_a_scenario(Chain(LOWER_BOUND), LOWER_BOUND, [0])
    assert report.case == "case-2" and e2 is not None
    assert report.p_received_in_e2 == 0
    assert report.views_identical
    assert report.checked_processors


# -- 10 ------------------------------------------------------------------------------

def _cli_outputs(argv, out_dir, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    files = {}
    if out_dir is not None and out_dir.exists():
        for path in sorted(out_dir.rglob("*")):
            if path.is_file():
                files[path.relative_to(out_dir).as_posix()] = path.read_bytes()
    return code, captured.out.encode(), files


def _commands(tmp, smp_file, extract_file):
    return [
        (["run", "--protocol", "rpk", "--n", "8", "--f", "2", "--adversary", "flip-majority", "--seed", "3"], True),
        (["run", "--protocol", "eps-rpk", "--n", "16", "--f", "1", "--epsilon", "1/8", "--k", "4",
          "--seed", "5"], True),
        (["run", "--protocol", "lift-extractable", "--n", "12", "--f", "1", "--epsilon", "1/12", "--k", "4",
          "--seed", "2"], True),
        (["sweep", "--protocol", "rpk", "--n-list", "8,16", "--fault-rule", "max", "--trials", "2",
          "--seed", "1"], True),
        (["smp", "search", "--n", "4", "--k", "4", "--epsilon", "1/4", "--budget", "3", "--seed", "1",
          "--verifier", "monte-carlo", "--trials", "5"], False),
        (["smp", "verify", "--smp", str(smp_file)], False),
        (["extract", str(extract_file), "--m", "5", "--f", "1"], False),
        (["scenario", "appendix-a", "--protocol", "chain", "--n", "6", "--f", "2"], True),
        (["scenario", "valency", "--protocol", "lift-eps-rpk", "--n", "6", "--f", "1", "--epsilon", "1/8",
          "--k", "6", "--seed", "4"], True),
    ]


@pytest.mark.criterion(10, "deterministic CLI outputs")
def test_cli_determinism(tmp_path, capsys):
    smp_file = tmp_path / "smp.json"
    smp = uniform_coverage_choice(6, 6, EPS_SMALL)
    from ba_lab.sampling.search import make_certificate
    smp.certificate = make_certificate(smp, verify_choice_exhaustive(smp), "exhaustive", 0, 0)
    smp.save(smp_file)
    extract_file = tmp_path / "signed.json"
    extract_file.write_text(json.dumps([{"member": q, "value": q % 2} for q in range(5)]
                                       + [{"member": 1, "value": 0}]))
    for i, (argv, with_out) in enumerate(_commands(tmp_path, smp_file, extract_file)):
        results = []
        for rep in range(2):
            out_dir = tmp_path / f"cmd{i}-{rep}"
            full = argv + (["--out", str(out_dir)] if with_out else [])
            results.append(_cli_outputs(full, out_dir if with_out else None, capsys))
        assert results[0] == results[1], argv
        assert results[0][0] in (0, 1), (argv, results[0][0])
        assert results[0][1], argv
        if with_out:
            assert results[0][2], argv
