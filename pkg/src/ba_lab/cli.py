"""Command-line experiment runner: ``ba-lab run|sweep|smp|extract|scenario``.

Exit codes: 0 success, 1 contract or verification failure, 2 usage/config error.
All JSON is written with sorted keys and all tables in a fixed column order,
so identical arguments always produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import random
import sys
from typing import List, Optional, Sequence

from .core import (BALabError, ConfigError, FaultAssignment, Message, SystemParams, format_fraction,
                   inputs_from_bits, parse_fraction)
from .netsim import Protocol, account, simulate
from .protocols import (AllToAll, Chain, EpsilonRPK, Gradecast, PhaseKing, RecursivePhaseKing, BaseCaseP)
from .protocols.suite import ProbabilisticEpsilonRPK
from .reductions import (SignedOutput, build_extractable, extract_f, lift_epsilon_to_ba, lift_extractable_to_ba)
from .sampling import SamplingChoice, search_smp, verify_certificate
from .sampling.badness import EnumerationTooLarge
from .analysis import (appendix_a_scenario, check_ba, check_epsilon_agreement, check_epsilon_validity,
                       check_gradecast, compute_valency, strategy)
from .analysis.checkers import Incomplete

PROTOCOL_NAMES = ("gradecast", "phase-king", "rpk", "eps-rpk", "prob-eps-rpk", "base-p",
                  "lift-eps-rpk", "lift-extractable", "all-to-all", "chain")
EPSILON_PROTOCOLS = {"eps-rpk", "prob-eps-rpk", "lift-eps-rpk", "lift-extractable"}
CSV_FIELDS = ("protocol", "n", "f", "epsilon", "k", "adversary", "seed", "messages", "bits", "per_depth", "contract")
SWEEP_FIELDS = ("protocol", "n", "f", "epsilon", "k", "fault_rule", "trials", "seed",
                "mean_bits", "max_bits", "messages")


class UsageError(BALabError):
    pass


def dump_json(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def write_text(path: str, text: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def make_params(args, n: Optional[int] = None, strict: bool = True) -> SystemParams:
    eps = getattr(args, "epsilon", None)
    needs_eps = args.protocol in EPSILON_PROTOCOLS
    if needs_eps and eps is None:
        raise ConfigError(f"--epsilon is required for {args.protocol}")
    return SystemParams(n if n is not None else args.n, args.f, parse_fraction(eps) if needs_eps else None,
                        args.k, strict=strict)


def _smp_for(params: SystemParams, args) -> Optional[SamplingChoice]:
    if params.n <= 2:
        return None
    if getattr(args, "smp", None):
        return SamplingChoice.load(args.smp)
    if getattr(args, "seed", None) is None:
        raise ConfigError("eps-rpk needs --smp FILE or --seed")
    return None


def _eps_rpk(params: SystemParams, args) -> Protocol:
    smp = _smp_for(params, args)
    if smp is None and params.n > 2:
        return ProbabilisticEpsilonRPK(params, args.seed)
    return EpsilonRPK(params, smp)


def build_protocol(args, params: SystemParams) -> Protocol:
    name = args.protocol
    if name == "gradecast":
        return Gradecast(params)
    if name == "phase-king":
        return PhaseKing(params)
    if name == "rpk":
        return RecursivePhaseKing(params)
    if name == "base-p":
        return BaseCaseP(params)
    if name == "eps-rpk":
        return _eps_rpk(params, args)
    if name == "prob-eps-rpk":
        return ProbabilisticEpsilonRPK(params, args.seed or 0)
    if name == "lift-eps-rpk":
        return lift_epsilon_to_ba(_eps_rpk(params, args))
    if name == "lift-extractable":
        seed = args.seed or 0
        return lift_extractable_to_ba(build_extractable(
            params, lambda p: EpsilonRPK(p, None) if p.n <= 2 else ProbabilisticEpsilonRPK(p, seed)))
    if name == "all-to-all":
        return AllToAll(params)
    if name == "chain":
        return Chain(params)
    raise ConfigError(f"unknown protocol {name!r}; choose from {', '.join(PROTOCOL_NAMES)}")


def _int_list(text: Optional[str]) -> List[int]:
    if text is None or text.strip() == "":
        return []
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}")


def _faults(args, n: int, f: int) -> FaultAssignment:
    byz = _int_list(args.byzantine) if args.byzantine is not None else list(range(n - f, n))
    if any(not 0 <= p < n for p in byz):
        raise ConfigError("Byzantine ids must lie in 0..n-1")
    return FaultAssignment(byzantine=frozenset(byz))


def _inputs(args, n: int, rng: random.Random):
    if args.inputs:
        if len(args.inputs) != n:
            raise ConfigError(f"--inputs needs {n} bits")
        return inputs_from_bits(args.inputs)
    return {p: rng.randrange(2) for p in range(n)}


def contract(protocol: Protocol, trace) -> tuple:
    """(holds, description) for the protocol's own correctness contract."""
    if isinstance(protocol, Gradecast):
        res = check_gradecast(trace)
        return res.holds, "gradecast:" + ("ok" if res.holds else ";".join(res.violations))
    if isinstance(protocol, EpsilonRPK) and not isinstance(protocol, BaseCaseP):
        holds, x = check_epsilon_agreement(trace)
        valid = check_epsilon_validity(trace)
        ok = holds and valid
        return ok, "epsilon-ba:" + ("ok" if ok else f"agreement={holds};validity={valid};X={sorted(x)}")
    res = check_ba(trace)
    return res.holds, "ba:" + ("ok" if res.holds else ";".join(res.violations))


def _per_depth(report) -> str:
    return ";".join(f"{d}:{m}:{b}" for d, (m, b) in sorted(report.per_depth.items()))


def cmd_run(args) -> int:
    params = make_params(args)
    protocol = build_protocol(args, params)
    faults = _faults(args, params.n, params.f)
    faults.check(params)
    rng = random.Random(args.seed or 0)
    inputs = _inputs(args, params.n, rng)
    adversary = strategy(args.adversary)
    trace = simulate(protocol, inputs, faults, adversary)
    report = account(trace, lambda m: protocol.depth_at(m.slot))
    ok, desc = contract(protocol, trace)
    row = {"protocol": args.protocol, "n": params.n, "f": params.f, "epsilon": format_fraction(params.epsilon) or "",
           "k": params.k, "adversary": args.adversary, "seed": "" if args.seed is None else args.seed,
           "messages": report.total_messages, "bits": report.total_bits, "per_depth": _per_depth(report),
           "contract": desc}
    buf = io.StringIO()
    writer = csv.DictWriter(buf, CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerow(row)
    sys.stdout.write(buf.getvalue())
    if args.out:
        write_text(os.path.join(args.out, "trace.json"), dump_json(trace.to_json()))
        write_text(os.path.join(args.out, "report.json"),
                   dump_json({"config": {k: row[k] for k in CSV_FIELDS[:7]}, "complexity": report.to_json(),
                              "contract": desc, "holds": ok}))
        write_text(os.path.join(args.out, "report.csv"), buf.getvalue())
    if not ok:
        where = os.path.join(args.out, "trace.json") if args.out else "(use --out to save the witness trace)"
        print(f"contract violated: {desc}; witness trace: {where}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    ns = _int_list(args.n_list)
    if not ns:
        raise ConfigError("--n-list must name at least one n")
    rows = []
    for n in ns:
        f = 0
        if args.fault_rule == "max":
            f = _max_f(n, args)
        params = make_params(args, n=n).replace(f=f)
        protocol = build_protocol(args, params)
        faults = FaultAssignment(byzantine=frozenset(range(n - f, n)))
        bits = []
        msgs = []
        for trial in range(args.trials):
            rng = random.Random(f"{args.seed}:{n}:{trial}")
            inputs = {p: rng.randrange(2) for p in range(n)}
            trace = simulate(protocol, inputs, faults)
            rep = account(trace)
            bits.append(rep.total_bits)
            msgs.append(rep.total_messages)
        rows.append({"protocol": args.protocol, "n": n, "f": f, "epsilon": format_fraction(params.epsilon) or "",
                     "k": params.k, "fault_rule": args.fault_rule, "trials": args.trials, "seed": args.seed,
                     "mean_bits": f"{sum(bits) / len(bits):.1f}", "max_bits": max(bits),
                     "messages": f"{sum(msgs) / len(msgs):.1f}"})
    buf = io.StringIO()
    writer = csv.DictWriter(buf, SWEEP_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    sys.stdout.write(buf.getvalue())
    if args.out:
        write_text(os.path.join(args.out, "sweep.csv"), buf.getvalue())
    return 0


def _max_f(n: int, args) -> int:
    if args.protocol in EPSILON_PROTOCOLS:
        from fractions import Fraction
        bound = n * (Fraction(1, 3) - parse_fraction(args.epsilon))
        f = int(bound)
        return f - 1 if f == bound else f
    return (n - 1) // 3


def cmd_smp(args) -> int:
    if args.action == "search":
        if args.budget < 0:
            raise ConfigError("--budget must be >= 0")
        smp, failure = search_smp(args.n, args.k, args.epsilon, args.budget, args.seed or 0,
                                  args.verifier, args.trials)
        if smp is not None:
            text = smp.dumps()
            code = 0
        else:
            text = dump_json(failure.to_json())
            code = 1
        if args.out:
            write_text(args.out, text)
        else:
            sys.stdout.write(text)
        return code
    if not args.smp:
        raise ConfigError("smp verify needs --smp FILE")
    smp = SamplingChoice.load(args.smp)
    ok, problems = verify_certificate(smp)
    sys.stdout.write(dump_json({"file": os.path.basename(args.smp), "ok": ok, "problems": problems}))
    return 0 if ok else 1


def load_signed_outputs(data) -> List[SignedOutput]:
    """Accepts a list (or {"messages": [...]}) of {"member","value"[,"signer"]} or wire-message objects."""
    if isinstance(data, dict):
        data = data.get("messages", data.get("signed_outputs", []))
    out = []
    for item in data:
        if "member" in item:
            out.append(SignedOutput(int(item["member"]), int(item["value"]), int(item.get("signer", item["member"]))))
        else:
            from .reductions import signed_outputs
            out.extend(signed_outputs([Message.from_json(item)]))
    return out


def cmd_extract(args) -> int:
    with open(args.file) as fh:
        messages = load_signed_outputs(json.load(fh))
    print(extract_f(messages, args.m, args.f))
    return 0


def cmd_scenario(args) -> int:
    if args.kind == "appendix-a":
        params = make_params(args, strict=False)
        protocol = build_protocol(args, params)
        p1 = _int_list(args.p1) if args.p1 is not None else list(range((params.f + 1) // 2))
        e1, e2, report = appendix_a_scenario(protocol, params, p1)
        data = {"scenario": "appendix-a", "protocol": args.protocol, "params": params.to_json(),
                "report": report.to_json()}
        if args.out:
            write_text(os.path.join(args.out, "e1.json"), dump_json(e1.to_json()))
            if e2 is not None:
                write_text(os.path.join(args.out, "e2.json"), dump_json(e2.to_json()))
            write_text(os.path.join(args.out, "appendix_a.json"), dump_json(data))
        sys.stdout.write(dump_json(data))
        return 0
    # valency of the run prefix that ends when the relaxed-agreement phase outputs
    if args.protocol != "lift-eps-rpk":
        raise ConfigError("the valency scenario runs on lift-eps-rpk")
    params = make_params(args)
    protocol = build_protocol(args, params)
    faults = _faults(args, params.n, params.f)
    rng = random.Random(args.seed or 0)
    inputs = _inputs(args, params.n, rng)
    full = simulate(protocol, inputs, faults, strategy(args.adversary))
    length = protocol.inner_end
    prefix = full.prefix(length)
    from .netsim import replay
    inner_values = [protocol.inner.output(replay(protocol, full, p, length + 1)[0].inner).value
                    for p in full.correct]
    common = 1 if 2 * sum(inner_values) > len(inner_values) else 0
    valency = compute_valency(prefix, protocol, guard=args.guard)
    data = {"scenario": "valency", "protocol": args.protocol, "params": params.to_json(),
            "faults": faults.to_json(), "prefix_slots": length, "epsilon_ba_outputs": inner_values,
            "epsilon_ba_common_value": common, "valency": valency.value,
            "matches": valency.value == ("OneValent" if common else "ZeroValent")}
    if args.out:
        write_text(os.path.join(args.out, "valency.json"), dump_json(data))
    sys.stdout.write(dump_json(data))
    return 0


def _common(p: argparse.ArgumentParser, protocol_required: bool = True):
    p.add_argument("--protocol", required=protocol_required, choices=PROTOCOL_NAMES)
    p.add_argument("--n", type=int)
    p.add_argument("--f", type=int, default=0)
    p.add_argument("--epsilon", help="rational slack, e.g. 1/8")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--smp", help="sampling-choice JSON file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--guard", type=int, help="enumeration guard (default 2^24 or $BA_LAB_GUARD)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ba-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one execution and check the protocol contract")
    _common(run)
    run.add_argument("--adversary", default="silent")
    run.add_argument("--byzantine", help="comma-separated Byzantine ids (default: the f highest)")
    run.add_argument("--inputs", help="input bits, e.g. 0110 (default: random from --seed)")

    sweep = sub.add_parser("sweep", help="bits and messages over a list of n")
    _common(sweep)
    sweep.add_argument("--n-list", required=True)
    sweep.add_argument("--fault-rule", choices=("none", "max"), default="none")
    sweep.add_argument("--trials", type=int, default=1)

    smp = sub.add_parser("smp", help="search for or verify a sampling choice")
    smp.add_argument("action", choices=("search", "verify"))
    smp.add_argument("--n", type=int)
    smp.add_argument("--k", type=int, default=1)
    smp.add_argument("--epsilon")
    smp.add_argument("--budget", type=int, default=10)
    smp.add_argument("--seed", type=int)
    smp.add_argument("--verifier", choices=("exhaustive", "monte-carlo"), default="exhaustive")
    smp.add_argument("--trials", type=int, default=1000)
    smp.add_argument("--smp")
    smp.add_argument("--out", help="output file")

    ext = sub.add_parser("extract", help="apply the extraction function to a message-set file")
    ext.add_argument("file")
    ext.add_argument("--m", type=int, required=True)
    ext.add_argument("--f", type=int, required=True)

    sc = sub.add_parser("scenario", help="lower-bound and valency scenarios")
    sc.add_argument("kind", choices=("appendix-a", "valency"))
    _common(sc)
    sc.add_argument("--p1", help="comma-separated P1 ids (default: the ceil(f/2) lowest)")
    sc.add_argument("--adversary", default="silent")
    sc.add_argument("--byzantine")
    sc.add_argument("--inputs")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "smp": cmd_smp, "extract": cmd_extract,
                "scenario": cmd_scenario}
    try:
        if args.command in ("run", "scenario") and args.n is None:
            raise ConfigError("--n is required")
        if args.command == "smp" and args.action == "search" and (args.n is None or args.epsilon is None):
            raise ConfigError("smp search needs --n and --epsilon")
        return handlers[args.command](args)
    except EnumerationTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, Incomplete, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
