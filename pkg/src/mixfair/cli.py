"""Command-line front end.

Exit codes: 0 when the criterion holds or an allocation was produced, 1 when
a criterion is violated or a counterexample certificate was produced, 2 on
usage or validation errors. JSON output is deterministic; run metadata is
only added with ``--meta``.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import __version__
from .allocators import (
    AlgorithmError,
    alg1_propalpha,
    identical_greedy,
    two_agent_efalpha,
    two_agent_efalpha_po,
)
from .fairness import Criterion, check, compute_mms, effa, propfa
from .mnw import check_mnw_propalpha
from .model import (
    Instance,
    ModelError,
    as_rational,
    bundle_value,
    format_rational,
    parse_allocation,
    parse_instance,
    serialize_allocation,
)
from .oracle import TEMPLATES, build_template, falsify, verify_relation

EXIT_OK, EXIT_VIOLATED, EXIT_USAGE = 0, 1, 2

ALGORITHMS = {
    "alg1": None,
    "two-agent": two_agent_efalpha,
    "two-agent-po": two_agent_efalpha_po,
    "identical-greedy": identical_greedy,
}

DEFAULT_REPORT_CRITERIA = "ef,ef1,efalpha,efm,prop,prop1,propalpha,propmm"


class UsageError(Exception):
    pass


def _dump(obj, args) -> str:
    if getattr(args, "meta", False):
        obj = {"result": obj, "meta": {
            "version": __version__,
            "python": platform.python_version(),
            "argv": sys.argv[1:],
            "time": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }}
    return json.dumps(obj, sort_keys=True, indent=2)


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def _write(path: str, text: str) -> None:
    Path(path).write_text(text + "\n", encoding="utf-8")


def _emit(text: str, out: str | None) -> None:
    if out:
        _write(out, text)
    else:
        print(text)


def _approx(q: Fraction) -> str:
    return f"{format_rational(q)} (~{float(q):.6f})"


# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    inst = parse_instance(_read(args.instance))
    alloc = parse_allocation(_read(args.allocation))
    report = check(inst, alloc, Criterion.parse(args.criterion))
    print(_dump(report.to_json(), args))
    return EXIT_OK if report.satisfied else EXIT_VIOLATED


def _allocate(inst: Instance, algorithm: str):
    if algorithm == "alg1":
        return alg1_propalpha(inst)
    return ALGORITHMS[algorithm](inst), None


def cmd_allocate(args) -> int:
    if bool(args.instance) == bool(args.instances):
        raise UsageError("give exactly one of --instance or --instances")
    if args.instances:
        if not args.out_dir:
            raise UsageError("--instances needs --out-dir")
        src, dst = Path(args.instances), Path(args.out_dir)
        if not src.is_dir():
            raise UsageError(f"no such directory: {src}")
        dst.mkdir(parents=True, exist_ok=True)
        for path in sorted(src.glob("*.json")):
            alloc, trace = _allocate(parse_instance(path.read_text(encoding="utf-8")), args.algorithm)
            _write(str(dst / f"{path.stem}.allocation.json"), serialize_allocation(alloc))
            if trace is not None and args.trace:
                _write(str(dst / f"{path.stem}.trace.json"), _dump(trace.to_json(), args))
        return EXIT_OK
    inst = parse_instance(_read(args.instance))
    alloc, trace = _allocate(inst, args.algorithm)
    _emit(serialize_allocation(alloc), args.out)
    if args.trace:
        if trace is None:
            raise UsageError("--trace is only available for alg1")
        _write(args.trace, _dump(trace.to_json(), args))
    return EXIT_OK


def cmd_mnw(args) -> int:
    inst = parse_instance(_read(args.instance))
    report = check_mnw_propalpha(inst)
    _emit(_dump(report.to_json(), args), args.out)
    return EXIT_OK if report.satisfied else EXIT_VIOLATED


def _template_params(args) -> dict:
    params = {}
    for key in ("n", "eps", "x", "beta"):
        value = getattr(args, key)
        if value is not None:
            params[key] = int(value) if key == "n" else as_rational(value, key)
    return params


def cmd_counterexample(args) -> int:
    params = _template_params(args)
    name = args.template
    if name in ("t3", "t6"):
        t = build_template(name, **params)
        if args.criterion:
            crit = Criterion.parse(args.criterion)
        elif name == "t3":
            crit = effa(as_rational(args.c, "c") if args.c else 1)
        else:
            n, eps = t.params["n"], t.params["eps"]
            crit = propfa(as_rational(args.c, "c") if args.c else Fraction(n - 1, n) - eps)
        result = falsify(t.instance, crit, args.K)
        body = {"template": name, "params": {k: str(v) for k, v in t.params.items()}, **result.to_json()}
        print(_dump(body, args))
        return EXIT_VIOLATED if not result.found else EXIT_OK
    if args.c:
        params["c"] = as_rational(args.c, "c")
    report = verify_relation(name, **params)
    print(_dump(report.to_json(), args))
    return EXIT_VIOLATED if report.holds else EXIT_OK


def cmd_mms(args) -> int:
    inst = parse_instance(_read(args.instance))
    agents = [args.agent] if args.agent is not None else range(inst.n)
    certs = [compute_mms(inst, i).to_json() for i in agents]
    print(_dump({"mms": certs}, args))
    return EXIT_OK


def cmd_report(args) -> int:
    inst = parse_instance(_read(args.instance))
    alloc = parse_allocation(_read(args.allocation))
    lines = [f"instance: {inst.n} agents, {inst.m} goods, {inst.segments} cake segment{'' if inst.segments == 1 else 's'}",
             "values are exact fractions; ~ marks a 6-decimal approximation", ""]
    for i in range(inst.n):
        total = inst.total(i)
        alpha = inst.goods_value(i) / total if total else Fraction(0)
        own = bundle_value(inst, i, alloc[i])
        lines.append(f"agent {i}: own bundle {_approx(own)}, total {_approx(total)}, alpha {_approx(alpha)}")
    lines.append("")
    for token in (args.criteria or DEFAULT_REPORT_CRITERIA).split(","):
        rep = check(inst, alloc, Criterion.parse(token.strip()))
        lines.append(f"{rep.criterion.token:>14}: {rep.verdict:9} slack {_approx(rep.slack)}")
        for c in rep.violations:
            other = f" vs {c.other}" if c.other is not None else ""
            lines.append(f"{'':16}agent {c.agent}{other}: {_approx(c.lhs)} < {_approx(c.rhs)}")
    print("\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixfair", description="Exact fair division of mixed goods.")
    p.add_argument("--meta", action="store_true", help="wrap JSON output with run metadata")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="evaluate a fairness criterion on an allocation")
    c.add_argument("--instance", required=True)
    c.add_argument("--allocation", required=True)
    c.add_argument("--criterion", required=True,
                   help="ef, prop, ef1, prop1, efalpha, propalpha, effa:<c>, propfa:<c>, efm, mms[:<beta>], propmm")
    c.set_defaults(func=cmd_check)

    a = sub.add_parser("allocate", help="run an allocation algorithm")
    a.add_argument("--algorithm", required=True, choices=sorted(ALGORITHMS))
    a.add_argument("--instance")
    a.add_argument("--instances", help="directory of instance files (batch mode)")
    a.add_argument("--out", help="allocation file (default: stdout)")
    a.add_argument("--out-dir", help="output directory for batch mode")
    a.add_argument("--trace", nargs="?", const=True,
                   help="alg1 trace file; in batch mode a bare flag writes <name>.trace.json")
    a.set_defaults(func=cmd_allocate)

    m = sub.add_parser("mnw", help="maximum Nash welfare allocations and their PROP-alpha check")
    m.add_argument("--instance", required=True)
    m.add_argument("--out")
    m.set_defaults(func=cmd_mnw)

    x = sub.add_parser("counterexample", help="rebuild a counterexample template and certify it")
    x.add_argument("--template", required=True, choices=sorted(TEMPLATES))
    x.add_argument("--n")
    x.add_argument("--eps")
    x.add_argument("--x")
    x.add_argument("--beta")
    x.add_argument("--c", help="coefficient of the criterion expected to fail")
    x.add_argument("--criterion", help="override the criterion (t3, t6)")
    x.add_argument("--K", type=int, default=600, help="grid resolution when no exact branch applies")
    x.set_defaults(func=cmd_counterexample)

    s = sub.add_parser("mms", help="maximin shares with witness partitions")
    s.add_argument("--instance", required=True)
    s.add_argument("--agent", type=int)
    s.set_defaults(func=cmd_mms)

    r = sub.add_parser("report", help="human-readable summary of an allocation")
    r.add_argument("--instance", required=True)
    r.add_argument("--allocation", required=True)
    r.add_argument("--criteria", help=f"comma-separated tokens (default {DEFAULT_REPORT_CRITERIA})")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "trace", None) is True and not getattr(args, "instances", None):
        print("error: --trace needs a file name outside batch mode", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AlgorithmError as exc:
        print(f"algorithm failure: {exc}", file=sys.stderr)
        return EXIT_VIOLATED


if __name__ == "__main__":
    sys.exit(main())
