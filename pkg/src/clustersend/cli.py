"""``clustersend`` command line: analyze | simulate | verify | sweep.

Exit codes: 0 success, 1 a verification or safety check failed, 2 usage
or configuration error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from fractions import Fraction

from . import analysis, kernels
from .core import ClusterConfig, ConfigurationError
from .harness import RunSpec, load_config, simulate_csv, summarize, sweep_csv
from .protocols import Protocol, list_faults, sf_min
from .simnet import AdversaryKind
from .verify import SUITES

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _both(x) -> str:
    return f"{analysis.fmt_rational(x)} = {analysis.fmt_decimal(x)}"


def cmd_analyze(args, out) -> int:
    n1 = args.n1 if args.n1 is not None else args.n
    n2 = args.n2 if args.n2 is not None else args.n
    f1 = args.f1 if args.f1 is not None else args.f
    f2 = args.f2 if args.f2 is not None else args.f
    if None in (n1, n2, f1, f2):
        raise ConfigurationError("analyze needs --n/--f or all of --n1 --f1 --n2 --f2")
    c1 = ClusterConfig.build("C1", n1, range(f1))
    c2 = ClusterConfig.build("C2", n2, range(f2))
    s1, s2 = sf_min(c1, c2)
    n, m1, m2 = len(s1), list_faults(s1, c1), list_faults(s2, c2)
    print(f"clusters: n1={n1} f1={f1} n2={n2} f2={f2}", file=out)
    print(f"FC({n},{m1},{m2},k):", file=out)
    for k, v in analysis.fc_table(n, m1, m2).items():
        print(f"  k={k}: {v}", file=out)
    try:
        pt = analysis.pt_exact(n, m1, m2)
        print(f"PT({n},{m1},{m2}) = {_both(pt)}", file=out)
        print(f"plcs sequential expectation = {_both(analysis.plcs_expected_steps(n, m1, m2))}", file=out)
    except analysis.DomainError as exc:
        print(f"PT({n},{m1},{m2}) undefined: {exc}", file=out)
    pcs = analysis.pcs_expected_steps(n1, f1, n2, f2)
    bound = Fraction(9, 4) if n1 > 3 * f1 and n2 > 3 * f2 else Fraction(4)
    print(f"pcs expected steps = {_both(pcs)} (bound {analysis.fmt_rational(bound)})", file=out)
    if n1 == n2 and f1 == f2:
        print(f"PT(2f+1,f,f) at f={f1} = {_both(analysis.pt_equal_half(f1))}", file=out)
    print("reference curves:", file=out)
    for key, val in analysis.reference_curves(n1, f1, n2, f2).as_dict().items():
        shown = "n/a" if val is None else _both(val)
        print(f"  {key} = {shown}", file=out)
    return EXIT_OK


def build_spec(args) -> RunSpec:
    data = load_config(args.config) if args.config else {}
    flags = {
        "protocol": args.protocol, "n1": args.n1, "f1": args.f1, "n2": args.n2, "f2": args.f2,
        "network": args.network, "drop": args.drop, "dup": args.dup, "delay_max": args.delay_max,
        "adversary": args.adversary, "trials": args.trials, "seed": args.seed,
        "delta": args.delta, "parallel_rounds": args.parallel_rounds,
    }
    data.update({k: v for k, v in flags.items() if v is not None})
    return RunSpec.from_mapping(data)


def cmd_simulate(args, out) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        spec = build_spec(args)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    text, results = simulate_csv(spec)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)
    row = summarize(spec, results)
    expected = "n/a" if row.analytic_expected is None else analysis.fmt_decimal(row.analytic_expected)
    print(f"{row.protocol} mean steps {analysis.fmt_decimal(row.empirical_mean)} "
          f"(analytic {expected}, ci95 {row.ci95:.4g}, max {row.empirical_max}, ok={row.ok})",
          file=sys.stderr)
    bad = [r for r in results if r.violations]
    if bad:
        path = (args.out or "clustersend") + ".violations.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for r in bad:
                fh.write(r.trace_jsonl)
        for r in bad[:5]:
            print(f"trial {r.index}: {'; '.join(r.violations)}", file=sys.stderr)
        print(f"{len(bad)} trial(s) violated an invariant; traces in {path}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args, out) -> int:
    names = args.suite or list(SUITES)
    ok = True
    for name in names:
        kwargs = {}
        if args.max_n is not None and name in ("fc", "pt", "ppcs"):
            kwargs["max_n"] = args.max_n
        if args.traces is not None and name == "safety":
            kwargs["traces"] = args.traces
        if args.trials is not None and name in ("pcs", "plcs", "async"):
            kwargs["trials"] = args.trials
        res = SUITES[name](**kwargs)
        print(res.line(), file=out)
        for msg in res.failures:
            print(f"  {msg}", file=out)
        ok &= res.passed
    print("all suites passed" if ok else "verification FAILED", file=out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(args, out) -> int:
    text = sweep_csv(args.f_min, args.f_max, args.trials or 0, args.seed or 0)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clustersend", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 ({kernels.BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    def sizes(p, single: bool = False) -> None:
        for name in ("n1", "f1", "n2", "f2"):
            p.add_argument(f"--{name}", type=int)
        if single:
            p.add_argument("--n", type=int, help="size of both clusters")
            p.add_argument("--f", type=int, help="faulty replicas in both clusters")

    p = sub.add_parser("analyze", help="exact expectations and counts")
    sizes(p, single=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo campaign, CSV per trial")
    sizes(p)
    p.add_argument("--protocol", choices=[x.value for x in Protocol])
    p.add_argument("--network", choices=["sync", "async"])
    p.add_argument("--drop", type=float)
    p.add_argument("--dup", type=float)
    p.add_argument("--delay-max", type=int)
    p.add_argument("--adversary", choices=[x.value for x in AdversaryKind])
    p.add_argument("--delta", type=int)
    p.add_argument("--parallel-rounds", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON file with RunSpec fields; flags override it")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run verification suites")
    p.add_argument("--suite", action="append", choices=list(SUITES))
    p.add_argument("--max-n", type=int)
    p.add_argument("--traces", type=int)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="analytic curves over f as CSV")
    p.add_argument("--f-min", type=int, default=0)
    p.add_argument("--f-max", type=int, default=20)
    p.add_argument("--trials", type=int, help="also measure Pcs and Plcs means with this many trials")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except (ConfigurationError, analysis.DomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
