"""Command-line entry point.

    cloudlease run baseline.ini [--system dawning] [--out DIR] [--logs]
    cloudlease sweep baseline.ini --grid sweep.ini [--out DIR]
    cloudlease check conf1|dominance baseline.ini
    cloudlease tco tco.ini
    cloudlease validate trace.swf [--kind MTC]

Results go to stdout as CSV; diagnostics go to stderr.  Exit status is 1
when a check fails or a trace is invalid, 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import scenarios as sc
from .elasticity import PolicyError
from .metrics import load_tco_inputs, reports_csv, tco_dedicated, tco_leased
from .trace import TraceError, WorkloadKind, load_trace, validate_trace

log = logging.getLogger("cloudlease")


def cmd_run(args) -> int:
    scenario = sc.load_scenario(args.scenario)
    systems = args.system or None
    reports = sc.run_scenario(scenario, systems, workers=args.workers)
    sys.stdout.write(reports_csv(reports))
    if args.out:
        for p in sc.write_reports(reports, args.out):
            log.info("wrote %s", p)
        if args.logs:
            for s in systems or scenario.systems:
                run = sc.run_system(scenario, s, keep_logs=True)
                for p in sc.write_run_logs(run, args.out):
                    log.info("wrote %s", p)
    return 0


def cmd_sweep(args) -> int:
    scenario = sc.load_scenario(args.scenario)
    if args.grid:
        spec = sc.load_sweep(args.grid)
    else:
        if not args.provider:
            raise sc.ScenarioError("give --grid or --provider for the default B x R grid")
        spec = sc.default_sweep(scenario, args.system, args.provider)
    rows = sc.run_sweep(scenario, spec, workers=args.workers)
    text = sc.sweep_csv(rows)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(text)
    return 0


def cmd_check(args) -> int:
    scenario = sc.load_scenario(args.scenario)
    if args.what == "conf1":
        results = [sc.check_conf1_equivalence(scenario, p.name) for p in scenario.providers]
    else:
        results = sc.check_dominance(scenario).checks
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["check", "result", "detail"])
    for r in results:
        w.writerow([r.name, "pass" if r.passed else "fail", r.detail])
        log.info(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_tco(args) -> int:
    inputs = load_tco_inputs(args.inputs)
    dedicated, leased = tco_dedicated(inputs), tco_leased(inputs)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["dedicated_per_month", "leased_per_month", "leased_over_dedicated_pct"])
    ratio = f"{100 * leased / dedicated:.2f}" if dedicated else ""
    w.writerow([f"{dedicated:.2f}", f"{leased:.2f}", ratio])
    return 0


def cmd_validate(args) -> int:
    kind = args.kind
    if kind is None:
        kind = WorkloadKind.HTC if args.trace.suffix.lower() == ".swf" else WorkloadKind.MTC
    trace = load_trace(args.trace, kind, procs_per_node=args.procs_per_node)
    diags = validate_trace(trace)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["code", "message"])
    for d in diags:
        w.writerow([d.code, d.message])
    log.info("%s: %s trace, %d jobs, %d skipped records, %d problems",
             args.trace, trace.kind.value, len(trace), trace.skipped, len(diags))
    return 1 if diags else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cloudlease",
                                 description="Trace-driven simulator of cloud provisioning regimes.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run every system of a scenario")
    p.add_argument("scenario", type=Path)
    p.add_argument("--system", action="append", help="only this system (repeatable)")
    p.add_argument("--out", type=Path, help="also write report.csv here")
    p.add_argument("--logs", action="store_true",
                   help="with --out, write per-job records and adjustment logs")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="run a B/R/S/C parameter grid")
    p.add_argument("scenario", type=Path)
    p.add_argument("--grid", type=Path, help="sweep spec file")
    p.add_argument("--provider", help="without --grid: default B x R grid for this provider")
    p.add_argument("--system", default="dawning", help="system whose policy is varied")
    p.add_argument("--out", type=Path)
    p.add_argument("--workers", type=int, default=sc.default_workers())
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", parents=[common], help="equivalence and dominance checks")
    p.add_argument("what", choices=["conf1", "dominance"])
    p.add_argument("scenario", type=Path)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("tco", parents=[common], help="monthly cost of owning versus leasing")
    p.add_argument("inputs", type=Path)
    p.set_defaults(func=cmd_tco)

    p = sub.add_parser("validate", parents=[common], help="check a trace file for invariant violations")
    p.add_argument("trace", type=Path)
    p.add_argument("--kind", type=lambda s: WorkloadKind(s.upper()), choices=list(WorkloadKind))
    p.add_argument("--procs-per-node", type=int, default=1)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (sc.ScenarioError, PolicyError, TraceError, ValueError, OSError) as exc:
        print(f"cloudlease: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
