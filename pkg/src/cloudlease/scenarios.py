"""
Scenario files, experiment runs, parameter sweeps and the economy checks.

A scenario file is an INI document::

    [scenario]
    name = baseline
    window = 14d                 ; seconds, or with an m/h/d suffix
    speedup = 1000
    baseline = dedicated         ; system the saved% column compares against

    [provider nasa]
    kind = HTC
    trace = ../data/traces/nasa_surrogate.swf   ; relative to this file
    start = 1993-10-01T00:00:03-07:00           ; offset seconds or ISO time
    procs_per_node = 1
    policy.dedicated = dedicated 128
    policy.dawning = dynamic 60C/40B/1.5R/60S

Every ``policy.<system>`` key names one system; all providers must define
the same systems.  MTC providers take ``repeat = yes`` (the default) for
back-to-back repetition over the window.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import csv
import io
import itertools
import logging
import os
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Sequence

from .elasticity import INF, ElasticityPolicy, PolicyError, Regime, parse_policy
from .metrics import MetricsReport, ProviderMetrics, compare, finalize_report, reports_csv
from .runtime import EnvOutcome, Simulation
from .trace import WorkloadKind, WorkloadTrace, extract_window, load_trace, plan_repetition

logger = logging.getLogger(__name__)

DAY = 86400


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderSpec:
    name: str
    kind: WorkloadKind
    trace: Path
    start: float = 0
    procs_per_node: int = 1
    repeat: bool = True
    policies: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Scenario:
    name: str
    providers: tuple[ProviderSpec, ...]
    window: Fraction = Fraction(14 * DAY)
    speedup: Fraction = Fraction(1000)
    baseline: str | None = None

    @property
    def systems(self) -> list[str]:
        return list(self.providers[0].policies) if self.providers else []

    def provider(self, name: str) -> ProviderSpec:
        for p in self.providers:
            if p.name == name:
                return p
        raise KeyError(name)

    def policies(self, system: str) -> dict[str, ElasticityPolicy]:
        if system not in self.systems:
            raise ScenarioError(f"scenario {self.name!r} has no system {system!r}")
        return {p.name: p.policies[system] for p in self.providers}

    def restricted(self, names: Sequence[str]) -> "Scenario":
        return replace(self, providers=tuple(self.provider(n) for n in names))


_DURATION_RE = re.compile(r"^\s*([0-9.]+)\s*([smhd]?)\s*$")
_UNIT = {"": 1, "s": 1, "m": 60, "h": 3600, "d": DAY}


def parse_duration(text: str) -> Fraction:
    m = _DURATION_RE.match(text)
    if not m:
        raise ScenarioError(f"bad duration {text!r}")
    value = Fraction(m.group(1)) * _UNIT[m.group(2)]
    if value <= 0:
        raise ScenarioError(f"duration must be positive, got {text!r}")
    return value


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("yes", "true", "1", "on"):
        return True
    if t in ("no", "false", "0", "off"):
        return False
    raise ScenarioError(f"bad boolean {text!r}")


_SCENARIO_KEYS = {"name", "window", "speedup", "baseline"}
_PROVIDER_KEYS = {"kind", "trace", "start", "procs_per_node", "repeat"}


def load_scenario(path) -> Scenario:
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    if not cp.has_section("scenario"):
        raise ScenarioError(f"{path}: missing [scenario] section")
    head = dict(cp.items("scenario"))
    unknown = set(head) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"{path}: unknown keys in [scenario]: {', '.join(sorted(unknown))}")

    providers = []
    for section in cp.sections():
        if section == "scenario":
            continue
        kind_word, _, name = section.partition(" ")
        if kind_word != "provider" or not name.strip():
            raise ScenarioError(f"{path}: unknown section [{section}]")
        providers.append(_load_provider(path, name.strip(), dict(cp.items(section))))
    if not providers:
        raise ScenarioError(f"{path}: no providers")
    names = [p.name for p in providers]
    if len(set(names)) != len(names):
        raise ScenarioError(f"{path}: duplicate provider names")
    systems = list(providers[0].policies)
    for p in providers[1:]:
        if list(p.policies) != systems:
            raise ScenarioError(f"{path}: provider {p.name!r} defines systems {list(p.policies)}, "
                                f"expected {systems}")

    baseline = head.get("baseline") or None
    if baseline is not None and baseline not in systems:
        raise ScenarioError(f"{path}: baseline system {baseline!r} is not defined")
    try:
        speedup = Fraction(head.get("speedup", "1000"))
    except ValueError:
        raise ScenarioError(f"{path}: bad speedup {head['speedup']!r}") from None
    if speedup <= 0:
        raise ScenarioError(f"{path}: speedup must be positive")
    return Scenario(
        name=head.get("name", path.stem),
        providers=tuple(providers),
        window=parse_duration(head.get("window", "14d")),
        speedup=speedup,
        baseline=baseline,
    )


def _load_provider(path: Path, name: str, items: dict) -> ProviderSpec:
    policies = {}
    for key, value in items.items():
        if key.startswith("policy."):
            system = key[len("policy."):]
            try:
                policies[system] = parse_policy(value)
            except PolicyError as exc:
                raise ScenarioError(f"{path}: provider {name!r}, {key}: {exc}") from None
        elif key not in _PROVIDER_KEYS:
            raise ScenarioError(f"{path}: unknown key {key!r} for provider {name!r}")
    for req in ("kind", "trace"):
        if req not in items:
            raise ScenarioError(f"{path}: provider {name!r} needs {req!r}")
    try:
        kind = WorkloadKind(items["kind"].strip().upper())
    except ValueError:
        raise ScenarioError(f"{path}: provider {name!r}: kind must be HTC or MTC") from None
    trace = (path.parent / items["trace"].strip()).resolve()
    if not trace.is_file():
        raise ScenarioError(f"{path}: provider {name!r}: workload file {trace} not found")
    try:
        ppn = int(items.get("procs_per_node", "1"))
    except ValueError:
        raise ScenarioError(f"{path}: provider {name!r}: bad procs_per_node") from None
    if ppn < 1:
        raise ScenarioError(f"{path}: provider {name!r}: procs_per_node must be >= 1")
    return ProviderSpec(name, kind, trace, _parse_start(items.get("start", "0")), ppn,
                        _parse_bool(items.get("repeat", "yes")), policies)


def _parse_start(text: str):
    """Seconds from the trace epoch, or an ISO timestamp kept as a datetime."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        raise ScenarioError(f"bad start {text!r}") from None
    if ts.tzinfo is None:
        raise ScenarioError(f"start {text!r} needs a UTC offset")
    return ts


@lru_cache(maxsize=16)
def _load(path: Path, kind: WorkloadKind, ppn: int) -> WorkloadTrace:
    return load_trace(path, kind, procs_per_node=ppn)


def prepare_trace(spec: ProviderSpec, window) -> WorkloadTrace:
    """Load, window and (for MTC) plan repetition for one provider."""
    trace = _load(spec.trace, spec.kind, spec.procs_per_node)
    if spec.kind is WorkloadKind.MTC:
        return plan_repetition(trace, window) if spec.repeat else replace(trace, duration=window)
    start = spec.start
    if isinstance(start, datetime):
        if trace.epoch is None:
            raise ScenarioError(f"{spec.trace}: no UnixStartTime header, give start in seconds")
        start = start.timestamp() - trace.epoch
    return extract_window(trace, start, window)


# -- running -----------------------------------------------------------------

@dataclass
class SystemRun:
    report: MetricsReport
    outcomes: list[EnvOutcome]
    sim: Simulation | None = None


def run_system(scenario: Scenario, system: str, policies: dict | None = None,
               keep_logs: bool = False, speedup=None) -> SystemRun:
    """Simulate one system (one policy per provider) over the scenario window."""
    policies = policies or scenario.policies(system)
    sim = Simulation(scenario.window, speedup or scenario.speedup,
                     keep_adjustments=keep_logs, keep_leases=keep_logs)
    for p in scenario.providers:
        sim.add_environment(p.name, prepare_trace(p, scenario.window), policies[p.name])
    outcomes = sim.run()
    report = finalize_report(sim.ledger, outcomes, scenario.window, scenario.name, system)
    if not keep_logs:
        for o in outcomes:
            o.env = None
        sim = None
    return SystemRun(report, outcomes, sim)


def _report_only(args) -> MetricsReport:
    scenario, system, policies = args
    return run_system(scenario, system, policies).report


def _map(fn, jobs: list, workers: int | None):
    if workers and workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_scenario(scenario: Scenario, systems: Sequence[str] | None = None,
                 workers: int | None = None) -> list[MetricsReport]:
    """Run each system and fill saved% against the scenario baseline."""
    systems = list(systems or scenario.systems)
    for s in systems:
        scenario.policies(s)
    wanted = list(systems)
    if scenario.baseline and scenario.baseline not in wanted:
        wanted.insert(0, scenario.baseline)
    reports = _map(_report_only, [(scenario, s, None) for s in wanted], workers)
    by_name = dict(zip(wanted, reports))
    if scenario.baseline:
        base = by_name[scenario.baseline]
        for r in reports:
            compare(r, base)
    return [by_name[s] for s in systems]


# -- sweeps ------------------------------------------------------------------

DEFAULT_B = {"nasa": (0, 20, 40, 60, 80, 100, 128), "blue": (0, 20, 40, 60, 80, 100, 144),
             "montage": (0, 20, 40, 60, 80, 100, 166)}
DEFAULT_R = {WorkloadKind.HTC: (1, 1.2, 1.5, 2, 4, 100), WorkloadKind.MTC: (1, 2, 4, 8, 16, 100)}
DEFAULT_S = {WorkloadKind.HTC: (10, 30, 60, 100, 120, 150, 180, 200), WorkloadKind.MTC: (1,)}
DEFAULT_C_MINUTES = (10, 30, 60, 90, 120)


@dataclass(frozen=True)
class SweepSpec:
    """Grid over B/R/S/C for one system; axes left as ``None`` keep the
    provider's value from ``system``."""

    system: str
    providers: tuple[str, ...] = ()
    B: tuple | None = None
    R: tuple | None = None
    S: tuple | None = None
    C: tuple | None = None          # minutes

    def __post_init__(self):
        for axis in "BRSC":
            values = getattr(self, axis)
            if values is not None and not values:
                raise ScenarioError(f"sweep axis {axis} is empty")

    def points(self, base: ElasticityPolicy) -> list[tuple[str, ElasticityPolicy]]:
        if base.regime is not Regime.DYNAMIC:
            raise ScenarioError(f"sweeps vary dynamic policies; {self.system!r} uses {base.label()}")
        axes = [self.B or (base.initial,), self.R or (base.threshold,),
                self.S or (base.check_cycle,), self.C or (base.lease_unit / 60,)]
        out = []
        for b, r, s, c in itertools.product(*axes):
            pol = ElasticityPolicy.dynamic(int(b), float(r), s, float(c) * 60)
            out.append((_point_name(pol), pol))
        return out


def _point_name(pol: ElasticityPolicy) -> str:
    return pol.label().split(" ", 1)[1]


def _axis(text: str | None, conv=float):
    if text is None or not text.strip():
        return None
    return tuple(conv(v) if v.strip().lower() != "inf" else INF for v in text.split(","))


def load_sweep(path) -> SweepSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    if cp.sections() != ["sweep"]:
        raise ScenarioError(f"{path}: expected exactly one [sweep] section")
    items = dict(cp.items("sweep"))
    unknown = set(items) - {"system", "providers", "B", "R", "S", "C"}
    if unknown:
        raise ScenarioError(f"{path}: unknown sweep keys: {', '.join(sorted(unknown))}")
    if "system" not in items:
        raise ScenarioError(f"{path}: sweep needs a system")
    providers = tuple(p.strip() for p in items.get("providers", "").split(",") if p.strip())
    try:
        return SweepSpec(items["system"].strip(), providers, _axis(items.get("B"), int),
                         _axis(items.get("R")), _axis(items.get("S")), _axis(items.get("C")))
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def default_sweep(scenario: Scenario, system: str, provider: str) -> SweepSpec:
    """The B x R grid of the parameter study for one provider."""
    spec = scenario.provider(provider)
    b = DEFAULT_B.get(provider)
    if b is None:
        cap = max((pol.initial for pol in spec.policies.values()
                   if pol.regime is Regime.STATIC), default=0)
        b = (0, 20, 40, 60, 80, 100, cap)
    return SweepSpec(system, (provider,), b, DEFAULT_R[spec.kind])


@dataclass
class SweepRow:
    provider: str
    point: str
    policy: ElasticityPolicy
    metrics: ProviderMetrics


def run_sweep(scenario: Scenario, spec: SweepSpec, workers: int | None = None) -> list[SweepRow]:
    """One single-provider run per (provider, grid point), in grid order."""
    names = spec.providers or tuple(p.name for p in scenario.providers)
    jobs, keys = [], []
    for name in names:
        sub = scenario.restricted([name])
        base = sub.policies(spec.system)[name]
        for point, pol in spec.points(base):
            jobs.append((sub, f"{spec.system}[{point}]", {name: pol}))
            keys.append((name, point, pol))
    reports = _map(_report_only, jobs, workers)
    return [SweepRow(name, point, pol, rep.providers[0])
            for (name, point, pol), rep in zip(keys, reports)]


SWEEP_COLUMNS = ["provider", "point", "B", "R", "S", "C_minutes", "completed_jobs",
                 "tasks_per_second", "rc_node_hours", "adjustments", "adjusted_nodes",
                 "overhead_node_hours", "peak_nodes"]


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        m, pol = r.metrics, r.policy
        w.writerow([r.provider, r.point, pol.initial, _num(pol.threshold),
                    "" if pol.check_cycle is None else _num(pol.check_cycle),
                    _num(pol.lease_unit / 60), m.completed_jobs,
                    "" if m.tasks_per_second is None else f"{float(m.tasks_per_second):.4f}",
                    f"{float(m.rc):.3f}", m.adjustments, m.adjusted_nodes,
                    f"{float(m.overhead):.3f}", m.peak_nodes])
    return buf.getvalue()


def _num(x) -> str:
    if x == INF:
        return "inf"
    return str(int(x)) if float(x).is_integer() else repr(float(x))


# -- economy checks ------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def static_capacity(scenario: Scenario, provider: str) -> int:
    """LR for a provider: its static capacity in the baseline system, else
    the first static policy it has."""
    spec = scenario.provider(provider)
    order = ([scenario.baseline] if scenario.baseline else []) + scenario.systems
    for s in order:
        pol = spec.policies[s]
        if pol.regime is Regime.STATIC:
            return pol.initial
    raise ScenarioError(f"provider {provider!r} has no static policy to compare against")


def conf1_policy(lr: int) -> ElasticityPolicy:
    """B = LR, R = inf: never triggers a dynamic request on its own."""
    return ElasticityPolicy.dynamic(lr, INF)


def compare_runs(a: SystemRun, b: SystemRun) -> str | None:
    """First divergence between two runs in RC, PM or completion times."""
    for pa, pb in zip(a.report.providers, b.report.providers):
        if pa.rc != pb.rc:
            return f"{pa.provider}: RC {float(pa.rc)} != {float(pb.rc)}"
        if pa.pm != pb.pm or pa.completed_jobs != pb.completed_jobs:
            return f"{pa.provider}: PM {pa.pm} != {pb.pm}"
    for oa, ob in zip(a.outcomes, b.outcomes):
        if len(oa.completion_ms) != len(ob.completion_ms):
            return f"{oa.env_id}: {len(oa.completion_ms)} vs {len(ob.completion_ms)} completions"
        for i, (x, y) in enumerate(zip(oa.completion_ms, ob.completion_ms)):
            if x != y:
                return f"{oa.env_id}: job #{i} completes at {x} ms vs {y} ms"
    return None


def check_conf1_equivalence(scenario: Scenario, provider: str, lr: int | None = None) -> CheckResult:
    """Dynamic(B = LR, R = inf) against static(LR) for one provider, exactly."""
    sub = scenario.restricted([provider])
    lr = static_capacity(scenario, provider) if lr is None else lr
    static = run_system(sub, f"static {lr}", {provider: ElasticityPolicy.static(lr)})
    dyn = run_system(sub, f"conf1 {lr}", {provider: conf1_policy(lr)})
    diff = compare_runs(static, dyn)
    rc = static.report.providers[0].rc
    if diff is None:
        return CheckResult(f"conf1 {provider}", True,
                           f"LR={lr}, RC={float(rc):g}, PM={_fmt_pm(static.report.providers[0])}")
    return CheckResult(f"conf1 {provider}", False, f"LR={lr}: {diff}")


def _fmt_pm(m: ProviderMetrics) -> str:
    return f"{float(m.pm):.4f}" if m.kind == "MTC" else str(m.pm)


def dominates(cand: ProviderMetrics, ref: ProviderMetrics) -> bool:
    return cand.rc <= ref.rc and cand.pm >= ref.pm


@dataclass
class DominanceResult:
    checks: list[CheckResult]
    witness: dict[str, tuple[str, ProviderMetrics]]
    static_trc: Fraction
    witness_trc: Fraction

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def check_dominance(scenario: Scenario, sweeps: Sequence[SweepSpec] = (),
                    candidates: dict | None = None, refs: dict | None = None) -> DominanceResult:
    """Look for dynamic configurations that use no more than the static
    regime while performing at least as well, per provider and summed.

    Candidates per provider: every dynamic system in the scenario, CONF1
    at the static capacity, and any sweep grid points.  ``candidates``
    may carry precomputed ``{provider: [(label, ProviderMetrics)]}`` and
    ``refs`` the static ``{provider: ProviderMetrics}`` to beat.
    """
    names = [p.name for p in scenario.providers]
    pool: dict[str, list] = {n: list((candidates or {}).get(n, ())) for n in names}
    refs = dict(refs or {})
    for n in names:
        sub = scenario.restricted([n])
        lr = static_capacity(scenario, n)
        if n not in refs:
            refs[n] = run_system(sub, f"static {lr}", {n: ElasticityPolicy.static(lr)}).report.providers[0]
        if not pool[n]:
            for s in scenario.systems:
                if sub.policies(s)[n].regime is Regime.DYNAMIC:
                    pool[n].append((s, run_system(sub, s).report.providers[0]))
            pool[n].append((f"conf1 {lr}",
                            run_system(sub, "conf1", {n: conf1_policy(lr)}).report.providers[0]))
    for spec in sweeps:
        for row in run_sweep(scenario, spec):
            pool[row.provider].append((row.point, row.metrics))

    checks, witness = [], {}
    for n in names:
        ok = [(label, m) for label, m in pool[n] if dominates(m, refs[n])]
        if ok:
            label, m = min(ok, key=lambda lm: lm[1].rc)
            witness[n] = (label, m)
            checks.append(CheckResult(f"dominance {n}", True,
                                      f"{label}: RC {float(m.rc):g} <= {float(refs[n].rc):g}, "
                                      f"PM {_fmt_pm(m)} >= {_fmt_pm(refs[n])}"))
        else:
            checks.append(CheckResult(f"dominance {n}", False,
                                      f"no candidate of {len(pool[n])} dominates static"))
    static_trc = sum((r.rc for r in refs.values()), Fraction(0))
    witness_trc = sum((m.rc for _, m in witness.values()), Fraction(0))
    ok = len(witness) == len(names) and witness_trc <= static_trc
    checks.append(CheckResult("dominance total", ok,
                              f"TRC {float(witness_trc):g} <= {float(static_trc):g}" if ok
                              else "no consolidated witness"))
    return DominanceResult(checks, witness, static_trc, witness_trc)


# -- output ------------------------------------------------------------------

def write_reports(reports: Sequence[MetricsReport], out_dir, sweep: Sequence[SweepRow] = ()) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.csv"]
    written[0].write_text(reports_csv(reports))
    if sweep:
        written.append(out / "sweep.csv")
        written[-1].write_text(sweep_csv(sweep))
    return written


def write_run_logs(run: SystemRun, out_dir) -> list[Path]:
    """Per-job records and the adjustment log of one kept run."""
    if run.sim is None:
        raise ScenarioError("run was made without keep_logs")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    system = re.sub(r"[^A-Za-z0-9_.-]+", "_", run.report.system)
    paths = []
    for env in run.sim.envs.values():
        p = out / f"jobs_{system}_{env.env_id}.txt"
        with open(p, "w") as fh:
            for line in run.sim.job_records(env):
                fh.write(line + "\n")
        paths.append(p)
    p = out / f"adjustments_{system}.txt"
    with open(p, "w") as fh:
        for line in run.sim.adjustment_lines():
            fh.write(line + "\n")
    paths.append(p)
    return paths


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
