"""Resource consumption, performance, overhead and TCO accounting.

Everything reported here is in original (unscaled) trace time.  The
simulator runs on a scaled millisecond clock; the ledger converts with the
speedup factor, using exact rationals so that runs at different speedups
report identical numbers.
"""

from __future__ import annotations

import configparser
import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

SETUP_SECONDS_PER_NODE = Fraction("15.743")
MS_PER_HOUR = 3_600_000


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


class ConsumptionLedger:
    def __init__(self, speedup=1):
        self.speedup = as_fraction(speedup)
        self._node_hours: dict[str, Fraction] = defaultdict(Fraction)
        self._node_ms: dict[str, int] = defaultdict(int)
        self.adjustments: dict[str, int] = defaultdict(int)
        self.adjusted_nodes: dict[str, int] = defaultdict(int)
        self.peak = 0
        self.env_peak: dict[str, int] = defaultdict(int)

    def accrue_usage(self, env_id: str, nodes: int, hours) -> None:
        """Add ``nodes`` x ``hours`` (original time) to an environment."""
        hours = as_fraction(hours)
        if hours < 0:
            raise ValueError(f"negative accrual interval {hours}")
        if hours and nodes:
            self._node_hours[env_id] += nodes * hours

    def accrue_scaled(self, env_id: str, nodes: int, scaled_ms: int) -> None:
        """Add a billed holding measured on the scaled millisecond clock."""
        if scaled_ms < 0:
            raise ValueError(f"negative accrual interval {scaled_ms}")
        self._node_ms[env_id] += nodes * scaled_ms

    def observe(self, env_id: str, env_total: int, total: int) -> None:
        if env_total > self.env_peak[env_id]:
            self.env_peak[env_id] = env_total
        if total > self.peak:
            self.peak = total

    def record_adjustment(self, record) -> None:
        if record.delta_nodes == 0:
            raise ValueError("adjustment of zero nodes")
        self.add_adjustment(record.env_id, record.delta_nodes)

    def add_adjustment(self, env_id: str, delta: int) -> None:
        self.adjustments[env_id] += 1
        self.adjusted_nodes[env_id] += abs(delta)

    def rc(self, env_id: str) -> Fraction:
        return self._node_hours[env_id] + Fraction(self._node_ms[env_id]) * self.speedup / MS_PER_HOUR

    def overhead_node_hours(self, env_id: str | None = None) -> Fraction:
        nodes = (sum(self.adjusted_nodes.values()) if env_id is None
                 else self.adjusted_nodes[env_id])
        return nodes * SETUP_SECONDS_PER_NODE / 3600

    @property
    def envs(self):
        return sorted(set(self._node_hours) | set(self._node_ms) | set(self.adjustments))


@dataclass
class ProviderMetrics:
    provider: str
    kind: str
    policy: str
    jobs: int
    completed_jobs: int
    tasks_per_second: Fraction | None
    rc: Fraction
    adjustments: int
    adjusted_nodes: int
    overhead: Fraction
    peak_nodes: int
    saved_pct: Fraction | None = None

    @property
    def pm(self):
        """Performance: completed jobs for HTC, tasks per second for MTC."""
        return self.tasks_per_second if self.kind == "MTC" else self.completed_jobs


@dataclass
class MetricsReport:
    scenario: str
    system: str
    window_s: Fraction
    providers: list[ProviderMetrics] = field(default_factory=list)
    peak_nodes: int = 0
    saved_pct: Fraction | None = None

    @property
    def trc(self) -> Fraction:
        return sum((p.rc for p in self.providers), Fraction(0))

    @property
    def adjustments(self) -> int:
        return sum(p.adjustments for p in self.providers)

    @property
    def adjusted_nodes(self) -> int:
        return sum(p.adjusted_nodes for p in self.providers)

    @property
    def overhead(self) -> Fraction:
        return sum((p.overhead for p in self.providers), Fraction(0))

    def provider(self, name: str) -> ProviderMetrics:
        for p in self.providers:
            if p.provider == name:
                return p
        raise KeyError(name)


def saved(baseline: Fraction, value: Fraction) -> Fraction | None:
    if not baseline:
        return None
    return (baseline - value) * 100 / baseline


def finalize_report(ledger: ConsumptionLedger, outcomes: Sequence, window_s,
                    scenario: str = "", system: str = "",
                    baseline: MetricsReport | None = None) -> MetricsReport:
    """Build the per-provider report.

    ``outcomes`` carry ``env_id``, ``kind``, ``policy``, ``jobs`` and
    ``completion_ms`` (scaled completion times of finished jobs).  A job
    counts as completed iff it finished no later than the window end.
    """
    window_s = as_fraction(window_s)
    window_ms = window_s * 1000 / ledger.speedup
    report = MetricsReport(scenario, system, window_s, peak_nodes=ledger.peak)
    for o in outcomes:
        done = sum(1 for t in o.completion_ms if t <= window_ms)
        tps = Fraction(done) / window_s if o.kind == "MTC" and window_s else (
            Fraction(0) if o.kind == "MTC" else None)
        report.providers.append(ProviderMetrics(
            provider=o.env_id, kind=o.kind, policy=o.policy, jobs=o.jobs,
            completed_jobs=done, tasks_per_second=tps, rc=ledger.rc(o.env_id),
            adjustments=ledger.adjustments[o.env_id],
            adjusted_nodes=ledger.adjusted_nodes[o.env_id],
            overhead=ledger.overhead_node_hours(o.env_id),
            peak_nodes=ledger.env_peak[o.env_id]))
    if baseline is not None:
        compare(report, baseline)
    return report


def compare(report: MetricsReport, baseline: MetricsReport) -> MetricsReport:
    """Fill saved-resource percentages against ``baseline``."""
    for p in report.providers:
        try:
            ref = baseline.provider(p.provider)
        except KeyError:
            raise KeyError(f"baseline {baseline.system!r} has no provider {p.provider!r}") from None
        p.saved_pct = saved(ref.rc, p.rc)
    report.saved_pct = saved(baseline.trc, report.trc)
    return report


CSV_COLUMNS = ["scenario", "system", "provider", "kind", "policy", "jobs", "completed_jobs",
               "tasks_per_second", "rc_node_hours", "saved_pct", "adjustments",
               "adjusted_nodes", "overhead_node_hours", "peak_nodes"]


def _f(x, digits: int) -> str:
    if x is None:
        return ""
    return f"{float(x):.{digits}f}"


def report_rows(report: MetricsReport) -> list[list[str]]:
    rows = []
    for p in report.providers:
        rows.append([report.scenario, report.system, p.provider, p.kind, p.policy, str(p.jobs),
                     str(p.completed_jobs), _f(p.tasks_per_second, 4), _f(p.rc, 3),
                     _f(p.saved_pct, 2), str(p.adjustments), str(p.adjusted_nodes),
                     _f(p.overhead, 3), str(p.peak_nodes)])
    rows.append([report.scenario, report.system, "TOTAL", "", "",
                 str(sum(p.jobs for p in report.providers)),
                 str(sum(p.completed_jobs for p in report.providers)), "",
                 _f(report.trc, 3), _f(report.saved_pct, 2), str(report.adjustments),
                 str(report.adjusted_nodes), _f(report.overhead, 3), str(report.peak_nodes)])
    return rows


def reports_csv(reports: Iterable[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerows(report_rows(r))
    return buf.getvalue()


@dataclass
class TcoInputs:
    capex: float = 0.0
    depreciation_months: float = 96
    maintenance: float = 0.0
    energy_space_per_month: float = 0.0
    instances: float = 0.0
    hours: float = 0.0
    price_per_instance_hour: float = 0.0
    inbound_gb_per_month: float = 0.0
    price_per_gb: float = 0.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


def tco_dedicated(inputs: TcoInputs) -> float:
    """Monthly cost of an owned cluster: depreciated capex plus opex.

    The maintenance total is amortized over the depreciation period.
    """
    if not inputs.depreciation_months > 0:
        raise ValueError("depreciation months must be positive")
    months = inputs.depreciation_months
    return inputs.capex / months + inputs.maintenance / months + inputs.energy_space_per_month


def tco_leased(inputs: TcoInputs) -> float:
    """Monthly cost of leased instances plus inbound transfer."""
    return (inputs.instances * inputs.hours * inputs.price_per_instance_hour
            + inputs.inbound_gb_per_month * inputs.price_per_gb)


_TCO_KEYS = {
    "dedicated": {"capex": "capex", "depreciation_months": "depreciation_months",
                  "maintenance": "maintenance", "energy_space_per_month": "energy_space_per_month"},
    "leased": {"instances": "instances", "hours": "hours",
               "price_per_instance_hour": "price_per_instance_hour",
               "inbound_gb_per_month": "inbound_gb_per_month", "price_per_gb": "price_per_gb"},
}


def load_tco_inputs(path) -> TcoInputs:
    """Read ``[dedicated]`` / ``[leased]`` sections of key = value pairs."""
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    values = {}
    for section in cp.sections():
        if section not in _TCO_KEYS:
            raise ValueError(f"unknown TCO section [{section}]")
        for key, raw in cp.items(section):
            if key not in _TCO_KEYS[section]:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            values[_TCO_KEYS[section][key]] = float(raw)
    return TcoInputs(**values)
