"""
Resource provisioning regimes and the provider-side provision service.

Three regimes are modelled:

* ``static``: a fixed capacity for the whole run.  ``owned=True`` is a
  dedicated cluster (no provisioning traffic); ``owned=False`` is a fixed
  lease granted at start and reclaimed at destroy.
* ``per_job``: every job gets a lease of exactly its size at submit time and
  gives it back on completion.
* ``dynamic``: initial resources B plus on-demand leases negotiated every
  checking cycle S with threshold ratio R and lease unit C.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

INF = math.inf


class PolicyError(ValueError):
    pass


class PolicyViolation(RuntimeError):
    pass


class Regime(str, Enum):
    STATIC = "static"
    PER_JOB = "per_job"
    DYNAMIC = "dynamic"


class Cause(str, Enum):
    INITIAL = "initial"
    DYNAMIC_GRANT = "dynamic-grant"
    RELEASE = "release"
    DESTROY = "destroy"
    PER_JOB = "per-job"


@dataclass(frozen=True)
class ElasticityPolicy:
    """Regime plus the B/R/S/C tuple.

    ``initial`` is B (for ``static`` it is the fixed capacity), ``threshold``
    is R, ``check_cycle`` is S in seconds (``None`` means the environment's
    scheduling cycle), ``lease_unit`` is C in seconds.
    """

    regime: Regime
    initial: int = 0
    threshold: float = INF
    check_cycle: float | None = None
    lease_unit: float = 3600.0
    owned: bool = False

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        if self.initial < 0 or int(self.initial) != self.initial:
            raise PolicyError(f"initial resources must be a non-negative integer, got {self.initial}")
        if not (self.threshold >= 1):
            raise PolicyError(f"threshold ratio must be >= 1 or inf, got {self.threshold}")
        if self.check_cycle is not None and not self.check_cycle > 0:
            raise PolicyError(f"checking cycle must be positive, got {self.check_cycle}")
        if not self.lease_unit > 0:
            raise PolicyError(f"lease unit must be positive, got {self.lease_unit}")
        if self.owned and self.regime is not Regime.STATIC:
            raise PolicyError("only the static regime can own its resources")

    @classmethod
    def static(cls, capacity: int, owned: bool = False, cycle: float | None = None):
        return cls(Regime.STATIC, capacity, check_cycle=cycle, owned=owned)

    @classmethod
    def per_job(cls, lease_unit: float = 3600.0):
        return cls(Regime.PER_JOB, 0, lease_unit=lease_unit)

    @classmethod
    def dynamic(cls, initial: int, threshold: float, check_cycle: float | None = None,
                lease_unit: float = 3600.0):
        return cls(Regime.DYNAMIC, initial, threshold, check_cycle, lease_unit)

    def label(self) -> str:
        if self.regime is Regime.STATIC:
            return f"{'dedicated' if self.owned else 'lease'} {self.initial}"
        if self.regime is Regime.PER_JOB:
            return f"per_job {_g(self.lease_unit / 60)}C"
        s = "" if self.check_cycle is None else f"/{_g(self.check_cycle)}S"
        return f"dynamic {_g(self.lease_unit / 60)}C/{self.initial}B/{_g(self.threshold)}R{s}"


def _g(x: float) -> str:
    if x == INF:
        return "inf"
    return str(int(x)) if float(x).is_integer() else repr(float(x))


_TERM_RE = re.compile(r"^([0-9.]+|inf)([CBRS])$", re.IGNORECASE)


def parse_policy(text: str) -> ElasticityPolicy:
    """Parse a policy string.

    Accepted forms::

        dedicated 128          static 128, owned by the service provider
        lease 128              static 128, leased for the whole window
        static 128 [owned]
        per_job 60C            C in minutes
        dynamic 60C/40B/1.5R/60S   (brackets optional; S in seconds)
    """
    words = text.replace("[", " ").replace("]", " ").split()
    if not words:
        raise PolicyError("empty policy")
    head, rest = words[0].lower(), words[1:]
    try:
        if head in ("dedicated", "lease", "static"):
            if not rest:
                raise PolicyError(f"{head} needs a capacity")
            owned = head == "dedicated" or "owned" in rest[1:]
            return ElasticityPolicy.static(int(rest[0]), owned=owned)
        terms = {}
        for chunk in rest:
            for term in chunk.split("/"):
                if not term:
                    continue
                m = _TERM_RE.match(term)
                if not m:
                    raise PolicyError(f"bad policy term {term!r}")
                terms[m.group(2).upper()] = float(m.group(1))
        unit = terms.get("C", 60.0) * 60
        if head in ("per_job", "per-job", "perjob"):
            return ElasticityPolicy.per_job(unit)
        if head == "dynamic":
            if "B" not in terms or "R" not in terms:
                raise PolicyError("dynamic policy needs B and R")
            return ElasticityPolicy.dynamic(int(terms["B"]), terms["R"], terms.get("S"), unit)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, PolicyError):
            raise
        raise PolicyError(f"cannot parse policy {text!r}: {exc}") from None
    raise PolicyError(f"unknown regime {head!r}")


@dataclass
class DynamicLease:
    lease_id: int
    size: int
    granted_at: int
    outstanding: int
    active: bool = True
    ticks: int = 0


@dataclass
class ResourceHolding:
    initial: int = 0
    leases: list[DynamicLease] = field(default_factory=list)
    per_job: int = 0

    @property
    def dynamic(self) -> int:
        return sum(l.size for l in self.leases) + self.per_job

    @property
    def total(self) -> int:
        return self.initial + self.dynamic


@dataclass(frozen=True)
class AdjustmentRecord:
    time: int
    env_id: str
    delta_nodes: int
    cause: Cause

    def __post_init__(self):
        if self.delta_nodes == 0:
            raise ValueError("adjustment of zero nodes")

    def line(self) -> str:
        return f"{self.time} {self.env_id} {self.delta_nodes} {Cause(self.cause).value}"


class ProvisionService:
    """Unbounded pool that grants immediately and reclaims passively.

    ``listener`` (normally the consumption ledger) sees every adjustment.
    """

    def __init__(self, listener=None, keep_log: bool = True):
        self.granted_total = 0
        self.initial: dict[str, int] = {}
        self.dynamic: dict[str, int] = {}
        self.log: list[AdjustmentRecord] | None = [] if keep_log else None
        self.grants = 0
        self.reclaims = 0
        self.listener = listener

    def holding(self, env_id: str) -> int:
        return self.initial.get(env_id, 0) + self.dynamic.get(env_id, 0)

    def provision(self, env_id: str, n: int, cause: Cause, now: int = 0) -> int:
        if n <= 0:
            raise ValueError(f"grant must be positive, got {n}")
        pool = self.initial if cause is Cause.INITIAL else self.dynamic
        pool[env_id] = pool.get(env_id, 0) + n
        self.granted_total += n
        self.grants += 1
        if self.log is not None:
            self.log.append(AdjustmentRecord(now, env_id, n, cause))
        if self.listener is not None:
            self.listener.add_adjustment(env_id, n)
        return n

    def reclaim(self, env_id: str, n: int, cause: Cause, now: int = 0,
                destroying: bool = False) -> None:
        if n <= 0:
            raise ValueError(f"reclaim must be positive, got {n}")
        dyn = self.dynamic.get(env_id, 0)
        if destroying:
            if n > dyn + self.initial.get(env_id, 0):
                raise PolicyViolation(f"{env_id}: reclaiming {n} nodes, only {self.holding(env_id)} granted")
            take = min(n, dyn)
            self.dynamic[env_id] = dyn - take
            self.initial[env_id] = self.initial.get(env_id, 0) - (n - take)
        elif n > dyn:
            raise PolicyViolation(
                f"{env_id}: reclaiming {n} nodes but only {dyn} are dynamic; "
                "initial resources stay until the environment is destroyed")
        else:
            self.dynamic[env_id] = dyn - n
        self.granted_total -= n
        self.reclaims += 1
        if self.log is not None:
            self.log.append(AdjustmentRecord(now, env_id, -n, cause))
        if self.listener is not None:
            self.listener.add_adjustment(env_id, -n)


def ratio_of_obtaining(queue: Iterable[int], owned_total: int) -> float:
    """Accumulated queued demand over owned nodes (0 for an empty queue,
    inf when nothing is owned but work is waiting)."""
    if owned_total < 0:
        raise ValueError("owned nodes cannot be negative")
    demand = sum(queue)
    if demand == 0:
        return 0.0
    if owned_total == 0:
        return INF
    return demand / owned_total


def demand_request(total_demand: int, biggest: int, owned_total: int, threshold: float) -> int:
    """Nodes to request at a checking tick, 0 for none."""
    if total_demand == 0:
        return 0
    if owned_total == 0:
        triggered = True
    else:
        triggered = total_demand / owned_total > threshold or biggest > owned_total
    if not triggered:
        return 0
    return max(total_demand - owned_total, 0)


def evaluate_demand(queue: Iterable[int], owned_total: int, policy: ElasticityPolicy) -> int:
    if policy.regime is not Regime.DYNAMIC:
        raise PolicyError("demand evaluation only applies to the dynamic regime")
    demands = list(queue)
    return demand_request(sum(demands), max(demands, default=0), owned_total, policy.threshold)


def release_tick(outstanding: int, idle_dynamic: int) -> tuple[int, int, bool]:
    """One lease-timer check: (nodes to release, new outstanding, keep timer)."""
    if outstanding <= 0:
        return 0, 0, False
    if idle_dynamic < outstanding:
        return idle_dynamic, outstanding - idle_dynamic, True
    return outstanding, 0, False


def billed_duration(held: float, unit: float) -> float:
    """Round a holding period up to a whole number of lease units."""
    if held <= 0:
        return 0
    return math.ceil(held / unit) * unit


def per_job_lease(service: ProvisionService, env_id: str, nodes: int, run_time: float,
                  policy: ElasticityPolicy, now: int = 0) -> float:
    """Grant a lease covering one job; returns the billed duration."""
    if policy.regime is not Regime.PER_JOB:
        raise PolicyError("per-job leases need the per_job regime")
    service.provision(env_id, nodes, Cause.PER_JOB, now)
    return billed_duration(run_time, policy.lease_unit)
