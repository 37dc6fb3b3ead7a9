"""
Thin runtime environments and the simulation that drives them.

An environment owns a queue, a scheduler (first-fit for HTC, strict FCFS
over ready tasks for MTC) and a resource holding shaped by its elasticity
policy.  Scheduling and elasticity checks happen only on cycle-aligned
ticks; per-job environments start work immediately instead.

Ticks are scheduled lazily: a tick is only placed on the event queue when
something that could change its outcome has happened (a submission, a
completion, a grant, a release, or a previous tick that did something) and
the queue is not empty.  A tick is a pure function of queue contents,
owned nodes and busy nodes, so skipping the no-op ticks does not change any
schedule.
"""

from __future__ import annotations

import logging
from array import array
from collections import deque
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterator, Sequence

from .elasticity import (Cause, DynamicLease, ElasticityPolicy, ProvisionService, Regime,
                         ResourceHolding, demand_request, release_tick)
from .engine import Engine, Event, EventKind, Priority
from .metrics import ConsumptionLedger, as_fraction
from .trace import Repetition, WorkloadKind, WorkloadTrace, topological_order

logger = logging.getLogger(__name__)

DEFAULT_CYCLE = {WorkloadKind.HTC: 60, WorkloadKind.MTC: 1}


class LifecycleError(RuntimeError):
    pass


class SimulationFault(RuntimeError):
    pass


class LifecycleState(str, Enum):
    INEXISTENT = "inexistent"
    PLANNING = "planning"
    CREATED = "created"
    RUNNING = "running"
    DESTROYED = "destroyed"


_NEXT_STATE = {
    LifecycleState.INEXISTENT: LifecycleState.PLANNING,
    LifecycleState.PLANNING: LifecycleState.CREATED,
    LifecycleState.CREATED: LifecycleState.RUNNING,
    LifecycleState.RUNNING: LifecycleState.DESTROYED,
}


class JobState(str, Enum):
    QUEUED = "queued"
    RUNNING = "running"
    COMPLETED = "completed"
    UNFINISHED = "unfinished"


def first_fit(demands: Sequence[int], free: int) -> list[int]:
    """Indices started by one first-fit pass in arrival order.

    Free capacity only shrinks during a pass, so a job skipped once cannot
    fit later in the same tick; one pass reaches the rescan fixpoint.
    """
    started = []
    for i, n in enumerate(demands):
        if n <= free:
            started.append(i)
            free -= n
    return started


def fcfs(demands: Sequence[int], free: int) -> list[int]:
    """Indices started by strict FCFS: stop at the first job that does not fit."""
    started = []
    for i, n in enumerate(demands):
        if n > free:
            break
        started.append(i)
        free -= n
    return started


class _Template:
    """Index-based view of one workflow instance."""

    def __init__(self, trace: WorkloadTrace, to_ms):
        order = {t.task_id: i for i, t in enumerate(trace.jobs)}
        self.n = len(trace.jobs)
        self.ids = [t.task_id for t in trace.jobs]
        self.run_ms = [max(to_ms(t.run_time), 1) for t in trace.jobs]
        self.nodes = [t.nodes for t in trace.jobs]
        self.ndeps = [len(set(t.deps)) for t in trace.jobs]
        self.children: list[list[int]] = [[] for _ in trace.jobs]
        for i, t in enumerate(trace.jobs):
            for d in sorted(set(t.deps), key=order.__getitem__):
                self.children[order[d]].append(i)
        self.roots = [i for i, k in enumerate(self.ndeps) if k == 0]


class RuntimeEnvironment:
    def __init__(self, env_id: str, trace: WorkloadTrace, policy: ElasticityPolicy,
                 cycle_ms: int, lease_ms: int, to_ms):
        self.env_id = env_id
        self.kind = trace.kind
        self.trace = trace
        self.policy = policy
        self.state = LifecycleState.INEXISTENT
        self.cycle_ms = cycle_ms
        self.lease_ms = lease_ms
        self.per_job = policy.regime is Regime.PER_JOB
        self.dynamic = policy.regime is Regime.DYNAMIC
        self.holding = ResourceHolding()
        self.total = 0
        self.busy = 0
        self.queue: deque[int] = deque()
        self.queued_demand = 0
        self.size_count: dict[int, int] = {}
        self.next_tick: int | None = None
        self.start_ms = array("q")
        self.end_ms = array("q")
        self.completed = 0
        self._lease_seq = 0
        if self.kind is WorkloadKind.HTC:
            self.job_ids = [j.job_id for j in trace.jobs]
            self.submit_ms = [to_ms(j.submit_time) for j in trace.jobs]
            self.run_ms = [max(to_ms(j.run_time), 1) for j in trace.jobs]
            self.nodes = [j.nodes for j in trace.jobs]
            self.start_ms.extend([-1] * len(trace.jobs))
            self.end_ms.extend([-1] * len(trace.jobs))
            self.template = None
        else:
            self.template = _Template(trace, to_ms)
            self.instances = 0
            self.instance_submit: list[int] = []
            self.remaining: dict[int, list[int]] = {}
            self.left_in_instance: dict[int, int] = {}
            self.repeat = trace.repetition is Repetition.BACK_TO_BACK

    # -- job accessors ---------------------------------------------------
    def job_nodes(self, key: int) -> int:
        if self.template is None:
            return self.nodes[key]
        return self.template.nodes[key % self.template.n]

    def job_run_ms(self, key: int) -> int:
        if self.template is None:
            return self.run_ms[key]
        return self.template.run_ms[key % self.template.n]

    @property
    def jobs(self) -> int:
        return len(self.end_ms)

    @property
    def owned(self) -> int:
        return self.total

    @property
    def free(self) -> int:
        return self.total - self.busy

    def biggest_queued(self) -> int:
        return max(self.size_count, default=0)

    def queued_demands(self) -> list[int]:
        return [self.job_nodes(k) for k in self.queue]

    def _enqueue(self, key: int, nodes: int):
        self.queue.append(key)
        self.queued_demand += nodes
        self.size_count[nodes] = self.size_count.get(nodes, 0) + 1

    def _dequeued(self, nodes: int):
        self.queued_demand -= nodes
        c = self.size_count[nodes] - 1
        if c:
            self.size_count[nodes] = c
        else:
            del self.size_count[nodes]

    def _advance(self, target: LifecycleState):
        if _NEXT_STATE.get(self.state) is not target:
            raise LifecycleError(f"{self.env_id}: cannot go from {self.state.value} to {target.value}")
        self.state = target

    def job_state(self, key: int) -> JobState:
        if self.end_ms[key] >= 0:
            return JobState.COMPLETED
        if self.state is LifecycleState.DESTROYED:
            return JobState.UNFINISHED
        return JobState.RUNNING if self.start_ms[key] >= 0 else JobState.QUEUED


@dataclass
class EnvOutcome:
    env_id: str
    kind: str
    policy: str
    jobs: int
    completion_ms: array
    env: RuntimeEnvironment

    @property
    def unfinished(self) -> int:
        return self.jobs - len(self.completion_ms)


class Simulation:
    """One scenario run: an engine, a provision service, a ledger and any
    number of environments sharing a horizon."""

    def __init__(self, horizon_s, speedup=1000, log_events: bool = False,
                 keep_adjustments: bool = False, keep_leases: bool = False):
        self.speedup = as_fraction(speedup)
        if self.speedup <= 0:
            raise ValueError("speedup must be positive")
        self.horizon_s = as_fraction(horizon_s)
        self.engine = Engine(log=log_events)
        self.ledger = ConsumptionLedger(self.speedup)
        self.service = ProvisionService(self.ledger, keep_log=keep_adjustments)
        self.envs: dict[str, RuntimeEnvironment] = {}
        self.horizon_ms = self.to_ms(horizon_s)
        self.total_holding = 0
        self.lease_log: list[tuple] | None = [] if keep_leases else None
        e = self.engine
        e.on(EventKind.ENV_CREATE, self._on_create)
        e.on(EventKind.JOB_SUBMIT, self._on_submit)
        e.on(EventKind.SCHEDULER_TICK, self._on_tick)
        e.on(EventKind.JOB_COMPLETE, self._on_complete)
        e.on(EventKind.LEASE_TIMER_TICK, self._on_lease_timer)
        e.on(EventKind.ENV_DESTROY, self._on_destroy)

    def to_ms(self, seconds) -> int:
        return round(as_fraction(seconds) * 1000 / self.speedup)

    def to_seconds(self, ms: int) -> Fraction:
        return Fraction(ms) * self.speedup / 1000

    # -- set-up ------------------------------------------------------------
    def add_environment(self, env_id: str, trace: WorkloadTrace, policy: ElasticityPolicy,
                        scheduler_cycle: float | None = None) -> RuntimeEnvironment:
        """Plan an environment: created at t=0, destroyed at the horizon."""
        if env_id in self.envs:
            raise ValueError(f"duplicate environment {env_id!r}")
        cycle = scheduler_cycle or policy.check_cycle or DEFAULT_CYCLE[trace.kind]
        env = RuntimeEnvironment(env_id, trace, policy, max(self.to_ms(cycle), 1),
                                 max(self.to_ms(policy.lease_unit), 1), self.to_ms)
        self.envs[env_id] = env
        env._advance(LifecycleState.PLANNING)
        self.engine.schedule(0, EventKind.ENV_CREATE, env)
        self.engine.schedule(self.horizon_ms, EventKind.ENV_DESTROY, env)
        if env.kind is WorkloadKind.HTC:
            for key, t in enumerate(env.submit_ms):
                if t < self.horizon_ms:
                    self.engine.schedule(t, EventKind.JOB_SUBMIT, (env, key))
        elif env.template.n and self.horizon_ms > 0:
            self.engine.schedule(0, EventKind.JOB_SUBMIT, (env, -1))
        return env

    def run(self) -> list[EnvOutcome]:
        self.engine.run(self.horizon_ms)
        out = []
        for env in self.envs.values():
            done = array("q", (t for t in env.end_ms if t >= 0))
            out.append(EnvOutcome(env.env_id, env.kind.value, env.policy.label(), env.jobs, done, env))
        return out

    # -- holdings ----------------------------------------------------------
    def _held(self, env: RuntimeEnvironment, delta: int):
        env.total += delta
        self.total_holding += delta
        if delta > 0:
            self.ledger.observe(env.env_id, env.total, self.total_holding)

    def _request_tick(self, env: RuntimeEnvironment, now: int, after_tick: bool):
        if env.per_job or not env.queue or env.state is not LifecycleState.RUNNING:
            return
        c = env.cycle_ms
        if not after_tick and now % c == 0:
            t = now
        else:
            t = (now // c + 1) * c
        if env.next_tick is not None and env.next_tick <= t:
            return
        env.next_tick = t
        self.engine.schedule(t, EventKind.SCHEDULER_TICK, env)

    # -- handlers ----------------------------------------------------------
    def _on_create(self, ev: Event):
        self.create_environment(ev.payload, ev.time)

    def create_environment(self, env: RuntimeEnvironment, now: int = 0):
        env._advance(LifecycleState.CREATED)
        b = env.policy.initial if env.policy.regime is not Regime.PER_JOB else 0
        if b:
            if not env.policy.owned:
                self.service.provision(env.env_id, b, Cause.INITIAL, now)
            env.holding.initial = b
            self._held(env, b)
        env._advance(LifecycleState.RUNNING)

    def _on_submit(self, ev: Event):
        env, key = ev.payload
        self.submit(env, key, ev.time)

    def submit(self, env: RuntimeEnvironment, key: int, now: int):
        """HTC: queue job ``key``.  MTC: key -1 submits a new workflow instance."""
        if env.state is not LifecycleState.RUNNING:
            raise LifecycleError(f"{env.env_id} is {env.state.value}; submissions need a running environment")
        if env.template is None:
            if env.per_job:
                self._start_per_job(env, key, now)
            else:
                env._enqueue(key, env.nodes[key])
                self._request_tick(env, now, after_tick=True)
            return
        tpl = env.template
        inst = env.instances
        env.instances += 1
        env.instance_submit.append(now)
        env.start_ms.extend([-1] * tpl.n)
        env.end_ms.extend([-1] * tpl.n)
        env.remaining[inst] = tpl.ndeps.copy()
        env.left_in_instance[inst] = tpl.n
        base = inst * tpl.n
        for i in tpl.roots:
            self._ready(env, base + i, now)
        self._request_tick(env, now, after_tick=True)

    def _ready(self, env: RuntimeEnvironment, key: int, now: int):
        if env.per_job:
            self._start_per_job(env, key, now)
        else:
            env._enqueue(key, env.template.nodes[key % env.template.n])

    def _start(self, env: RuntimeEnvironment, key: int, nodes: int, now: int):
        env.busy += nodes
        env.start_ms[key] = now
        self.engine.schedule(now + env.job_run_ms(key), EventKind.JOB_COMPLETE, (env, key))

    def _start_per_job(self, env: RuntimeEnvironment, key: int, now: int):
        nodes = env.job_nodes(key)
        self.service.provision(env.env_id, nodes, Cause.PER_JOB, now)
        env.holding.per_job += nodes
        self._held(env, nodes)
        self._start(env, key, nodes, now)

    def _on_tick(self, ev: Event):
        env = ev.payload
        env.next_tick = None
        if env.state is not LifecycleState.RUNNING:
            return
        now = ev.time
        acted = False
        if env.dynamic and env.queue:
            dr = demand_request(env.queued_demand, env.biggest_queued(), env.total,
                                env.policy.threshold)
            if dr:
                self._grant_dynamic(env, dr, now)
                acted = True
        if env.template is None:
            started = self.tick_scheduler_htc(env, now)
        else:
            started = self.tick_scheduler_mtc(env, now)
        if started or acted:
            self._request_tick(env, now, after_tick=True)

    def tick_scheduler_htc(self, env: RuntimeEnvironment, now: int) -> list[int]:
        free = env.total - env.busy
        if not env.queue or free <= 0:
            return []
        nodes = env.nodes
        keep = deque()
        started = []
        for key in env.queue:
            n = nodes[key]
            if n <= free:
                free -= n
                started.append(key)
            else:
                keep.append(key)
        if started:
            env.queue = keep
            for key in started:
                n = nodes[key]
                env._dequeued(n)
                self._start(env, key, n, now)
        return started

    def tick_scheduler_mtc(self, env: RuntimeEnvironment, now: int) -> list[int]:
        free = env.total - env.busy
        q = env.queue
        tpl = env.template
        tn, tnodes, trun = tpl.n, tpl.nodes, tpl.run_ms
        schedule = self.engine.schedule
        started = []
        while q:
            key = q[0]
            n = tnodes[key % tn]
            if n > free:
                break
            q.popleft()
            free -= n
            env._dequeued(n)
            env.busy += n
            env.start_ms[key] = now
            schedule(now + trun[key % tn], EventKind.JOB_COMPLETE, (env, key))
            started.append(key)
        return started

    def _grant_dynamic(self, env: RuntimeEnvironment, n: int, now: int):
        self.service.provision(env.env_id, n, Cause.DYNAMIC_GRANT, now)
        lease = DynamicLease(env._lease_seq, n, now, n)
        env._lease_seq += 1
        env.holding.leases.append(lease)
        self._held(env, n)
        self.engine.schedule(now + env.lease_ms, EventKind.LEASE_TIMER_TICK, (env, lease))

    def _on_complete(self, ev: Event):
        env, key = ev.payload
        self.complete_job(env, key, ev.time)

    def complete_job(self, env: RuntimeEnvironment, key: int, now: int):
        start = env.start_ms[key]
        if start < 0 or env.end_ms[key] >= 0:
            raise SimulationFault(f"{env.env_id}: completion of job {key} which is not running")
        tpl = env.template
        if tpl is None:
            nodes = env.nodes[key]
        else:
            inst, idx = divmod(key, tpl.n)
            nodes = tpl.nodes[idx]
        env.busy -= nodes
        env.end_ms[key] = now
        env.completed += 1
        if env.per_job:
            self._bill(env, nodes, start, now, now - start)
            self.service.reclaim(env.env_id, nodes, Cause.PER_JOB, now)
            env.holding.per_job -= nodes
            env.total -= nodes
            self.total_holding -= nodes
        if tpl is not None:
            rem = env.remaining[inst]
            base = inst * tpl.n
            for c in tpl.children[idx]:
                rem[c] -= 1
                if rem[c] == 0:
                    self._ready(env, base + c, now)
            left = env.left_in_instance[inst] - 1
            if left:
                env.left_in_instance[inst] = left
            else:
                del env.left_in_instance[inst]
                del env.remaining[inst]
                if env.repeat and now < self.horizon_ms:
                    self.engine.schedule(now, EventKind.JOB_SUBMIT, (env, -1))
        if env.queue:
            self._request_tick(env, now, after_tick=False)

    def _bill(self, env: RuntimeEnvironment, nodes: int, since: int, now: int, held: int):
        unit = env.lease_ms
        billed = -(-held // unit) * unit if held > 0 else 0
        self.ledger.accrue_scaled(env.env_id, nodes, billed)
        if self.lease_log is not None:
            self.lease_log.append((env.env_id, nodes, since, now, billed, unit))

    def _on_lease_timer(self, ev: Event):
        env, lease = ev.payload
        if env.state is not LifecycleState.RUNNING or not lease.active:
            return
        now = ev.time
        lease.ticks += 1
        idle = max(env.total - env.busy, 0)
        leases = env.holding.leases
        remaining = min(idle, sum(l.size for l in leases))
        share = 0
        for l in leases:
            take = min(l.size, remaining)
            if l is lease:
                share = take
                break
            remaining -= take
        release, lease.outstanding, keep = release_tick(lease.outstanding, share)
        if release:
            lease.size -= release
            self._bill(env, release, lease.granted_at, now, now - lease.granted_at)
            self.service.reclaim(env.env_id, release, Cause.RELEASE, now)
            self._held(env, -release)
            self._request_tick(env, now, after_tick=True)
        if keep:
            self.engine.schedule(now + env.lease_ms, EventKind.LEASE_TIMER_TICK, (env, lease))
        else:
            lease.active = False
            leases.remove(lease)

    def _on_destroy(self, ev: Event):
        self.destroy_environment(ev.payload, ev.time)

    def destroy_environment(self, env: RuntimeEnvironment, now: int) -> dict[JobState, int]:
        """Reclaim everything and report job states at the horizon."""
        env._advance(LifecycleState.DESTROYED)
        sid = env.env_id
        for lease in env.holding.leases:
            if lease.size:
                self._bill(env, lease.size, lease.granted_at, now, now - lease.granted_at)
                self.service.reclaim(sid, lease.size, Cause.DESTROY, now, destroying=True)
                self._held(env, -lease.size)
                lease.size = lease.outstanding = 0
            lease.active = False
        env.holding.leases.clear()
        if env.holding.per_job:
            for key in self._running_keys(env):
                self._bill(env, env.job_nodes(key), env.start_ms[key], now, now - env.start_ms[key])
            self.service.reclaim(sid, env.holding.per_job, Cause.DESTROY, now, destroying=True)
            self._held(env, -env.holding.per_job)
            env.holding.per_job = 0
        b = env.holding.initial
        if b:
            self.ledger.accrue_usage(sid, b, self.to_seconds(now) / 3600)
            if not env.policy.owned:
                self.service.reclaim(sid, b, Cause.DESTROY, now, destroying=True)
            self._held(env, -b)
            env.holding.initial = 0
        summary = {s: 0 for s in JobState}
        summary[JobState.COMPLETED] = env.completed
        summary[JobState.UNFINISHED] = env.jobs - env.completed
        return summary

    def _running_keys(self, env: RuntimeEnvironment) -> Iterator[int]:
        if env.template is None:
            keys = range(env.jobs)
        else:
            n = env.template.n
            keys = (i * n + k for i in sorted(env.left_in_instance) for k in range(n))
        for key in keys:
            if env.start_ms[key] >= 0 and env.end_ms[key] < 0:
                yield key

    # -- exports -------------------------------------------------------------
    def job_records(self, env: RuntimeEnvironment) -> Iterator[str]:
        """``job_id submit start complete nodes state`` in original seconds."""
        def fmt(ms):
            return "-" if ms < 0 else f"{float(self.to_seconds(ms)):.3f}"

        if env.template is None:
            for key in range(env.jobs):
                yield (f"{env.job_ids[key]} {fmt(env.submit_ms[key])} {fmt(env.start_ms[key])} "
                       f"{fmt(env.end_ms[key])} {env.nodes[key]} {env.job_state(key).value}")
            return
        tpl = env.template
        for key in range(env.jobs):
            inst, idx = divmod(key, tpl.n)
            yield (f"{tpl.ids[idx]}#{inst} {fmt(env.instance_submit[inst])} {fmt(env.start_ms[key])} "
                   f"{fmt(env.end_ms[key])} {tpl.nodes[idx]} {env.job_state(key).value}")

    def adjustment_lines(self) -> Iterator[str]:
        for rec in self.service.log or ():
            yield rec.line()


def simulate(traces: dict[str, WorkloadTrace], policies: dict[str, ElasticityPolicy],
             horizon_s, speedup=1000, **kw) -> tuple[Simulation, list[EnvOutcome]]:
    sim = Simulation(horizon_s, speedup, **kw)
    for name, trace in traces.items():
        sim.add_environment(name, trace, policies[name])
    return sim, sim.run()
