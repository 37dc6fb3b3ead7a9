"""
Workload traces: HTC job logs in the Standard Workload Format (SWF) and
MTC workflows in a line-oriented dependency format.

The SWF field layout follows the Parallel Workloads Archive definition
(http://www.cs.huji.ac.il/labs/parallel/workload/swf.html).  The workflow
format is one task per line::

    task_id  task_type  run_time_seconds  dep_id[,dep_id...]  [nodes]

with ``-`` for "no dependencies".  ``convert_dax`` maps Pegasus DAX files
(the XML emitted by the Pegasus workflow generator) onto this format.
"""

from __future__ import annotations

import logging
import math
import re
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)


class TraceError(ValueError):
    pass


class TraceParseError(TraceError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class WorkloadKind(str, Enum):
    HTC = "HTC"
    MTC = "MTC"


class Repetition(str, Enum):
    NONE = "none"
    BACK_TO_BACK = "back-to-back"


class SwfField(IntEnum):
    JOB_ID = 0
    SUBMITTED = 1
    WAIT_TIME = 2
    RUN_TIME = 3
    ALLOC_PROCS = 4
    AVG_CPU = 5
    USED_MEM = 6
    REQ_PROCS = 7
    REQ_TIME = 8
    REQ_MEM = 9
    STATUS = 10
    USER_ID = 11
    GROUP_ID = 12
    EXECUTABLE = 13
    QUEUE = 14
    PARTITION = 15
    PRECEDING_JOB = 16
    THINK_TIME = 17


SWF_FIELD_COUNT = 18


@dataclass(frozen=True)
class JobRecord:
    job_id: int
    submit_time: float
    run_time: float
    nodes: int


@dataclass(frozen=True)
class WorkflowTask:
    task_id: str
    task_type: str
    run_time: float
    nodes: int = 1
    deps: tuple[str, ...] = ()


@dataclass(frozen=True)
class TimeRescale:
    speedup_factor: float

    def __post_init__(self):
        if not self.speedup_factor > 0:
            raise TraceError(f"speedup factor must be positive, got {self.speedup_factor}")


@dataclass(frozen=True)
class WorkloadTrace:
    """An HTC job list or an MTC workflow, plus the metrics window.

    ``duration`` is the metrics window D(w) in seconds.  ``epoch`` is the
    SWF ``UnixStartTime`` header when known, used to place date-based
    windows.  ``skipped`` counts records dropped while parsing.
    """

    kind: WorkloadKind
    jobs: tuple = ()
    duration: float = 0
    repetition: Repetition = Repetition.NONE
    epoch: int | None = None
    skipped: int = 0

    @property
    def max_demand(self) -> int:
        return max((j.nodes for j in self.jobs), default=0)

    def __len__(self):
        return len(self.jobs)

    def mean_run_time(self) -> float:
        if not self.jobs:
            return 0.0
        return sum(j.run_time for j in self.jobs) / len(self.jobs)


def _number(token: str, lineno: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise TraceParseError(lineno, f"malformed {what} field {token!r}") from None
    if math.isnan(value) or math.isinf(value):
        raise TraceParseError(lineno, f"non-finite {what} field {token!r}")
    return int(value) if value.is_integer() else value


_START_RE = re.compile(r"^;\s*UnixStartTime:\s*(-?\d+)")


def parse_swf(text: str | Iterable[str], procs_per_node: int = 1) -> WorkloadTrace:
    """Parse an SWF log into an HTC trace.

    Requested processors (field 8) are used, falling back to allocated
    processors (field 5) when the request is -1.  ``procs_per_node``
    divides processor counts into node counts (rounding up).  Records with a
    non-positive run time or node count are skipped and counted.
    """
    if isinstance(text, str):
        text = text.splitlines()
    jobs = []
    skipped = 0
    epoch = None
    for lineno, line in enumerate(text, start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith(";"):
            m = _START_RE.match(line)
            if m:
                epoch = int(m.group(1))
            continue
        fields = line.split()
        if len(fields) <= SwfField.REQ_PROCS:
            raise TraceParseError(lineno, f"expected at least {SwfField.REQ_PROCS + 1} fields, got {len(fields)}")
        job_id = _number(fields[SwfField.JOB_ID], lineno, "job id")
        submit = _number(fields[SwfField.SUBMITTED], lineno, "submit time")
        run = _number(fields[SwfField.RUN_TIME], lineno, "run time")
        procs = _number(fields[SwfField.REQ_PROCS], lineno, "requested processors")
        if procs == -1:
            procs = _number(fields[SwfField.ALLOC_PROCS], lineno, "allocated processors")
        if run <= 0 or procs <= 0 or submit < 0:
            skipped += 1
            continue
        nodes = -(-int(math.ceil(procs)) // procs_per_node)
        jobs.append(JobRecord(int(job_id), submit, run, nodes))
    if skipped:
        logger.warning("skipped %d SWF records with non-positive run time or size", skipped)
    jobs.sort(key=lambda j: j.submit_time)
    duration = max((j.submit_time for j in jobs), default=0)
    return WorkloadTrace(WorkloadKind.HTC, tuple(jobs), duration, epoch=epoch, skipped=skipped)


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def serialize_swf(trace: WorkloadTrace) -> str:
    lines = []
    if trace.epoch is not None:
        lines.append(f"; UnixStartTime: {trace.epoch}")
    for job in trace.jobs:
        row = ["-1"] * SWF_FIELD_COUNT
        row[SwfField.JOB_ID] = str(job.job_id)
        row[SwfField.SUBMITTED] = _fmt(job.submit_time)
        row[SwfField.RUN_TIME] = _fmt(job.run_time)
        row[SwfField.ALLOC_PROCS] = str(job.nodes)
        row[SwfField.REQ_PROCS] = str(job.nodes)
        row[SwfField.STATUS] = "1"
        lines.append(" ".join(row))
    return "\n".join(lines) + ("\n" if lines else "")


def topological_order(tasks: Sequence[WorkflowTask]) -> list[str] | None:
    """Kahn peeling; ``None`` when the dependency graph has a cycle."""
    indeg = {t.task_id: len(set(t.deps)) for t in tasks}
    children: dict[str, list[str]] = {t.task_id: [] for t in tasks}
    for t in tasks:
        for d in set(t.deps):
            if d in children:
                children[d].append(t.task_id)
    ready = deque(t.task_id for t in tasks if indeg[t.task_id] == 0)
    order = []
    while ready:
        tid = ready.popleft()
        order.append(tid)
        for c in children[tid]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return order if len(order) == len(tasks) else None


def _cycle_member(tasks: Sequence[WorkflowTask]) -> str:
    order = set(topological_order(tasks) or ())
    by_id = {t.task_id: t for t in tasks}
    # Follow unresolved deps until a task repeats; that task lies on a cycle.
    start = next(t.task_id for t in tasks if t.task_id not in order)
    seen = []
    cur = start
    while cur not in seen:
        seen.append(cur)
        cur = next(d for d in by_id[cur].deps if d not in order)
    return cur


def parse_workflow(text: str | Iterable[str]) -> WorkloadTrace:
    if isinstance(text, str):
        text = text.splitlines()
    tasks = []
    seen = set()
    for lineno, line in enumerate(text, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (4, 5):
            raise TraceParseError(lineno, f"expected 4 or 5 columns, got {len(parts)}")
        tid, ttype, run, deps = parts[:4]
        run = _number(run, lineno, "run time")
        if run <= 0:
            raise TraceParseError(lineno, f"task {tid} has non-positive run time")
        nodes = int(_number(parts[4], lineno, "nodes")) if len(parts) == 5 else 1
        if nodes < 1:
            raise TraceParseError(lineno, f"task {tid} requests {nodes} nodes")
        if tid in seen:
            raise TraceParseError(lineno, f"duplicate task id {tid}")
        seen.add(tid)
        dep_ids = () if deps == "-" else tuple(d for d in deps.split(",") if d)
        tasks.append(WorkflowTask(tid, ttype, run, nodes, dep_ids))
    for t in tasks:
        for d in t.deps:
            if d not in seen:
                raise TraceError(f"task {t.task_id} depends on unknown task {d}")
    if topological_order(tasks) is None:
        raise TraceError(f"dependency cycle through task {_cycle_member(tasks)}")
    return WorkloadTrace(WorkloadKind.MTC, tuple(tasks), 0)


def serialize_workflow(trace: WorkloadTrace) -> str:
    lines = []
    for t in trace.jobs:
        deps = ",".join(t.deps) if t.deps else "-"
        row = f"{t.task_id} {t.task_type} {_fmt(t.run_time)} {deps}"
        if t.nodes != 1:
            row += f" {t.nodes}"
        lines.append(row)
    return "\n".join(lines) + ("\n" if lines else "")


def initially_ready(trace: WorkloadTrace) -> list[str]:
    return [t.task_id for t in trace.jobs if not t.deps]


def ready_after(trace: WorkloadTrace, completed: Iterable[str]) -> list[str]:
    """Tasks whose dependencies are all in ``completed`` and which are not
    themselves completed, in trace order."""
    done = set(completed)
    return [t.task_id for t in trace.jobs
            if t.task_id not in done and all(d in done for d in t.deps)]


def convert_dax(xml_text: str) -> str:
    """Convert a Pegasus DAX document to the workflow text format.

    Mapping: ``job/@id`` -> task_id, ``job/@name`` -> task_type,
    ``job/@runtime`` -> run_time, ``child/parent/@ref`` -> deps.
    Jobs without a runtime attribute are rejected.
    """
    root = ET.fromstring(xml_text)

    def local(tag):
        return tag.rsplit("}", 1)[-1]

    jobs = []
    parents: dict[str, list[str]] = {}
    for el in root:
        if local(el.tag) == "job":
            if "runtime" not in el.attrib:
                raise TraceError(f"DAX job {el.get('id')} has no runtime attribute")
            jobs.append((el.get("id"), el.get("name"), float(el.get("runtime"))))
        elif local(el.tag) == "child":
            parents[el.get("ref")] = [p.get("ref") for p in el if local(p.tag) == "parent"]
    lines = []
    for jid, name, runtime in jobs:
        deps = ",".join(parents.get(jid, [])) or "-"
        lines.append(f"{jid} {name} {_fmt(runtime)} {deps}")
    return "\n".join(lines) + "\n"


def extract_window(trace: WorkloadTrace, start: float, length: float) -> WorkloadTrace:
    if not length > 0:
        raise TraceError(f"window length must be positive, got {length}")
    end = start + length
    jobs = tuple(replace(j, submit_time=j.submit_time - start)
                 for j in trace.jobs if start <= j.submit_time < end)
    epoch = None if trace.epoch is None else trace.epoch + int(start)
    return replace(trace, jobs=jobs, duration=length, epoch=epoch)


def _scale(value: float, factor: float) -> float:
    scaled = round(value / factor, 3)
    return int(scaled) if float(scaled).is_integer() else scaled


def rescale_time(trace: WorkloadTrace, r: TimeRescale) -> WorkloadTrace:
    """Divide every time by the speedup factor at millisecond resolution.

    Run times never drop below 1 ms, so very short tasks stay representable.
    """
    f = r.speedup_factor
    if f == 1:
        return trace
    if trace.kind is WorkloadKind.HTC:
        jobs = tuple(replace(j, submit_time=_scale(j.submit_time, f),
                             run_time=max(_scale(j.run_time, f), 0.001))
                     for j in trace.jobs)
    else:
        jobs = tuple(replace(t, run_time=max(_scale(t.run_time, f), 0.001)) for t in trace.jobs)
    return replace(trace, jobs=jobs, duration=_scale(trace.duration, f))


def plan_repetition(trace: WorkloadTrace, horizon: float) -> WorkloadTrace:
    """Mark an MTC trace for back-to-back resubmission up to ``horizon``.

    The simulator submits instance 0 at t=0 and instance k+1 when the last
    task of instance k completes, as long as that moment is before the
    horizon.  Task ids of instance k are suffixed ``#k``.
    """
    if trace.kind is not WorkloadKind.MTC:
        raise TraceError("only MTC workflows can be repeated")
    if not horizon > 0:
        raise TraceError(f"repetition horizon must be positive, got {horizon}")
    return replace(trace, repetition=Repetition.BACK_TO_BACK, duration=horizon)


def critical_path(trace: WorkloadTrace) -> float:
    """Makespan of one workflow instance with unlimited nodes."""
    finish: dict[str, float] = {}
    by_id = {t.task_id: t for t in trace.jobs}
    for tid in topological_order(trace.jobs) or ():
        t = by_id[tid]
        finish[tid] = max((finish[d] for d in t.deps), default=0) + t.run_time
    return max(finish.values(), default=0)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str


def validate_trace(trace: WorkloadTrace) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    if trace.kind is WorkloadKind.HTC:
        prev = None
        for i, j in enumerate(trace.jobs):
            if j.submit_time < 0:
                out.append(Diagnostic("negative-submit", f"job {j.job_id} submitted at {j.submit_time}"))
            if j.run_time <= 0:
                out.append(Diagnostic("non-positive-run", f"job {j.job_id} runs {j.run_time}s"))
            if j.nodes < 1:
                out.append(Diagnostic("bad-size", f"job {j.job_id} requests {j.nodes} nodes"))
            if prev is not None and j.submit_time < prev:
                out.append(Diagnostic("order", f"job {j.job_id} at index {i} submitted before its predecessor"))
            prev = j.submit_time
        if trace.jobs and trace.duration < max(j.submit_time for j in trace.jobs):
            out.append(Diagnostic("duration", "duration shorter than the last submission"))
        return out

    ids = [t.task_id for t in trace.jobs]
    known = set(ids)
    if len(known) != len(ids):
        out.append(Diagnostic("duplicate-id", "task ids are not unique"))
    dangling = False
    for t in trace.jobs:
        if t.run_time <= 0:
            out.append(Diagnostic("non-positive-run", f"task {t.task_id} runs {t.run_time}s"))
        if t.nodes < 1:
            out.append(Diagnostic("bad-size", f"task {t.task_id} requests {t.nodes} nodes"))
        for d in t.deps:
            if d not in known:
                dangling = True
                out.append(Diagnostic("dangling-dep", f"task {t.task_id} depends on unknown task {d}"))
    if not dangling and topological_order(trace.jobs) is None:
        out.append(Diagnostic("cycle", f"dependency cycle through task {_cycle_member(trace.jobs)}"))
    return out


def load_trace(path, kind: WorkloadKind | str, procs_per_node: int = 1) -> WorkloadTrace:
    kind = kind if isinstance(kind, WorkloadKind) else WorkloadKind(str(kind).upper())
    with open(path) as fh:
        text = fh.read()
    if kind is WorkloadKind.HTC:
        return parse_swf(text, procs_per_node=procs_per_node)
    if text.lstrip().startswith("<"):
        text = convert_dax(text)
    return parse_workflow(text)
