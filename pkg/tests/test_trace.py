import pytest

from cloudlease.trace import (JobRecord, Repetition, TimeRescale, TraceError, TraceParseError,
                              WorkflowTask, WorkloadKind, WorkloadTrace, convert_dax,
                              critical_path, extract_window, initially_ready, load_trace,
                              parse_swf, parse_workflow, plan_repetition, ready_after,
                              rescale_time, serialize_swf, serialize_workflow,
                              topological_order, validate_trace)


def swf_line(job, submit, run, req, alloc=-1):
    fields = [job, submit, -1, run, alloc, -1, -1, req] + [-1] * 10
    return " ".join(str(f) for f in fields)


DIAMOND = """\
# id type run deps
A stage 10 -
B stage 5 A
C stage 7 A
D stage 3 B,C
"""


class TestSwf:
    def test_empty(self):
        t = parse_swf("")
        assert len(t) == 0 and t.duration == 0 and t.kind is WorkloadKind.HTC

    def test_field_mapping(self):
        t = parse_swf("1 0 -1 575 128 -1 -1 128 -1 -1 1 -1 -1 -1 -1 -1 -1 -1\n")
        assert t.jobs == (JobRecord(1, 0, 575, 128),)

    def test_requested_falls_back_to_allocated(self):
        t = parse_swf(swf_line(7, 3, 20, -1, alloc=16))
        assert t.jobs[0].nodes == 16

    def test_invalid_records_are_skipped_and_counted(self):
        text = "\n".join([swf_line(1, 0, 10, 4), swf_line(2, 5, -1, 4),
                          swf_line(3, 6, 10, -1), swf_line(4, 9, 0, 2)])
        t = parse_swf(text)
        assert [j.job_id for j in t.jobs] == [1]
        assert t.skipped == 3

    def test_bad_number_reports_line(self):
        with pytest.raises(TraceParseError) as err:
            parse_swf("; header\n" + swf_line(1, 0, 10, 4) + "\n1 x -1 5 1 -1 -1 1\n")
        assert err.value.lineno == 3

    def test_comments_and_epoch(self):
        t = parse_swf("; UnixStartTime: 749458803\n;x\n" + swf_line(1, 4, 10, 2))
        assert t.epoch == 749458803 and len(t) == 1

    def test_procs_per_node(self):
        t = parse_swf(swf_line(1, 0, 10, 17), procs_per_node=8)
        assert t.jobs[0].nodes == 3

    def test_sorted_by_submit(self):
        t = parse_swf("\n".join([swf_line(1, 30, 1, 1), swf_line(2, 10, 1, 1)]))
        assert [j.submit_time for j in t.jobs] == [10, 30]
        assert t.duration == 30

    def test_round_trip(self):
        jobs = (JobRecord(1, 0, 575, 128), JobRecord(2, 12.5, 3, 1), JobRecord(3, 99, 7200, 64))
        t = WorkloadTrace(WorkloadKind.HTC, jobs, 99, epoch=1000)
        back = parse_swf(serialize_swf(t))
        assert back.jobs == jobs and back.epoch == 1000


class TestWorkflow:
    def test_single_task(self):
        t = parse_workflow("only mAdd 4 -\n")
        assert initially_ready(t) == ["only"]

    def test_diamond_readiness(self):
        t = parse_workflow(DIAMOND)
        assert initially_ready(t) == ["A"]
        assert ready_after(t, ["A"]) == ["B", "C"]
        assert ready_after(t, ["A", "B"]) == ["C"]
        assert ready_after(t, ["A", "B", "C"]) == ["D"]

    def test_cycle_names_a_member(self):
        with pytest.raises(TraceError, match="cycle through task [XY]"):
            parse_workflow("X t 1 Y\nY t 1 X\nZ t 1 -\n")

    def test_self_dependency(self):
        with pytest.raises(TraceError, match="cycle"):
            parse_workflow("X t 1 X\n")

    def test_dangling_dep(self):
        with pytest.raises(TraceError, match="unknown task Q"):
            parse_workflow("X t 1 Q\n")

    def test_duplicate_id(self):
        with pytest.raises(TraceParseError):
            parse_workflow("X t 1 -\nX t 2 -\n")

    def test_round_trip(self):
        t = parse_workflow(DIAMOND + "E wide 2 - 4\n")
        assert parse_workflow(serialize_workflow(t)).jobs == t.jobs

    def test_topological_order(self):
        t = parse_workflow(DIAMOND)
        order = topological_order(t.jobs)
        assert order.index("A") < order.index("B") < order.index("D")
        assert order.index("C") < order.index("D")

    def test_critical_path(self):
        assert critical_path(parse_workflow(DIAMOND)) == 10 + 7 + 3

    def test_dax(self):
        dax = """<?xml version="1.0"?>
        <adag xmlns="http://pegasus.isi.edu/schema/DAX">
          <job id="ID1" name="mProjectPP" runtime="13.5"/>
          <job id="ID2" name="mProjectPP" runtime="12"/>
          <job id="ID3" name="mDiffFit" runtime="10"/>
          <child ref="ID3"><parent ref="ID1"/><parent ref="ID2"/></child>
        </adag>"""
        t = parse_workflow(convert_dax(dax))
        assert [x.task_id for x in t.jobs] == ["ID1", "ID2", "ID3"]
        assert t.jobs[2].deps == ("ID1", "ID2") and t.jobs[0].run_time == 13.5

    def test_load_dax_by_sniffing(self, tmp_path):
        p = tmp_path / "w.xml"
        p.write_text('<adag><job id="a" name="x" runtime="2"/></adag>')
        assert len(load_trace(p, "MTC")) == 1


class TestWindowAndScale:
    def trace(self):
        return WorkloadTrace(WorkloadKind.HTC, tuple(JobRecord(i, s, 5, 1) for i, s in
                                                     enumerate([10, 20, 30])), 30)

    def test_window_keeps_half_open_interval(self):
        w = extract_window(self.trace(), 15, 10)
        assert [(j.job_id, j.submit_time) for j in w.jobs] == [(1, 5)]
        assert w.duration == 10

    def test_empty_window(self):
        w = extract_window(self.trace(), 100, 50)
        assert len(w) == 0 and w.duration == 50

    def test_window_end_is_exclusive(self):
        assert len(extract_window(self.trace(), 10, 20)) == 2

    def test_rescale_identity(self):
        t = self.trace()
        assert rescale_time(t, TimeRescale(1)) == t

    def test_rescale_arithmetic(self):
        t = WorkloadTrace(WorkloadKind.HTC, (JobRecord(1, 0, 575, 1), JobRecord(2, 120, 1, 1)), 120)
        r = rescale_time(t, TimeRescale(1000))
        assert r.jobs[0].run_time == 0.575
        assert r.jobs[1].submit_time == 0.12
        assert r.duration == 0.12

    def test_rescale_floors_run_time(self):
        t = WorkloadTrace(WorkloadKind.HTC, (JobRecord(1, 0, 0.0001, 1),), 0)
        assert rescale_time(t, TimeRescale(1000)).jobs[0].run_time == 0.001

    def test_bad_factor(self):
        with pytest.raises(TraceError):
            TimeRescale(0)

    def test_repetition(self):
        t = plan_repetition(parse_workflow(DIAMOND), 3600)
        assert t.repetition is Repetition.BACK_TO_BACK and t.duration == 3600

    def test_repetition_needs_mtc_and_positive_horizon(self):
        with pytest.raises(TraceError):
            plan_repetition(self.trace(), 10)
        with pytest.raises(TraceError):
            plan_repetition(parse_workflow(DIAMOND), 0)


class TestValidate:
    def test_valid(self):
        t = WorkloadTrace(WorkloadKind.HTC, (JobRecord(1, 0, 5, 1), JobRecord(2, 3, 5, 2)), 3)
        assert validate_trace(t) == []

    def test_order(self):
        t = WorkloadTrace(WorkloadKind.HTC, (JobRecord(1, 9, 5, 1), JobRecord(2, 3, 5, 2)), 9)
        assert [d.code for d in validate_trace(t)] == ["order"]

    def test_negative_fields(self):
        t = WorkloadTrace(WorkloadKind.HTC, (JobRecord(1, -1, 0, 0),), 0)
        assert {d.code for d in validate_trace(t)} == {"negative-submit", "non-positive-run", "bad-size"}

    def test_self_dependent_task(self):
        t = WorkloadTrace(WorkloadKind.MTC, (WorkflowTask("a", "x", 1, 1, ("a",)),), 0)
        assert [d.code for d in validate_trace(t)] == ["cycle"]

    def test_does_not_mutate(self):
        t = WorkloadTrace(WorkloadKind.HTC, (JobRecord(1, 9, 5, 1), JobRecord(2, 3, 5, 2)), 9)
        before = t.jobs
        validate_trace(t)
        assert t.jobs is before
