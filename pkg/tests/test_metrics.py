from fractions import Fraction
from types import SimpleNamespace

import pytest

from cloudlease.elasticity import AdjustmentRecord, Cause
from cloudlease.metrics import (CSV_COLUMNS, ConsumptionLedger, TcoInputs, compare,
                                finalize_report, load_tco_inputs, reports_csv, saved,
                                tco_dedicated, tco_leased)


class TestLedger:
    def test_accrue(self):
        led = ConsumptionLedger()
        led.accrue_usage("a", 10, 2)
        led.accrue_usage("a", 10, 0)
        assert led.rc("a") == 20

    def test_negative_interval(self):
        with pytest.raises(ValueError):
            ConsumptionLedger().accrue_usage("a", 1, -1)
        with pytest.raises(ValueError):
            ConsumptionLedger().accrue_scaled("a", 1, -1)

    def test_static_two_weeks(self):
        led = ConsumptionLedger()
        led.accrue_usage("nasa", 128, 336)
        assert led.rc("nasa") == 43008

    def test_scaled_ms_converts_with_speedup(self):
        led = ConsumptionLedger(speedup=1000)
        led.accrue_scaled("a", 4, 3600)      # 3.6 scaled s = 1 original hour
        assert led.rc("a") == 4

    def test_additivity(self):
        a, b = ConsumptionLedger(), ConsumptionLedger()
        a.accrue_usage("x", 7, Fraction(5, 3))
        b.accrue_usage("x", 7, Fraction(1, 3))
        b.accrue_usage("x", 7, Fraction(4, 3))
        assert a.rc("x") == b.rc("x")

    def test_overhead_one_grant(self):
        led = ConsumptionLedger()
        led.record_adjustment(AdjustmentRecord(0, "a", 5, Cause.DYNAMIC_GRANT))
        assert led.adjustments["a"] == 1
        assert float(led.overhead_node_hours()) == pytest.approx(0.02186, abs=1e-5)

    def test_overhead_per_node_is_constant(self):
        led = ConsumptionLedger()
        led.add_adjustment("a", -1)
        assert led.overhead_node_hours("a") * 3600 == Fraction("15.743")

    def test_no_adjustments(self):
        assert ConsumptionLedger().overhead_node_hours() == 0

    def test_peak(self):
        led = ConsumptionLedger()
        for env, e_total, total in [("a", 4, 4), ("b", 3, 7), ("a", 1, 4)]:
            led.observe(env, e_total, total)
        assert led.peak == 7 and led.env_peak["a"] == 4


def outcome(env_id, kind, jobs, done_ms):
    return SimpleNamespace(env_id=env_id, kind=kind, policy="p", jobs=jobs, completion_ms=done_ms)


class TestReport:
    def test_no_jobs(self):
        rep = finalize_report(ConsumptionLedger(), [outcome("a", "HTC", 0, [])], 100)
        p = rep.providers[0]
        assert (p.completed_jobs, p.rc, p.adjustments, rep.trc) == (0, 0, 0, 0)

    def test_window_rule_and_tps(self):
        led = ConsumptionLedger(speedup=1)
        outs = [outcome("h", "HTC", 3, [100, 200_000, 200_001]),
                outcome("m", "MTC", 4, [1000, 2000, 3000, 300_000])]
        rep = finalize_report(led, outs, 200)
        assert rep.provider("h").completed_jobs == 2
        assert rep.provider("m").tasks_per_second == Fraction(3, 200)

    def test_saved_and_trc(self):
        base_led, led = ConsumptionLedger(), ConsumptionLedger()
        for name, a, b in [("x", 100, 50), ("y", 300, 300)]:
            base_led.accrue_usage(name, a, 1)
            led.accrue_usage(name, b, 1)
        outs = [outcome("x", "HTC", 0, []), outcome("y", "HTC", 0, [])]
        base = finalize_report(base_led, outs, 1, system="base")
        rep = finalize_report(led, outs, 1, baseline=base)
        assert rep.trc == 350
        assert rep.provider("x").saved_pct == 50 and rep.saved_pct == Fraction(50 * 100, 400)

    def test_missing_baseline_provider(self):
        led = ConsumptionLedger()
        base = finalize_report(led, [outcome("x", "HTC", 0, [])], 1, system="b")
        rep = finalize_report(led, [outcome("y", "HTC", 0, [])], 1)
        with pytest.raises(KeyError, match="no provider"):
            compare(rep, base)

    def test_saved_helper(self):
        assert saved(Fraction(0), Fraction(1)) is None
        assert saved(Fraction(43008), Fraction(52943)) < 0

    def test_csv(self):
        led = ConsumptionLedger()
        led.accrue_usage("x", 3, Fraction(1, 3))
        rep = finalize_report(led, [outcome("x", "HTC", 2, [1])], 10, "s", "sys")
        text = reports_csv([rep])
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[1] == "s,sys,x,HTC,p,2,1,,1.000,,0,0,0.000,0"
        assert lines[2].startswith("s,sys,TOTAL,")
        assert reports_csv([]) == ",".join(CSV_COLUMNS) + "\n"


class TestTco:
    def test_dedicated(self):
        t = TcoInputs(capex=120000, depreciation_months=96, maintenance=30000,
                      energy_space_per_month=1600)
        assert tco_dedicated(t) == 3162.5

    def test_leased(self):
        t = TcoInputs(instances=30, hours=720, price_per_instance_hour=0.1,
                      inbound_gb_per_month=1000, price_per_gb=0.1)
        assert tco_leased(t) == pytest.approx(2260)

    def test_zero(self):
        assert tco_dedicated(TcoInputs()) == 0 and tco_leased(TcoInputs()) == 0

    def test_linear_in_capex(self):
        assert tco_dedicated(TcoInputs(capex=2000)) == 2 * tco_dedicated(TcoInputs(capex=1000))

    def test_zero_months(self):
        with pytest.raises(ValueError):
            tco_dedicated(TcoInputs(depreciation_months=0))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            TcoInputs(capex=-1)

    def test_load(self, tmp_path):
        p = tmp_path / "t.ini"
        p.write_text("[dedicated]\ncapex = 10\n[leased]\nhours = 2\n")
        t = load_tco_inputs(p)
        assert t.capex == 10 and t.hours == 2 and t.depreciation_months == 96

    def test_load_unknown_key(self, tmp_path):
        p = tmp_path / "t.ini"
        p.write_text("[dedicated]\ncapx = 10\n")
        with pytest.raises(ValueError, match="capx"):
            load_tco_inputs(p)
