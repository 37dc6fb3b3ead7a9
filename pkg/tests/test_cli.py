import pytest

from cloudlease.cli import main

from test_scenarios import SWF, make

ROOT_TCO = __import__("pathlib").Path(__file__).resolve().parent.parent / "scenarios" / "tco.ini"


def test_tco(capsys):
    assert main(["tco", str(ROOT_TCO)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["dedicated_per_month,leased_per_month,leased_over_dedicated_pct",
                   "3162.50,2260.00,71.46"]


def test_validate_clean(tmp_path, capsys):
    p = tmp_path / "a.swf"
    p.write_text(SWF)
    assert main(["validate", str(p)]) == 0
    assert capsys.readouterr().out == "code,message\n"


def test_validate_bad_workflow(tmp_path, capsys):
    p = tmp_path / "w.wf"
    p.write_text("a x 1 b\nb x 1 a\n")
    assert main(["validate", str(p), "--kind", "mtc"]) == 2
    assert "cycle" in capsys.readouterr().err


def test_missing_file_is_input_error(tmp_path, capsys):
    assert main(["run", str(tmp_path / "none.ini")]) == 2
    assert "error" in capsys.readouterr().err


def test_run_tiny(tmp_path, capsys):
    ini = make(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(ini), "--system", "fixed", "--out", str(out), "--logs"]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0].startswith("scenario,system,provider")
    assert (out / "report.csv").read_text() == text
    assert (out / "adjustments_fixed.txt").exists()


def test_verbose_after_subcommand(tmp_path, capsys):
    assert main(["tco", str(ROOT_TCO), "-v"]) == 0


def test_check_conf1(tmp_path, capsys):
    assert main(["check", "conf1", str(make(tmp_path))]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "check,result,detail" and len(lines) == 3
    assert all(",pass," in l for l in lines[1:])


def test_sweep_needs_grid_or_provider(tmp_path, capsys):
    assert main(["sweep", str(make(tmp_path)), "--system", "elastic"]) == 2


def test_sweep_grid(tmp_path, capsys):
    ini = make(tmp_path)
    grid = tmp_path / "g.ini"
    grid.write_text("[sweep]\nsystem = elastic\nproviders = h\nB = 0,1\n")
    assert main(["sweep", str(ini), "--grid", str(grid), "--workers", "1"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_no_command():
    with pytest.raises(SystemExit):
        main([])
