import json
import os
import subprocess
import sys

import pytest

from hcalc import cli

FIX = os.path.join(os.path.dirname(__file__), "fixtures")


def fixture(name):
    return os.path.join(FIX, name)


def test_area_report(tmp_path):
    code, rep = cli.run("area", fixture("area_plane.toml"), out=str(tmp_path))
    assert code == 0 and rep["area"] == pytest.approx(1.0, abs=1e-12)
    on_disk = json.loads((tmp_path / "area.json").read_text())
    assert on_disk["version"] == cli.__version__ and on_disk["config"]["splitting"] == {"n": 1, "k": 1}


def test_jacobian_and_dist(tmp_path):
    code, rep = cli.run("jacobian", fixture("jacobian_eta.toml"), out=str(tmp_path))
    assert code == 0 and rep["jacobian"] == [[pytest.approx(1.0, abs=1e-9)]]
    code, rep = cli.run("dist", fixture("dist.toml"), out=str(tmp_path))
    assert code == 0 and rep["distance"] == 1.0


def test_validate_fixtures():
    assert cli.validate(fixture("area_plane.toml")) == []
    msgs = cli.validate(fixture("bad_graph_var.toml"))
    assert len(msgs) == 1 and "'x1'" in msgs[0] and ":7:" in msgs[0]
    msgs = cli.validate(fixture("bad_splitting.toml"))
    assert any("1 <= k <= n" in m for m in msgs)
    msgs = cli.validate(fixture("bad_box.toml"))
    assert any("degenerate" in m for m in msgs)


def test_config_error_exit_code(tmp_path):
    code, rep = cli.run("area", fixture("bad_graph_var.toml"), out=str(tmp_path))
    assert code == cli.EXIT_CONFIG and rep["status"] == "config-error"
    broken = tmp_path / "broken.toml"
    broken.write_text("[splitting\nn = 1\n")
    assert cli.validate(str(broken))
    assert cli.main(["validate", "--config", str(broken)]) == cli.EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path):
    cfg = tmp_path / "flat.toml"
    cfg.write_text('[splitting]\nn = 1\nk = 1\n\n[surface]\nkind = "levelset"\nexprs = ["y1 + 1"]\n\n'
                   '[domain]\nlo = [0.0, 0.0]\nhi = [1.0, 1.0]\n')
    code, rep = cli.run("jacobian", str(cfg), out=str(tmp_path))
    assert code == cli.EXIT_NUMERIC and rep["status"] == "numerical-failure"
    assert json.loads((tmp_path / "jacobian.json").read_text())["errors"]


def test_seed_and_threads_are_recorded(tmp_path, monkeypatch):
    monkeypatch.setenv("HCALC_THREADS", "3")
    code, rep = cli.run("uid-check", fixture("jacobian_eta.toml"), out=str(tmp_path), seed=7)
    assert code == 0 and rep["config"]["run"] == {"seed": 7, "threads": 3}
    assert (tmp_path / "uid-check.csv").exists()


def test_measure_writes_tables(tmp_path):
    code, rep = cli.run("measure", fixture("measure_segment.toml"), out=str(tmp_path))
    assert code == 0 and len(rep["estimates"]) == 9
    assert (tmp_path / "measure.csv").read_text().startswith("delta,kind,value,cover_size")
    assert any(p.name.startswith("cover-") for p in tmp_path.iterdir())


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "hcalc.cli", "dist", "--config", fixture("dist.toml"),
                          "--out", str(tmp_path), "--quiet"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout == ""
