import json
from pathlib import Path

import pytest

from hyperwave.cli import main
from hyperwave.config import parse_config
from hyperwave.pipeline import SCHEMA, dumps_report, emit_plotdata, read_table, run_pipeline

SMALL = Path(__file__).resolve().parents[1] / "configs" / "small.toml"


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["diagnose", "--config", str(SMALL), "--out", str(out)]) == 0
    return out


def test_diagnose_writes_report_timings_and_tables(run_dir):
    report = json.loads((run_dir / "report.json").read_text())
    assert report["schema"] == SCHEMA
    assert set(report) >= {"wave", "ladders", "gauge", "stress", "config"}
    assert "timings" not in report
    timing = json.loads((run_dir / "timing.json").read_text())
    assert set(timing) >= {"simulate", "ladder", "gauge", "diagnose"}
    header, rows = read_table(run_dir / "plotdata" / "energy.csv")
    assert header == ["t", "energy"] and len(rows) == 17


def test_report_contents(run_dir):
    report = json.loads((run_dir / "report.json").read_text())
    g = report["gauge"][0]
    names = {r["name"] for r in g["residuals"]}
    assert {"torsion_x1x2", "curvature_tx1", "wave_tension", "u_heat", "psi_s_wave"} <= names
    assert all(set(r) >= {"identity", "norm", "value", "h", "level"} for r in g["residuals"])
    assert g["skew_defect"] == 0.0
    assert g["boundary"]["psi_t_centred"] <= g["boundary"]["bound"]
    assert g["gauge_invariance"]["psi_norm_change"] < 1e-12
    cone = report["stress"]["cones"][0]
    assert cone["tl0_min"] >= -1e-10
    assert [s["field"] for s in cone["stokes"]] == ["d_t", "mollified_scaling"]


def test_export_rebuilds_the_tables(run_dir, tmp_path):
    assert main(["export", "--report", str(run_dir / "report.json"), "--out", str(tmp_path)]) == 0
    for name in ("energy.csv", "sup_gradient.csv", "residuals.csv", "scaled_decay.csv"):
        assert read_table(tmp_path / name) == read_table(run_dir / "plotdata" / name)


def test_empty_report_gives_header_only_tables(tmp_path):
    emit_plotdata({}, tmp_path)
    header, rows = read_table(tmp_path / "residuals.csv")
    assert header == ["name", "norm", "h", "value"] and rows == []


def test_simulate_only(tmp_path):
    assert main(["simulate", "--config", str(SMALL), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert "gauge" not in report and report["wave"]["relative_drift"] < 0.05


def test_invalid_config_exits_with_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[wave]\ncfl = 0.9\n")
    assert main(["simulate", "--config", str(bad)]) == 2
    assert "wave.cfl" in capsys.readouterr().err
    bad.write_text("[wave\n")
    assert main(["simulate", "--config", str(bad)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["simulate", "--config", str(SMALL), "--threads", "0"]) == 2


def test_numerical_failure_exits_with_3(tmp_path, capsys):
    text = SMALL.read_text().replace("ratio = 1.2", "ratio = 1.2\nmax_levels = 3")
    cfg = tmp_path / "short.toml"
    cfg.write_text(text)
    assert main(["gauge", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "stage ladder" in capsys.readouterr().err


def test_seed_override_changes_only_the_seed():
    cfg = parse_config(SMALL)
    a, _, _ = run_pipeline(cfg, stages=("simulate",))
    b, _, _ = run_pipeline(cfg.model_copy(update={"seed": 99}), stages=("simulate",))
    assert a["wave"] == b["wave"] and a["config"]["seed"] != b["config"]["seed"]
    assert dumps_report(a) == dumps_report(run_pipeline(cfg, stages=("simulate",))[0])
