import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from scengen.cli import main
from scengen.ingest import forecast_matrix
from scengen.pipeline import RunConfig, build_panel, fit_model, load_bundle, load_data, save_bundle
from scengen.simulate import band, scenarios
from scengen.synthetic import TEXAS_JOINT, TEXAS_LOAD, default_truth, write_dataset
from scengen.tails import NormalMarginal, fit_normal

ISSUE = "2018-01-15T00:00Z"


@pytest.fixture(scope="module")
def fitted(small_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    assert main(["fit", "--config", str(small_dataset), "--out", str(out)]) == 0
    return out / "bundle.json"


def read_bytes(p):
    return Path(p).read_bytes()


def test_fit_summary_and_bundle(small_dataset, fitted, capsys):
    b = load_bundle(fitted)
    assert b.graph.spatial_cov.shape == (4, 4) and b.graph.temporal_cov.shape == (24, 24)
    assert sum(len(r) for r in b.marginals) == 96
    d = json.loads(fitted.read_text())
    assert d["version"] == "scengen-bundle/1"
    assert [(m["variable"], m["zone"], m["lag"]) for m in d["marginals"][:2]] == [("load", "West", 0),
                                                                                  ("load", "West", 1)]
    assert d["diagnostics"]["n_used"] == 480 and d["diagnostics"]["dropped_rows"] == 0


def test_fit_prints_summary(small_dataset, tmp_path, capsys):
    assert main(["fit", "--config", str(small_dataset), "--bundle", str(tmp_path / "b.json")]) == 0
    out = capsys.readouterr().out
    assert "dim=96" in out and "tail shape estimates" in out
    assert "spatial precision 4x4" in out and "temporal precision 24x24" in out


@pytest.mark.parametrize("variables, Z", [(TEXAS_LOAD, 4), (TEXAS_JOINT, 9)])
def test_texas_layouts(tmp_path, variables, Z):
    cfg = write_dataset(tmp_path, n_days=10, seed=3, truth=default_truth(variables=variables),
                        config_extra={"seasonal": {"periods": [24]}})
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    b = load_bundle(tmp_path / "o" / "bundle.json")
    assert b.graph.spatial_cov.shape == (Z, Z)
    assert sum(len(r) for r in b.marginals) == 24 * Z


def test_missing_forecast_file(small_dataset, tmp_path, capsys):
    d = json.loads(Path(small_dataset).read_text())
    d["data"]["wind"]["forecasts"] = "no_such_file.csv"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**d, "base_dir": str(Path(small_dataset).parent)}))
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "no_such_file.csv" in err and "[ingest]" in err


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert main(["fit", "--config", str(p)]) == 1
    p.write_text(json.dumps({"data": {"load": {}}, "variables": [["load", "a"], ["load", "a"]]}))
    assert main(["fit", "--config", str(p)]) == 1
    assert "duplicate" in capsys.readouterr().err
    assert main(["fit", "--config", str(tmp_path / "missing.json")]) == 1


def test_simulate_outputs(fitted, tmp_path):
    assert main(["simulate", "--bundle", str(fitted), "--issue-time", ISSUE, "--scenarios", "1000",
                 "--seed", "42", "--out", str(tmp_path)]) == 0
    s = pd.read_csv(tmp_path / "scenarios.csv")
    assert len(s) == 1000 * 4 * 24
    assert sorted(s.scenario_id.unique()) == list(range(1000))
    b = pd.read_csv(tmp_path / "band.csv")
    assert len(b) == 4 * 24 and (b.lower <= b.upper).all()


def test_simulate_single_scenario_reproducible(fitted, tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--bundle", str(fitted), "--issue-time", ISSUE, "--scenarios", "1", "--seed", "5",
                     "--trim", "0", "--out", str(tmp_path / d)]) == 0
    assert read_bytes(tmp_path / "a" / "scenarios.csv") == read_bytes(tmp_path / "b" / "scenarios.csv")


def test_simulate_issue_time_absent(fitted, tmp_path, capsys):
    assert main(["simulate", "--bundle", str(fitted), "--issue-time", "2030-01-01T00:00Z",
                 "--out", str(tmp_path)]) == 1
    assert "no complete forecast" in capsys.readouterr().err


def test_missing_bundle(tmp_path):
    assert main(["graph", "--bundle", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1


def test_numerical_failure_exit_code(fitted, tmp_path, capsys):
    d = json.loads(fitted.read_text())
    d["graph"]["spatial_cov"][0][1] = d["graph"]["spatial_cov"][1][0] = 5.0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert main(["simulate", "--bundle", str(bad), "--issue-time", ISSUE, "--out", str(tmp_path)]) == 2
    assert "not positive definite" in capsys.readouterr().err


def test_fit_and_simulate_deterministic(small_dataset, tmp_path):
    for d in ("a", "b"):
        assert main(["fit", "--config", str(small_dataset), "--out", str(tmp_path / d)]) == 0
        assert main(["simulate", "--bundle", str(tmp_path / d / "bundle.json"), "--issue-time", ISSUE,
                     "--scenarios", "200", "--seed", "42", "--out", str(tmp_path / d)]) == 0
    for f in ("bundle.json", "scenarios.csv", "band.csv"):
        assert read_bytes(tmp_path / "a" / f) == read_bytes(tmp_path / "b" / f)


def test_save_load_equals_in_memory(small_dataset, tmp_path):
    cfg = RunConfig.from_file(small_dataset)
    acts, fcs = load_data(cfg)
    panel = build_panel(cfg, acts, fcs)
    mem = fit_model(panel, cfg)
    save_bundle(mem, tmp_path / "b.json")
    disk = load_bundle(tmp_path / "b.json")
    fc = forecast_matrix(fcs, cfg.variables, ISSUE)
    a = scenarios(mem, fc, ISSUE, M=300, seed=3)
    b = scenarios(disk, fc, ISSUE, M=300, seed=3)
    assert a.scenarios.tobytes() == b.scenarios.tobytes()
    a.to_csv(tmp_path / "a.csv")
    b.to_csv(tmp_path / "b.csv")
    assert read_bytes(tmp_path / "a.csv") == read_bytes(tmp_path / "b.csv")
    save_bundle(disk, tmp_path / "b2.json")
    assert read_bytes(tmp_path / "b.json") == read_bytes(tmp_path / "b2.json")


def test_tails_off_gives_fitted_normals(small_dataset, tmp_path):
    assert main(["fit", "--config", str(small_dataset), "--tails", "off", "--out", str(tmp_path)]) == 0
    b = load_bundle(tmp_path / "bundle.json")
    assert all(isinstance(m, NormalMarginal) for row in b.marginals for m in row)
    cfg = RunConfig.from_file(small_dataset)
    panel = build_panel(cfg, *load_data(cfg))
    from scengen.seasonal import remove_seasonal
    rem = remove_seasonal(panel, b.seasonal)
    ref = fit_normal(rem.data[:, 1, 3])
    assert b.marginals[1][3].mean == pytest.approx(ref.mean, abs=1e-9)
    assert b.marginals[1][3].sd == pytest.approx(ref.sd, rel=1e-12)
    assert b.config.tails.enabled is False


def test_diagnose_outputs(long_dataset, tmp_path, capsys):
    assert main(["fit", "--config", str(long_dataset), "--out", str(tmp_path)]) == 0
    fitted = tmp_path / "bundle.json"
    # far tails (trim 0.001): a matched-variance normal is wider at 5 % but thinner at 0.1 %
    assert main(["diagnose", "--bundle", str(fitted), "--issue-time", ISSUE, "--scenarios", "4000",
                 "--trim", "0.001", "--seed", "1", "--out", str(tmp_path)]) == 0
    qq = sorted((tmp_path / "qq").glob("*.csv"))
    assert len(qq) == 96
    df = pd.read_csv(qq[0])
    assert list(df.columns) == ["theoretical", "empirical"]
    assert df.empirical.is_monotonic_increasing and df.theoretical.is_monotonic_increasing
    on = pd.read_csv(tmp_path / "band_tails_on.csv")
    off = pd.read_csv(tmp_path / "band_tails_off.csv")
    cov = pd.read_csv(tmp_path / "coverage_tails_on.csv")
    assert len(cov) == 96 and set(cov.inside) <= {0, 1}
    # heavy side: upper tail for load, lower tail for wind
    load, wind = on.variable == "load", on.variable == "wind"
    assert (on.upper[load] >= off.upper[load]).all()
    assert (on.lower[wind] <= off.lower[wind]).all()
    assert "tails on: coverage" in capsys.readouterr().out


def test_graph_outputs(fitted, tmp_path, capsys):
    assert main(["graph", "--bundle", str(fitted), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "spatial: 4 nodes" in out and "connected component(s)" in out
    for name in ("spatial", "temporal"):
        assert (tmp_path / f"{name}.dot").read_text().startswith(f'graph "{name}" {{')
        js = json.loads((tmp_path / f"{name}.json").read_text())
        assert set(js) == {"nodes", "edges"}
        assert (tmp_path / f"{name}_precision.csv").exists()
    # load and wind blocks were generated independently
    assert "spatial: 4 nodes, 2 edges, 2 connected component(s)" in out
    assert main(["graph", "--bundle", str(fitted), "--edge-threshold", "1.0", "--out", str(tmp_path / "e")]) == 0
    assert json.loads((tmp_path / "e" / "spatial.json").read_text())["edges"] == []
    assert json.loads((tmp_path / "e" / "temporal.json").read_text())["edges"] == []


def test_log_env_var(fitted, tmp_path):
    env = {**os.environ, "SCENGEN_LOG": "DEBUG"}
    r = subprocess.run([sys.executable, "-m", "scengen.cli", "graph", "--bundle", str(fitted),
                        "--out", str(tmp_path)], env=env, capture_output=True, text=True)
    assert r.returncode == 0
    env["SCENGEN_LOG"] = "ERROR"
    r = subprocess.run([sys.executable, "-m", "scengen.cli", "fit", "--config", "/nonexistent.json"],
                       env=env, capture_output=True, text=True)
    assert r.returncode == 1 and "error:" in r.stderr


def test_help_lists_verbs(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    for verb in ("fit", "simulate", "diagnose", "graph"):
        assert verb in out
