import json

import numpy as np
import pandas as pd
import pytest

from tsdiscover.cli import main
from tsdiscover.dataset import VariableMeta, save_schema
from tsdiscover.graph import TemporalCausalGraph
from tsdiscover.simulate import random_svar, sample


@pytest.fixture()
def simulated(tmp_path):
    data, truth = tmp_path / "sim.csv", tmp_path / "truth.json"
    rc = main(["simulate", "--k", "3", "--n", "600", "--lag-max", "1", "--seed", "2",
               "--out", str(data), "--truth", str(truth)])
    assert rc == 0
    return data, truth


def test_simulate_discover_evaluate(simulated, tmp_path, capsys):
    data, truth = simulated
    out, dot, audit = tmp_path / "g.json", tmp_path / "g.dot", tmp_path / "a.jsonl"
    rc = main(["discover", "--data", str(data), "--tau-max", "2", "--out", str(out),
               "--dot", str(dot), "--audit", str(audit)])
    assert rc == 0
    g = TemporalCausalGraph.load(out)
    assert g.validate() == []
    assert dot.read_text().startswith("digraph")
    assert all(json.loads(line)["round"] in (0, 1) for line in audit.read_text().splitlines())
    manifest = json.loads((tmp_path / "g.json.manifest.json").read_text())
    assert manifest["subcommand"] == "discover" and manifest["seed"] == 0
    assert str(data) in manifest["inputs"] and len(manifest["inputs"][str(data)]) == 64
    assert set(manifest) == {"subcommand", "tool_version", "config", "seed", "inputs", "outputs"}

    rc = main(["evaluate", "--found", str(out), "--truth", str(truth)])
    assert rc == 0
    metrics = json.loads(capsys.readouterr().out)
    assert 0 <= metrics["f1"] <= 1 and metrics["time_order_violations"] == 0


def test_rerun_is_byte_identical(simulated, tmp_path):
    data, _ = simulated
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.json"
        assert main(["discover", "--data", str(data), "--tau-max", "1", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_config_file_and_override(simulated, tmp_path):
    data, _ = simulated
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tau-max": 1, "alpha": 0.01}))
    out = tmp_path / "g.json"
    assert main(["discover", "--config", str(cfg), "--data", str(data), "--out", str(out)]) == 0
    m = json.loads((tmp_path / "g.json.manifest.json").read_text())
    assert m["config"]["tau_max"] == 1 and m["config"]["alpha"] == 0.01
    assert main(["discover", "--config", str(cfg), "--alpha", "0.2", "--data", str(data), "--out", str(out)]) == 0
    m = json.loads((tmp_path / "g.json.manifest.json").read_text())
    assert m["config"]["alpha"] == 0.2 and m["config"]["tau_max"] == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["discover", "--config", str(bad), "--data", str(data), "--out", str(out)]) == 2


def test_exit_codes(simulated, tmp_path, capsys):
    data, _ = simulated
    assert main(["discover", "--bogus-flag"]) == 2
    assert main([]) == 2
    assert main(["discover", "--data", str(data)]) == 2  # --out missing
    capsys.readouterr()
    rc = main(["discover", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "x.json")])
    assert rc == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FileNotFoundError"
    assert not (tmp_path / "x.json").exists()
    assert main(["discover", "--data", str(data), "--out", str(tmp_path / "y.json"),
                 "--knowledge", "k.json", "--ercot-defaults"]) == 2


def test_knowledge_file_and_ercot_defaults(tmp_path):
    ds = sample(random_svar(3, seed=0, lag_max=1), 300)
    data = tmp_path / "d.csv"
    ds.to_csv(data)
    kb = tmp_path / "kb.json"
    kb.write_text(json.dumps([{"rule": "forbid", "source": "X0", "target": "X0", "lag": 1}]))
    out = tmp_path / "g.json"
    assert main(["discover", "--data", str(data), "--tau-max", "1", "--knowledge", str(kb), "--out", str(out)]) == 0
    assert TemporalCausalGraph.load(out).get_link(0, 0, 1) is None
    # ercot defaults need roles
    assert main(["discover", "--data", str(data), "--tau-max", "1", "--ercot-defaults", "--out", str(out)]) == 2
    schema = tmp_path / "schema.json"
    save_schema([VariableMeta("X0", "weather_pc"), VariableMeta("X1", "price_lambda"),
                 VariableMeta("X2", "load_forecast")], schema)
    assert main(["discover", "--data", str(data), "--schema", str(schema), "--tau-max", "1",
                 "--ercot-defaults", "--out", str(out)]) == 0
    g = TemporalCausalGraph.load(out)
    for lag in (0, 1):
        m = g.get_link(1, 0, lag)
        assert m is None or (lag == 0 and m.kind[0] == "<")


def test_suite_command(tmp_path):
    n = int((np.datetime64("2021-01-01") - np.datetime64("2019-01-01")).astype(int))
    data = tmp_path / "panel.csv"
    sample(random_svar(3, seed=1, lag_max=1), n, start="2019-01-01").to_csv(data)
    out = tmp_path / "suite"
    rc = main(["suite", "--data", str(data), "--windows", "2019:2020:2:1", "--tau-max", "1",
               "--out-dir", str(out), "--workers", "2"])
    assert rc == 0
    graphs = sorted(out.glob("graph_*.json"))
    assert len(graphs) == 4
    summary = pd.read_csv(out / "summary.csv")
    assert len(summary) == 4 and summary["error"].isna().all()
    assert (out / "stability.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert len([o for o in manifest["outputs"] if o.endswith(".json")]) == 4
    rc = main(["suite", "--data", str(data), "--windows", "2019:2020:2:1", "--tau-max", "1000",
               "--regimes", "peak-warm", "--out-dir", str(tmp_path / "bad")])
    assert rc == 1


def test_evaluate_effects_reference(capsys, tmp_path):
    assert main(["evaluate", "--effects", "reference"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_periods"] == 12
    assert report["mean_ratio"] == pytest.approx(3.4, abs=0.05)
    out = tmp_path / "ratio.json"
    assert main(["evaluate", "--effects", "reference", "--out", str(out)]) == 0
    assert json.loads(out.read_text()) == report


def test_export_dot(tmp_path):
    g = TemporalCausalGraph(2, 1, ["wind", "lam"])
    g.set_link(0, 1, 1, "-->", -0.4)
    g.set_link(1, 1, 1, "-->", 0.5)
    path = tmp_path / "g.json"
    g.save(path)
    out = tmp_path / "g.dot"
    assert main(["export-dot", "--graph", str(path), "--out", str(out), "--hide-self-loops"]) == 0
    text = out.read_text()
    assert "n1 -> n1" not in text and "wind" in text
    assert main(["export-dot", "--graph", str(path), "--out", str(out), "--exclude", "wind"]) == 0
    assert "wind" not in out.read_text()


def test_preprocess_command(tmp_path):
    rng = np.random.default_rng(0)
    n = 24 * 40
    idx = pd.date_range("2020-01-01", periods=n, freq="h")
    lam = rng.uniform(10, 50, n)
    pd.DataFrame({
        "timestamp": idx.astype(str), "lambda": lam, "hub_west": lam + rng.normal(0, 2, n),
        "load": rng.uniform(100, 200, n), "ws1": rng.uniform(0, 10, n), "ws2": rng.uniform(0, 10, n),
    }).to_csv(tmp_path / "hourly.csv", index=False)
    (tmp_path / "rules.json").write_text(json.dumps({
        "lambda_column": "lambda", "hubs": ["hub_west"],
        "rules": {"lambda": "mean", "hub_west": "mean", "load": "sum", "ws1": "mean", "ws2": "mean"},
        "roles": {"load": "load_forecast"}, "weather": ["ws1", "ws2"],
    }))
    out = tmp_path / "daily"
    assert main(["preprocess", "--data", str(tmp_path / "hourly.csv"), "--rules", str(tmp_path / "rules.json"),
                 "--out-dir", str(out)]) == 0
    for name in ("peak.csv", "offpeak.csv", "schema.json", "manifest.json"):
        assert (out / name).exists()
    peak = pd.read_csv(out / "peak.csv")
    assert "hub_west_diff" in peak.columns and len(peak) == 40
