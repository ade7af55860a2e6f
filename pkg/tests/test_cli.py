import json
import shutil

import pytest
import yaml

from cpbid.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main

SMALL = {
    "seed": 3,
    "data": {"synth": {"days": 90}},
    "split": {"train_end": "2014-02-10", "cal_end": "2014-03-05"},
    "model": {"n_trees": 10},
    "conformal": {"methods": ["M1", "M2"], "k": 10},
    "strategies": [{"name": "perfect"}, {"name": "trust"}, {"name": "eum"}],
}


def _config(tmp_path, cfg=SMALL, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = _config(base)
    out = base / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    return base, cfg, out


def test_run_outputs(small_run):
    _, _, out = small_run
    rows = json.loads((out / "reports" / "backtest.json").read_text())
    assert [(r["strategy"], r["cp_method"]) for r in rows] == [
        ("perfect", "actual"), ("trust", "M1"), ("eum", "M1"), ("trust", "M2"), ("eum", "M2")]
    assert rows[0]["imbalance_pct"] == 0.0
    status = json.loads((out / "stages.json").read_text())
    assert status == {"completed": ["synth", "ingest", "train", "calibrate", "evaluate", "bid", "backtest"],
                      "failed": None}
    for f in ("reports/wis.csv", "reports/coverage.csv", "reports/point.json", "market/clusters.json"):
        assert (out / f).exists()


def test_k_override_reaches_predictor(small_run):
    _, _, out = small_run
    dump = json.loads((out / "predictors" / "M2.json").read_text())
    assert dump["config"]["k"] == 10


def test_rerun_is_byte_identical(small_run):
    base, cfg, out = small_run
    out2 = base / "run2"
    assert main(["run", "--config", str(cfg), "--out", str(out2)]) == EXIT_OK
    assert _files(out / "reports") == _files(out2 / "reports")
    assert _files(out / "bids") == _files(out2 / "bids")


def test_resume_final_stage(small_run, capsys):
    base, _, out = small_run
    copy = base / "resume"
    shutil.copytree(out, copy)
    before = _files(copy / "reports")
    (copy / "reports" / "backtest.csv").unlink()
    (copy / "reports" / "backtest.json").unlink()
    # the stored config is picked up, so the copied out path must match it
    cfg = yaml.safe_load((copy / "config.yaml").read_text())
    cfg["out"] = str(copy)
    (copy / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))
    assert main(["backtest", "--out", str(copy), "--json"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["status"] == "ok" and "backtest" in payload["stages"]
    assert _files(copy / "reports") == before


def test_stage_refuses_different_config(small_run, tmp_path):
    _, _, out = small_run
    other = _config(tmp_path, {**SMALL, "seed": 4})
    assert main(["backtest", "--config", str(other), "--out", str(out)]) == EXIT_USAGE


def test_non_empty_out_refused(small_run, capsys):
    base, cfg, out = small_run
    assert main(["run", "--config", str(cfg), "--out", str(out), "--json"]) == EXIT_FAILED
    assert "not empty" in json.loads(capsys.readouterr().out)["error"]


def test_missing_prerequisite(tmp_path):
    cfg = _config(tmp_path)
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_FAILED


def test_failure_marker(tmp_path):
    bad = {**SMALL, "data": {"source": "csv", "csv": {"pv": str(tmp_path / "none.csv"),
                                                       "prices": str(tmp_path / "none.csv")}}}
    out = tmp_path / "o"
    assert main(["run", "--config", str(_config(tmp_path, bad)), "--out", str(out)]) == EXIT_FAILED
    status = json.loads((out / "stages.json").read_text())
    assert status["completed"] == [] and status["failed"]["stage"] == "ingest"


def test_bad_config_exit_code(tmp_path, capsys):
    p = _config(tmp_path, {"strategies": [{"name": "eum_cvar", "gamma": 1.5, "beta": 0.1}]})
    assert main(["validate", "--config", str(p)]) == EXIT_USAGE
    assert "strategies.0.gamma" in capsys.readouterr().err


def test_validate_prints_normalized(tmp_path, capsys):
    assert main(["validate", "--seed", "7", "--json"]) == EXIT_OK
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["seed"] == 7 and cfg["conformal"]["k"] == 50


def test_needs_out(capsys):
    assert main(["run"]) == EXIT_USAGE
