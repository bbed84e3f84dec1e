import csv
import json
import os
import re
import subprocess
import sys

import numpy as np
import pytest

from mlrelax import cli, mlcore as ml


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    data, model = str(root / "data"), str(root / "model")
    assert cli.main(["datagen", "--sims", "6", "--seed", "7", "--steps", "2", "--out", data]) == 0
    assert cli.main(["train", "--train", f"{data}/train.csv", "--test", f"{data}/test.csv",
                     "--kind", "boosted", "--n-rounds", "20", "--out", model]) == 0
    return root, data, model


def test_datagen_outputs(pipeline):
    root, data, _ = pipeline
    for f in ("dataset.csv", "train.csv", "test.csv", "dataset.summary.json", "manifest.json"):
        assert os.path.exists(os.path.join(data, f))
    n = len(rows(f"{data}/dataset.csv"))
    assert len(rows(f"{data}/train.csv")) + len(rows(f"{data}/test.csv")) == n > 0
    man = json.load(open(f"{data}/manifest.json"))
    assert man["command"] == "datagen" and man["seeds"] == [7]


def test_datagen_deterministic(pipeline, tmp_path):
    _, data, _ = pipeline
    assert cli.main(["datagen", "--sims", "6", "--seed", "7", "--steps", "2", "--out", str(tmp_path)]) == 0
    for f in ("dataset.csv", "train.csv", "test.csv"):
        assert open(os.path.join(data, f)).read() == open(tmp_path / f).read()


def test_usage_errors(tmp_path, capsys):
    assert cli.main(["datagen", "--sims", "0", "--out", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE
    assert cli.main(["simulate", "--case", "9", "--out", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["simulate", "--strategy", "ml-frozen", "--out", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["bench", "--strategies", "no-relax", "--out", str(tmp_path)]) == cli.EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_data_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    assert cli.main(["train", "--train", str(bad), "--out", str(tmp_path)]) == cli.EXIT_DATA
    assert cli.main(["simulate", "--strategy", "ml-frozen", "--model", str(tmp_path / "none.json"),
                     "--out", str(tmp_path)]) == cli.EXIT_DATA
    assert cli.main(["report", str(tmp_path)]) == cli.EXIT_DATA


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    def failing(*a, **k):
        raise cli.SolverError("time step could not be made to converge")
    monkeypatch.setattr(cli, "cmd_simulate", failing)
    assert cli.main(["simulate", "--out", str(tmp_path)]) == cli.EXIT_SOLVER


def test_train_report(pipeline):
    _, data, model = pipeline
    rep = json.load(open(f"{model}/train_report.json"))
    assert len(rep["importance"]) == 18
    assert sum(rep["importance"].values()) == pytest.approx(1.0, abs=1e-12)
    ens = ml.load(f"{model}/model.json")
    test = cli.datagen.read_samples(f"{data}/test.csv")
    assert ml.rmse(ens, test) == rep["test_rmse"]
    assert rep["train_rmse"] <= rep["test_rmse"]


def test_simulate_no_relax(tmp_path):
    out = str(tmp_path / "s")
    assert cli.main(["simulate", "--strategy", "no-relax", "--pvi", "0.05", "--steps", "3",
                     "--out", out]) == 0
    trace = rows(f"{out}/trace.csv")
    assert trace and all(float(r["omega0"]) == 1.0 for r in trace)
    rep = json.load(open(f"{out}/report.json"))
    assert len(rows(f"{out}/records.csv")) == len(trace)
    assert rep["strategy"] == "no-relax"


def test_simulate_ml_frozen_and_online(pipeline):
    root, _, model = pipeline
    frozen = str(root / "frozen")
    assert cli.main(["simulate", "--strategy", "ml-frozen", "--model", f"{model}/model.json",
                     "--pvi", "0.2", "--steps", "8", "--out", frozen]) == 0
    assert rows(f"{frozen}/updates.csv") == []
    assert all(r["model_update"] == "0" for r in rows(f"{frozen}/trace.csv"))
    onl = str(root / "online")
    assert cli.main(["simulate", "--strategy", "ml-online", "--W", "10", "--model",
                     f"{model}/model.json", "--pvi", "0.2", "--steps", "8", "--out", onl]) == 0
    trace = rows(f"{onl}/trace.csv")
    flagged = [int(r["iteration"]) for r in trace if r["model_update"] == "1"]
    assert flagged == list(range(10, len(trace) + 1, 10))
    assert len(rows(f"{onl}/updates.csv")) == len(flagged)
    assert os.path.exists(f"{onl}/rmse.csv")


def test_improvement_formula():
    assert cli.improvement(200.0, 150.0) == 0.25
    assert cli.improvement(100.0, 100.0) == 0.0


def test_bench_identity_and_report(pipeline):
    root, _, model = pipeline
    out = str(root / "bench")
    strategies = ["no-relax", "fixed:1.0", "fixed:0.5", "ml-frozen"]
    result = cli.cmd_bench("1", strategies, f"{model}/model.json", out, pvi=0.1, steps=4)
    assert [r["strategy"] for r in result] == ["no-relax", "fixed-1.00", "fixed-0.50", "ml-frozen"]
    table = rows(f"{out}/bench.csv")
    assert len(table) == 4
    a, b = table[0], table[1]
    assert (a["outer"], a["inner"], a["metric"]) == (b["outer"], b["inner"], b["metric"])
    assert float(b["improvement"]) == 0.0
    for r in result:
        assert r["improvement"] == pytest.approx((result[0]["metric"] - r["metric"]) / result[0]["metric"])
    written = cli.cmd_report(out)
    n_csv = sum(len(os.listdir(os.path.join(out, d))) for d in ("curves", "traces", "rmse"))
    assert len(written) == n_csv == 4 + 4 + 1
    for svg in written:
        sub, name = os.path.basename(svg)[:-4].split("-", 1)
        col = cli.CHARTS[sub][0]
        data = rows(os.path.join(out, sub, f"{name}.csv"))
        text = open(svg).read()
        pts = re.search(r'points="([^"]*)"', text).group(1).split()
        assert len(pts) == len(data)
        assert all(np.isfinite(float(v)) for p in pts for v in p.split(","))


def test_bench_parallel_matches_serial(tmp_path):
    strategies = ["no-relax", "fixed:0.6"]
    serial = cli.cmd_bench("1", strategies, out=str(tmp_path / "a"), pvi=0.05, steps=2)
    par = cli.cmd_bench("1", strategies, out=str(tmp_path / "b"), pvi=0.05, steps=2, parallel=True,
                        workers=2)
    assert [r["metric"] for r in serial] == [r["metric"] for r in par]
    assert all(np.isnan(r["wall_time"]) for r in par)


def test_bench_crash_becomes_failure_row(tmp_path, monkeypatch):
    real = cli.run_strategy

    def flaky(model, schedule, kind, *a, **k):
        if kind == "fixed":
            raise FloatingPointError("boom")
        return real(model, schedule, kind, *a, **k)
    monkeypatch.setattr(cli, "run_strategy", flaky)
    result = cli.cmd_bench("1", ["no-relax", "fixed:0.5"], out=str(tmp_path), pvi=0.05, steps=2)
    assert "boom" in result[1]["failed"] and np.isnan(result[1]["metric"])
    assert not result[0]["failed"]


def test_parse_strategy():
    assert len(cli.parse_strategy("fixed-sweep")) == 19
    assert cli.parse_strategy("ml-online:25") == [("ml-online-W25", "ml-online", 25.0)]
    assert cli.parse_strategy("cfl-dynamic:0.2") == [("cfl-dynamic", "cfl-dynamic", 0.2)]
    for bad in ("fixed", "ml-online:0", "random"):
        with pytest.raises(cli.UsageError):
            cli.parse_strategy(bad)


def test_config_file_overrides_defaults(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# bench settings\nsteps = 3\npvi = 0.05\nparallel = false\nstrategies = no-relax,fixed:0.7\n")
    args = cli.parse_args(["--config", str(cfg), "bench", "--steps", "2"])
    assert args.steps == 2 and args.pvi == 0.05 and args.parallel is False
    assert args.strategies == "no-relax,fixed:0.7"
    cfg.write_text("bogus = 1\n")
    with pytest.raises(cli.UsageError):
        cli.parse_args(["--config", str(cfg), "bench"])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mlrelax", "simulate", "--pvi", "0.02", "--steps", "1",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and "no-relax" in proc.stdout
