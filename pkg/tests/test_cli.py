import json
import subprocess
import sys

import pytest

from etac.cli import build_parser, main
from etac.edmd import KoopmanModel

SHORT = """
[run]
max_time = {t}
seed = 5
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "short.toml").write_text(SHORT.format(t=1.0))
    assert main(["train", "--out", str(d)]) == 0
    return d


def test_train_outputs(workdir):
    model = KoopmanModel.load(workdir / "model.json")
    assert (model.q, model.m) == (2, 1)
    header = (workdir / "dataset.csv").read_text().splitlines()[0]
    assert header.split(",")[0]
    raw = json.loads((workdir / "model.json").read_text())
    assert {"q", "m", "A", "B", "C"} <= set(raw)


def test_run_outputs(workdir, capsys):
    out = workdir / "run"
    code = main(["run", "--config", str(workdir / "short.toml"), "--model", str(workdir / "model.json"),
                 "--seed", "7", "--mode", "ttac", "--out", str(out)])
    assert code == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,h_rel,h_abs,h_platform,v,x_true,x_meas,x_pred,u,V_a,epsilon,adapt_event,control_event"
    assert len(lines) == 101
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["iterations"] == metrics["control_events"] == metrics["adaptation_events"] == 100
    assert (out / "events.csv").exists()
    assert "iterations: 100" in capsys.readouterr().out


def test_compare(workdir, capsys):
    out = workdir / "cmp"
    code = main(["compare", "--config", str(workdir / "short.toml"), "--model", str(workdir / "model.json"),
                 "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "compare.json").read_text())
    assert list(summary) == ["ETAC", "TTAC", "ETC"]
    assert summary["ETC"]["adaptation_events"] == 0
    table = capsys.readouterr().out
    for label in ("Iterations", "RMSE last 4 s", "Adaptation events", "Control events"):
        assert label in table


def test_sweep(workdir):
    out = workdir / "sweep"
    code = main(["sweep", "--config", str(workdir / "short.toml"), "--model", str(workdir / "model.json"),
                 "--out", str(out)])
    assert code == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0].startswith("h0,v0,error,iterations")
    assert [tuple(map(float, r.split(",")[:2])) for r in rows[1:]] == [
        (5.0, 1.0), (5.0, 0.0), (5.0, -1.0), (8.0, 1.0), (8.0, 0.0), (8.0, -1.0)]


def test_bounds(workdir, capsys):
    assert main(["bounds", "--model", str(workdir / "model.json")]) == 0
    text = capsys.readouterr().out
    assert "prediction error bound" in text and "tracking error bound" in text
    assert "min inter-event steps" in text


def test_bad_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[mpc]\nhorizn = 10\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "mpc.horizn" in capsys.readouterr().err


def test_malformed_config_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[run]\nh0 = \n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "line" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)]) == 2


def test_missing_model_exits_1(tmp_path):
    assert main(["run", "--model", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 1


def test_aborted_run_exits_1(workdir, tmp_path, capsys):
    path = tmp_path / "infeasible.toml"
    path.write_text("[mpc]\nx_min = -2.0\nx_max = -1.0\nx_ref = -1.5\nu_min = -0.01\nu_max = 0.01\n")
    assert main(["run", "--config", str(path), "--model", str(workdir / "model.json"), "--out", str(tmp_path)]) == 1
    assert "row 0" in capsys.readouterr().err


def test_parser_modes():
    args = build_parser().parse_args(["run", "--mode", "etc", "--seed", "3"])
    assert (args.mode, args.seed) == ("etc", 3)
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "--mode", "pid"])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "etac", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("train", "run", "compare", "sweep", "bounds"):
        assert name in proc.stdout
