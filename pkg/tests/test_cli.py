from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from tracelab.cli import SCHEMAS, json_schema, main, resolve_config, ConfigError
from tracelab.maskio import read_pbm, write_pbm


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_tau_ball(capsys):
    code, out, _ = run(["tau-ball"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["config"] == {"n": 2, "seed": 0, "tolerance": 1e-12}
    assert 1 < rep["result"]["tau"] < 1.64


def test_every_option_has_a_flag_and_help():
    text = subprocess.run([sys.executable, "-m", "tracelab.cli", "tau-grid", "--help"], capture_output=True, text=True).stdout
    for o in SCHEMAS["tau-grid"]:
        assert "--" + o.name.replace("_", "-") in text
    schema = json_schema()
    assert set(schema) == set(SCHEMAS)
    for cmd, opts in SCHEMAS.items():
        assert set(schema[cmd]) >= {o.name for o in opts}


def test_precedence(tmp_path):
    cfg = resolve_config("tau-ball", {"tolerance": 1e-10, "n": 3}, {"n": "2"})
    assert cfg["tolerance"] == 1e-10 and cfg["n"] == 2
    with pytest.raises(ConfigError):
        resolve_config("tau-ball", {"bogus": 1}, {})
    with pytest.raises(ConfigError):
        resolve_config("tau-ball", {}, {"n": "7"})


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"unknown": 1}')
    assert run(["tau-ball", "--config", str(bad)], capsys)[0] == 2
    bad.write_text("[1, 2]")
    assert run(["tau-ball", "--config", str(bad)], capsys)[0] == 2
    assert run(["tau-grid", "--mask", str(tmp_path / "missing.pbm")], capsys)[0] == 2
    assert run(["tau-ball", "--tolerance", "x"], capsys)[0] == 2


def test_computational_failure_exits_one(tmp_path, capsys):
    one = tmp_path / "one.pbm"
    m = np.zeros((3, 3), bool)
    m[1, 1] = True
    write_pbm(one, m)
    code, _, err = run(["tau-grid", "--mask", str(one)], capsys)
    assert code == 1 and "FeasibleSetEmpty" in err


def test_tau_grid_writes_optimizer(tmp_path, capsys):
    sq = tmp_path / "sq.pbm"
    m = np.zeros((4, 4), bool)
    m[1:3, 1:3] = True
    write_pbm(sq, m)
    out = tmp_path / "rep.json"
    code, _, _ = run(["tau-grid", "--mask", str(sq), "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads(out.read_text())["result"]
    assert rep["tau_exact"] == "3/2"
    assert read_pbm(rep["optimizer_mask"]).sum() == 2


def test_omega_delta_outputs(tmp_path, capsys):
    base = str(tmp_path / "om")
    argv = ["omega-delta", "--delta", "0.2", "--k0", "2", "--K", "4", "--resolution", "128",
            "--mask", base + ".pbm", "--svg", base + ".svg", "--csv", base]
    code, out, _ = run(argv, capsys)
    assert code == 0
    rep = json.loads(out)["result"]
    assert rep["family_ok"] and rep["balls"] == 64
    assert read_pbm(base + ".pbm").shape[0] >= 256
    assert json.loads(open(base + ".pbm.json").read())["metric"] == "crofton16"
    assert open(base + ".generations.csv").readline().startswith("k,")


def test_classify(tmp_path, capsys):
    from tracelab.geometry import disk
    from tracelab.maskio import save_domain

    p = tmp_path / "disk.pbm"
    save_domain(p, disk(24))
    code, out, _ = run(["classify", "--mask", str(p)], capsys)
    assert code == 0
    rep = json.loads(out)["result"]
    assert rep["john"]["J_hi"] < 1.5 and rep["mazya_certified"] > 1


@pytest.mark.parametrize(
    "argv",
    [
        ["identities", "--trials", "30", "--size", "6"],
        ["tau-ball"],
        ["omega-delta", "--K", "4", "--k0", "2", "--resolution", "0"],
    ],
)
def test_byte_identical_across_threads(argv, capsys, monkeypatch):
    outs = []
    for t in ("1", "8"):
        code, out, _ = run(argv + ["--seed", "3", "--threads", t], capsys)
        assert code == 0
        outs.append(out)
    monkeypatch.setenv("TRACE_LAB_THREADS", "8")
    outs.append(run(argv + ["--seed", "3"], capsys)[1])
    assert outs[0] == outs[1] == outs[2]
