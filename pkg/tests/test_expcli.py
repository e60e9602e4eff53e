import json
import shutil
import subprocess
import sys

import pytest

from mzmem.errors import InvalidConfig
from mzmem.expcli import EXPERIMENTS, load_config, main, make_config, run

NAMES = ["LinearBounds3D", "LinearHModel3D", "LinearHModel100D", "Lorenz63TModel", "Lorenz96Ht",
         "ChainVACF", "ChainKernel", "HaldCorrelation", "HaldKernel"]


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for n in NAMES:
        assert n in out
    assert set(EXPERIMENTS) == set(NAMES)


def test_describe(capsys):
    assert main(["list", "--describe", "ChainKernel"]) == 0
    out = capsys.readouterr().out
    assert "degree = 50" in out and "reproduces:" in out


def test_unknown_experiment(tmp_path, capsys):
    assert main(["run", "Nope", "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "InvalidConfig"
    assert "ChainVACF" in err["message"]


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# quick run\nn_samples = 500\nseed = 4\nhorizon = 1.0\n")
    c = make_config("LinearBounds3D", cfg, seed=9)
    assert c["n_samples"] == 500 and c["seed"] == 9 and c["horizon"] == 1.0
    assert c["grid_step"] == 0.01
    c = make_config("LinearBounds3D", cfg, samples=700)
    assert c["n_samples"] == 700 and c["seed"] == 4
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"degree": 40}))
    assert make_config("ChainKernel", js)["degree"] == 40


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense_key = 1\n")
    with pytest.raises(InvalidConfig):
        make_config("LinearBounds3D", bad)
    bad.write_text("horizon = -1\n")
    with pytest.raises(InvalidConfig):
        make_config("LinearBounds3D", bad)
    bad.write_text("no equals sign\n")
    with pytest.raises(InvalidConfig):
        load_config(bad)
    with pytest.raises(InvalidConfig):
        make_config("ChainKernel", samples=10)


def quick_run(tmp_path, sub):
    cfg = tmp_path / "q.cfg"
    cfg.write_text("horizon = 1.0\nn_samples = 3000\n")
    return main(["run", "LinearBounds3D", "--config", str(cfg), "--seed", "5",
                 "--out", str(tmp_path / sub)])


def test_run_artifacts_and_determinism(tmp_path, capsys):
    assert quick_run(tmp_path, "a") == 0
    assert quick_run(tmp_path, "b") == 0
    out = capsys.readouterr().out
    assert "PASS omega:" in out
    a, b = tmp_path / "a" / "LinearBounds3D", tmp_path / "b" / "LinearBounds3D"
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert "w0_oracle.csv" in csvs and "w0_mc.csv" in csvs
    for name in csvs + ["acceptance.json", "metadata.json"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    acc = json.loads((a / "acceptance.json").read_text())
    for c in acc:
        assert set(c) == {"name", "measured", "target", "tol", "pass"}
    meta = json.loads((a / "metadata.json").read_text())
    assert meta["seed"] == 5 and meta["parameters"]["n_samples"] == 3000
    header, first = (a / "w0_oracle.csv").read_text().splitlines()[:2]
    assert header.split(",")[0] == "t"
    assert "e" in first.split(",")[1]


def test_run_function_returns_checks(tmp_path):
    checks = run(make_config("LinearHModel3D", out=tmp_path))
    names = {c.name for c in checks}
    assert {"Hm2_c0", "Hm2_c1", "Hm2_c2"} <= names
    assert all(c.passed for c in checks)


@pytest.mark.parametrize("cmd", [[sys.executable, "-m", "mzmem"], ["mzmem"]])
def test_console_entry_points(cmd):
    if cmd == ["mzmem"] and shutil.which("mzmem") is None:
        pytest.skip("console script not on PATH")
    r = subprocess.run(cmd + ["list"], capture_output=True, text=True)
    assert r.returncode == 0 and "HaldKernel" in r.stdout
