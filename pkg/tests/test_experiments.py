import json

import numpy as np
import pytest

from sdecutoff.errors import ConfigError
from sdecutoff.experiments import config
from sdecutoff.experiments.cli import main
from sdecutoff.experiments.runner import format_value, write_csv


def write(tmp_path, text):
    path = tmp_path / "cfg.toml"
    path.write_text(text)
    return path


def test_defaults_and_hash_ignore_output():
    a = config.from_dict({})
    b = config.from_dict({"run": {"output": "elsewhere"}})
    assert a.hash() == b.hash()
    c = config.from_dict({"run": {"gamma": 0.6}})
    assert a.hash() != c.hash()


def test_b_grid_table():
    cfg = config.from_dict({"run": {"b_grid": {"start": -1, "stop": 1, "num": 5}}})
    assert cfg.b_grid == pytest.approx([-1, -0.5, 0, 0.5, 1])


def test_all_problems_reported_together():
    raw = {"potential": "sextic", "run": {"gamma": 1.5, "epsilons": [2.0],
                                         "engines": ["mc", "gpu"], "bogus": 1},
           "extra": {}}
    with pytest.raises(ConfigError) as info:
        config.from_dict(raw)
    text = " ".join(info.value.problems)
    for needle in ("sextic", "gamma", "epsilon", "gpu", "seed", "bogus", "extra"):
        assert needle in text


def test_seed_override():
    cfg = config.from_dict({"run": {"engines": ["mc"]}}, seed=5)
    assert cfg.mc.seed == 5


def test_load_rejects_bad_toml(tmp_path):
    with pytest.raises(ConfigError):
        config.load(write(tmp_path, "potential = ["))


def test_format_value_round_trips():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17):
        assert float(format_value(v)) == v


def test_write_csv_header(tmp_path):
    path = tmp_path / "x.csv"
    write_csv(path, ("a", "b"), [(1.0, "u")], "abc")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash=abc"
    assert lines[1] == "a,b"


def test_cli_profile_run(tmp_path):
    cfg = write(tmp_path, """
potential = "quartic"
[run]
epsilons = [1e-2, 1e-3]
b_grid = [-1.0, 0.0, 1.0]
""")
    out = tmp_path / "out"
    assert main(["profile", "--config", str(cfg), "--out", str(out)]) == 0
    rows = (out / "profile.csv").read_text().splitlines()
    assert rows[0].startswith("# config_hash=")
    manifest = json.loads((out / "manifest_profile.json").read_text())
    assert manifest["config_hash"] == rows[0].split("=")[1]
    # refuses to overwrite without --force
    assert main(["profile", "--config", str(cfg), "--out", str(out)]) == 1
    assert main(["profile", "--config", str(cfg), "--out", str(out), "--force"]) == 0


def test_cli_invalid_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "[run]\ngamma = 2.0\nepsilons = [5.0]\n")
    assert main(["constants", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "gamma" in err and "epsilon" in err


def test_cli_mc_needs_seed(tmp_path):
    cfg = write(tmp_path, "[run]\nengines = ['mc']\n")
    assert main(["mc", "--config", str(cfg), "--out", str(tmp_path)]) == 1
