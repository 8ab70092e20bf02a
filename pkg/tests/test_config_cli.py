"""Run configuration parsing and the command-line surface."""
import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from abpole.config import (Config, ConfigError, SCHEMA, default_config_text,
                           parse_config, parse_config_text)


def test_defaults_round_trip():
    cfg = parse_config_text(default_config_text())
    for key, (_, default, _) in SCHEMA.items():
        assert cfg[key] == default


def test_unknown_key_is_reported_by_name():
    with pytest.raises(ConfigError, match="foo"):
        parse_config_text("foo = 3\n")


def test_all_problems_reported_in_one_message():
    text = "foo.bar = 3\nmesh.h = -1\nray.ratio = 0.9\n"
    with pytest.raises(ConfigError) as err:
        parse_config_text(text)
    msg = str(err.value)
    assert "foo.bar" in msg
    assert "mesh.h" in msg
    assert "ray.ratio" in msg


def test_semantic_validation():
    for bad in ("verify.exponent_tol = -0.1", "model.N = 0",
                "mesh.fe_order = 3", "ray.t0 = 0.5",
                "crack.radii = 8,4", "crack.radii = 1,8",
                "crack.alpha_deg_grid = -90:90:5",
                "model.weight = affine:x"):
        with pytest.raises(ConfigError):
            parse_config_text(bad + "\n")


def test_type_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("model.N = 1\nmesh.h = abc\n")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("just some text\n")


def test_grid_and_schedule_views():
    cfg = parse_config_text(
        "crack.alpha_deg_grid = -80:80:17\n"
        "ray.directions_deg = 0,30\n"
        "ray.t0 = 0.2\nray.ratio = 0.5\nray.count = 4\n")
    grid = cfg.alpha_grid
    assert len(grid) == 17
    assert grid[0] == pytest.approx(np.radians(-80.0))
    assert np.allclose(cfg.ray_directions, [0.0, np.radians(30.0)])
    assert np.allclose(cfg.ray_schedule, [0.2, 0.1, 0.05, 0.025])
    assert cfg.crack_radii == (8.0, 16.0, 32.0)
    listed = parse_config_text("crack.alpha_deg_grid = -10,0,10\n")
    assert len(listed.alpha_grid) == 3


def test_weight_presets():
    assert parse_config_text("").weight_field().kind == "one"
    w = parse_config_text("model.weight = affine:0.1,0.2\n").weight_field()
    assert w(np.array([[1.0, 1.0]]))[0] == pytest.approx(1.3)


def test_config_hash_covers_raw_bytes(tmp_path):
    path = tmp_path / "run.cfg"
    data = b"# comment\nmodel.N = 1\n"
    path.write_bytes(data)
    cfg = parse_config(path)
    assert cfg.sha256 == hashlib.sha256(data).hexdigest()
    assert cfg.source == str(path)


# ---------------------------------------------------------------------------
# command line)


def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "abpole.cli", *args],
                          capture_output=True, text=True, cwd=cwd)


def test_mesh_command_writes_files_and_manifest(tmp_path):
    r = _cli("mesh", "--out", "m1", cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    out = tmp_path / "m1"
    assert (out / "mesh.txt").exists()
    man = json.loads((out / "mesh_stats.csv").with_name("manifest.json").read_text())
    assert man["command"] == "mesh"
    assert {f["name"] for f in man["files"]} == {"mesh.txt", "mesh_stats.csv"}
    assert man["seed"] == 0 and man["threads"] == 1
    with open(out / "mesh_stats.csv") as fh:
        row = next(csv.DictReader(fh))
    assert int(row["num_vertices"]) > 100
    assert float(row["min_angle_deg"]) > 15.0

    # byte-identical on a second run
    r2 = _cli("mesh", "--out", "m2", cwd=tmp_path)
    assert r2.returncode == 0
    assert (tmp_path / "m2" / "mesh.txt").read_bytes() == (out / "mesh.txt").read_bytes()


def test_eig_command_reports_the_reference_eigenvalue(tmp_path):
    r = _cli("eig", "--mode", "continuous", "--out", "e", cwd=tmp_path)
    assert r.returncode == 0, r.stderr
    with open(tmp_path / "e" / "eigenvalues.csv") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["lambda"]) == pytest.approx(14.681970642123895, rel=1e-3)
    assert float(row["residual"]) < 1e-9
    assert "lambda_1" in r.stdout


def test_verify_command_exit_codes(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("ray.count = 5\nverify.coefficient_rtol = 0.0001\n")
    r = _cli("verify", "--config", str(cfg), "--out", "v", cwd=tmp_path)
    assert r.returncode == 2
    assert "FAIL" in r.stdout
    out = tmp_path / "v"
    with open(out / "summary.csv") as fh:
        row = next(csv.DictReader(fh))
    assert float(row["rel_err"]) < 0.05        # accurate, just not that accurate
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_sha256"] == hashlib.sha256(cfg.read_bytes()).hexdigest()


def test_bad_configuration_exits_one(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mesh.h = -1\n")
    r = _cli("mesh", "--config", str(cfg), cwd=tmp_path)
    assert r.returncode == 1
    assert "mesh.h" in r.stderr
    assert not (tmp_path / "out").exists()
