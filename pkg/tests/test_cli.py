"""CLI front door: configs, artifacts, exit codes, reproducibility."""

import hashlib
import os
import subprocess
import sys

import numpy as np
import pytest

from pnrte import fields as fio
from pnrte.cli import (EXIT_CONFIG, EXIT_NOCONV, EXIT_OK, compare_profiles,
                       config_from_mapping, ConfigError, main)


def sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def test_unknown_config_key_rejected():
    with pytest.raises(ConfigError, match="frobnicate"):
        config_from_mapping({"frobnicate": "1"})


def test_config_type_coercion_and_validation():
    cfg = config_from_mapping({"problem": "checkerboard", "order": "5",
                               "tol": "1e-10"})
    assert cfg.order == 5 and cfg.tol == 1e-10
    with pytest.raises(ConfigError):
        config_from_mapping({"order": "0"})
    with pytest.raises(ConfigError):
        config_from_mapping({"problem": "nosuch"})


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "run.cfg"
    fio.write_config(path, {"problem": "pointsource", "order": 2, "res": 16})
    cfg = config_from_mapping(fio.read_config(path))
    assert cfg.problem == "pointsource" and cfg.order == 2 and cfg.res == 16


# ---------------------------------------------------------------------------
# field and profile files
# ---------------------------------------------------------------------------

def test_field_file_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    coll = rng.normal(size=(5, 4, 3, 4))
    path = tmp_path / "f.pnfld"
    fio.write_field(path, coll, order=1)
    meta, back = fio.read_field(path)
    assert meta["res"] == (5, 4, 3)
    assert meta["order"] == 1 and meta["unknowns"] == 4
    np.testing.assert_array_equal(coll, back)


def test_profile_roundtrip(tmp_path):
    path = tmp_path / "p.csv"
    rows = [(0.1, 2.0, 0.01), (0.2, 1.0, 0.02)]
    fio.write_profile(path, rows, with_stderr=True)
    r, v, e = fio.read_profile(path)
    np.testing.assert_allclose(r, [0.1, 0.2])
    np.testing.assert_allclose(e, [0.01, 0.02])


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

def run_cli(args):
    return main(args)


def test_run_pointsource_smoke(tmp_path):
    out = tmp_path / "run"
    code = run_cli(["run", "--problem", "pointsource", "--order", "1",
                    "--res", "12", "--tol", "1e-9", "--out", str(out)])
    assert code == EXIT_OK
    for name in ("field.pnfld", "profile.csv", "solve.log",
                 "equations.txt", "stencil.txt"):
        assert (out / name).exists()
    meta, coll = fio.read_field(out / "field.pnfld")
    assert meta["res"] == (12, 12, 12) and meta["unknowns"] == 4
    # converged solve recorded per iteration
    log = (out / "solve.log").read_text()
    assert "converged True" in log


def test_run_invalid_order_exits_config_no_artifacts(tmp_path):
    out = tmp_path / "bad"
    code = run_cli(["run", "--problem", "pointsource", "--order", "0",
                    "--out", str(out)])
    assert code == EXIT_CONFIG
    assert not out.exists()


def test_run_vacuum_without_floor_is_rejected(tmp_path):
    out = tmp_path / "vac"
    code = run_cli(["run", "--problem", "heterogeneous", "--order", "1",
                    "--res", "12", "--out", str(out)])
    assert code == EXIT_NOCONV


def test_run_nonconvergence_exit_code(tmp_path):
    out = tmp_path / "noconv"
    code = run_cli(["run", "--problem", "pointsource", "--order", "1",
                    "--res", "12", "--tol", "1e-12", "--max-iter", "2",
                    "--out", str(out)])
    assert code == EXIT_NOCONV


def test_dump_modes(capsys, tmp_path):
    code = run_cli(["run", "--problem", "pointsource", "--order", "1",
                    "--res", "8", "--dump-equations"])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "moment equations" in out and "(1,1):" in out
    code = run_cli(["run", "--problem", "pointsource", "--order", "1",
                    "--res", "8", "--dump-stencil"])
    assert code == EXIT_OK
    assert "stencil program" in capsys.readouterr().out


def test_reproducible_runs_bit_identical(tmp_path):
    args = ["run", "--problem", "heterogeneous", "--order", "1",
            "--res", "10", "--floor", "0.5", "--seed", "3",
            "--tol", "1e-9"]
    code1 = run_cli(args + ["--out", str(tmp_path / "a")])
    code2 = run_cli(args + ["--out", str(tmp_path / "b")])
    assert code1 == code2 == EXIT_OK
    assert sha256(tmp_path / "a" / "field.pnfld") == \
        sha256(tmp_path / "b" / "field.pnfld")


def test_console_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "pnrte.cli", "run", "--problem", "pointsource",
         "--order", "1", "--res", "8", "--dump-equations"],
        capture_output=True, text=True)
    assert out.returncode == 0
    assert "moment equations" in out.stdout


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def test_compare_identical_profiles_zero_error(tmp_path):
    r = np.linspace(0.1, 1.0, 10)
    v = np.exp(-r) / r
    a = tmp_path / "a.csv"
    fio.write_profile(a, zip(r, v))
    metrics = compare_profiles(r, v, r, v, r_min=0.2)
    assert metrics["l2"] == 0.0 and metrics["linf"] == 0.0
    code = run_cli(["compare", "--profile", str(a), "--reference", str(a),
                    "--r-min", "0.2"])
    assert code == EXIT_OK


def test_compare_excludes_near_field(tmp_path):
    r = np.linspace(0.05, 1.0, 20)
    ref = np.exp(-r)
    v = ref.copy()
    v[r < 0.2] *= 10.0  # pollute the near field only
    metrics = compare_profiles(r, v, r, ref, r_min=0.2)
    assert metrics["l2"] < 1e-14
    polluted = compare_profiles(r, v, r, ref, r_min=0.0)
    assert polluted["l2"] > 1.0
