import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from inhomdiff.cli import load_recipe, main, recipe_names


def _run(argv, capsys):
    code = main(argv)
    err = capsys.readouterr().err.strip()
    return code, (json.loads(err.splitlines()[-1]) if err else None)


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _is_17g(text):
    try:
        return format(float(text), ".17g") == text
    except ValueError:
        return False


def test_solve_ou_series(tmp_path, capsys):
    code, err = _run(["solve", "--out", str(tmp_path), "--alpha", "0", "--k", "1", "--epsilon0", "1"], capsys)
    assert code == 0, err
    header, rows = _read(tmp_path / "s_of_t.csv")
    assert header == ["t", "value"]
    t, s = np.array(rows, dtype=float).T
    assert t[-1] == pytest.approx(5.0)
    np.testing.assert_allclose(s, np.exp(-t), rtol=1e-3)
    assert all(_is_17g(v) for row in rows for v in row)

    header, rows = _read(tmp_path / "moments.csv")
    assert header == ["t", "n", "value"]
    assert sorted({int(r[1]) for r in rows}) == list(range(1, 8))

    meta = json.loads((tmp_path / "solve.json").read_text())
    assert meta["classification"]["label"] == "Monotonic"
    assert meta["classification"]["rate"] == pytest.approx(1.0, abs=0.01)
    assert meta["initial_slope"] == -1.0
    assert meta["mass"]["max_abs_drift"] < 1e-6
    assert meta["config"]["physics"]["epsilon0"] == 1.0


def test_solve_nonmonotonic_metadata(tmp_path, capsys):
    argv = ["solve", "--out", str(tmp_path), "--alpha", "0.25", "--k", "0.25", "--epsilon0", "0.5", "--t-end", "20"]
    assert _run(argv, capsys)[0] == 0
    meta = json.loads((tmp_path / "solve.json").read_text())
    assert meta["classification"]["label"] == "NonMonotonic"
    assert meta["classification"]["s_max"] > 1.0
    assert meta["initial_slope"] == pytest.approx(0.2334375)


def test_solve_rerun_is_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        argv = ["solve", "--out", str(tmp_path / d), "--alpha", "1", "--epsilon0", "0.5", "--t-end", "1"]
        assert _run(argv, capsys)[0] == 0
    for name in ("s_of_t.csv", "moments.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_solve_too_coarse_grid(tmp_path, capsys):
    code, err = _run(["solve", "--out", str(tmp_path), "--n", "4"], capsys)
    assert code == 2
    assert err["error"] == "config"
    assert "grid too coarse" in err["reason"]
    assert not (tmp_path / "s_of_t.csv").exists()


def test_solve_from_config_file_with_override(tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text("[physics]\nalpha = 0.0\nk = 2.0\n[solver]\nt_end = 1.0\n")
    out = tmp_path / "out"
    assert _run(["solve", "--config", str(cfg), "--out", str(out), "--k", "1"], capsys)[0] == 0
    meta = json.loads((out / "solve.json").read_text())
    assert meta["config"]["physics"]["k"] == 1.0
    assert meta["config"]["solver"]["t_end"] == 1.0


def test_bad_override_value(tmp_path, capsys):
    code, err = _run(["solve", "--out", str(tmp_path), "--alpha", "lots"], capsys)
    assert code == 2 and "alpha" in err["reason"]


def test_missing_config_file(tmp_path, capsys):
    code, err = _run(["solve", "--config", str(tmp_path / "none.toml"), "--out", str(tmp_path)], capsys)
    assert code == 2 and "cannot read" in err["reason"]


# -- portrait -------------------------------------------------------------------------


def test_portrait_alpha_zero_rows(tmp_path, capsys):
    argv = ["portrait", "--out", str(tmp_path), "--alphas", "0", "--ks", "0.5,1", "--workers", "1"]
    assert _run(argv, capsys)[0] == 0
    header, rows = _read(tmp_path / "portrait.csv")
    assert header == ["alpha", "k", "epsilon0_critical", "status"]
    assert [(float(r[1]), float(r[2]), r[3]) for r in rows] == [(0.5, 0.0, "ok"), (1.0, 0.0, "ok")]


def test_portrait_single_cell(tmp_path, capsys):
    argv = ["portrait", "--out", str(tmp_path), "--alphas", "0.25", "--ks", "0.25", "--workers", "1"]
    assert _run(argv, capsys)[0] == 0
    _, rows = _read(tmp_path / "portrait.csv")
    assert float(rows[0][2]) == pytest.approx(2.0, abs=0.1)
    meta = json.loads((tmp_path / "portrait.json").read_text())
    assert meta["slope_criterion_critical"][0][0] == pytest.approx(1.996, abs=1e-3)


def test_portrait_empty_range(tmp_path, capsys):
    code, err = _run(["portrait", "--out", str(tmp_path), "--n-alpha", "0"], capsys)
    assert code == 2
    assert "empty sweep range" in err["reason"]


# -- oracle -----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ou_solve(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    assert main(["solve", "--out", str(out), "--alpha", "0", "--k", "1", "--epsilon0", "1"]) == 0
    return out


ORACLE_SMALL = ["--alpha", "0", "--k", "1", "--epsilon0", "1", "--n-traj", "20000", "--workers", "1"]


def test_oracle_passes_against_solve(tmp_path, capsys, ou_solve):
    code, err = _run(["oracle", "--out", str(tmp_path), "--compare", str(ou_solve), *ORACLE_SMALL], capsys)
    assert code == 0, err
    meta = json.loads((tmp_path / "oracle_comparison.json").read_text())
    assert meta["comparison"]["passed"] is True
    header, rows = _read(tmp_path / "oracle.csv")
    assert header == ["t", "n", "mean", "stderr"]
    assert len(rows) == 2 * 51


def test_oracle_negative_control(tmp_path, capsys, ou_solve):
    argv = ["oracle", "--out", str(tmp_path), "--compare", str(ou_solve), "--negate-drift", *ORACLE_SMALL]
    code, err = _run(argv, capsys)
    assert code == 4
    assert err["error"] == "oracle"


def test_oracle_seed_reproducible(tmp_path, capsys):
    small = ["--alpha", "1", "--epsilon0", "0.5", "--t-end", "0.5", "--n-traj", "5000", "--seed", "7"]
    for d, workers in (("a", "1"), ("b", "2")):
        assert _run(["oracle", "--out", str(tmp_path / d), "--workers", workers, "--block-size", "1024", *small], capsys)[0] == 0
    assert (tmp_path / "a" / "oracle.csv").read_bytes() == (tmp_path / "b" / "oracle.csv").read_bytes()


def test_oracle_schedule_mismatch(tmp_path, capsys):
    solve_dir = tmp_path / "solve"
    argv = ["solve", "--out", str(solve_dir), "--t-end", "1", "--snapshot-stride", "7"]
    assert _run(argv, capsys)[0] == 0
    code, err = _run(["oracle", "--out", str(tmp_path / "o"), "--compare", str(solve_dir), "--t-end", "1", "--n-traj", "1000"], capsys)
    assert code == 2
    assert err["error"] == "schedule"


# -- figures -----------------------------------------------------------------------------


def test_recipes_bundled_and_valid():
    names = recipe_names()
    assert {"fig1a", "fig1b", "fig1c", "fig2", "fig3", "fig4", "fig5-coarse"} <= set(names)
    for name in names:
        command, scan, cfg = load_recipe(name)
        assert command in ("solve", "portrait", "smax-curve", "oracle")
        cfg.validate()


def test_figures_list(capsys):
    assert main(["figures", "--list"]) == 0
    assert "fig1a" in capsys.readouterr().out.split()


def test_figures_run_one_recipe(tmp_path, capsys):
    argv = ["figures", "--only", "fig1a", "--out", str(tmp_path), "--t-end", "1", "--workers", "1"]
    assert _run(argv, capsys)[0] == 0
    for e in ("1", "2", "3", "4"):
        meta = json.loads((tmp_path / "fig1a" / f"epsilon0={e}" / "solve.json").read_text())
        assert meta["config"]["physics"]["epsilon0"] == float(e)


def test_figures_unknown_recipe(tmp_path, capsys):
    code, err = _run(["figures", "--only", "fig9", "--out", str(tmp_path)], capsys)
    assert code == 2 and "fig9" in err["reason"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "inhomdiff", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("solve", "portrait", "smax-curve", "oracle", "figures"):
        assert cmd in res.stdout
