import json
import math
import os
import subprocess
import sys

import mpmath
import numpy as np
import pytest

from siegelab import experiments as ex
from siegelab.cf_engine import RotationNumber, return_times, value
from siegelab.cli import main
from siegelab.conformal_geometry import AnnulusSpec, modulus_annulus
from siegelab.render import colorize, pixel_grid, render, save_png
from siegelab.rays_potentials import basin_grid, trace_external_ray


def config(tmp_path, **kw):
    data = {"rho": [1] * 30, "out": str(tmp_path / "run")}
    data.update(kw)
    return ex.ExperimentConfig.from_json(data)


# configuration

def test_config_round_trip_and_digest(tmp_path):
    cfg = config(tmp_path, seed=4)
    again = ex.ExperimentConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert again == cfg and again.digest() == cfg.digest()
    moved = config(tmp_path / "elsewhere", seed=4, threads=2)
    assert moved.digest() == cfg.digest()
    assert config(tmp_path, seed=5).digest() != cfg.digest()


def test_negative_depth_rejected(tmp_path):
    with pytest.raises(ex.ConfigError):
        config(tmp_path, sections={"circle": {"n_max": -3}})
    with pytest.raises(ex.ConfigError):
        config(tmp_path, sections={"fiber": {"depths": [0, -1, 5]}})
    assert main(["circle", "--depth", "-1", "--out", str(tmp_path / "x")]) == 2


@pytest.mark.parametrize("data", [{"rho": [1, 0, 1]}, {"rho": [1] * 30, "bogus": 1}, {"seed": 1},
                                  {"rho": [1] * 30, "experiments": ["nope"]},
                                  {"rho": [1] * 30, "tolerances": {"lambda": 0}}])
def test_malformed_configs_rejected(data):
    with pytest.raises(ex.ConfigError):
        ex.ExperimentConfig.from_json(data)


def test_parse_rho():
    assert ex.parse_rho("golden:4") == [1, 1, 1, 1]
    assert ex.parse_rho("silver:3") == [2, 2, 2]
    assert ex.parse_rho("1, 2,3") == [1, 2, 3]
    with pytest.raises(ex.ConfigError):
        ex.parse_rho("bronze:3")


def test_thread_budget_env(monkeypatch):
    monkeypatch.setenv(ex.THREADS_ENV, "2")
    assert ex.thread_budget() == 2 and ex.thread_budget(8) == 2 and ex.thread_budget(1) == 1


def test_thread_env_caps_blas_pools():
    env = {k: v for k, v in os.environ.items() if not k.endswith("_NUM_THREADS")}
    env[ex.THREADS_ENV] = "1"
    out = subprocess.run([sys.executable, "-c", "import siegelab, os; print(os.environ['OPENBLAS_NUM_THREADS'])"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "1"


# pipelines

def test_circle_pipeline_golden(tmp_path):
    manifest = ex.run(config(tmp_path), ["verify_circle"])
    exp = manifest["experiments"]["verify_circle"]
    assert exp["passed"], exp
    assert all(exp["metrics"]["lemma_matrix"].values())
    out = tmp_path / "run" / "verify_circle"
    assert (out / "k_table.csv").exists() and json.loads((out / "k_table.json").read_text())["r_squared"] > 0.99


def test_rigid_control_run_matches_exact_ratios(tmp_path):
    manifest = ex.run(config(tmp_path, member={"kind": "rigid"}), ["verify_circle"])
    K = manifest["experiments"]["verify_circle"]["metrics"]["K"]
    t = return_times(RotationNumber.golden(30))
    with mpmath.workdps(40):
        rho = value(RotationNumber.golden(30), 40)
        for n, k in K.items():
            n = int(n)
            oracle = abs(t.q[n] * rho - t.p[n]) / abs(t.q[n + 1] * rho - t.p[n + 1])
            assert abs(k - float(oracle)) < 1e-10


def test_failing_pipeline_is_isolated(tmp_path, monkeypatch):
    def broken(ctx, out):
        (out / "partial.txt").write_text("x")
        raise RuntimeError("boom")

    monkeypatch.setitem(ex.PIPELINES, "rays", broken)
    manifest = ex.run(config(tmp_path), ["cf_lemmas", "rays"])
    assert manifest["experiments"]["cf_lemmas"]["passed"]
    assert "boom" in manifest["experiments"]["rays"]["error"]
    assert not manifest["passed"]
    assert json.loads((tmp_path / "run" / "cf_lemmas" / "failures.json").read_text()) == []


def test_stage_errors_are_tagged(tmp_path):
    cfg = config(tmp_path, member={"d": 2, "zeros": [[1.5, 0.0]]})
    manifest = ex.run(cfg, ["blaschke"])
    assert "[solve_lambda]" in manifest["experiments"]["blaschke"]["error"]


def test_manifest_contents(tmp_path):
    cfg = config(tmp_path, seed=7)
    manifest = ex.run(cfg, ["cf_lemmas", "blaschke"])
    on_disk = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert on_disk["config_hash"] == cfg.digest() and on_disk["seed"] == 7
    assert set(on_disk["versions"]) >= {"siegelab", "numpy", "python"}
    assert on_disk["passed"] is True == manifest["passed"]


def test_puzzle_modulus_refinement_contract(tower):
    n = tower.n0 + 2
    spec = AnnulusSpec(tower.disk(n - 2).region, tower.disk(n).region)
    est = modulus_annulus(spec)
    assert est.extrapolated > 0
    # each doubling moves the value by less than the error bar of the previous level
    (_, a), (_, b), (_, c) = est.ladder
    assert abs(c - b) < abs(b - a)


def test_trapping_pipeline(tmp_path):
    manifest = ex.run(config(tmp_path, sections={"trapping": {"n_max": 3, "size": 64}}), ["trapping"])
    exp = manifest["experiments"]["trapping"]
    assert exp["passed"] and exp["metrics"]["N"] >= 1


# command line

def test_list_experiments(capsys):
    assert main(["--list-experiments"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in ex.PIPELINES)


def test_cf_subcommand_exit_code(tmp_path):
    assert main(["cf", "--rho", "silver:24", "--depth", "12", "--out", str(tmp_path / "cf")]) == 0
    manifest = json.loads((tmp_path / "cf" / "manifest.json").read_text())
    assert manifest["experiments"]["cf_lemmas"]["passed"]


def test_config_file_and_module_entry(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"rho": [1] * 24, "out": str(tmp_path / "o")}))
    res = subprocess.run([sys.executable, "-m", "siegelab", "blaschke", "--config", str(path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "blaschke" / "registry.json").exists()


def test_failing_assertion_gives_nonzero_exit(tmp_path):
    path = tmp_path / "cfg.json"
    # an impossible plateau factor makes the circle pipeline fail its assertion
    path.write_text(json.dumps({"rho": [1] * 30, "tolerances": {"plateau": 0.5}}))
    assert main(["circle", "--config", str(path), "--out", str(tmp_path / "o")]) == 1


# rendering

def test_render_is_byte_identical(tmp_path, classical):
    for name in ("a.png", "b.png"):
        save_png(render(classical, 0.5j, 2.5, 96), tmp_path / name)
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    img = render(classical, 0j, 2.0, 64)
    assert img.mode == "RGB" and img.size == (64, 64)


def test_render_rejects_degenerate_window(classical):
    with pytest.raises(ValueError):
        render(classical, 0j, 0.0, 64)


def test_unit_disk_pixels_not_escaping(classical):
    Z = pixel_grid(0j, 1.5, 64)
    g = basin_grid(classical, Z, 100)
    assert not g.escaped[np.abs(Z) < 1].any()


def test_ray_overlay_on_level_sets(classical):
    center, half, size = 1.0 + 0j, 3.0, 256
    Z = pixel_grid(center, half, size)
    G = np.nan_to_num(basin_grid(classical, Z, 200).potential)  # G = 0 off the basin of infinity
    ray = trace_external_ray(classical, 0.3, depth=12)
    h = 2 * half / size
    checked = 0
    for z, g in zip(ray.points, ray.potentials):
        col = int((z.real - center.real + half) / h)
        row = int((center.imag - z.imag + half) / h)
        if not (1 <= col < size - 1 and 1 <= row < size - 1):
            continue
        patch = G[row - 1: row + 2, col - 1: col + 2]
        # the level set G = g passes within one pixel of the overlay point
        assert patch.min() <= g <= patch.max()
        checked += 1
    assert checked > 10
