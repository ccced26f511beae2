"""Benchmark harness and command-line interface."""

import filecmp
import json
import math
from pathlib import Path

import numpy as np
import pytest

from tylerfw.bench import (
    CSV_HEADER,
    CostModel,
    ExperimentConfig,
    GAP_FLOOR,
    _resample,
    aggregate_traces,
    cost_grid,
    default_methods,
    emit_csv,
    read_csv,
    run_experiment,
)
from tylerfw.cli import main
from tylerfw.dataset import GeneratorConfig, generate, normalize, save_points


def _smoke_config(out_dir, repeats=2):
    gen = GeneratorConfig(p=10, n=200, family="sphere_uniform", seed=0)
    return ExperimentConfig(generator=gen,
                            methods=default_methods(10, reference_iters=150),
                            output_dir=out_dir, reference_iters=150,
                            repeats=repeats, grid_points=40)


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    manifest = run_experiment(_smoke_config(out))
    return out, manifest


def test_csv_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for t in range(1, 6):
        vals = rng.standard_normal(8) * 10.0 ** rng.integers(-12, 3)
        keys = CSV_HEADER.split(",")[1:]
        rows.append({"t": t, **dict(zip(keys, vals))})
    path = tmp_path / "trace.csv"
    emit_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 6  # header + one row per iteration
    back = read_csv(path)
    for key in CSV_HEADER.split(","):
        want = np.array([row[key] for row in rows])
        assert np.array_equal(back[key], want)  # bit-exact round trip


def test_emit_csv_rejects_empty():
    with pytest.raises(ValueError):
        emit_csv([], "/tmp/never-written.csv")


def test_cost_model():
    cm = CostModel(p=50, n=2500)
    assert cm.fpi_units_per_iter == 50.0
    assert cm.fw_units(37) == 1.0
    assert CostModel(p=50, n=2500, matvec_unit=1.0).fw_units(37) == 38.0


def test_smoke_experiment_files(smoke):
    out, manifest = smoke
    assert manifest["failures"] == []
    assert len(manifest["repeats"]) == 2
    csvs = sorted(out.glob("*.csv"))
    # 2 repeats x 4 methods + the aggregate
    assert len(csvs) == 9
    for path in csvs:
        cols = read_csv(path)
        assert all(np.isfinite(cols["cost_units"]).all() for _ in [0])
    with open(out / "sphere_uniform_manifest.json") as fh:
        assert json.load(fh)["family"] == "sphere_uniform"


def test_smoke_cost_accounting(smoke):
    out, _ = smoke
    for label, want in (("fpi", 10.0), ("fw", 1.0), ("afw", 1.0),
                        ("gafw", 1.0)):
        cols = read_csv(out / f"sphere_uniform_r00_{label}.csv")
        assert cols["t"][0] == 0 and cols["cost_units"][0] == 0.0
        assert np.all(cols["cost_units"][1:] == want)
        assert np.array_equal(cols["t"], np.arange(len(cols["t"])))


def test_smoke_gap_properties(smoke):
    out, _ = smoke
    for label in ("fw", "afw", "gafw"):
        for r in ("r00", "r01"):
            cols = read_csv(out / f"sphere_uniform_{r}_{label}.csv")
            gap = cols["gap"]
            assert np.all(gap >= -1e-11)
            # descent per iteration implies a non-increasing gap
            assert np.all(np.diff(gap) <= 1e-11)
            assert gap[-1] < 1e-8


def test_aggregate_is_mean_of_resampled_repeats(smoke):
    out, manifest = smoke
    agg = read_csv(out / "sphere_uniform_aggregate.csv")
    grid = agg["cost_units"]
    for label in ("fw", "afw", "gafw", "fpi"):
        stack = []
        for r in ("r00", "r01"):
            cols = read_csv(out / f"sphere_uniform_{r}_{label}.csv")
            cum = np.cumsum(cols["cost_units"])
            gap = np.maximum(cols["gap"], GAP_FLOOR)
            stack.append(np.log10(_resample(cum, gap, grid)))
        want = np.mean(stack, axis=0)
        got = agg[f"{label}_mean_log10_gap"]
        assert np.max(np.abs(got - want)) <= 1e-12


def test_experiment_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(_smoke_config(a, repeats=1))
    run_experiment(_smoke_config(b, repeats=1))
    for pa in sorted(a.glob("*.csv")):
        assert filecmp.cmp(pa, b / pa.name, shallow=False)


def test_cost_grid_geometric():
    g = cost_grid(1.0, 100.0, 5)
    assert np.allclose(np.diff(np.log(g)), np.log(g[1] / g[0]))
    assert g[0] == 1.0 and g[-1] == 100.0


def test_cli_gen_check_solve(tmp_path, capsys):
    data_path = tmp_path / "points.txt"
    rc = main(["gen", "--p", "6", "--n", "80", "--family", "sphere_uniform",
               "--seed", "3", "--out", str(data_path)])
    assert rc == 0 and data_path.exists()

    assert main(["check", "--input", str(data_path)]) == 0
    out = capsys.readouterr().out
    assert "necessary conditions hold" in out

    q_path = tmp_path / "q.txt"
    rc = main(["solve", "--input", str(data_path), "--variant", "afw",
               "--tol", "1e-8", "--out", str(q_path)])
    assert rc == 0
    q = np.loadtxt(q_path)
    assert q.shape == (6, 6)
    assert np.trace(q) == pytest.approx(6.0, rel=1e-9)


def test_cli_check_fails_on_too_few_points(tmp_path, capsys):
    data = generate(GeneratorConfig(p=6, n=80, seed=0))
    small = normalize(data.points[:, :4].copy())
    path = tmp_path / "small.txt"
    save_points(small, path)
    assert main(["check", "--input", str(path)]) == 2
    assert "FAILED" in capsys.readouterr().out


def test_cli_solve_exit_2_on_assumption_failure(tmp_path):
    data = generate(GeneratorConfig(p=6, n=80, seed=0))
    small = normalize(data.points[:, :4].copy())
    path = tmp_path / "small.txt"
    save_points(small, path)
    assert main(["solve", "--input", str(path)]) == 2


def test_cli_bench_config_and_env_override(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(
        "p = 8\n"
        "n = 120          # points\n"
        "family = sphere_uniform\n"
        "repeats = 1\n"
        "reference_iters = 100\n"
        "methods = gafw,fpi\n"
        f"out = {tmp_path / 'ignored'}\n")
    env_dir = tmp_path / "env_out"
    monkeypatch.setenv("TYLERFW_OUTPUT_DIR", str(env_dir))
    assert main(["bench", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.startswith("1/1 repeats completed")
    names = sorted(p.name for p in env_dir.glob("*.csv"))
    assert names == ["sphere_uniform_aggregate.csv",
                     "sphere_uniform_r00_fpi.csv",
                     "sphere_uniform_r00_gafw.csv"]
    assert not (tmp_path / "ignored").exists()


def test_cli_bench_flag_overrides_config(tmp_path, monkeypatch):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text("p = 8\nn = 120\nfamily = sphere_uniform\nrepeats = 1\n"
                   "reference_iters = 100\nmethods = fpi\n")
    out = tmp_path / "flag_out"
    monkeypatch.delenv("TYLERFW_OUTPUT_DIR", raising=False)
    assert main(["bench", "--config", str(cfg), "--out", str(out),
                 "--n", "100"]) == 0
    cols = read_csv(out / "sphere_uniform_r00_fpi.csv")
    assert len(cols["t"]) >= 2


def test_cli_bench_malformed_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("p 8\n")
    with pytest.raises(SystemExit):
        main(["bench", "--config", str(cfg)])
