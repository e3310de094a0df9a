"""Command-line layer: config parsing, subcommand runs, manifests, exit codes.

Everything runs in-process through main(argv) so exit codes are plain return
values. Runs use deliberately tiny custom budgets; statistical quality is the
experiment suite's business, this file checks plumbing contracts: file
formats, determinism, precedence, confinement, and error mapping.
"""

import json
import math
import os

import numpy as np
import pytest

from mcmclab.cli import main
from mcmclab.config import RunConfig, parse_config
from mcmclab.errors import UsageError
from mcmclab.kernels import speedup_index

# key=value lines for a throwaway experiment budget small enough for tests
TINY_BUDGET = "starts=3\nreplicas=24\nreference=512\niters=32\npaths=64\n"


def write_config(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_manifest(out_dir):
    with open(os.path.join(str(out_dir), "manifest.json")) as fh:
        return json.load(fh)


# ---------------------------------------------------------------- parse_config

def test_parse_scaling_dims_list():
    cfg = parse_config(["scaling", "--algo", "rwm", "--dims", "8,16,32", "--seed", "7"])
    assert isinstance(cfg, RunConfig)
    assert cfg.subcommand == "scaling"
    assert cfg.dims == (8, 16, 32)
    assert cfg.seed == 7


def test_parse_malformed_dims_names_token():
    with pytest.raises(UsageError, match="banana"):
        parse_config(["scaling", "--algo", "rwm", "--dims", "8,banana", "--seed", "7"])


def test_unknown_config_key_named(tmp_path):
    cfg_file = write_config(tmp_path, "dim=8\nwibble=3\n")
    with pytest.raises(UsageError, match="wibble"):
        parse_config(["converge", "--config", cfg_file])


def test_config_key_not_valid_for_subcommand(tmp_path):
    # speed belongs to diffusion, not converge
    cfg_file = write_config(tmp_path, "speed=1.5\n")
    with pytest.raises(UsageError, match="speed"):
        parse_config(["converge", "--config", cfg_file])


def test_flag_overrides_file_and_both_recorded(tmp_path):
    cfg_file = write_config(tmp_path, "seed=5\ndim=8\n")
    cfg = parse_config(
        ["converge", "--algo", "rwm", "--target", "std_normal", "--ell", "2.38",
         "--config", cfg_file, "--seed", "7"]
    )
    assert cfg.seed == 7
    assert cfg.overridden == {"seed": {"file": 5, "flag": 7}}


def test_budget_preset_then_field_override(tmp_path):
    cfg_file = write_config(tmp_path, "budget=small\nreplicas=24\n")
    cfg = parse_config(
        ["converge", "--algo", "rwm", "--target", "std_normal", "--dim", "8",
         "--ell", "2.38", "--config", cfg_file]
    )
    assert cfg.budget.replicas == 24
    assert cfg.budget.starts == 8  # rest of the preset intact


def test_missing_required_key_named():
    with pytest.raises(UsageError, match="dim"):
        parse_config(["converge", "--algo", "rwm", "--target", "std_normal", "--ell", "2.38"])


def test_bad_budget_preset_named():
    with pytest.raises(UsageError, match="huge"):
        parse_config(["converge", "--algo", "rwm", "--target", "std_normal",
                      "--dim", "8", "--ell", "2.38", "--budget", "huge"])


def test_bad_algo_rejected():
    with pytest.raises(UsageError, match="hmc"):
        parse_config(["converge", "--algo", "hmc", "--target", "std_normal",
                      "--dim", "8", "--ell", "2.38"])


def test_out_escaping_out_dir_rejected(tmp_path):
    with pytest.raises(UsageError, match="out_dir"):
        parse_config(["sample", "--algo", "rwm", "--target", "std_normal",
                      "--dim", "4", "--ell", "1.0", "--out", "../evil.csv",
                      "--out-dir", str(tmp_path)])
    with pytest.raises(UsageError, match="out_dir"):
        parse_config(["sample", "--algo", "rwm", "--target", "std_normal",
                      "--dim", "4", "--ell", "1.0", "--out", "/tmp/abs.csv",
                      "--out-dir", str(tmp_path)])


def test_unknown_flag_exits_2(tmp_path, capsys):
    code = main(["converge", "--wibble", "3", "--out-dir", str(tmp_path)])
    assert code == 2


def test_malformed_float_flag_exits_2(tmp_path):
    code = main(["converge", "--algo", "rwm", "--target", "std_normal",
                 "--dim", "8", "--ell", "abc", "--out-dir", str(tmp_path)])
    assert code == 2


def test_unknown_target_exits_2(tmp_path):
    code = main(["sample", "--algo", "rwm", "--target", "nope", "--dim", "4",
                 "--ell", "1.0", "--seed", "1", "--out-dir", str(tmp_path)])
    assert code == 2


# ---------------------------------------------------------------- sample

def test_sample_csv_shape_and_determinism(tmp_path):
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    cfg_file = write_config(tmp_path, TINY_BUDGET)
    argv = ["sample", "--algo", "rwm", "--target", "std_normal", "--dim", "4",
            "--ell", "2.0", "--iters", "16", "--record", "0,8,16", "--seed", "3",
            "--config", cfg_file]
    assert main(argv + ["--out-dir", str(out1)]) == 0
    assert main(argv + ["--out-dir", str(out2)]) == 0

    lines = (out1 / "samples.csv").read_text().splitlines()
    assert lines[0] == "start_idx,replica_idx,iteration,coord1"
    assert len(lines) == 1 + 3 * 24 * 3  # starts * replicas * record points
    first = lines[1].split(",")
    assert first[0] == "0" and first[1] == "0" and first[2] == "0"
    float(first[3])  # parses

    assert (out1 / "samples.csv").read_bytes() == (out2 / "samples.csv").read_bytes()

    m = read_manifest(out1)
    assert m["subcommand"] == "sample"
    assert m["seed"] == 3
    assert 0.0 <= m["acceptance"]["acceptance_rate"] <= 1.0
    assert "python" in m["versions"] and "numpy" in m["versions"]
    assert m["wall_time_s"] >= 0.0
    assert m["config"]["dim"] == 4 and m["config"]["replicas"] == 24


def test_sample_writes_only_inside_out_dir(tmp_path):
    out = tmp_path / "only"
    cfg_file = write_config(tmp_path, TINY_BUDGET)
    before = set(os.listdir(tmp_path))
    assert main(["sample", "--algo", "mala", "--target", "std_normal", "--dim", "4",
                 "--ell", "1.2", "--iters", "8", "--seed", "5",
                 "--config", cfg_file, "--out-dir", str(out)]) == 0
    after = set(os.listdir(tmp_path))
    assert after - before == {"only"}
    assert set(os.listdir(out)) == {"samples.csv", "manifest.json"}


# ---------------------------------------------------------------- distance

def test_distance_identical_inputs(tmp_path):
    a = tmp_path / "a.csv"
    vals = np.random.default_rng(1).normal(size=40)
    a.write_text("".join(f"{float(v)!r}\n" for v in vals))
    out = tmp_path / "out"
    assert main(["distance", "--a", str(a), "--b", str(a),
                 "--out-dir", str(out)]) == 0
    res = json.loads((out / "distance.json").read_text())
    assert set(res) == {"distance", "method", "n", "noise_floor"}
    assert res["distance"] == 0.0
    assert res["n"] == 40
    assert res["method"] == "exact-assignment"
    assert res["noise_floor"] > 0.0
    assert read_manifest(out)["acceptance"] == res


def test_distance_unequal_sizes_resamples_down(tmp_path):
    rng = np.random.default_rng(2)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("".join(f"{float(v)!r}\n" for v in rng.normal(size=30)))
    b.write_text("".join(f"{float(v)!r}\n" for v in rng.normal(size=50)))
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    argv = ["distance", "--a", str(a), "--b", str(b), "--seed", "9"]
    assert main(argv + ["--out-dir", str(out1)]) == 0
    assert main(argv + ["--out-dir", str(out2)]) == 0
    res = json.loads((out1 / "distance.json").read_text())
    assert res["n"] == 30
    assert 0.0 <= res["distance"] <= 2.0
    assert (out1 / "distance.json").read_bytes() == (out2 / "distance.json").read_bytes()


def test_distance_malformed_cell_exits_2(tmp_path, capsys):
    a = tmp_path / "a.csv"
    a.write_text("1.0\nbanana\n2.0\n")
    out = tmp_path / "out"
    assert main(["distance", "--a", str(a), "--b", str(a), "--out-dir", str(out)]) == 2
    assert "banana" in capsys.readouterr().err


def test_distance_missing_file_exits_2(tmp_path):
    out = tmp_path / "out"
    assert main(["distance", "--a", str(tmp_path / "no.csv"),
                 "--b", str(tmp_path / "no.csv"), "--out-dir", str(out)]) == 2


# ---------------------------------------------------------------- diffusion

def test_diffusion_one_column_output_feeds_distance(tmp_path):
    out = tmp_path / "out"
    assert main(["diffusion", "--target", "std_normal", "--speed", "1.5",
                 "--t", "0.5", "--paths", "60", "--seed", "4",
                 "--out-dir", str(out)]) == 0
    lines = (out / "diff.csv").read_text().splitlines()
    assert len(lines) == 60
    vals = [float(x) for x in lines]
    assert all(math.isfinite(v) for v in vals)
    m = read_manifest(out)
    assert m["config"]["speed"] == 1.5
    assert m["acceptance"]["paths"] == 60

    # the one-column output is valid distance input
    out2 = tmp_path / "out2"
    assert main(["distance", "--a", str(out / "diff.csv"),
                 "--b", str(out / "diff.csv"), "--out-dir", str(out2)]) == 0


def test_diffusion_explicit_dt_deterministic(tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert main(["diffusion", "--target", "logistic", "--speed", "2.0",
                     "--t", "0.25", "--dt", "0.01", "--paths", "32", "--seed", "11",
                     "--out", "paths.csv", "--out-dir", str(out)]) == 0
        outs.append((out / "paths.csv").read_bytes())
    assert outs[0] == outs[1]


# ---------------------------------------------------------------- converge

def test_converge_smoke_small_budget(tmp_path):
    out = tmp_path / "out"
    assert main(["converge", "--algo", "rwm", "--target", "std_normal",
                 "--dim", "8", "--seed", "1", "--budget", "small",
                 "--out-dir", str(out)]) == 0
    lines = (out / "curve.csv").read_text().splitlines()
    assert lines[0] == "t,iteration,dist,band"
    assert len(lines) == 9  # default 8-point grid
    t_seen = []
    for row in lines[1:]:
        t, it, dist, band = row.split(",")
        t_seen.append(float(t))
        assert int(it) == speedup_index("rwm", 8, float(t))
        assert 0.0 <= float(dist) <= 2.0 and float(band) >= 0.0
    assert t_seen == [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0]

    m = read_manifest(out)
    acc = m["acceptance"]
    assert acc["epsilon"] == 0.2
    assert isinstance(acc["t_eps_iterations"], float)
    assert acc["t_eps_iterations"] > 0.0
    assert acc["violations"] == []
    assert acc["noise_floor"] < 0.2
    # config echo carries resolved budget numbers, not the preset name
    assert m["config"]["replicas"] == 192
    assert m["config"]["t_grid"] == [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0]


def test_converge_threads_byte_identical(tmp_path):
    cfg_file = write_config(
        tmp_path, "starts=4\nreplicas=48\nreference=1024\niters=32\npaths=64\nepsilon=1.0\n"
    )
    argv = ["converge", "--algo", "mala", "--target", "std_normal", "--dim", "8",
            "--ell", "1.4", "--seed", "6", "--config", cfg_file,
            "--t-grid", "0.25,1.0,4.0"]
    out1, out8 = tmp_path / "t1", tmp_path / "t8"
    c1 = main(argv + ["--out-dir", str(out1), "--threads", "1"])
    c8 = main(argv + ["--out-dir", str(out8), "--threads", "8"])
    assert c1 == c8
    assert (out1 / "curve.csv").read_bytes() == (out8 / "curve.csv").read_bytes()
    m1, m8 = read_manifest(out1), read_manifest(out8)
    m1.pop("wall_time_s"), m8.pop("wall_time_s")
    m1.pop("threads"), m8.pop("threads")
    assert m1 == m8


def test_converge_never_crossing_exits_4(tmp_path):
    cfg_file = write_config(tmp_path, TINY_BUDGET)
    out = tmp_path / "out"
    code = main(["converge", "--algo", "rwm", "--target", "std_normal", "--dim", "8",
                 "--ell", "2.38", "--seed", "2", "--config", cfg_file,
                 "--epsilon", "1e-6", "--t-grid", "0.25,1.0", "--out-dir", str(out)])
    assert code == 4
    # data artifacts still written for post-mortem
    assert (out / "curve.csv").exists()
    assert read_manifest(out)["acceptance"]["t_eps_iterations"] == "inf"


def test_converge_manifest_round_trip(tmp_path):
    cfg_file = write_config(
        tmp_path, "starts=4\nreplicas=48\nreference=1024\niters=32\npaths=64\n"
    )
    out1 = tmp_path / "run1"
    assert main(["converge", "--algo", "rwm", "--target", "logistic", "--dim", "6",
                 "--ell", "2.0", "--seed", "13", "--config", cfg_file,
                 "--epsilon", "0.9", "--t-grid", "0.5,2.0",
                 "--out-dir", str(out1)]) == 0
    echo = read_manifest(out1)["config"]

    # write the echoed config back out as a key=value file and re-run from it
    def fmt(v):
        if isinstance(v, list):
            return ",".join(fmt(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    replay = "".join(f"{k}={fmt(v)}\n" for k, v in echo.items())
    cfg2 = write_config(tmp_path, replay, name="replay.cfg")
    out2 = tmp_path / "run2"
    assert main(["converge", "--config", cfg2, "--out-dir", str(out2)]) == 0
    assert (out1 / "curve.csv").read_bytes() == (out2 / "curve.csv").read_bytes()


def test_env_var_threads_fallback(tmp_path, monkeypatch):
    cfg_file = write_config(tmp_path, TINY_BUDGET)
    out = tmp_path / "out"
    monkeypatch.setenv("MCMCLAB_THREADS", "3")
    assert main(["sample", "--algo", "rwm", "--target", "std_normal", "--dim", "4",
                 "--ell", "1.0", "--iters", "8", "--seed", "1",
                 "--config", cfg_file, "--out-dir", str(out)]) == 0
    assert read_manifest(out)["threads"] == 3


# ---------------------------------------------------------------- scaling

def test_scaling_artifacts_and_fit(tmp_path):
    cfg_file = write_config(
        tmp_path, "starts=4\nreplicas=32\nreference=1024\niters=32\npaths=64\n"
    )
    out = tmp_path / "out"
    assert main(["scaling", "--algo", "rwm", "--target", "std_normal",
                 "--dims", "4,8,16,32", "--ell", "2.38", "--epsilon", "0.75",
                 "--seed", "17", "--config", cfg_file, "--out-dir", str(out)]) == 0
    lines = (out / "scaling.csv").read_text().splitlines()
    assert lines[0] == "d,t_eps"
    assert [int(r.split(",")[0]) for r in lines[1:]] == [4, 8, 16, 32]
    for r in lines[1:]:
        assert float(r.split(",")[1]) > 0.0
    fit = json.loads((out / "fit.json").read_text())
    assert set(fit) == {"slope", "ci", "epsilon"}
    assert fit["ci"][0] <= fit["slope"] <= fit["ci"][1]
    assert fit["epsilon"] == 0.75
    assert read_manifest(out)["acceptance"]["slope"] == fit["slope"]


def test_scaling_unbounded_time_exits_4(tmp_path):
    cfg_file = write_config(tmp_path, TINY_BUDGET)
    out = tmp_path / "out"
    code = main(["scaling", "--algo", "rwm", "--target", "std_normal",
                 "--dims", "4,8,16,32", "--ell", "2.38", "--epsilon", "1e-6",
                 "--seed", "17", "--config", cfg_file,
                 "--t-grid", "0.25,1.0", "--out-dir", str(out)])
    assert code == 4
    m = read_manifest(out)
    assert "error" in m and "4" in m["error"]


def test_scaling_ell_and_rule_conflict():
    with pytest.raises(UsageError, match="ell"):
        parse_config(["scaling", "--algo", "mala", "--dims", "4,8,16,32",
                      "--ell", "1.2", "--ell-rule", "calibrated", "--seed", "1"])


def test_scaling_without_any_ell_exits_2(tmp_path):
    # a minimal invocation must parse (ell is optional at parse time); the
    # missing-scale error is the runner's, reported as a usage exit
    cfg = parse_config(["scaling", "--algo", "rwm", "--dims", "8,16,32", "--seed", "7"])
    assert cfg.ell is None and cfg.ell_rule is None
    assert cfg.target == "std_normal"
    out = tmp_path / "out"
    assert main(["scaling", "--algo", "rwm", "--dims", "4,8,16,32",
                 "--seed", "7", "--out-dir", str(out)]) == 2


# ---------------------------------------------------------------- sweep

def test_sweep_csv_and_best(tmp_path):
    cfg_file = write_config(tmp_path, "replicas=32\niters=48\n")
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    argv = ["sweep", "--algo", "rwm", "--target", "std_normal", "--dim", "10",
            "--ells", "0.4,0.7,1.1,1.6,2.2,3.0,4.0,5.2", "--seed", "23",
            "--config", cfg_file]
    assert main(argv + ["--out-dir", str(out1)]) == 0
    assert main(argv + ["--out-dir", str(out2)]) == 0
    lines = (out1 / "sweep.csv").read_text().splitlines()
    assert lines[0] == "ell,acceptance,esjd,proxy"
    assert len(lines) == 9
    accs = [float(r.split(",")[1]) for r in lines[1:]]
    assert accs[0] > accs[-1]  # larger steps reject more
    m = read_manifest(out1)
    assert m["acceptance"]["best_ell"] in [float(r.split(",")[0]) for r in lines[1:]]
    assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()


def test_sweep_too_few_ells_exits_2(tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", "--algo", "rwm", "--target", "std_normal", "--dim", "10",
                 "--ells", "1.0,2.0", "--seed", "23", "--out-dir", str(out)]) == 2


# ---------------------------------------------------------------- limit-check

def test_limit_check_csv(tmp_path):
    cfg_file = write_config(tmp_path, "starts=3\nreplicas=64\nreference=512\niters=32\npaths=64\n")
    out = tmp_path / "out"
    assert main(["limit-check", "--target", "std_normal", "--dims", "4,8",
                 "--ell", "2.38", "--t", "0.5", "--seed", "29",
                 "--config", cfg_file, "--out-dir", str(out)]) == 0
    lines = (out / "limit_check.csv").read_text().splitlines()
    assert lines[0] == "d,kr,band"
    assert [int(r.split(",")[0]) for r in lines[1:]] == [4, 8]
    for r in lines[1:]:
        _, kr, band = r.split(",")
        assert 0.0 <= float(kr) <= 2.0 and float(band) >= 0.0
    assert "decreasing_beyond_bands" in read_manifest(out)["acceptance"]


def test_limit_check_mala_exits_2(tmp_path):
    out = tmp_path / "out"
    assert main(["limit-check", "--algo", "mala", "--target", "std_normal",
                 "--dims", "4,8", "--ell", "1.4", "--seed", "29",
                 "--out-dir", str(out)]) == 2
