import json
import math

import numpy as np
import pytest

from smallball.cli import main, parse_law_flag, parse_offdiag_flag
from smallball.distributions import Gaussian, Triangular, Uniform
from smallball.ensembles import Constant, SharedScalar, Zero


def run_cli(*args) -> int:
    return main(list(args))


# ---------------------------------------------------------------------------
# flag parsing


def test_parse_law_flags():
    assert parse_law_flag("uniform:0,1") == Uniform(0.0, 1.0)
    assert parse_law_flag("gaussian:0,1") == Gaussian(0.0, 1.0)
    assert parse_law_flag("triangular:0,0.5,1") == Triangular(0.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        parse_law_flag("cauchy:0,1")
    with pytest.raises(ValueError):
        parse_law_flag("uniform:0")


def test_parse_offdiag_flags():
    assert parse_offdiag_flag("zero") == Zero()
    assert parse_offdiag_flag("constant:5") == Constant(5.0)
    assert parse_offdiag_flag("shared_scalar:uniform:-5,5") == SharedScalar(Uniform(-5.0, 5.0))
    with pytest.raises(ValueError):
        parse_offdiag_flag("sparse")
    with pytest.raises(ValueError):
        parse_offdiag_flag("iid")


# ---------------------------------------------------------------------------
# subcommands


def test_unknown_subcommand_exits_one(capsys):
    assert run_cli("frobnicate") == 1
    assert "usage" in capsys.readouterr().err


def test_no_arguments_shows_usage(capsys):
    assert run_cli() == 1
    assert "usage" in capsys.readouterr().err


def test_bound_single_value(capsys):
    assert run_cli("bound", "det", "--n", "5", "--b", "0.5", "--t", "0.05") == 0
    assert float(capsys.readouterr().out.strip()) == pytest.approx(0.25, rel=1e-12)


def test_bound_grid(capsys):
    assert run_cli("bound", "norm", "--n", "2", "--b", "1", "--t-min", "1e-3", "--t-max", "1e-1", "--points", "5") == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "t,bound,bound_clamped"
    assert len(lines) == 6
    t0, raw, clamped = map(float, lines[1].split(","))
    assert raw == pytest.approx(4.0 * t0, rel=1e-12)


def test_bound_missing_parameter_exits_one(capsys):
    assert run_cli("bound", "det", "--n", "5", "--t", "0.1") == 1
    assert "requires parameter" in capsys.readouterr().err


def test_schedule_prints_geometric(capsys):
    assert run_cli("schedule", "--n", "2", "--tau", "0.01") == 0
    out = capsys.readouterr().out
    assert "[0.1, 0.01]" in out
    assert "bound: 0.4" in out


def test_schedule_custom_comparison(capsys):
    assert run_cli("schedule", "--n", "2", "--tau", "0.01", "--eps", "0.5,0.01") == 0
    out = capsys.readouterr().out
    assert "custom bound: 1.04" in out


def test_density_single_point(capsys):
    assert run_cli("density", "--x", "uniform:0,1", "--y", "uniform:0,1", "--z", "0.5") == 0
    value = float(capsys.readouterr().out.strip())
    assert value == pytest.approx(-math.log(0.5), abs=1e-6)


def test_density_grid_csv(tmp_path, capsys):
    out_file = tmp_path / "density.csv"
    code = run_cli(
        "density", "--x", "uniform:0,1", "--y", "uniform:0,1",
        "--z-min", "0.01", "--z-max", "2.0", "--points", "8", "--out", str(out_file),
    )
    assert code == 0
    lines = out_file.read_text().strip().split("\n")
    assert lines[0] == "z,density,envelope"
    for line in lines[1:]:
        z, density, envelope = map(float, line.split(","))
        assert density <= envelope + 1e-9


def test_estimate_writes_csv(tmp_path):
    out_file = tmp_path / "estimates.csv"
    code = run_cli(
        "estimate", "--n", "1", "--diagonal", "uniform:0,1",
        "--t-min", "0.05", "--t-max", "0.2", "--points", "3",
        "--samples", "4000", "--seed", "7", "--out", str(out_file),
    )
    assert code == 0
    lines = [l for l in out_file.read_text().strip().split("\n") if not l.startswith("#")]
    assert lines[0] == "t,hits,n_samples,p_hat,ci_low,ci_high"
    t, hits, n, p_hat, lo, hi = lines[1].split(",")
    assert lo <= p_hat <= hi or float(lo) <= float(p_hat) <= float(hi)
    assert float(p_hat) == pytest.approx(0.05, abs=0.02)


def test_verify_pass_exit_zero(tmp_path):
    out_file = tmp_path / "verify.csv"
    code = run_cli(
        "verify", "--n", "2", "--diagonal", "uniform:0,1", "--offdiag", "constant:1",
        "--curve", "det", "--samples", "4000", "--seed", "3", "--out", str(out_file),
    )
    assert code == 0
    assert "VIOLATION" not in out_file.read_text()


def test_verify_violation_exit_two(tmp_path):
    # category error on purpose: s_min against the 2x2 determinant curve
    out_file = tmp_path / "verify.csv"
    code = run_cli(
        "verify", "--n", "2", "--diagonal", "uniform:0,1", "--functional", "s_min",
        "--curve", "det2x2", "--t-min", "0.01", "--t-max", "0.02", "--points", "2",
        "--samples", "4000", "--seed", "3", "--out", str(out_file),
    )
    assert code == 2
    assert "VIOLATION" in out_file.read_text()


# ---------------------------------------------------------------------------
# run


def _write_config(tmp_path, **overrides):
    config = {
        "seed": 11,
        "output_dir": str(tmp_path / "out"),
        "experiments": [
            {
                "name": "one-by-one",
                "ensemble": {"n": 1, "diagonal": {"kind": "uniform", "a": 0, "c": 1}},
                "functional": "det_root_n",
                "t_grid": {"min": 0.05, "max": 0.2, "points": 4},
                "samples": 3000,
                "curves": ["det"],
            }
        ],
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


def test_run_executes_config(tmp_path, capsys):
    path = _write_config(tmp_path)
    assert run_cli("run", "--config", str(path)) == 0
    out_dir = tmp_path / "out"
    report = (out_dir / "one-by-one__det.csv").read_text()
    assert "t,p_hat,ci_low,ci_high,bound,bound_clamped,verdict" in report
    assert "VIOLATION" not in report
    summary = (out_dir / "summary.csv").read_text()
    assert summary.startswith("experiment,curve,violations,max_ratio,file")
    assert ",det,0," in summary


def test_run_estimate_only_experiment(tmp_path):
    path = _write_config(tmp_path)
    config = json.loads(path.read_text())
    config["experiments"][0]["curves"] = []
    path.write_text(json.dumps(config))
    assert run_cli("run", "--config", str(path)) == 0
    assert (tmp_path / "out" / "one-by-one.csv").exists()


def test_run_unknown_curve_field_path(tmp_path, capsys):
    path = _write_config(tmp_path)
    config = json.loads(path.read_text())
    config["experiments"][0]["curves"] = ["foo"]
    path.write_text(json.dumps(config))
    assert run_cli("run", "--config", str(path)) == 1
    err = capsys.readouterr().err
    assert "experiments[0].curves[0]" in err and "foo" in err


def test_run_bad_law_field_path(tmp_path, capsys):
    path = _write_config(tmp_path)
    config = json.loads(path.read_text())
    config["experiments"][0]["ensemble"]["diagonal"] = {"kind": "lorentz"}
    path.write_text(json.dumps(config))
    assert run_cli("run", "--config", str(path)) == 1
    assert "experiments[0].ensemble.diagonal" in capsys.readouterr().err


def test_run_missing_config_exits_one(tmp_path, capsys):
    assert run_cli("run", "--config", str(tmp_path / "nope.json")) == 1
    assert "not found" in capsys.readouterr().err


def test_run_violation_exit_two(tmp_path):
    path = _write_config(tmp_path)
    config = json.loads(path.read_text())
    config["experiments"][0].update(
        {
            "ensemble": {"n": 2, "diagonal": {"kind": "uniform", "a": 0, "c": 1}},
            "functional": "s_min",
            "curves": ["det2x2"],
            "t_grid": {"min": 0.01, "max": 0.02, "points": 2},
        }
    )
    path.write_text(json.dumps(config))
    assert run_cli("run", "--config", str(path)) == 2


def test_run_seed_override_changes_outputs(tmp_path):
    path = _write_config(tmp_path)
    assert run_cli("run", "--config", str(path), "--out", str(tmp_path / "a")) == 0
    assert run_cli("run", "--config", str(path), "--out", str(tmp_path / "b")) == 0
    assert run_cli("run", "--config", str(path), "--out", str(tmp_path / "c"), "--seed", "99") == 0
    a = (tmp_path / "a" / "one-by-one__det.csv").read_text()
    b = (tmp_path / "b" / "one-by-one__det.csv").read_text()
    c = (tmp_path / "c" / "one-by-one__det.csv").read_text()
    assert a == b
    assert a != c


def test_run_byte_identical_across_worker_counts(tmp_path):
    config = {
        "seed": 5,
        "experiments": [
            {
                "name": "repro",
                "ensemble": {
                    "n": 3,
                    "diagonal": {"kind": "uniform", "a": 0, "c": 1},
                    "offdiag": {"policy": "iid", "law": {"kind": "gaussian", "mu": 0, "sigma": 1}},
                },
                "t_grid": {"min": 0.01, "max": 0.1, "points": 4},
                "samples": 3000,
                "curves": ["det"],
            }
        ],
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    outputs = []
    for workers in (1, 2, 4):
        out_dir = tmp_path / f"w{workers}"
        code = run_cli(
            "run", "--config", str(path), "--out", str(out_dir), "--workers", str(workers)
        )
        assert code == 0
        outputs.append((out_dir / "repro__det.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_run_config_with_shift_csv(tmp_path):
    shift_path = tmp_path / "shift.csv"
    np.savetxt(shift_path, np.ones((2, 2)), delimiter=",")
    config = {
        "experiments": [
            {
                "name": "shifted",
                "ensemble": {
                    "n": 2,
                    "diagonal": {"kind": "uniform", "a": 0, "c": 1},
                    "shift": {"path": "shift.csv"},
                },
                "t_grid": {"min": 0.01, "max": 0.1, "points": 3},
                "samples": 1000,
                "curves": ["det"],
            }
        ],
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    assert run_cli("run", "--config", str(path), "--out", str(tmp_path / "out")) == 0


def test_plot_verification_csv(tmp_path):
    config_path = _write_config(tmp_path)
    assert run_cli("run", "--config", str(config_path)) == 0
    csv_path = tmp_path / "out" / "one-by-one__det.csv"
    image_path = tmp_path / "plot.png"
    assert run_cli("plot", "--csv", str(csv_path), "--out", str(image_path)) == 0
    assert image_path.exists() and image_path.stat().st_size > 1000


def test_plot_density_csv(tmp_path):
    csv_path = tmp_path / "density.csv"
    run_cli(
        "density", "--x", "uniform:0,1", "--y", "uniform:0,1",
        "--z-min", "0.01", "--z-max", "2.0", "--points", "6", "--out", str(csv_path),
    )
    image_path = tmp_path / "density.png"
    assert run_cli("plot", "--csv", str(csv_path), "--out", str(image_path)) == 0
    assert image_path.exists() and image_path.stat().st_size > 1000


def test_workers_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("SMALLBALL_WORKERS", "2")
    path = _write_config(tmp_path)
    assert run_cli("run", "--config", str(path), "--out", str(tmp_path / "env_out")) == 0
    monkeypatch.setenv("SMALLBALL_WORKERS", "banana")
    assert run_cli("run", "--config", str(path), "--out", str(tmp_path / "env_bad")) == 1
