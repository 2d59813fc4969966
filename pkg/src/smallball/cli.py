"""Command line: batch experiment runner plus one-off subcommands.

    smallball run      --config cfg.json [--seed S] [--workers N] [--out DIR]
    smallball bound    det --n 5 --b 0.5 --t 0.05
    smallball estimate --n 2 --diagonal uniform:0,1 --functional det_root_n ...
    smallball verify   ... --curve det
    smallball density  --x uniform:0,1 --y uniform:0,1 --z 0.5
    smallball schedule --n 2 --tau 0.01 [--b 1] [--eps 0.5,0.01]
    smallball plot     --csv report.csv --out report.png

Exit codes: 0 on success with no bound violations, 2 if any verification row
is a violation, 1 on configuration or runtime errors (including an unknown
subcommand).  Inline law flags use ``kind:p1,p2[,p3]``, e.g. ``uniform:0,1``,
``gaussian:0,1``, ``triangular:0,0.5,1``.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bounds
from .config import ConfigError, load_config, make_t_grid
from .density_calculus import product_density
from .distributions import Distribution, from_record
from .ensembles import (
    Constant,
    EnsembleSpec,
    IID,
    RankOne,
    SharedScalar,
    SymmetricIID,
    Zero,
)
from .mc_engine import (
    Experiment,
    estimates_to_csv,
    report_to_csv,
    run_experiment,
    verify_bound,
)

__all__ = ["main"]

_USAGE = """usage: smallball COMMAND [options]

commands:
  run       execute a JSON config of experiments, write CSV reports
  bound     print a bound curve at one threshold or over a grid
  estimate  Monte-Carlo estimate of one experiment (no bound)
  verify    estimate plus domination check against a bound curve
  density   product density of two laws (single z or CSV over a grid)
  schedule  evaluate epsilon schedules for the recursion bound
  plot      render a report CSV to a static image

run 'smallball COMMAND --help' for command options
"""


def _fmt(x) -> str:
    return f"{x:.12g}"


_LAW_FLAGS = {"uniform": ("a", "c"), "gaussian": ("mu", "sigma"), "triangular": ("a", "m", "c")}


def parse_law_flag(text: str) -> Distribution:
    """Parse ``kind:p1,p2[,p3]`` into a distribution."""
    kind, _, rest = text.partition(":")
    if kind not in _LAW_FLAGS:
        raise ValueError(
            f"unknown law {kind!r} in {text!r} (flag syntax supports {sorted(_LAW_FLAGS)}; "
            "piecewise_constant is available via config files)"
        )
    names = _LAW_FLAGS[kind]
    parts = rest.split(",") if rest else []
    if len(parts) != len(names):
        raise ValueError(f"law {kind!r} needs {len(names)} parameters ({','.join(names)}), got {text!r}")
    try:
        params = {name: float(p) for name, p in zip(names, parts)}
    except ValueError as exc:
        raise ValueError(f"bad law parameters in {text!r}: {exc}") from exc
    return from_record({"kind": kind, **params})


def parse_offdiag_flag(text: str):
    """Parse ``zero | constant:c | iid:LAW | symmetric_iid:LAW | rank_one:LAW | shared_scalar:LAW``."""
    name, _, rest = text.partition(":")
    if name == "zero":
        return Zero()
    if name == "constant":
        try:
            return Constant(value=float(rest))
        except ValueError as exc:
            raise ValueError(f"constant policy needs a number, got {text!r}") from exc
    law_policies = {
        "iid": IID,
        "symmetric_iid": SymmetricIID,
        "rank_one": RankOne,
        "shared_scalar": SharedScalar,
    }
    if name in law_policies:
        if not rest:
            raise ValueError(f"policy {name!r} needs a law, e.g. {name}:gaussian:0,1")
        return law_policies[name](law=parse_law_flag(rest))
    raise ValueError(
        f"unknown off-diagonal policy {name!r} "
        "(zero, constant, iid, symmetric_iid, rank_one, shared_scalar)"
    )


def _resolve_workers(flag_value, config_value=None) -> int:
    if flag_value is not None:
        return max(1, flag_value)
    if config_value is not None:
        return max(1, config_value)
    env = os.environ.get("SMALLBALL_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValueError(f"SMALLBALL_WORKERS must be an integer, got {env!r}") from exc
    return 1


# ---------------------------------------------------------------------------
# run


def _cmd_run(args) -> int:
    parser = argparse.ArgumentParser(prog="smallball run")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override every experiment seed")
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory (default from config or '.')")
    opts = parser.parse_args(args)

    run_config = load_config(opts.config)
    workers = _resolve_workers(opts.workers, run_config.workers)
    out_dir = Path(opts.out or run_config.output_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)

    summary_rows = []
    total_violations = 0
    try:
        for exp_config in run_config.experiments:
            experiment = exp_config.experiment
            if opts.seed is not None:
                experiment = replace(experiment, master_seed=opts.seed)
            if not exp_config.curves:
                estimates = run_experiment(experiment, workers=workers)
                file_path = out_dir / f"{exp_config.name}.csv"
                file_path.write_text(estimates_to_csv(experiment, estimates))
                summary_rows.append((exp_config.name, "", 0, 0.0, file_path.name))
                continue
            for curve_name in exp_config.curves:
                curve = bounds.make_curve(
                    curve_name,
                    n=experiment.ensemble.n,
                    b=experiment.ensemble.b_max,
                    expected_norm=exp_config.expected_norm
                    if curve_name in ("sn_closed", "sn_raw")
                    else None,
                    beta=exp_config.beta,
                )
                report = verify_bound(
                    experiment,
                    curve,
                    workers=workers,
                    expected_norm_samples=exp_config.expected_norm_samples,
                )
                total_violations += report.violations
                file_path = out_dir / f"{exp_config.name}__{curve_name}.csv"
                file_path.write_text(report_to_csv(report))
                summary_rows.append(
                    (exp_config.name, curve_name, report.violations, report.max_ratio, file_path.name)
                )
    finally:
        # partial results stay on disk; the summary reflects whatever finished
        lines = ["experiment,curve,violations,max_ratio,file"]
        for name, curve_name, violations, max_ratio, file_name in summary_rows:
            lines.append(f"{name},{curve_name},{violations},{max_ratio:.17g},{file_name}")
        (out_dir / "summary.csv").write_text("\n".join(lines) + "\n")

    print(f"{len(summary_rows)} report(s) written to {out_dir} ({total_violations} violation(s))")
    return 2 if total_violations else 0


# ---------------------------------------------------------------------------
# bound


def _cmd_bound(args) -> int:
    parser = argparse.ArgumentParser(prog="smallball bound")
    parser.add_argument("curve", choices=bounds.CURVE_NAMES)
    parser.add_argument("--n", type=int, default=None)
    parser.add_argument("--b", type=float, default=None)
    parser.add_argument("--expected-norm", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--t", type=float, default=None, help="single threshold")
    parser.add_argument("--t-min", type=float, default=None)
    parser.add_argument("--t-max", type=float, default=None)
    parser.add_argument("--points", type=int, default=16)
    parser.add_argument("--linear", action="store_true", help="linear grid instead of log")
    opts = parser.parse_args(args)

    curve = bounds.make_curve(
        opts.curve, n=opts.n, b=opts.b, expected_norm=opts.expected_norm, beta=opts.beta
    )
    if opts.t is not None:
        print(_fmt(curve.evaluator(opts.t)))
        return 0
    if opts.t_min is None or opts.t_max is None:
        raise ValueError("give either --t or both --t-min and --t-max")
    grid = make_t_grid(
        {"min": opts.t_min, "max": opts.t_max, "points": opts.points, "log": not opts.linear}
    )
    print("t,bound,bound_clamped")
    for t in grid:
        value = curve.evaluator(t)
        print(f"{t:.17g},{value:.17g},{curve.clamped(t):.17g}")
    return 0


# ---------------------------------------------------------------------------
# estimate / verify


def _experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=int, required=True)
    parser.add_argument("--diagonal", required=True, help="law flag, e.g. uniform:0,1")
    parser.add_argument("--offdiag", default="zero", help="policy flag, e.g. constant:1")
    parser.add_argument("--shift-path", default=None, help="CSV file with the deterministic shift")
    parser.add_argument("--functional", default="det_root_n")
    parser.add_argument("--t-min", type=float, default=1e-3)
    parser.add_argument("--t-max", type=float, default=1e-1)
    parser.add_argument("--points", type=int, default=16)
    parser.add_argument("--linear", action="store_true")
    parser.add_argument("--samples", type=int, default=10000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--confidence", type=float, default=0.99)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default=None, help="CSV file (default: stdout)")


def _experiment_from_flags(opts) -> Experiment:
    shift = None
    if opts.shift_path is not None:
        shift = np.loadtxt(opts.shift_path, delimiter=",", ndmin=2)
    ensemble = EnsembleSpec(
        n=opts.n,
        diagonal_laws=parse_law_flag(opts.diagonal),
        offdiag=parse_offdiag_flag(opts.offdiag),
        shift=shift,
    )
    t_grid = make_t_grid(
        {"min": opts.t_min, "max": opts.t_max, "points": opts.points, "log": not opts.linear}
    )
    return Experiment(
        ensemble=ensemble,
        functional=opts.functional,
        t_grid=t_grid,
        samples=opts.samples,
        master_seed=opts.seed,
        confidence=opts.confidence,
    )


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _cmd_estimate(args) -> int:
    parser = argparse.ArgumentParser(prog="smallball estimate")
    _experiment_flags(parser)
    opts = parser.parse_args(args)
    experiment = _experiment_from_flags(opts)
    estimates = run_experiment(experiment, workers=_resolve_workers(opts.workers))
    _emit(estimates_to_csv(experiment, estimates), opts.out)
    return 0


def _cmd_verify(args) -> int:
    parser = argparse.ArgumentParser(prog="smallball verify")
    _experiment_flags(parser)
    parser.add_argument("--curve", required=True, choices=bounds.VERIFIABLE_CURVES)
    parser.add_argument("--expected-norm", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--expected-norm-samples", type=int, default=10000)
    opts = parser.parse_args(args)
    experiment = _experiment_from_flags(opts)
    curve = bounds.make_curve(
        opts.curve,
        n=experiment.ensemble.n,
        b=experiment.ensemble.b_max,
        expected_norm=opts.expected_norm if opts.curve in ("sn_closed", "sn_raw") else None,
        beta=opts.beta,
    )
    report = verify_bound(
        experiment,
        curve,
        workers=_resolve_workers(opts.workers),
        expected_norm_samples=opts.expected_norm_samples,
    )
    _emit(report_to_csv(report), opts.out)
    print(
        f"{report.violations} violation(s), max p_hat/bound = {report.max_ratio:.6g}",
        file=sys.stderr,
    )
    return 2 if report.violations else 0


# ---------------------------------------------------------------------------
# density


def _cmd_density(args) -> int:
    parser = argparse.ArgumentParser(prog="smallball density")
    parser.add_argument("--x", required=True, help="law flag for X")
    parser.add_argument("--y", required=True, help="law flag for Y")
    parser.add_argument("--z", type=float, default=None, help="single evaluation point")
    parser.add_argument("--z-min", type=float, default=1e-4)
    parser.add_argument("--z-max", type=float, default=10.0)
    parser.add_argument("--points", type=int, default=64)
    parser.add_argument("--out", default=None, help="CSV file (default: stdout)")
    opts = parser.parse_args(args)
    law_x = parse_law_flag(opts.x)
    law_y = parse_law_flag(opts.y)
    if opts.z is not None:
        print(_fmt(product_density(law_x, law_y, opts.z)))
        return 0
    if not 0 < opts.z_min < opts.z_max:
        raise ValueError("need 0 < --z-min < --z-max")
    envelope_b = max(law_x.density_sup, law_y.density_sup)
    grid = np.logspace(np.log10(opts.z_min), np.log10(opts.z_max), opts.points)
    lines = ["z,density,envelope"]
    for z in grid:
        density = product_density(law_x, law_y, float(z))
        envelope = bounds.product_density_envelope(envelope_b, float(z))
        lines.append(f"{z:.17g},{density:.17g},{envelope:.17g}")
    _emit("\n".join(lines) + "\n", opts.out)
    return 0


# ---------------------------------------------------------------------------
# schedule


def _cmd_schedule(args) -> int:
    parser = argparse.ArgumentParser(prog="smallball schedule")
    parser.add_argument("--n", type=int, required=True)
    parser.add_argument("--tau", type=float, required=True, help="final epsilon")
    parser.add_argument("--b", type=float, default=1.0)
    parser.add_argument("--eps", default=None, help="comma-separated custom schedule to compare")
    opts = parser.parse_args(args)
    geometric = bounds.geometric_schedule(opts.n, opts.tau)
    geometric_value = bounds.schedule_bound(opts.b, geometric)
    print(f"schedule: [{', '.join(_fmt(e) for e in geometric)}]")
    print(f"bound: {_fmt(geometric_value)}")
    if opts.eps is not None:
        custom = [float(p) for p in opts.eps.split(",")]
        custom_value = bounds.schedule_bound(opts.b, custom)
        print(f"custom bound: {_fmt(custom_value)}")
        print(f"custom/geometric: {_fmt(custom_value / geometric_value)}")
    return 0


# ---------------------------------------------------------------------------
# plot


def _read_csv(path):
    metadata = {}
    rows = []
    header = None
    with open(path, newline="") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                metadata[key] = value
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    if header is None:
        raise ValueError(f"no CSV header found in {path}")
    return metadata, header, rows


def _cmd_plot(args) -> int:
    parser = argparse.ArgumentParser(prog="smallball plot")
    parser.add_argument("--csv", required=True, help="report CSV produced by run/verify/density")
    parser.add_argument("--out", required=True, help="image file (png/pdf/svg)")
    parser.add_argument("--title", default=None)
    opts = parser.parse_args(args)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metadata, header, rows = _read_csv(opts.csv)
    fig, ax = plt.subplots(figsize=(7, 5))
    if header[:2] == ["z", "density"]:
        z = np.array([float(r[0]) for r in rows])
        density = np.array([float(r[1]) for r in rows])
        envelope = np.array([float(r[2]) for r in rows])
        ax.loglog(z, envelope, "-", color="tab:red", label="envelope")
        positive = density > 0
        ax.loglog(z[positive], density[positive], "o-", ms=3, color="tab:blue", label="density")
        ax.set_xlabel("z")
        ax.set_ylabel("density")
    elif header[0] == "t" and "bound_clamped" in header:
        idx = {name: k for k, name in enumerate(header)}
        t = np.array([float(r[idx["t"]]) for r in rows])
        p_hat = np.array([float(r[idx["p_hat"]]) for r in rows])
        ci_low = np.array([float(r[idx["ci_low"]]) for r in rows])
        ci_high = np.array([float(r[idx["ci_high"]]) for r in rows])
        bound = np.array([float(r[idx["bound_clamped"]]) for r in rows])
        violated = [r[idx["verdict"]] == "VIOLATION" for r in rows]
        ax.loglog(t, bound, "-", color="tab:red", label=f"bound ({metadata.get('curve', '?')})")
        shown = p_hat > 0
        yerr = np.vstack([(p_hat - ci_low)[shown], (ci_high - p_hat)[shown]])
        ax.errorbar(
            t[shown],
            p_hat[shown],
            yerr=yerr,
            fmt="o",
            ms=4,
            color="tab:blue",
            capsize=2,
            label="empirical (CI)",
        )
        if any(violated):
            bad = np.array(violated)
            ax.plot(t[bad], p_hat[bad], "x", ms=10, color="black", label="violation")
        ax.set_xlabel("t")
        ax.set_ylabel("probability")
    else:
        raise ValueError(f"unrecognised CSV schema: {header}")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    ax.set_title(opts.title or Path(opts.csv).stem)
    fig.tight_layout()
    fig.savefig(opts.out, dpi=150)
    plt.close(fig)
    print(f"wrote {opts.out}")
    return 0


# ---------------------------------------------------------------------------

_COMMANDS = {
    "run": _cmd_run,
    "bound": _cmd_bound,
    "estimate": _cmd_estimate,
    "verify": _cmd_verify,
    "density": _cmd_density,
    "schedule": _cmd_schedule,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        sys.stderr.write(_USAGE)
        return 0 if argv else 1
    command = argv[0]
    handler = _COMMANDS.get(command)
    if handler is None:
        sys.stderr.write(f"unknown command {command!r}\n\n{_USAGE}")
        return 1
    try:
        return handler(argv[1:])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
