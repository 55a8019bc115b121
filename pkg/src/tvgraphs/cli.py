"""Pipeline driver: generate / fit / detect / pna / eval / roc-sweep.

Every subcommand reads and writes the bundle formats from
:mod:`tvgraphs.storage`; given the same config and seed the outputs are
byte-identical.  Options may come from a JSON config file (``--config``),
with explicit command-line flags taking precedence.

Exit codes: 0 success, 1 validation error, 2 solver nonconvergence, 3 IO.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import changepoint as cpmod
from . import metrics as metmod
from . import pna as pnamod
from . import storage
from . import synth as synthmod
from .errors import (
    ConfigurationError,
    DependencyError,
    IntegrityError,
    MissingMetadataError,
    NonconvergenceError,
    ParameterError,
    ParseError,
    ShapeError,
    TvgraphsError,
)
from .glm import Mode, RegressionSetting, get_link
from .kernels import Side, make_kernel
from .tvgraph import PenaltySpec, fit_tv_graphs

EXIT_VALIDATION = 1
EXIT_NONCONVERGENCE = 2
EXIT_IO = 3

_VALIDATION_ERRORS = (ParameterError, ConfigurationError, ShapeError)
_IO_ERRORS = (
    ParseError,
    IntegrityError,
    MissingMetadataError,
    DependencyError,
    OSError,
)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NonconvergenceError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NONCONVERGENCE)
        except _VALIDATION_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except _IO_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except TvgraphsError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)

    return wrapper


def _apply_config(ctx: click.Context, config_path):
    """Merge a JSON config file under explicitly-given flags."""
    if config_path is None:
        return
    try:
        values = json.loads(Path(config_path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid config file {config_path}: {exc}") from exc
    if not isinstance(values, dict):
        raise ParameterError("config file must contain a JSON object")
    known = {p.name for p in ctx.command.params}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in values.items():
        src = ctx.get_parameter_source(key)
        if src == click.core.ParameterSource.COMMANDLINE:
            continue
        ctx.params[key] = value
    return values


def _default_workers() -> int:
    return int(os.environ.get("TVGRAPHS_WORKERS", "1"))


_config_option = click.option(
    "--config", type=click.Path(exists=False), default=None,
    help="JSON file of option values (flags take precedence).",
)


def _solver_options(fn):
    for opt in reversed([
        click.option("--lam", type=float, default=0.1, show_default=True,
                     help="group-sparsity weight"),
        click.option("--lam-star", type=float, default=0.0, show_default=True,
                     help="latent low-rank weight (0 disables)"),
        click.option("--eta", type=float, default=10.0, show_default=True,
                     help="kernel bandwidth"),
        click.option("--mode", type=click.Choice(["ar", "undirected"]),
                     default="ar", show_default=True),
        click.option("--lag", type=int, default=2, show_default=True,
                     help="AR lag order"),
        click.option("--link", "link_name", default="identity",
                     show_default=True),
        click.option("--s0", type=float, default=None,
                     help="initial step size (default: per-point estimate)"),
        click.option("--t-max", type=int, default=2000, show_default=True),
        click.option("--tol", type=float, default=1e-5, show_default=True),
        click.option("--workers", type=int, default=None,
                     help="worker count (default: TVGRAPHS_WORKERS or 1)"),
    ]):
        fn = opt(fn)
    return fn


def _build_setting(mode: str, lag: int, n: int) -> RegressionSetting:
    if mode == "ar":
        return RegressionSetting(mode=Mode.DIRECTED_AR, N=n, M=lag)
    return RegressionSetting(mode=Mode.UNDIRECTED, N=n, M=1)


def _build_penalty(mode: str, lam: float, lam_star: float) -> PenaltySpec:
    kind = "granger_groups" if mode == "ar" else "symmetric_pairs"
    return PenaltySpec(kind=kind, lam=lam, lam_star=lam_star)


def _load_panel(data: str):
    """Accept either a panel CSV or a ground-truth bundle directory."""
    path = Path(data)
    if path.is_dir():
        panel_path = path / "panel.csv"
        if not panel_path.exists():
            raise DependencyError(f"no panel.csv in bundle {path}")
        return storage.read_panel(panel_path)
    if not path.exists():
        raise DependencyError(f"panel file not found: {path}")
    return storage.read_panel(path)


@click.group()
def main():
    """Time-varying graph estimation, changepoint detection, and principal
    network analysis."""


@main.command()
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", type=int, default=25, show_default=True)
@click.option("--k", type=int, default=250, show_default=True)
@click.option("--r", type=int, default=2, show_default=True)
@click.option("--s", type=int, default=1, show_default=True)
@click.option("--lag", type=int, default=2, show_default=True)
@click.option("--edge-prob", type=float, default=0.025, show_default=True)
@click.option("--noise-std", type=float, default=0.5, show_default=True)
@click.option("--period", type=float, default=250.0, show_default=True)
@click.option("--stabilize/--no-stabilize", default=True, show_default=True)
@_config_option
@click.pass_context
@_handle_errors
def generate(ctx, out, seed, n, k, r, s, lag, edge_prob, noise_std, period,
             stabilize, config):
    """Write a synthetic ground-truth bundle (panel + true networks)."""
    _apply_config(ctx, config)
    p = ctx.params
    cfg = synthmod.SynthConfig(
        N=p["n"], R=p["r"], S=p["s"], M=p["lag"], K=p["k"],
        edge_prob=p["edge_prob"], seed=p["seed"], noise_std=p["noise_std"],
        period=p["period"], stabilize=p["stabilize"],
    )
    gt = synthmod.generate(cfg)
    storage.write_ground_truth(Path(p["out"]), gt)
    click.echo(f"wrote ground truth bundle to {p['out']}")


@main.command()
@click.option("--data", required=True, type=click.Path(),
              help="panel CSV or ground-truth bundle directory")
@click.option("--out", required=True, type=click.Path())
@click.option("--side", type=click.Choice(["center", "left", "right"]),
              default="center", show_default=True)
@_solver_options
@_config_option
@click.pass_context
@_handle_errors
def fit(ctx, data, out, side, lam, lam_star, eta, mode, lag, link_name, s0,
        t_max, tol, workers, config):
    """Fit the time-varying graph sequence under one kernel side."""
    _apply_config(ctx, config)
    p = ctx.params
    panel = _load_panel(p["data"])
    setting = _build_setting(p["mode"], p["lag"], panel.N)
    penalty = _build_penalty(p["mode"], p["lam"], p["lam_star"])
    kernel = make_kernel(panel.K, p["eta"], side=Side(p["side"]))
    seq = fit_tv_graphs(
        panel, setting, penalty, kernel,
        link=get_link(p["link_name"]), s0=p["s0"], t_max=p["t_max"],
        tol=p["tol"], workers=p["workers"] or _default_workers(),
    )
    storage.write_graph_sequence(Path(p["out"]), seq, config=_echo(p))
    click.echo(f"wrote graph sequence to {p['out']}")


@main.command()
@click.option("--data", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--keep-sides", is_flag=True, default=False,
              help="also write the left/center/right sequences")
@click.option("--boundary-smoothing/--no-boundary-smoothing", default=True,
              show_default=True)
@_solver_options
@_config_option
@click.pass_context
@_handle_errors
def detect(ctx, data, out, gamma, keep_sides, boundary_smoothing, lam,
           lam_star, eta, mode, lag, link_name, s0, t_max, tol, workers,
           config):
    """Run the full changepoint pipeline and write sequence + report."""
    _apply_config(ctx, config)
    p = ctx.params
    panel = _load_panel(p["data"])
    setting = _build_setting(p["mode"], p["lag"], panel.N)
    penalty = _build_penalty(p["mode"], p["lam"], p["lam_star"])
    result = cpmod.run_changepoint_pipeline(
        panel, setting, penalty,
        cpmod.KernelConfig(bandwidth=p["eta"]),
        gamma=p["gamma"], link=get_link(p["link_name"]), s0=p["s0"],
        t_max=p["t_max"], tol=p["tol"],
        workers=p["workers"] or _default_workers(),
        boundary_smoothing=p["boundary_smoothing"],
    )
    out_dir = Path(p["out"])
    storage.write_graph_sequence(out_dir, result.sequence, config=_echo(p))
    storage.write_changepoint_report(out_dir, result.report)
    if p["keep_sides"]:
        for side, est in result.sides.estimates.items():
            storage.write_graph_sequence(
                out_dir / f"side_{side.value}", est, config=_echo(p)
            )
    n = len(result.report.changepoints)
    click.echo(
        f"wrote sequence + report to {p['out']} "
        f"({n} changepoint{'s' if n != 1 else ''}: "
        f"{result.report.changepoints})"
    )


@main.command()
@click.option("--graphs", required=True, type=click.Path(),
              help="graph-sequence bundle from fit/detect")
@click.option("--out", required=True, type=click.Path())
@click.option("--rank", type=int, required=True)
@click.option("--lam1", type=float, default=0.0, show_default=True)
@click.option("--lam-star", type=float, default=0.0, show_default=True)
@click.option("--t-max", type=int, default=5000, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--init", type=click.Choice(["svd", "random"]), default="svd",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_config_option
@click.pass_context
@_handle_errors
def pna(ctx, graphs, out, rank, lam1, lam_star, t_max, tol, init, seed,
        config):
    """Factorize a fitted graph sequence into basis networks + weights."""
    _apply_config(ctx, config)
    p = ctx.params
    seq = storage.read_graph_sequence(Path(p["graphs"]))
    Ahat = seq.Acal[seq.valid_start :]
    fact = pnamod.ipalm_factorize(
        Ahat, seq.setting, p["rank"], lam_star=p["lam_star"],
        lam_1=p["lam1"],
        config=pnamod.IpalmConfig(
            t_max=p["t_max"], tol=p["tol"], init=p["init"], seed=p["seed"]
        ),
    )
    out_dir = Path(p["out"])
    storage.write_factorization(out_dir, fact, seed=p["seed"])
    scree = pnamod.scree_profile(Ahat)
    storage.write_metrics_report(
        out_dir / "scree.json",
        {"singular_values": [float(v) for v in scree[: min(20, len(scree))]]},
    )
    click.echo(f"wrote factorization (R={p['rank']}) to {p['out']}")


@main.command("eval")
@click.option("--est", required=True, type=click.Path(),
              help="detect output bundle (sequence + changepoints)")
@click.option("--truth", required=True, type=click.Path(),
              help="ground-truth bundle from generate")
@click.option("--factors", type=click.Path(), default=None,
              help="pna output bundle (optional)")
@click.option("--out", required=True, type=click.Path())
@click.option("--window", type=int, default=10, show_default=True,
              help="changepoint matching window")
@_config_option
@click.pass_context
@_handle_errors
def eval_cmd(ctx, est, truth, factors, out, window, config):
    """Score an estimate bundle against ground truth."""
    _apply_config(ctx, config)
    p = ctx.params
    gt = storage.read_ground_truth(Path(p["truth"]))
    seq = storage.read_graph_sequence(Path(p["est"]))
    detected = storage.read_changepoints(Path(p["est"]))
    payload = evaluate_bundle(
        seq, detected, gt,
        factors=(
            storage.read_factorization(Path(p["factors"]))
            if p["factors"] else None
        ),
        window=p["window"],
    )
    storage.write_metrics_report(Path(p["out"]), payload)
    click.echo(f"wrote metrics report to {p['out']}")


def evaluate_bundle(seq, detected, gt, factors=None, window=10):
    """Assemble the metric report used by the eval subcommand."""
    true_Acal = gt.stacked()
    traj = metmod.trajectory_error(seq, true_Acal)
    misses, fas, offsets = metmod.changepoint_error(
        detected, gt.changepoints, window
    )
    payload = {
        "trajectory_error": traj.aggregate,
        "changepoints": {
            "detected": list(detected),
            "truth": list(gt.changepoints),
            "misses": misses,
            "false_alarms": fas,
            "offsets": offsets,
            "window": window,
        },
    }
    if factors is not None:
        setting = gt.config.setting
        ref = pnamod.Factorization(
            C=gt.weights[seq.valid_start :],
            Bcal=gt.stacked_networks(),
            setting=setting,
        )
        perm, signs, scales = pnamod.align_factors(factors, ref)
        aligned = pnamod.apply_alignment(factors, perm, signs, scales)
        roc_summaries = []
        for r in range(ref.R):
            points = metmod.edge_roc(
                aligned.network(r), ref.network(r), setting
            )
            roc_summaries.append({
                "network": r,
                "points": [
                    {"threshold": q.threshold, "p_fa": q.p_fa, "p_d": q.p_d}
                    for q in points
                ],
            })
        payload["eigennetworks"] = {
            "permutation": perm,
            "signs": signs,
            "scales": scales,
            "roc": roc_summaries,
        }
    return payload


@main.command("roc-sweep")
@click.option("--data", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--gammas", default="0,0.5,1,2,inf", show_default=True,
              help="comma-separated gamma values ('inf' allowed)")
@click.option("--truth", type=click.Path(), default=None,
              help="ground-truth bundle for miss/false-alarm counts")
@click.option("--window", type=int, default=10, show_default=True)
@_solver_options
@_config_option
@click.pass_context
@_handle_errors
def roc_sweep(ctx, data, out, gammas, truth, window, lam, lam_star, eta,
              mode, lag, link_name, s0, t_max, tol, workers, config):
    """Sweep gamma over one set of side fits and tabulate detections."""
    _apply_config(ctx, config)
    p = ctx.params
    panel = _load_panel(p["data"])
    setting = _build_setting(p["mode"], p["lag"], panel.N)
    penalty = _build_penalty(p["mode"], p["lam"], p["lam_star"])
    gamma_values = [
        np.inf if g.strip() in ("inf", "Inf") else float(g)
        for g in str(p["gammas"]).split(",")
    ]
    if any(g < 0 for g in gamma_values):
        raise ParameterError("gamma values must be nonnegative")
    # one pipeline run at gamma=1 provides the residuals for every gamma
    result = cpmod.run_changepoint_pipeline(
        panel, setting, penalty, cpmod.KernelConfig(bandwidth=p["eta"]),
        gamma=1.0, link=get_link(p["link_name"]), s0=p["s0"],
        t_max=p["t_max"], tol=p["tol"],
        workers=p["workers"] or _default_workers(),
        boundary_smoothing=False,
    )
    gt = storage.read_ground_truth(Path(p["truth"])) if p["truth"] else None
    rows = []
    for g in gamma_values:
        I = cpmod.select_estimators(
            result.sides.residuals, g,
            forced_central=result.report.forced_central,
            valid_start=setting.first_valid,
        )
        cps = cpmod.detect(I)
        row = {
            "gamma": "inf" if np.isinf(g) else g,
            "n_central": int(np.count_nonzero(I == "c")),
            "n_left": int(np.count_nonzero(I == "l")),
            "n_right": int(np.count_nonzero(I == "r")),
            "n_changepoints": len(cps),
            "changepoints": cps,
        }
        if gt is not None:
            misses, fas, offsets = metmod.changepoint_error(
                cps, gt.changepoints, p["window"]
            )
            row.update(misses=misses, false_alarms=fas, offsets=offsets)
        rows.append(row)
    storage.write_metrics_report(Path(p["out"]), {"sweep": rows})
    click.echo(f"wrote gamma sweep to {p['out']}")


def _echo(params: dict) -> dict:
    """JSON-safe copy of the parameter dict for manifest config echoes."""
    out = {}
    for key, value in params.items():
        if key == "config":
            continue
        if isinstance(value, (str, int, float, bool)) or value is None:
            out[key] = value
        else:
            out[key] = str(value)
    return out


if __name__ == "__main__":
    main()
