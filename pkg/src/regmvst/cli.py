"""Command-line interface: simulate, fit, bootstrap, info and bench.

Exit codes: 0 success, 1 data/domain/estimation error, 2 usage error.
Timings are in seconds.
"""

import os
import statistics
import sys
from dataclasses import asdict

import click
import numpy as np

from . import io
from .bootstrap import BootstrapConfig, bootstrap_ci
from .engine import STEP_KEYS, DelayModel, FitConfig, fit_with_restarts
from .info import (VecSkewTParams, complete_info, identified_indices, observed_info_mc,
                   rate_matrices, restrict)
from .model import EstimationError, observed_loglik
from .simgen import generate

DOMAIN_ERRORS = (EstimationError, ValueError, np.linalg.LinAlgError, ArithmeticError, OSError,
                 KeyError)


def _fit_options(fn):
    opts = [
        click.option("--engine", type=click.Choice(["ecme", "pecme", "adecme"]), default="ecme",
                     show_default=True),
        click.option("--workers", "workers_k", type=click.IntRange(min=1), default=1,
                     show_default=True, help="number of logical workers k"),
        click.option("--gamma", type=click.FloatRange(0, 1, min_open=True), default=1.0,
                     show_default=True, help="fraction of workers the asynchronous engine waits for"),
        click.option("--zeta", type=click.FloatRange(0, 1, max_open=True), default=0.05,
                     show_default=True, help="probability of a full-synchronisation iteration"),
        click.option("--epsilon", type=click.FloatRange(min=0), default=1e-7, show_default=True),
        click.option("--max-iter", type=click.IntRange(min=1), default=1000, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--init", type=click.Choice(["default", "random"]), default="default",
                     show_default=True),
        click.option("--restarts", type=click.IntRange(min=1), default=1, show_default=True,
                     help="extra random starts; the highest final log-likelihood wins"),
        click.option("--trace-loglik", is_flag=True, default=False,
                     help="evaluate the observed log-likelihood at every iterate"),
        click.option("--schedule", type=click.Choice(["threads", "virtual"]), default="threads",
                     show_default=True, help="asynchronous engine transport"),
        click.option("--delay", "delay_kind", type=click.Choice(["none", "uniform", "slow"]),
                     default="none", show_default=True, help="injected worker latency model"),
        click.option("--per-subject-ms", type=click.FloatRange(min=0), default=0.0,
                     show_default=True),
        click.option("--delay-low-ms", type=click.FloatRange(min=0), default=0.0, show_default=True),
        click.option("--delay-high-ms", type=click.FloatRange(min=0), default=0.0,
                     show_default=True),
        click.option("--slow-factor", type=click.FloatRange(min=1), default=2.0, show_default=True),
        click.option("--pacing", type=click.Choice(["floor", "additive"]), default="floor",
                     show_default=True, help="floor: the delay is a minimum task duration"),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _fit_config(kw):
    delay = DelayModel(kind=kw["delay_kind"], per_subject_ms=kw["per_subject_ms"],
                       low_ms=kw["delay_low_ms"], high_ms=kw["delay_high_ms"],
                       slow_factor=kw["slow_factor"], pacing=kw["pacing"])
    return FitConfig(engine=kw["engine"], epsilon=kw["epsilon"], max_iter=kw["max_iter"],
                     workers_k=kw["workers_k"], gamma=kw["gamma"], zeta=kw["zeta"],
                     seed=kw["seed"], init=kw["init"], trace_loglik=kw["trace_loglik"],
                     delay=delay, schedule=kw["schedule"])


def _config_echo(cfg):
    d = asdict(cfg)
    if not isinstance(cfg.init, str):
        d["init"] = "explicit"
    return d


def _run(body):
    try:
        body()
    except click.ClickException:
        raise
    except DOMAIN_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Matrix-variate skew-t regression with damped exponential correlation."""


@main.command()
@click.option("--scheme", type=click.Choice(["1", "2", "3"]), required=True)
@click.option("--n", "N", type=click.IntRange(min=1), required=True, help="number of subjects")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="dataset CSV")
@click.option("--truth-out", type=click.Path(dir_okay=False), default=None,
              help="generating parameters as JSON")
def simulate(scheme, N, seed, out, truth_out):
    """Generate a synthetic dataset."""
    def body():
        started = io.now_iso()
        data, truth = generate(int(scheme), N, seed)
        io.write_dataset_csv(out, data)
        if truth_out:
            io.dump_json(truth_out, truth.to_dict())
        io.write_manifest([out, truth_out], "simulate",
                          {"scheme": int(scheme), "N": N, "seed": seed}, seed, started)
        click.echo(f"wrote {len(data)} subjects ({data.total_rows} rows) to {out}")
    _run(body)


def _timing_rows(res):
    rows = [[r["iteration"]] + [r[k] for k in STEP_KEYS] + [r["total"]]
            for r in res.iteration_timings]
    rows.append(["TOTAL"] + [res.step_timings[k] for k in STEP_KEYS] + [res.step_timings["TT"]])
    return rows


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="FitResult JSON")
@click.option("--timings-out", type=click.Path(dir_okay=False), default=None,
              help="per-iteration timing CSV [default: <out>_timings.csv]")
@_fit_options
def fit(data_path, out, timings_out, **kw):
    """Fit the model to a dataset CSV."""
    def body():
        started = io.now_iso()
        data = io.read_dataset_csv(data_path)
        cfg = _fit_config(kw)
        res = fit_with_restarts(data, cfg, kw["restarts"])
        payload = res.to_dict()
        payload["loglik_final"] = observed_loglik(data, res.theta_hat)
        payload["parameter_names"] = type(res.theta_hat).names(data.q, data.p)
        payload["theta_hat_vector"] = res.theta_hat.flatten()
        io.dump_json(out, payload)
        tpath = timings_out or os.path.splitext(out)[0] + "_timings.csv"
        io.write_rows_csv(tpath, ["iteration"] + list(STEP_KEYS) + ["total"], _timing_rows(res))
        io.write_manifest([out, tpath], "fit", dict(_config_echo(cfg), restarts=kw["restarts"],
                                                    data=data_path), cfg.seed, started)
        state = "converged" if res.converged else "stopped at the iteration cap"
        click.echo(f"{res.engine}: {state} after {res.iterations} iterations; "
                   f"comm_rounds={res.comm_rounds}")
    _run(body)


@main.command("bootstrap")
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--b", "B", type=click.IntRange(min=2), default=100, show_default=True)
@click.option("--level", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=0.90,
              show_default=True)
@click.option("--boot-seed", type=int, default=0, show_default=True,
              help="root seed for the resampling streams")
@click.option("--cold-start", is_flag=True, default=False,
              help="start replicates from --init instead of the full-data estimate")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="interval JSON")
@click.option("--csv-out", type=click.Path(dir_okay=False), default=None,
              help="interval CSV [default: <out>.csv]")
@_fit_options
def bootstrap_cmd(data_path, B, level, boot_seed, cold_start, out, csv_out, **kw):
    """Subject-level bootstrap percentile intervals."""
    def body():
        started = io.now_iso()
        data = io.read_dataset_csv(data_path)
        cfg = BootstrapConfig(B=B, level=level, fit=_fit_config(kw), seed=boot_seed,
                              restarts=kw["restarts"], warm_start=not cold_start)
        res = bootstrap_ci(data, cfg)
        io.dump_json(out, res.to_dict())
        cpath = csv_out or os.path.splitext(out)[0] + ".csv"
        io.write_rows_csv(cpath, ["param", "point", "lo", "hi"], res.rows())
        io.write_manifest([out, cpath], "bootstrap",
                          {"B": B, "level": level, "boot_seed": boot_seed,
                           "warm_start": not cold_start, "restarts": kw["restarts"],
                           "fit": _config_echo(cfg.fit), "data": data_path}, boot_seed, started)
        click.echo(f"{res.replicates.shape[0]} replicates used, {res.dropped} dropped")
    _run(body)


@main.command()
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False),
              required=True,
              help="JSON with b_vec, a_vec, Sigma, Psi, nu and X of the simplified model")
@click.option("--draws", type=click.IntRange(min=1000), default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def info(params_path, draws, seed, out):
    """Complete and Monte-Carlo observed information, and EM rate matrices."""
    def body():
        started = io.now_iso()
        params = VecSkewTParams.from_dict(io.load_json(params_path))
        I_c = complete_info(params)
        obs = observed_info_mc(params, draws, seed, keep_scores=False)
        idx = identified_indices(params)
        rates = rate_matrices(restrict(I_c, idx), restrict(obs.matrix, idx))
        io.dump_json(out, {
            "I_complete": I_c, "I_observed": obs.matrix, "I_observed_se": obs.se_matrix,
            "se_max": obs.se, "draws": draws, "identified_indices": idx,
            "r_max": rates.r_max, "s_min": rates.s_min, "speed_eigenvalues": rates.eigenvalues,
        })
        io.write_manifest([out], "info", {"params": params_path, "draws": draws}, seed, started)
        click.echo(f"r_max={rates.r_max:.6f} s_min={rates.s_min:.6f}")
    _run(body)


def _parse_engines(text):
    """'ecme,pecme,adecme:0.875' -> [('ecme', None), ('pecme', None), ('adecme', 0.875)]."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, g = item.partition(":")
        if name not in ("ecme", "pecme", "adecme"):
            raise click.BadParameter(f"unknown engine {name!r}", param_hint="--engines")
        if name == "adecme" and not g:
            raise click.BadParameter("adecme entries need a gamma, e.g. adecme:0.875",
                                     param_hint="--engines")
        out.append((name, float(g) if g else None))
    if not out:
        raise click.BadParameter("no engines given", param_hint="--engines")
    return out


def _label(name, g):
    return name.upper() if g is None else f"ADECME(gamma={g:g})"


@main.command()
@click.option("--scheme", type=click.Choice(["1", "2", "3"]), default="1", show_default=True)
@click.option("--n", "N", type=click.IntRange(min=1), default=250, show_default=True)
@click.option("--reps", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--engines", default="adecme:0.625,adecme:0.75,adecme:0.875,pecme,ecme",
              show_default=True)
@click.option("--workers", "workers_k", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--zeta", type=click.FloatRange(0, 1, max_open=True), default=0.05,
              show_default=True)
@click.option("--epsilon", type=click.FloatRange(min=0), default=1e-7, show_default=True)
@click.option("--max-iter", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--delay", "delay_kind", type=click.Choice(["none", "uniform", "slow"]),
              default="slow", show_default=True)
@click.option("--per-subject-ms", type=click.FloatRange(min=0), default=0.015, show_default=True)
@click.option("--delay-low-ms", type=click.FloatRange(min=0), default=0.0, show_default=True)
@click.option("--delay-high-ms", type=click.FloatRange(min=0), default=0.0, show_default=True)
@click.option("--slow-factor", type=click.FloatRange(min=1), default=2.0, show_default=True)
@click.option("--pacing", type=click.Choice(["floor", "additive"]), default="floor",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="summary table CSV")
def bench(scheme, N, reps, engines, workers_k, zeta, epsilon, max_iter, seed, delay_kind,
          per_subject_ms, delay_low_ms, delay_high_ms, slow_factor, pacing, out):
    """Timing table (TT, E step, DEC, Psi, A, beta, nu, TNI) across engines."""
    grid = _parse_engines(engines)

    def body():
        started = io.now_iso()
        delay = DelayModel(kind=delay_kind, per_subject_ms=per_subject_ms, low_ms=delay_low_ms,
                           high_ms=delay_high_ms, slow_factor=slow_factor, pacing=pacing)
        records = {(n, g): [] for n, g in grid}
        run_rows, errors = [], []
        for r in range(reps):
            data, truth = generate(int(scheme), N, seed + r)
            for name, g in grid:
                cfg = FitConfig(engine=name, epsilon=epsilon, max_iter=max_iter,
                                workers_k=1 if name == "ecme" else workers_k,
                                gamma=g if g is not None else 1.0, zeta=zeta, seed=seed + r,
                                init=truth, delay=delay)
                try:
                    res = fit_with_restarts(data, cfg, 1)
                except DOMAIN_ERRORS as exc:
                    errors.append(f"rep {r} {_label(name, g)}: {exc}")
                    run_rows.append([r, _label(name, g), "error", str(exc)])
                    continue
                vals = dict(res.step_timings)
                vals["TNI"] = res.iterations
                records[(name, g)].append(vals)
                run_rows.append([r, _label(name, g), "ok", res.step_timings["TT"], res.iterations,
                                 res.converged])
        metrics = [("TT", "TT"), ("E step", "e_step"), ("DEC", "dec"), ("Psi", "psi"),
                   ("A", "a"), ("beta", "beta"), ("nu", "nu"), ("TNI", "TNI")]
        header = ["metric"] + [_label(n, g) for n, g in grid]
        rows = []
        for title, key in metrics:
            row = [title]
            for cell in grid:
                vals = [v[key] for v in records[cell]]
                if not vals:
                    row.append("NA")
                    continue
                sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
                row.append(f"{statistics.fmean(vals):.3f} ({sd:.3f})")
            rows.append(row)
        io.write_rows_csv(out, header, rows)
        runs_path = os.path.splitext(out)[0] + "_runs.csv"
        io.write_rows_csv(runs_path, ["rep", "engine", "status", "TT_or_error", "TNI", "converged"],
                          run_rows)
        io.write_manifest([out, runs_path], "bench",
                          {"scheme": int(scheme), "N": N, "reps": reps, "engines": engines,
                           "workers": workers_k, "zeta": zeta, "delay": asdict(delay),
                           "errors": errors}, seed, started)
        for row in [header] + rows:
            click.echo("  ".join(f"{c:>22}" for c in row))
        if errors:
            click.echo(f"{len(errors)} run(s) failed; see {runs_path}", err=True)
    _run(body)


if __name__ == "__main__":
    main()
