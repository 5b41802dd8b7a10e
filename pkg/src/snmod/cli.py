"""Command-line front end: ``snmod <command> [config.json] [--set key=value ...]``.

Every command writes CSV data next to a JSON report under the ``run.output``
prefix. Exit codes: 0 success, 1 usage or configuration error, 2 numerical
divergence (partial output is still written).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._csv import write_rows
from .analysis import (
    DELTA_CSV_COLUMNS,
    asymptotic_delta,
    check_validity,
    cycles_for_duration,
    delta_envelope,
    stability_map,
)
from .config import describe_keys, load_config, schedule_from
from .errors import ConfigError, DomainError, NoFixedPointError, TrajectoryError
from .firstmoments import first_moment_cycle, mean_trajectory, trap_exit_time
from .floquet import classify_stability
from .oracle import EnsembleSpec, run_ensemble
from .params import ModulationSchedule, compute_omega_sn
from .propagator import SecondMomentSystem, cycle_map, propagate_second_moments

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2
MC_SIGMA_LIMIT = 4.0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _prefix(cfg, command: str) -> Path:
    prefix = Path(cfg.run.output or f"snmod_{command.replace('-', '_')}")
    try:
        prefix.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"run.output: cannot create {prefix.parent}: {exc}") from None
    return prefix


def _with_suffix(prefix: Path, tail: str) -> Path:
    return prefix.with_name(prefix.name + tail)


def _write_json(path: Path, report: dict) -> None:
    path.write_text(json.dumps(report, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _n_cycles(cfg, schedule) -> int:
    if cfg.run.n_cycles is not None:
        return cfg.run.n_cycles
    if cfg.run.t_end is not None:
        return cycles_for_duration(schedule, cfg.run.t_end)
    raise ConfigError("run: one of n_cycles or t_end is required for this command")


def _f_terms(cfg) -> str:
    return cfg.run.f_terms or "neglected"


def _classifications(params, schedule, f_terms) -> dict:
    out = {}
    for label, sn in (("no_sn", False), ("sn", True)):
        out[label] = {
            block: classify_stability(cycle_map(params, schedule, block, sn, f_terms).matrix_M).to_json()
            for block in ("quantum", "classical")
        }
    return out


def _schedule_json(schedule) -> dict:
    return {"alpha": schedule.alpha, "beta": schedule.beta, "t1": schedule.t1, "t2": schedule.t2, "tau": schedule.tau}


# -- commands ----------------------------------------------------------------


def cmd_omega_sn(cfg, threads=None) -> int:
    params = cfg.params.build()
    report = {"omega_sn": params.omega_sn, "unit_mode": params.unit_mode}
    if params.m_atom is not None and params.delta_x_zp is not None:
        report["omega_sn_derived"] = compute_omega_sn(params.G_newton, params.m_atom, params.delta_x_zp)
    if cfg.schedule is not None:
        report.update(_schedule_json(schedule_from(cfg, params)))
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if cfg.run.output:
        _write_json(_with_suffix(_prefix(cfg, "omega-sn"), ".json"), report)
    return EXIT_OK


def cmd_simulate(cfg, threads=None) -> int:
    params = cfg.params.build()
    schedule = schedule_from(cfg, params)
    initial = cfg.initial.build()
    n = _n_cycles(cfg, schedule)
    f_terms = _f_terms(cfg)
    prefix = _prefix(cfg, "simulate")
    d = delta_envelope(params, schedule, n, initial, cfg.run.substeps, f_terms)
    empty = n == 0
    d.series0.write_csv(_with_suffix(prefix, "_nosn.csv"), header_only=empty)
    d.series_sn.write_csv(_with_suffix(prefix, "_sn.csv"), header_only=empty)
    if empty:
        _empty_delta(_with_suffix(prefix, "_delta.csv"))
    else:
        d.write_csv(_with_suffix(prefix, "_delta.csv"))
    status = {"no_sn": d.series0.status, "sn": d.series_sn.status}
    validity = {}
    if params.delta_x_zp is not None:
        for label, s in (("no_sn", d.series0), ("sn", d.series_sn)):
            validity[label] = check_validity(s.t, s.v_xx_total, params.delta_x_zp)
    report = {
        "command": "simulate",
        "schedule": _schedule_json(schedule),
        "n_cycles": n,
        "f_terms": f_terms,
        "status": status,
        "oscillating": {"no_sn": d.oscillating[0], "sn": d.oscillating[1]},
        "validity_violation_time": validity,
        "classification": _classifications(params, schedule, f_terms),
        "final_delta_envelope": None if empty else float(d.delta[-1]),
    }
    _write_json(_with_suffix(prefix, ".json"), report)
    return EXIT_DIVERGED if "diverged" in status.values() else EXIT_OK


def _empty_delta(path):
    write_rows(path, DELTA_CSV_COLUMNS, [])


def cmd_delta_envelope(cfg, threads=None) -> int:
    params = cfg.params.build()
    schedule = schedule_from(cfg, params)
    n = _n_cycles(cfg, schedule)
    f_terms = _f_terms(cfg)
    prefix = _prefix(cfg, "delta-envelope")
    d = delta_envelope(params, schedule, n, cfg.initial.build(), cfg.run.substeps, f_terms)
    if n == 0:
        _empty_delta(_with_suffix(prefix, ".csv"))
    else:
        d.write_csv(_with_suffix(prefix, ".csv"))
    status = {"no_sn": d.series0.status, "sn": d.series_sn.status}
    delta = d.delta
    finite = np.isfinite(delta)
    report = {
        "command": "delta-envelope",
        "schedule": _schedule_json(schedule),
        "n_cycles": n,
        "f_terms": f_terms,
        "status": status,
        "final_delta_envelope": None if n == 0 else float(delta[-1]),
        "max_delta_envelope": float(delta[finite].max()) if finite.any() else None,
        "classification": _classifications(params, schedule, f_terms),
    }
    _write_json(_with_suffix(prefix, ".json"), report)
    return EXIT_DIVERGED if "diverged" in status.values() else EXIT_OK


def _reports_json(reports: dict) -> dict:
    return {f"{label}.{block}": r.to_json() for (label, block), r in reports.items()}


def cmd_asymptotic_delta(cfg, threads=None) -> int:
    params = cfg.params.build()
    f_terms = _f_terms(cfg)
    prefix = _prefix(cfg, "asymptotic-delta")
    if cfg.run.alpha_scan:
        if cfg.schedule is None:
            raise ConfigError("schedule: field required for this command (beta is taken from it)")
        rows = []
        for a in cfg.run.alpha_scan:
            try:
                sched = ModulationSchedule.for_params(a, cfg.schedule.beta, params)
                res = asymptotic_delta(params, sched, f_terms, cfg.run.substeps)
                rows.append([a, res.delta, res.env0, res.env_sn, "Stable"])
            except NoFixedPointError:
                rows.append([a, math.nan, math.nan, math.nan, "NoFixedPoint"])
            except DomainError:
                rows.append([a, math.nan, math.nan, math.nan, "Invalid"])
        write_rows(_with_suffix(prefix, ".csv"), ("alpha", "delta_inf", "env_0", "env_sn", "status"), rows)
        _write_json(_with_suffix(prefix, ".json"), {
            "command": "asymptotic-delta", "beta": cfg.schedule.beta, "f_terms": f_terms, "n_points": len(rows),
        })
        return EXIT_OK
    schedule = schedule_from(cfg, params)
    report = {"command": "asymptotic-delta", "schedule": _schedule_json(schedule), "f_terms": f_terms}
    try:
        res = asymptotic_delta(params, schedule, f_terms, cfg.run.substeps)
    except NoFixedPointError as exc:
        report.update(error=str(exc), reports=_reports_json(exc.report))
        _write_json(_with_suffix(prefix, ".json"), report)
        print(f"error: no fixed point: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report.update(
        delta_inf=res.delta, env_0=res.env0, env_sn=res.env_sn, reports=_reports_json(res.reports),
        fixed_point_no_sn=res.fixed0.total.as_array().tolist(),
        fixed_point_sn=res.fixed_sn.total.as_array().tolist(),
    )
    _write_json(_with_suffix(prefix, ".json"), report)
    return EXIT_OK


def cmd_stability_map(cfg, threads=None) -> int:
    params = cfg.params.build()
    run = cfg.run
    w_sn = run.map_omega_sn if run.map_omega_sn is not None else params.omega_sn
    gamma = run.map_gamma if run.map_gamma is not None else params.gamma_m
    smap = stability_map(params, w_sn, gamma, run.alpha_range, run.beta_range, run.resolution, threads)
    prefix = _prefix(cfg, "stability-map")
    smap.write_csv(_with_suffix(prefix, ".csv"))
    smap.write_json(_with_suffix(prefix, ".json"))
    return EXIT_OK


def cmd_trap_exit(cfg, threads=None) -> int:
    params = cfg.params.build()
    schedule = schedule_from(cfg, params)
    initial = cfg.initial.build()
    t_exit = trap_exit_time(params, schedule, initial.mean0, initial.trap_halfwidth, cfg.run.t_max, cfg.run.substeps)
    horizon = cfg.run.t_max if t_exit is None else t_exit
    prefix = _prefix(cfg, "trap-exit")
    series = mean_trajectory(params, schedule, initial.mean0, cycles_for_duration(schedule, horizon), cfg.run.substeps)
    series.write_csv(_with_suffix(prefix, ".csv"))
    cyc = cycle_map(params, schedule, "quantum", True, "neglected")
    report = {
        "command": "trap-exit",
        "schedule": _schedule_json(schedule),
        "trap_halfwidth": initial.trap_halfwidth,
        "t_max": cfg.run.t_max,
        "exit_time": t_exit,
        "confined": t_exit is None,
        "mean_classification": classify_stability(first_moment_cycle(params, schedule)).classification.value,
        "covariance_classification": classify_stability(cyc.matrix_M).classification.value,
    }
    _write_json(_with_suffix(prefix, ".json"), report)
    return EXIT_OK


def cmd_mc_verify(cfg, threads=None) -> int:
    params = cfg.params.build()
    schedule = schedule_from(cfg, params)
    initial = cfg.initial.build()
    run = cfg.run
    n = run.n_cycles if run.n_cycles is not None else 20
    dt = run.dt if run.dt is not None else EnsembleSpec.default_dt(schedule)
    try:
        spec = EnsembleSpec(
            run.n_trajectories, dt, run.seed, params, schedule, True, n, run.outputs_per_segment, threads
        )
    except ValueError as exc:
        raise ConfigError(f"run: {exc}") from None
    prefix = _prefix(cfg, "mc-verify")
    try:
        mc = run_ensemble(spec, initial)
    except TrajectoryError as exc:
        _write_json(_with_suffix(prefix, ".json"), {"command": "mc-verify", "error": str(exc), "step": exc.step})
        return EXIT_DIVERGED
    mc.write_csv(_with_suffix(prefix, ".csv"))
    det = propagate_second_moments(
        SecondMomentSystem.pure(initial.covariance(params)), params, schedule, True, n,
        run.outputs_per_segment, "exact",
    )
    diff = np.abs(det.total - mc.v_hat)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(mc.stderr > 0, diff / mc.stderr, np.where(diff == 0, 0.0, np.inf))
    flagged = np.flatnonzero(z[:, 0] > MC_SIGMA_LIMIT)
    report = {
        "command": "mc-verify",
        "n_trajectories": run.n_trajectories,
        "seed": run.seed,
        "dt": dt,
        "n_outputs": int(len(mc.t)),
        "max_z": {k: float(z[:, i].max()) for i, k in enumerate(("v_xx", "v_xp", "v_pp"))},
        "sigma_limit": MC_SIGMA_LIMIT,
        "flagged_times": [float(mc.t[i]) for i in flagged],
        "pass": bool(flagged.size == 0),
    }
    _write_json(_with_suffix(prefix, ".json"), report)
    return EXIT_OK


COMMANDS = {
    "omega-sn": (cmd_omega_sn, "derived self-gravity frequency and segment durations"),
    "simulate": (cmd_simulate, "second-moment time series with and without self-gravity"),
    "stability-map": (cmd_stability_map, "(alpha, beta) stability classification maps"),
    "delta-envelope": (cmd_delta_envelope, "envelope difference of V_xx without and with self-gravity"),
    "asymptotic-delta": (cmd_asymptotic_delta, "steady-state envelope difference, single point or alpha scan"),
    "trap-exit": (cmd_trap_exit, "first time the mean position leaves the trap"),
    "mc-verify": (cmd_mc_verify, "Monte Carlo check of the deterministic covariance"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snmod", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    epilog = "configuration keys:\n" + describe_keys()
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(
            name, help=help_text, description=help_text, epilog=epilog,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.add_argument("config", nargs="?", help="JSON configuration file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (dotted path, JSON value)")
        p.add_argument("--threads", type=int, default=None, metavar="N",
                       help="cap on worker threads (default: all cores)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, args.overrides)
        return func(cfg, args.threads)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
