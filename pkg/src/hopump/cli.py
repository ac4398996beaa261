"""Command-line front end.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure, 4 budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import signal
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PUMP_KEYS, RunConfig, load_config, parse_config
from .errors import BudgetExceeded, ConfigurationError, DomainError, NumericalError, UsageError
from .experiments import (
    SweepConfig,
    disorder_pattern,
    disorder_sweep,
    effective_coupling,
    gap_vs_disorder,
    gap_vs_h0,
    period_scan,
    realization_seed,
    surrogate_gap,
)
from .fock import Sector
from .lattice import build_lattice
from .pump import PrepProtocol, PumpSchedule, run_pump, simulate_preparation
from .solver import EigsConfig, PropagatorConfig
from .topology import ZakGrid, chern_from_profile, delta_q_from_zak, zak_profile

log = logging.getLogger("hopump")

EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 2, 3, 4

# required fields of each emitted JSON document, checked by ``validate``
SUMMARY_FIELDS = {
    "pump": {"delta_q", "delta_q_corners", "schedule", "seed", "config"},
    "prepare": {"max_fidelity", "final_fidelity", "config", "seed"},
    "zak": {"delta_q_half", "min_overlap", "min_gap_mhz", "config", "seed"},
    "chern": {"chern", "windings", "residual", "gap_closed", "config", "seed"},
    "gap": {"config", "seed"},
    "period-scan": {"h0_mhz", "t0_ns", "delta_p", "config", "seed"},
}


def _schedule(cfg: RunConfig) -> PumpSchedule:
    cfg.require(*PUMP_KEYS)
    return PumpSchedule(cfg.get("pump.variant"), float(cfg.get("pump.j0_mhz")),
                        float(cfg.get("pump.h0_mhz")), float(cfg.get("pump.t0_ns")))


def _propagator(cfg: RunConfig) -> PropagatorConfig:
    return PropagatorConfig(float(cfg.get("solver.dt_ns")), cfg.get("solver.krylov_dim"), float(cfg.get("solver.step_tol")))


def _eigs(cfg: RunConfig) -> EigsConfig:
    return EigsConfig(tol=float(cfg.get("solver.eigs_tol")), seed=cfg.get("seed"))


def _lattice_sector(cfg: RunConfig):
    lat = build_lattice(cfg.get("pump.n_side"))
    return lat, Sector(lat.n_sites, lat.n_sites // 2)


def _emit(out: Path, name: str, kind: str, cfg: RunConfig, payload: dict) -> Path:
    doc = {"kind": kind, "version": __version__, "seed": cfg.get("seed"), "config": cfg.resolved(), **payload}
    p = out / name
    p.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return p


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _gnuplot(out: Path, data: str, ycols: int, xlabel: str, ylabel: str) -> None:
    plots = ", ".join(f"'{data}' using 1:{c} with linespoints title columnhead({c})" for c in range(2, 2 + ycols))
    out.joinpath(Path(data).stem + ".gp").write_text(
        f"set datafile separator ','\nset key autotitle columnhead\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\n"
        f"plot {plots}\n"
    )


def cmd_pump(cfg: RunConfig, args) -> int:
    schedule = _schedule(cfg)
    lat, sector = _lattice_sector(cfg)
    w = float(cfg.get("pump.w_mhz"))
    disorder = None
    if w:
        disorder = w * disorder_pattern(realization_seed(cfg.get("seed"), w, 0), lat.n_sites)
    rec = run_pump(lat, schedule, sector, _propagator(cfg), float(cfg.get("pump.sample_every_ns")),
                   cfg.get("pump.span"), disorder, cfg.get("seed"), eigs=_eigs(cfg))
    if not rec.valid:
        raise NumericalError("propagation failed before the end of the schedule")
    (args.out / "pump.csv").write_text(rec.to_csv())
    summary = rec.summary()
    if disorder is not None:
        summary["disorder_mhz"] = disorder.tolist()
    _emit(args.out, "pump_summary.json", "pump", cfg, summary)
    if args.gnuplot:
        _gnuplot(args.out, "pump.csv", lat.n_sites, "t (ns)", "P1")
    print(f"delta_q = {summary['delta_q']:.5f}")
    return 0


def cmd_prepare(cfg: RunConfig, args) -> int:
    prep = PrepProtocol(float(cfg.get("prepare.detuning_start_mhz")), float(cfg.get("prepare.detuning_end_mhz")),
                        float(cfg.get("prepare.coupling_start_mhz")), float(cfg.get("prepare.coupling_end_mhz")))
    times, fid, best = simulate_preparation(prep, float(cfg.get("prepare.duration_ns")), float(cfg.get("solver.dt_ns")))
    lines = ["t_ns,fidelity"] + [f"{t:.12g},{f:.12g}" for t, f in zip(times, fid)]
    (args.out / "prepare.csv").write_text("\n".join(lines) + "\n")
    _emit(args.out, "prepare_summary.json", "prepare", cfg, {"max_fidelity": best, "final_fidelity": float(fid[-1])})
    print(f"max fidelity = {best:.6f}")
    return 0


def _grid(cfg: RunConfig) -> ZakGrid:
    return ZakGrid(cfg.get("zak.n_theta"), cfg.get("zak.n_lambda"), _eigs(cfg))


def cmd_zak(cfg: RunConfig, args) -> int:
    schedule = _schedule(cfg)
    lat, sector = _lattice_sector(cfg)
    grid = _grid(cfg)
    prof = zak_profile(lat, sector, schedule, grid, cfg.get("zak.link_sign"))
    (args.out / "zak.csv").write_text(prof.to_csv())
    half = delta_q_from_zak(prof, math.pi, 0.0) if grid.n_lambda % 2 == 0 else None
    _emit(args.out, "zak_summary.json", "zak", cfg, {
        "delta_q_half": None if half is None else half.tolist(),
        "min_overlap": prof.min_overlap,
        "min_gap_mhz": prof.min_gap,
    })
    if args.gnuplot:
        _gnuplot(args.out, "zak.csv", 4, "lambda", "gamma")
    if half is not None:
        print("dq_half = [" + ", ".join(f"{x:.4f}" for x in half) + "]")
    return 0


def cmd_chern(cfg: RunConfig, args) -> int:
    schedule = _schedule(cfg)
    lat, sector = _lattice_sector(cfg)
    grid = _grid(cfg)
    prof = zak_profile(lat, sector, schedule, grid, cfg.get("zak.link_sign"))
    res = chern_from_profile(prof, grid.eigs.tol)
    (args.out / "zak.csv").write_text(prof.to_csv())
    _emit(args.out, "chern.json", "chern", cfg, json.loads(res.to_json()))
    print(f"C = [{', '.join(str(c) for c in res.chern)}]")
    if res.gap_closed:
        print("warning: gap closes along the path; windings are not protected", file=sys.stderr)
    return 0


def _sweep(cfg: RunConfig, args, grid_key: str) -> SweepConfig:
    cfg.require(grid_key)
    s = _schedule(cfg)
    return SweepConfig(
        variant=s.variant, grid=tuple(float(x) for x in cfg.get(grid_key)), realizations=cfg.get("sweep.realizations"),
        base_seed=cfg.get("seed"), j0=s.j0, h0=s.h0, t0=s.t0, n_side=cfg.get("pump.n_side"),
        propagator=_propagator(cfg), eigs=_eigs(cfg), n_lambda=cfg.get("gap.n_lambda"), workers=args.threads,
        out_dir=str(args.out),
    )


def cmd_gap(cfg: RunConfig, args) -> int:
    n_lambda = cfg.get("gap.n_lambda")
    if n_lambda < 2:
        raise ConfigurationError("gap.n_lambda must be >= 2")
    if cfg.get("gap.h0_mhz") is not None:
        cfg.require("pump.variant", "pump.j0_mhz")
        h0 = [float(x) for x in cfg.get("gap.h0_mhz")]
        gaps = gap_vs_h0(cfg.get("pump.variant"), h0, float(cfg.get("pump.j0_mhz")), n_lambda, cfg.get("pump.n_side"))
        lines = ["h0_mhz,gap_mhz"] + [f"{h:.12g},{g:.12g}" for h, g in zip(h0, gaps)]
        (args.out / "gap_vs_h0.csv").write_text("\n".join(lines) + "\n")
        _emit(args.out, "gap_summary.json", "gap", cfg, {"h0_mhz": h0, "gap_mhz": gaps.tolist()})
        if args.gnuplot:
            _gnuplot(args.out, "gap_vs_h0.csv", 1, "h0 (MHz)", "gap (MHz)")
        for h, g in zip(h0, gaps):
            print(f"h0 = {h:g} MHz  dE = {g:.6f} MHz")
        return 0
    if cfg.get("sweep.w_mhz") is not None:
        res = gap_vs_disorder(_sweep(cfg, args, "sweep.w_mhz"))
        res.write(args.out)
        _emit(args.out, "gap_summary.json", "gap", cfg, {"w_mhz": res.grid.tolist(), "median_gap_mhz": res.median.tolist()})
        for w, m in zip(res.grid, res.median):
            print(f"W = {w:g} MHz  median dE = {m:.6f} MHz")
        return 0
    lat = build_lattice(cfg.get("pump.n_side"))
    g = surrogate_gap(lat, _schedule(cfg), n_lambda)
    _emit(args.out, "gap_summary.json", "gap", cfg, {"gap_mhz": g})
    print(f"dE = {g:.6f} MHz")
    return 0


def cmd_disorder(cfg: RunConfig, args) -> int:
    sweep = _sweep(cfg, args, "sweep.w_mhz")
    res = gap_vs_disorder(sweep) if cfg.get("sweep.quantity") == "gap" else disorder_sweep(sweep)
    res.write(args.out)
    if args.gnuplot:
        _gnuplot(args.out, f"{res.quantity}.csv", 1, "W (MHz)", res.quantity)
    for w, m, s, ok in zip(res.grid, res.mean, res.std, res.valid):
        print(f"W = {w:g} MHz  mean = {m:.5f}  std = {s:.5f}" + ("" if ok else "  (invalid)"))
    if not res.valid.all():
        raise NumericalError("more than 10% of realizations failed at some grid point")
    return 0


def cmd_period_scan(cfg: RunConfig, args) -> int:
    cfg.require("scan.h0_mhz", "scan.t0_ns")
    h0 = [float(x) for x in cfg.get("scan.h0_mhz")]
    t0 = [float(x) for x in cfg.get("scan.t0_ns")]
    if any(b <= a for a, b in zip(t0, t0[1:])):
        raise ConfigurationError("scan.t0_ns must be strictly increasing")
    j0 = float(cfg.get("pump.j0_mhz") or 3.0)
    curves = period_scan(h0, t0, j0, cfg.get("pump.n_side"), _propagator(cfg), cfg.get("scan.steps_per_period"),
                         args.budget_seconds, _eigs(cfg))
    header = "t0_ns," + ",".join(f"dp_h0_{h:g}" for h in h0)
    lines = [header] + [f"{t:.12g}," + ",".join(f"{curves[h][k]:.12g}" for h in h0) for k, t in enumerate(t0)]
    (args.out / "period_scan.csv").write_text("\n".join(lines) + "\n")
    _emit(args.out, "period_scan.json", "period-scan", cfg,
          {"h0_mhz": h0, "t0_ns": t0, "delta_p": [curves[h].tolist() for h in h0]})
    if args.gnuplot:
        _gnuplot(args.out, "period_scan.csv", len(h0), "T0 (ns)", "dP")
    print("\n".join(lines))
    return 0


def cmd_coupling(args) -> int:
    J = effective_coupling(args.g12, args.g1c, args.g2c, args.w1, args.w2, args.wc)
    print(f"J = {J:.6g} MHz")
    return 0


def cmd_validate(args) -> int:
    for path in args.files:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read {p}: {exc}") from exc
        if p.suffix == ".toml":
            parse_config(text)
        else:
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{p}: not valid JSON ({exc})") from exc
            kind = doc.get("kind")
            if kind not in SUMMARY_FIELDS:
                raise ConfigurationError(f"{p}: unknown document kind {kind!r}")
            missing = SUMMARY_FIELDS[kind] - doc.keys()
            if missing:
                raise ConfigurationError(f"{p}: missing field(s) {sorted(missing)}")
            # the echoed configuration must itself be a valid configuration
            RunConfig({}).with_overrides(**{k: v for k, v in doc["config"].items() if v is not None})
        print(f"ok {p}")
    return 0


COMMANDS = {
    "pump": cmd_pump,
    "prepare": cmd_prepare,
    "zak": cmd_zak,
    "chern": cmd_chern,
    "gap": cmd_gap,
    "disorder": cmd_disorder,
    "period-scan": cmd_period_scan,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with flat dotted keys")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--seed", type=int, help="overrides the configured seed (u64)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--sample-every", type=float, help="sampling interval in ns (pump)")
    common.add_argument("--budget-seconds", type=float, help="abort with exit code 4 after this wall time")
    common.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script next to each table")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="hopump", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "pump": "time-evolve the corner pump and record site occupations",
        "prepare": "simulate the adiabatic plaquette preparation",
        "zak": "corner Zak phases over one pump cycle",
        "chern": "corner Chern numbers from Zak-phase windings",
        "gap": "free-fermion surrogate gap (clean, vs h0 or vs disorder)",
        "disorder": "disorder ensemble of the corner charge",
        "period-scan": "non-diagonal corner contrast versus pump period",
    }
    for name, h in helps.items():
        sub.add_parser(name, parents=[common], help=h)
    c = sub.add_parser("coupling", parents=[common], help="effective qubit-qubit coupling through a coupler (MHz)")
    for flag in ("--g12", "--g1c", "--g2c", "--w1", "--w2", "--wc"):
        c.add_argument(flag, type=float, required=True)
    v = sub.add_parser("validate", parents=[common], help="re-parse emitted JSON summaries or TOML configs")
    v.add_argument("files", nargs="+")
    return ap


def _on_alarm(signum, frame):
    raise BudgetExceeded("wall-clock budget exhausted")


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.budget_seconds is not None and args.budget_seconds > 0 and hasattr(signal, "setitimer"):
        signal.signal(signal.SIGALRM, _on_alarm)
        signal.setitimer(signal.ITIMER_REAL, args.budget_seconds)
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        if args.command == "coupling":
            return cmd_coupling(args)
        if args.command == "validate":
            return cmd_validate(args)
        cfg = load_config(args.config).with_overrides(**{"seed": args.seed, "pump.sample_every_ns": args.sample_every})
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except (ConfigurationError, UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    finally:
        if hasattr(signal, "setitimer"):
            signal.setitimer(signal.ITIMER_REAL, 0)
