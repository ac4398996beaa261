"""Batch harnesses: disorder ensembles, surrogate gaps, period scans and the coupling formula.

Every realization draws its disorder from its own stream keyed by (base_seed, grid value,
realization index), so results do not depend on job order or worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from . import __version__
from .errors import BudgetExceeded, DomainError, NumericalError
from .fock import Sector
from .hamiltonian import surrogate_matrix
from .lattice import LatticeSpec, Variant, build_lattice
from .pump import PumpSchedule, corner_delta_q, run_pump
from .solver import EigsConfig, PropagatorConfig

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.10


def realization_seed(base_seed: int, grid_value: float, r: int) -> int:
    """64-bit seed for realization ``r`` at one grid point, stable under grid extension."""
    key = int(round(grid_value * 1000))  # grid values resolved to 1e-3 of their unit
    ss = np.random.SeedSequence([base_seed & (2**64 - 1), key & (2**64 - 1), r])
    return int(ss.generate_state(1, np.uint64)[0])


def disorder_pattern(seed: int, n_sites: int) -> np.ndarray:
    """Uniform site offsets in [-1, 1]."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, n_sites)


@dataclass(frozen=True)
class SweepConfig:
    variant: Variant = "diag"
    grid: tuple[float, ...] = tuple(float(w) for w in range(0, 42, 2))
    realizations: int = 40
    base_seed: int = 0
    j0: float = 3.0  # MHz
    h0: float = 10.0  # MHz
    t0: float = 500.0  # ns
    n_side: int = 4
    propagator: PropagatorConfig = PropagatorConfig()
    eigs: EigsConfig = EigsConfig()
    n_lambda: int = 241  # surrogate-gap path resolution
    workers: int = 1
    out_dir: str | None = None

    def __post_init__(self):
        if self.realizations < 1:
            raise DomainError("need at least one realization per grid point")
        if len(self.grid) == 0:
            raise DomainError("empty parameter grid")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise DomainError("grid must be strictly increasing")
        if self.workers < 1:
            raise DomainError("workers must be >= 1")

    @property
    def schedule(self) -> PumpSchedule:
        return PumpSchedule(self.variant, self.j0, self.h0, self.t0)


@dataclass
class EnsembleResult:
    quantity: str
    grid: np.ndarray
    values: np.ndarray  # (n_grid, R), nan where a realization failed
    seeds: np.ndarray  # (n_grid, R) uint64
    base_seed: int
    provenance: dict = field(default_factory=dict)
    details: list = field(default_factory=list, repr=False)  # per-realization dicts

    @property
    def n(self) -> np.ndarray:
        return np.sum(np.isfinite(self.values), axis=1)

    @property
    def mean(self) -> np.ndarray:
        return np.nanmean(self.values, axis=1)

    @property
    def std(self) -> np.ndarray:
        return np.nanstd(self.values, axis=1, ddof=1) if self.values.shape[1] > 1 else np.zeros(len(self.grid))

    @property
    def median(self) -> np.ndarray:
        return np.nanmedian(self.values, axis=1)

    @property
    def stderr(self) -> np.ndarray:
        return self.std / np.sqrt(np.maximum(self.n, 1))

    @property
    def valid(self) -> np.ndarray:
        return (1 - self.n / self.values.shape[1]) <= MAX_FAILURE_FRACTION

    def at(self, grid_value: float) -> np.ndarray:
        idx = np.nonzero(np.isclose(self.grid, grid_value))[0]
        if not len(idx):
            raise DomainError(f"{grid_value} not on the sweep grid")
        return self.values[idx[0]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["grid_value", "mean", "std", "n", "seed_base"])
        for g, m, s, n in zip(self.grid, self.mean, self.std, self.n):
            w.writerow([f"{g:.12g}", f"{m:.12g}", f"{s:.12g}", int(n), self.base_seed])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> Path:
        """CSV summary, one JSON per realization and a hashed manifest. Returns the manifest path."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        artifacts = []
        csv_path = out / f"{self.quantity}.csv"
        csv_path.write_text(self.to_csv())
        artifacts.append(csv_path)
        for d in self.details:
            sub = out / "realizations" / f"g{d['grid_value']:g}" / f"r{d['realization']:03d}"
            sub.mkdir(parents=True, exist_ok=True)
            p = sub / "result.json"
            p.write_text(json.dumps(d, indent=2, sort_keys=True))
            artifacts.append(p)
        manifest = {
            "created_unix": time.time(),
            "quantity": self.quantity,
            "provenance": self.provenance,
            "artifacts": [
                {"path": str(p.relative_to(out)), "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
                for p in artifacts
            ],
        }
        mpath = out / "manifest.json"
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return mpath


def _provenance(cfg: SweepConfig, **extra) -> dict:
    d = asdict(cfg)
    d["grid"] = list(cfg.grid)
    d.update(extra)
    d["code_version"] = __version__
    return d


def _run_jobs(fn, jobs, workers: int):
    """Map ``fn`` over ``jobs`` keeping input order; process pool when ``workers > 1``."""
    if workers == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=1))


def _collect(quantity, cfg: SweepConfig, jobs, results, **prov) -> EnsembleResult:
    shape = (len(cfg.grid), cfg.realizations)
    values = np.full(shape, np.nan)
    seeds = np.zeros(shape, dtype=np.uint64)
    details = []
    for (gi, r, g, seed), res in zip(jobs, results):
        seeds[gi, r] = seed
        if res.get("error") is None:
            values[gi, r] = res["value"]
        details.append({"grid_value": g, "realization": r, "seed": seed, **res})
    out = EnsembleResult(quantity, np.array(cfg.grid, float), values, seeds, cfg.base_seed, _provenance(cfg, **prov), details)
    for g, ok in zip(cfg.grid, out.valid):
        if not ok:
            log.warning("grid point %g: more than %d%% of realizations failed", g, int(100 * MAX_FAILURE_FRACTION))
    return out


def _jobs(cfg: SweepConfig):
    return [
        (gi, r, float(g), realization_seed(cfg.base_seed, g, r))
        for gi, g in enumerate(cfg.grid)
        for r in range(cfg.realizations)
    ]


# -- disorder robustness of the corner charge ------------------------------------------------


def _disorder_pump_job(args):
    cfg, (gi, r, W, seed) = args
    lattice = build_lattice(cfg.n_side)
    sector = Sector(lattice.n_sites, lattice.n_sites // 2)
    xi = disorder_pattern(seed, lattice.n_sites)
    try:
        rec = run_pump(
            lattice, cfg.schedule, sector, cfg.propagator, sample_every=cfg.t0 / 2, span="half",
            disorder=W * xi, seed=seed, eigs=cfg.eigs,
        )
        if not rec.valid:
            raise NumericalError("propagation failed")
    except NumericalError as exc:
        return {"value": None, "error": str(exc), "xi": xi.tolist()}
    dq_i, dq = corner_delta_q(rec)
    return {"value": dq, "error": None, "delta_q_corners": dq_i.tolist(), "xi": xi.tolist(),
            "norm_drift_max": rec.norm_drift_max}


def disorder_sweep(cfg: SweepConfig) -> EnsembleResult:
    """Half-cycle corner charge ``dq`` per disorder strength W (MHz), one pump per realization.

    Each realization adds ``W * xi_s`` with ``xi_s ~ U[-1, 1]`` to every site, both in
    the state preparation Hamiltonian and during the pump.
    """
    if cfg.variant != "diag":
        raise DomainError("disorder sweeps are defined for the diagonal pump")
    jobs = _jobs(cfg)
    results = _run_jobs(_disorder_pump_job, [(cfg, j) for j in jobs], cfg.workers)
    return _collect("delta_q_vs_disorder", cfg, jobs, results)


# -- free-fermion surrogate gap ----------------------------------------------------------------


def pump_path(n_lambda: int) -> np.ndarray:
    """Closed lambda path in pump order, endpoint dropped."""
    if n_lambda < 2:
        raise DomainError("lambda grid needs at least two points")
    return math.pi - 2 * math.pi * np.arange(n_lambda) / n_lambda


def surrogate_gap(
    lattice: LatticeSpec,
    schedule: PumpSchedule,
    n_lambda: int = 241,
    disorder: np.ndarray | None = None,
    refine: bool = True,
) -> float:
    """Smallest ``E_{N+1}(lam) - E_N(lam)`` along the pump path at half filling, in MHz.

    ``E_N`` sums the N lowest orbital energies, so the difference is the (N+1)-th orbital
    energy. The path is sampled on ``n_lambda`` points; with ``refine`` the three lowest
    sampled minima are polished by bounded scalar minimization between their neighbours,
    so narrow avoided crossings between grid points are not missed.
    """
    half = lattice.n_sites // 2

    def gap(lam):
        m = surrogate_matrix(
            lattice, schedule.hopping(lam), schedule.bond_sum, schedule.onsite(lam), schedule.variant, disorder
        )
        e = np.linalg.eigvalsh(m)
        return e[half] - e[half - 1]

    lams = pump_path(n_lambda)
    g = np.array([gap(lam) for lam in lams])
    best = float(g.min())
    if not refine:
        return best
    step = 2 * math.pi / n_lambda
    n = len(g)
    local = [k for k in range(n) if g[k] <= g[k - 1] and g[k] <= g[(k + 1) % n]]
    for k in sorted(local, key=lambda k: g[k])[:3]:
        res = minimize_scalar(gap, bounds=(lams[k] - step, lams[k] + step), method="bounded",
                              options={"xatol": 1e-9})
        best = min(best, float(res.fun))
    return best


def _gap_job(args):
    cfg, (gi, r, W, seed) = args
    lattice = build_lattice(cfg.n_side)
    xi = disorder_pattern(seed, lattice.n_sites)
    return {"value": surrogate_gap(lattice, cfg.schedule, cfg.n_lambda, W * xi), "error": None, "xi": xi.tolist()}


def gap_vs_disorder(cfg: SweepConfig) -> EnsembleResult:
    jobs = _jobs(cfg)
    results = _run_jobs(_gap_job, [(cfg, j) for j in jobs], cfg.workers)
    return _collect("gap_vs_disorder", cfg, jobs, results)


def gap_vs_h0(
    variant: Variant, h0_grid, j0: float = 3.0, n_lambda: int = 241, n_side: int = 4, refine: bool = True
) -> np.ndarray:
    """Clean surrogate gap for each h0 (MHz)."""
    lattice = build_lattice(n_side)
    return np.array(
        [surrogate_gap(lattice, PumpSchedule(variant, j0, float(h0), 500.0), n_lambda, refine=refine) for h0 in h0_grid]
    )


# -- non-diagonal period scan --------------------------------------------------------------------


def corner_contrast(p1: np.ndarray, lattice: LatticeSpec) -> float:
    """``(P_c - P_n) / (P_c + P_n)`` for corner c1 and its neighbour n along y.

    A working non-diagonal pump localizes the charge on the corner (ratio near 1); a
    failed one spreads it along the whole edge (ratio near 0).
    """
    i, j = lattice.coords(lattice.corners[0])
    a = p1[lattice.corners[0]]
    b = p1[lattice.site(i, j + 1 if j + 1 < lattice.n_side else j - 1)]
    return float((a - b) / (a + b))


def period_scan(
    h0_values,
    t0_grid,
    j0: float = 3.0,
    n_side: int = 4,
    propagator: PropagatorConfig = PropagatorConfig(),
    steps_per_period: int | None = 1000,
    budget_seconds: float | None = None,
    eigs: EigsConfig = EigsConfig(),
) -> dict[float, np.ndarray]:
    """Corner contrast at ``T0/2`` for the non-diagonal pump, per h0 (MHz) over T0 (ns).

    With ``steps_per_period`` set, the step grows to ``T0 / steps_per_period`` when that
    exceeds ``propagator.dt``; the Krylov error control still splits each step as needed.
    """
    lattice = build_lattice(n_side)
    sector = Sector(lattice.n_sites, lattice.n_sites // 2)
    deadline = None if budget_seconds is None else time.monotonic() + budget_seconds
    out = {}
    for h0 in h0_values:
        row = []
        for t0 in t0_grid:
            if deadline is not None and time.monotonic() > deadline:
                raise BudgetExceeded(f"period scan stopped before h0={h0}, T0={t0} ns")
            prop = propagator
            if steps_per_period and t0 / steps_per_period > propagator.dt:
                prop = PropagatorConfig(t0 / steps_per_period, propagator.krylov_dim, propagator.tol)
            rec = run_pump(lattice, PumpSchedule("nondiag", j0, float(h0), float(t0)), sector, prop,
                           sample_every=t0 / 2, span="half", eigs=eigs)
            row.append(corner_contrast(rec.sample_at(t0 / 2), lattice))
            log.info("h0=%g T0=%g dP=%.4f", h0, t0, row[-1])
        out[float(h0)] = np.array(row)
    return out


# -- two-qubit coupling through a coupler ------------------------------------------------------


def effective_coupling(g12: float, g1c: float, g2c: float, w1: float, w2: float, wc: float) -> float:
    """Coupler-mediated exchange ``g12 + g1c*g2c/2 * (1/(w1-wc) + 1/(w2-wc))`` in MHz."""
    if w1 == wc or w2 == wc:
        raise DomainError("qubit resonant with the coupler: dispersive formula diverges")
    return g12 + 0.5 * g1c * g2c * (1.0 / (w1 - wc) + 1.0 / (w2 - wc))
