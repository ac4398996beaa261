"""Pump schedules, the time-evolution driver and corner-charge extraction.

The hopping is modulated as ``J(lam) = J0 * (1 + cos lam)`` on inter-cell bonds and
``2*J0 - J(lam)`` on intra-cell bonds, so ``J0`` is the cosine amplitude of the
modulation and each intra/inter pair sums to ``2*J0``. The on-site amplitude is
``h(lam) = h0 * sin lam`` and ``lam(t) = pi - 2*pi*t/T0``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .errors import DomainError, NumericalError, UsageError
from .fock import Sector, occupations
from .hamiltonian import OperatorFamily, build_obc, empty_terms
from .lattice import LatticeSpec, Variant, sign_pattern
from .solver import EigsConfig, PropagatorConfig, ground_state, propagate_step

Span = Literal["half", "full"]


def lambda_of_t(t: float, T0: float) -> float:
    if T0 <= 0:
        raise DomainError("pump period must be positive")
    return math.pi - 2 * math.pi * t / T0


@dataclass(frozen=True)
class PumpSchedule:
    variant: Variant = "diag"
    j0: float = 3.0  # MHz
    h0: float = 10.0  # MHz
    t0: float = 500.0  # ns

    def __post_init__(self):
        if self.variant not in ("diag", "nondiag"):
            raise DomainError(f"unknown variant {self.variant!r}")
        if self.j0 < 0 or self.t0 <= 0:
            raise DomainError("need j0 >= 0 and t0 > 0")

    @property
    def bond_sum(self) -> float:
        return 2 * self.j0

    def hopping(self, lam: float) -> float:
        return self.j0 * (1 + math.cos(lam))

    def onsite(self, lam: float) -> float:
        return self.h0 * math.sin(lam)

    def at_time(self, t: float) -> tuple[float, float]:
        lam = lambda_of_t(t, self.t0)
        return self.hopping(lam), self.onsite(lam)


class PumpDriver:
    """Fixed-pattern Hamiltonian family ``H(J, h)`` for one lattice, sector and variant.

    With ``corner_links`` the four corner links of strength ``link_sign * J`` are added
    (corner-periodic boundaries). ``disorder`` is a vector of site energies in MHz.
    """

    def __init__(
        self,
        lattice: LatticeSpec,
        sector: Sector,
        variant: Variant,
        disorder: np.ndarray | None = None,
        corner_links: bool = False,
        link_sign: int = -1,
    ):
        self.lattice = lattice
        self.sector = sector
        self.variant = variant
        n = lattice.n_sites
        intra = empty_terms(n).with_hoppings((b.site_a, b.site_b, -1.0) for b in lattice.bonds_of("intra"))
        inter = empty_terms(n).with_hoppings((b.site_a, b.site_b, -1.0) for b in lattice.bonds_of("inter"))
        parts = {"intra": intra, "inter": inter}
        if corner_links:
            parts["links"] = empty_terms(n).with_hoppings(
                (b.site_a, b.site_b, float(link_sign)) for b in lattice.corner_links()
            )
        diags = {"onsite": sign_pattern(lattice, variant)}
        if disorder is not None:
            diags["disorder"] = np.asarray(disorder, float)
        self.has_links = corner_links
        self.has_disorder = disorder is not None
        self.family = OperatorFamily.from_terms(sector, parts, diags)

    def hamiltonian(self, J: float, J_sum: float, h: float):
        coeffs = {"intra": J_sum - J, "inter": J, "onsite": h}
        if self.has_links:
            coeffs["links"] = J
        if self.has_disorder:
            coeffs["disorder"] = 1.0
        return self.family.combine(coeffs)

    def at_lambda(self, schedule: PumpSchedule, lam: float):
        return self.hamiltonian(schedule.hopping(lam), schedule.bond_sum, schedule.onsite(lam))


def plaquette_target_amplitudes() -> dict[int, float]:
    """Ground state of a half-filled hard-core plaquette, keyed by 4-bit local bitmask.

    Local sites: 0=(0,0), 1=(1,0), 2=(0,1), 3=(1,1). Edge-sharing pairs carry 1/sqrt(8),
    the two diagonal pairs 1/2.
    """
    amps = {}
    for bits in range(16):
        if bin(bits).count("1") != 2:
            continue
        amps[bits] = 0.5 if bits in (0b1001, 0b0110) else 1 / math.sqrt(8)
    return amps


def plaquette_product_state(lattice: LatticeSpec, sector: Sector) -> np.ndarray:
    """Tensor product of the plaquette target state over all 2x2 unit cells."""
    n = lattice.n_side
    amps = plaquette_target_amplitudes()
    psi = np.ones(sector.dim, dtype=complex)
    for q in range(0, n, 2):
        for p in range(0, n, 2):
            sites = [lattice.site(p, q), lattice.site(p + 1, q), lattice.site(p, q + 1), lattice.site(p + 1, q + 1)]
            local = np.zeros(sector.dim, dtype=np.int64)
            for bit, s in enumerate(sites):
                local |= ((sector.states >> np.uint64(s)) & np.uint64(1)).astype(np.int64) << bit
            psi *= np.array([amps.get(int(b), 0.0) for b in range(16)])[local]
    return psi


def initial_ground_state(
    lattice: LatticeSpec,
    schedule: PumpSchedule,
    sector: Sector,
    disorder: np.ndarray | None = None,
    eigs: EigsConfig = EigsConfig(),
) -> np.ndarray:
    """Ground state of ``H(lam = pi)``: decoupled plaquettes, zero on-site amplitude."""
    driver = PumpDriver(lattice, sector, schedule.variant, disorder)
    return ground_state(driver.at_lambda(schedule, math.pi), eigs).psi


@dataclass
class PumpRecord:
    times: np.ndarray
    p1: np.ndarray  # (n_samples, n_sites)
    corners: tuple[int, int, int, int]
    schedule: PumpSchedule
    effective_dt: float
    norm_drift_max: float
    norm_drift_total: float
    seed: int | None = None
    disorder: np.ndarray | None = None
    valid: bool = True
    final_state: np.ndarray | None = field(default=None, repr=False)

    def sample_at(self, t: float) -> np.ndarray:
        idx = np.nonzero(np.isclose(self.times, t, atol=1e-9))[0]
        if not len(idx):
            raise UsageError(f"record has no sample at t={t} ns")
        return self.p1[idx[0]]

    def corner_trajectories(self) -> np.ndarray:
        return self.p1[:, list(self.corners)]

    def summary(self) -> dict:
        dq_i, dq = corner_delta_q(self)
        return {
            "delta_q": dq,
            "delta_q_corners": [float(x) for x in dq_i],
            "schedule": asdict(self.schedule),
            "seed": self.seed,
            "norm_drift_max": self.norm_drift_max,
            "effective_dt_ns": self.effective_dt,
            "valid": self.valid,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_ns"] + [f"p1_s{s}" for s in range(self.p1.shape[1])])
        for t, row in zip(self.times, self.p1):
            w.writerow([f"{t:.12g}"] + [f"{x:.12g}" for x in row])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def with_shot_noise(self, shots: int, seed: int = 0) -> "PumpRecord":
        """Copy with each probability replaced by a binomial estimate from ``shots`` readouts."""
        rng = np.random.default_rng(seed)
        noisy = rng.binomial(shots, np.clip(self.p1, 0, 1)) / shots
        out = PumpRecord(**{**self.__dict__, "p1": noisy})
        return out


def corner_delta_q(record: PumpRecord) -> tuple[np.ndarray, float]:
    """Signed corner changes between t=0 and t=T0/2 and ``dq = 2 * mean_i |dq_i|``."""
    start = record.sample_at(0.0)
    half = record.sample_at(record.schedule.t0 / 2)
    dq_i = half[list(record.corners)] - start[list(record.corners)]
    return dq_i, float(2 * np.mean(np.abs(dq_i)))


def _steps_per_sample(sample_every: float, dt: float) -> tuple[int, float]:
    steps = max(1, math.ceil(sample_every / dt - 1e-9))
    return steps, sample_every / steps


def run_pump(
    lattice: LatticeSpec,
    schedule: PumpSchedule,
    sector: Sector,
    propagator: PropagatorConfig = PropagatorConfig(),
    sample_every: float = 10.0,
    span: Span = "half",
    disorder: np.ndarray | None = None,
    seed: int | None = None,
    psi0: np.ndarray | None = None,
    eigs: EigsConfig = EigsConfig(),
) -> PumpRecord:
    """Evolve the t=0 ground state under ``H(lam(t))`` with open boundaries.

    Over each step ``[t, t+dt]`` the Hamiltonian is frozen at ``t + dt/2``.
    ``disorder`` (site energies in MHz) is present during the whole evolution and in
    the Hamiltonian whose ground state is the initial state.
    """
    t_end = schedule.t0 if span == "full" else schedule.t0 / 2
    n_samples = t_end / sample_every
    if abs(n_samples - round(n_samples)) > 1e-9:
        raise UsageError("sample_every must divide the evolved time span")
    n_samples = int(round(n_samples))
    steps, dt = _steps_per_sample(sample_every, propagator.dt)

    driver = PumpDriver(lattice, sector, schedule.variant, disorder)
    psi = psi0 if psi0 is not None else ground_state(driver.at_lambda(schedule, math.pi), eigs).psi
    times = [0.0]
    p1 = [occupations(psi, sector)]
    drift_max = drift_total = 0.0
    eff_dt = dt
    valid = True
    try:
        for k in range(n_samples):
            for s in range(steps):
                t_mid = (k * steps + s + 0.5) * dt
                H = driver.at_lambda(schedule, lambda_of_t(t_mid, schedule.t0))
                psi, info = propagate_step(psi, H, propagator, dt)
                drift_max = max(drift_max, info.norm_drift)
                drift_total += info.norm_drift
                eff_dt = min(eff_dt, info.effective_dt)
            times.append((k + 1) * sample_every)
            p1.append(occupations(psi, sector))
    except NumericalError:
        valid = False
    return PumpRecord(
        times=np.array(times),
        p1=np.array(p1),
        corners=lattice.corners,
        schedule=schedule,
        effective_dt=eff_dt,
        norm_drift_max=drift_max,
        norm_drift_total=drift_total,
        seed=seed,
        disorder=None if disorder is None else np.asarray(disorder),
        valid=valid,
        final_state=psi,
    )


@dataclass(frozen=True)
class PrepProtocol:
    detuning_start: float = -21.0  # MHz, the two initially excited sites
    detuning_end: float = 0.0
    coupling_start: float = 0.0  # MHz
    coupling_end: float = 6.0
    shape: Literal["linear"] = "linear"


def _plaquette_prep_driver():
    from .lattice import build_lattice

    lat = build_lattice(2)
    sector = Sector(4, 2)
    hop = build_obc(lat, 0.0, 1.0)  # unit intra hopping on all four bonds, amplitude -1
    fam = OperatorFamily.from_terms(sector, {"hop": hop}, {"det": np.array([0.0, 1.0, 1.0, 0.0])})
    return lat, sector, fam


def simulate_preparation(
    prep: PrepProtocol = PrepProtocol(),
    duration: float = 200.0,
    dt: float = 0.5,
    sample_every: float | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Adiabatic plaquette preparation; returns (times, fidelity, max fidelity).

    Starts with the two anti-diagonal sites (1,0), (0,1) occupied, ramps their
    detuning and the plaquette coupling linearly over ``duration`` and records
    ``|<psi_tgt|psi(t)>|``.
    """
    lat, sector, fam = _plaquette_prep_driver()
    target = plaquette_product_state(lat, sector)
    psi = sector.basis_vector(0b0110)
    sample_every = sample_every or max(dt, duration / 100) if duration > 0 else dt
    times = [0.0]
    fid = [abs(np.vdot(target, psi))]
    if duration <= 0:
        return np.array(times), np.array(fid), fid[0]
    n_steps = max(1, math.ceil(duration / dt))
    step = duration / n_steps
    cfg = PropagatorConfig(dt=step, krylov_dim=sector.dim)
    next_sample = sample_every
    for k in range(n_steps):
        x = (k + 0.5) * step / duration
        det = prep.detuning_start + x * (prep.detuning_end - prep.detuning_start)
        J = prep.coupling_start + x * (prep.coupling_end - prep.coupling_start)
        psi, _ = propagate_step(psi, fam.combine({"hop": J, "det": det}), cfg)
        t = (k + 1) * step
        if t >= next_sample - 1e-9 or k == n_steps - 1:
            times.append(t)
            fid.append(abs(np.vdot(target, psi)))
            next_sample += sample_every
    fid = np.array(fid)
    return np.array(times), fid, float(fid.max())
