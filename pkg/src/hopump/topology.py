"""Higher-order Zak phases, Chern windings and corner currents under corner-periodic boundaries.

The flux twist at corner ``i`` is ``H_i(theta) = H_obc + exp(-i theta n_i) H_links exp(i theta n_i)``.
Berry phases are evaluated as gauge-invariant Wilson loops
``gamma = -Im ln prod_m <psi(theta_m)|psi(theta_{m+1})>``, which converges to
``i * oint <psi|d_theta psi>``. Windings are taken along the pump's time direction
(``lam`` decreasing from pi), so the corner charge change is ``-delta_gamma / 2pi``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError
from .fock import Sector
from .hamiltonian import OperatorFamily, hop_triplets
from .lattice import LatticeSpec, Variant, sign_pattern
from .pump import PumpSchedule, lambda_of_t
from .solver import EigsConfig, PHASE_PER_MHZ_NS, PropagatorConfig, expectation, ground_state, propagate_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ZakGrid:
    n_theta: int = 32
    n_lambda: int = 48
    eigs: EigsConfig = EigsConfig()
    min_overlap: float = 0.5

    def __post_init__(self):
        if self.n_theta < 8:
            raise DomainError("n_theta must be >= 8")
        if self.n_lambda < 12:
            raise DomainError("n_lambda must be >= 12")


def wilson_phase(states) -> tuple[float, float]:
    """Discrete Berry phase of a closed loop of states and the smallest overlap magnitude.

    The loop closes from the last state back to the first.
    """
    prod = 1.0 + 0j
    smallest = np.inf
    n = len(states)
    for m in range(n):
        ov = np.vdot(states[m], states[(m + 1) % n])
        smallest = min(smallest, abs(ov))
        prod *= ov / abs(ov) if ov != 0 else 0
    if prod == 0:
        raise NumericalError("orthogonal neighbouring states in Wilson loop")
    return float(-np.angle(prod)), float(smallest)


class CornerTwistFamily:
    """Sparse family for ``H_i(theta)`` at all four corners on one sector.

    Parts: bulk hoppings split by class, on-site sign pattern, optional disorder,
    and per corner the link operator ``IN_i = sum_nbr s*adag_{c_i} a_nbr`` plus the
    remaining (untwisted) corner links.
    """

    def __init__(self, lattice: LatticeSpec, sector: Sector, variant: Variant, link_sign: int = -1, disorder=None):
        self.lattice = lattice
        self.sector = sector
        self.link_sign = link_sign
        n = lattice.n_sites
        trip = {
            "intra": hop_triplets([(b.site_a, b.site_b, -1.0) for b in lattice.bonds_of("intra")], sector),
            "inter": hop_triplets([(b.site_a, b.site_b, -1.0) for b in lattice.bonds_of("inter")], sector),
        }
        idx = np.arange(sector.dim, dtype=np.int64)
        occ = sector.occupation_matrix
        trip["onsite"] = (idx, idx, (occ @ sign_pattern(lattice, variant)).astype(complex))
        self.has_disorder = disorder is not None
        if disorder is not None:
            trip["disorder"] = (idx, idx, (occ @ np.asarray(disorder, float)).astype(complex))
        links = lattice.corner_links()
        c = lattice.corners
        for i in range(4):
            touching = [(c[i], b.site_b if b.site_a == c[i] else b.site_a, float(link_sign))
                        for b in links if c[i] in (b.site_a, b.site_b)]
            rest = [(b.site_a, b.site_b, float(link_sign)) for b in links if c[i] not in (b.site_a, b.site_b)]
            r, cc, v = hop_triplets(touching, sector, hermitian=False)
            trip[f"in{i}"] = (r, cc, v)
            trip[f"out{i}"] = (cc, r, v.conj())
            trip[f"rest{i}"] = hop_triplets(rest, sector)
        self.family = OperatorFamily(sector, trip)

    def hamiltonian(self, J: float, J_sum: float, h: float, corner: int, theta: float):
        """``corner`` is 0-based here (c1 -> 0)."""
        ph = np.exp(-1j * theta)
        coeffs = {
            "intra": J_sum - J,
            "inter": J,
            "onsite": h,
            f"in{corner}": J * ph,
            f"out{corner}": J * np.conj(ph),
            f"rest{corner}": J,
        }
        if self.has_disorder:
            coeffs["disorder"] = 1.0
        return self.family.combine(coeffs)

    def current(self, J: float, corner: int):
        """``d H_i / d theta`` at theta = 0: ``-i J (IN_i - IN_i^dag)``."""
        return self.family.combine({f"in{corner}": -1j * J, f"out{corner}": 1j * J})


def _zak_loop(fam: CornerTwistFamily, J, J_sum, h, corner, grid: ZakGrid, v0=None):
    thetas = 2 * np.pi * np.arange(grid.n_theta) / grid.n_theta
    states, gaps = [], []
    for m, th in enumerate(thetas):
        # the gap is only tracked at theta = 0; the flux loop barely moves it
        gs = ground_state(fam.hamiltonian(J, J_sum, h, corner, th), grid.eigs, v0=v0, with_gap=m == 0)
        v0 = gs.psi
        states.append(gs.psi)
        if m == 0:
            gaps.append(gs.gap)
    gamma, smallest = wilson_phase(states)
    return gamma, smallest, float(min(gaps)), states[0]


def zak_phase(
    lattice: LatticeSpec,
    sector: Sector,
    J: float,
    J_sum: float,
    h: float,
    variant: Variant,
    corner_i: int,
    grid: ZakGrid = ZakGrid(),
    link_sign: int = -1,
    family: CornerTwistFamily | None = None,
) -> float:
    """Higher-order Zak phase at corner ``corner_i`` (1..4), in (-pi, pi]."""
    if corner_i not in (1, 2, 3, 4):
        raise DomainError("corner_i must be 1..4")
    fam = family or CornerTwistFamily(lattice, sector, variant, link_sign)
    gamma, smallest, gap, _ = _zak_loop(fam, J, J_sum, h, corner_i - 1, grid)
    if smallest < grid.min_overlap:
        raise NumericalError(f"Wilson-loop overlap {smallest:.3f} below {grid.min_overlap}: refine the theta grid")
    if gap < 10 * grid.eigs.tol:
        log.warning("ground-state gap %.3g MHz collapsed on the flux loop", gap)
    return _wrap(gamma)


def _wrap(x: float) -> float:
    y = math.remainder(x, 2 * math.pi)
    return math.pi if y == -math.pi else y


@dataclass
class ZakProfile:
    lambdas: np.ndarray  # time-ordered: pi, pi - 2pi/n, ..., -pi
    gammas: np.ndarray  # (n_lambda + 1, 4), unwrapped along the pump
    min_overlap: float
    min_gap: float
    max_step: float  # largest |gamma| jump between neighbouring lambda points
    schedule: PumpSchedule | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "gamma_c1", "gamma_c2", "gamma_c3", "gamma_c4"])
        for lam, g in zip(self.lambdas, self.gammas):
            w.writerow([f"{lam:.12g}"] + [f"{x:.12g}" for x in g])
        return buf.getvalue()


def zak_profile(
    lattice: LatticeSpec,
    sector: Sector,
    schedule: PumpSchedule,
    grid: ZakGrid = ZakGrid(),
    link_sign: int = -1,
    corners=(1, 2, 3, 4),
    disorder=None,
) -> ZakProfile:
    """Zak phases of the listed corners over one pump cycle, unwrapped in time order."""
    fam = CornerTwistFamily(lattice, sector, schedule.variant, link_sign, disorder)
    lambdas = math.pi - 2 * math.pi * np.arange(grid.n_lambda + 1) / grid.n_lambda
    raw = np.full((grid.n_lambda, 4), np.nan)
    min_ov, min_gap = np.inf, np.inf
    warm = {}
    for m, lam in enumerate(lambdas[:-1]):
        J, h = schedule.hopping(lam), schedule.onsite(lam)
        for ci in corners:
            gamma, ov, gap, first = _zak_loop(fam, J, schedule.bond_sum, h, ci - 1, grid, warm.get(ci))
            warm[ci] = first
            raw[m, ci - 1] = gamma
            min_ov, min_gap = min(min_ov, ov), min(min_gap, gap)
        log.debug("lambda=%.4f gamma=%s", lam, raw[m])
    closed = np.vstack([raw, raw[:1]])
    steps = np.abs(np.angle(np.exp(1j * np.diff(closed, axis=0))))
    max_step = float(np.nanmax(steps)) if np.isfinite(steps).any() else 0.0
    gammas = np.unwrap(closed, axis=0)
    return ZakProfile(lambdas, gammas, float(min_ov), float(min_gap), max_step, schedule)


@dataclass
class ChernResult:
    chern: tuple[int, int, int, int]
    windings: np.ndarray
    residual: float
    gap_closed: bool
    min_gap: float
    min_overlap: float
    profile: ZakProfile = field(repr=False, default=None)

    def to_json(self) -> str:
        return json.dumps(
            {
                "chern": list(self.chern),
                "windings": [float(w) for w in self.windings],
                "residual": self.residual,
                "gap_closed": self.gap_closed,
                "min_gap_mhz": self.min_gap,
                "min_overlap": self.min_overlap,
            },
            indent=2,
            sort_keys=True,
        )


def chern_from_profile(profile: ZakProfile, tol: float = 1e-10, max_residual: float = 0.05) -> ChernResult:
    windings = (profile.gammas[-1] - profile.gammas[0]) / (2 * math.pi)
    chern = np.rint(windings)
    # A closed, unwrapped loop always winds an integer number of times, so the residual
    # measures stability instead: the same winding read off every other lambda point.
    n = len(profile.gammas) - 1
    idx = list(range(0, n + 1, 2))
    if idx[-1] != n:
        idx.append(n)
    coarse = np.sum(np.angle(np.exp(1j * np.diff(profile.gammas[idx], axis=0))), axis=0) / (2 * math.pi)
    residual = float(np.max(np.abs(np.concatenate([windings - chern, coarse - chern]))))
    # a jump of ~pi between neighbouring points cannot be assigned a direction
    gap_closed = profile.min_gap < 10 * tol or profile.max_step > 0.9 * math.pi
    if profile.min_overlap < 0.5 and not gap_closed:
        raise NumericalError(f"Wilson-loop overlap {profile.min_overlap:.3f} < 0.5: refine the theta grid")
    if residual >= max_residual and not gap_closed:
        raise NumericalError(f"winding residual {residual:.3f} >= {max_residual}: refine the lambda grid", residual)
    return ChernResult(
        tuple(int(c) for c in chern), windings, residual, bool(gap_closed), profile.min_gap, profile.min_overlap, profile
    )


def chern_numbers(
    lattice: LatticeSpec, sector: Sector, schedule: PumpSchedule, grid: ZakGrid = ZakGrid(), link_sign: int = -1
) -> ChernResult:
    profile = zak_profile(lattice, sector, schedule, grid, link_sign)
    return chern_from_profile(profile, grid.eigs.tol)


def delta_q_from_zak(profile: ZakProfile, lam_start: float, lam_end: float) -> np.ndarray:
    """Corner charge change ``-(gamma(lam_end) - gamma(lam_start)) / 2pi`` in pump order.

    ``lam_start`` and ``lam_end`` must be grid points, with ``lam_end <= lam_start``
    (the pump runs toward decreasing ``lam``).
    """

    def locate(lam):
        idx = np.nonzero(np.isclose(profile.lambdas, lam, atol=1e-9))[0]
        if not len(idx):
            raise DomainError(f"lambda={lam} is not on the profile grid")
        return idx[0]

    a, b = locate(lam_start), locate(lam_end)
    if b < a:
        raise DomainError("lam_end must not precede lam_start along the pump")
    return -(profile.gammas[b] - profile.gammas[a]) / (2 * math.pi)


def transport_current(lattice: LatticeSpec, sector: Sector, corner_i: int, J: float, link_sign: int = -1):
    """Corner current operator ``d H_i / d theta |_0`` (MHz), Hermitian and traceless."""
    n = lattice.n_sites
    c = lattice.corners[corner_i - 1]
    touching = [(c, b.site_b if b.site_a == c else b.site_a, float(link_sign) * J)
                for b in lattice.corner_links() if c in (b.site_a, b.site_b)]
    r, cc, v = hop_triplets(touching, sector, hermitian=False)
    fam = OperatorFamily(sector, {"in": (r, cc, v), "out": (cc, r, v.conj())})
    return fam.combine({"in": -1j, "out": 1j})


def current_charge_transfer(
    lattice: LatticeSpec,
    sector: Sector,
    schedule: PumpSchedule,
    propagator: PropagatorConfig = PropagatorConfig(),
    span: str = "half",
    link_sign: int = -1,
    eigs: EigsConfig = EigsConfig(),
) -> np.ndarray:
    """Time integral of the four corner currents along a corner-periodic pump.

    Returns ``int 2pi * 1e-3 * <J_i(t)> dt`` (t in ns) with ``J_i = dH/dtheta_i``.
    Over a half cycle this tracks ``C_i / 2`` from the Zak winding, so it equals
    ``-dq_i`` of the open-boundary corner occupations.
    """
    fam = CornerTwistFamily(lattice, sector, schedule.variant, link_sign)
    t_end = schedule.t0 if span == "full" else schedule.t0 / 2
    n_steps = max(1, math.ceil(t_end / propagator.dt - 1e-9))
    dt = t_end / n_steps

    def H_at(t):
        lam = lambda_of_t(t, schedule.t0)
        return fam.hamiltonian(schedule.hopping(lam), schedule.bond_sum, schedule.onsite(lam), 0, 0.0)

    def currents(t, psi):
        J = schedule.hopping(lambda_of_t(t, schedule.t0))
        return np.array([expectation(fam.current(J, i), psi) for i in range(4)])

    psi = ground_state(H_at(0.0), eigs).psi
    total = np.zeros(4)
    prev = currents(0.0, psi)
    for k in range(n_steps):
        psi, _ = propagate_step(psi, H_at((k + 0.5) * dt), propagator, dt)
        cur = currents((k + 1) * dt, psi)
        total += 0.5 * (prev + cur) * dt * PHASE_PER_MHZ_NS
        prev = cur
    return total
