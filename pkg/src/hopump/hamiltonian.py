"""Sector-restricted Hamiltonians for the hard-core superlattice model.

All matrix entries are linear frequencies in MHz. A hopping ``(a, b, amp)`` stands for
``amp * adag_a a_b + conj(amp) * adag_b a_a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, UsageError
from .fock import Sector
from .lattice import LatticeSpec, Variant, bond_amplitude, sign_pattern

Hopping = tuple[int, int, complex]

# Corner-link signs (c1c2, c2c3, c3c4, c4c1) used by the free-fermion gap surrogate.
# An odd number of negative links threads pi flux through the corner ring.
SURROGATE_CORNER_SIGNS = (-1, -1, -1, 1)


@dataclass(frozen=True)
class FluxSpec:
    corner_index: int  # 1..4
    theta: float

    def __post_init__(self):
        if self.corner_index not in (1, 2, 3, 4):
            raise DomainError(f"corner_index must be 1..4, got {self.corner_index}")


@dataclass(frozen=True)
class HamiltonianTerms:
    n_sites: int
    hoppings: tuple[Hopping, ...] = ()
    potentials: np.ndarray = field(default=None, repr=False)
    corner_links: tuple[int, ...] = ()  # positions in ``hoppings`` holding corner links

    def __post_init__(self):
        if self.potentials is None:
            object.__setattr__(self, "potentials", np.zeros(self.n_sites))

    def with_hoppings(self, extra: Iterable[Hopping]) -> "HamiltonianTerms":
        return replace(self, hoppings=self.hoppings + tuple(extra))

    def with_potentials(self, potentials: np.ndarray) -> "HamiltonianTerms":
        return replace(self, potentials=np.asarray(potentials, dtype=float))


def empty_terms(n_sites: int) -> HamiltonianTerms:
    return HamiltonianTerms(n_sites)


def build_obc(lattice: LatticeSpec, J: float, J0: float) -> HamiltonianTerms:
    """Open-boundary staggered hopping, ``-bond_amplitude`` on every bond."""
    hops = tuple((b.site_a, b.site_b, complex(-bond_amplitude(b, J, J0))) for b in lattice.bonds)
    return HamiltonianTerms(lattice.n_sites, hops)


def add_onsite(terms: HamiltonianTerms, lattice: LatticeSpec, h: float, variant: Variant) -> HamiltonianTerms:
    return terms.with_potentials(terms.potentials + h * sign_pattern(lattice, variant))


def _link_signs(sign) -> tuple[int, int, int, int]:
    if np.ndim(sign) == 0:
        return (int(sign),) * 4
    signs = tuple(int(s) for s in sign)
    if len(signs) != 4:
        raise DomainError("corner-link sign pattern needs four entries")
    return signs


def add_corner_links(
    terms: HamiltonianTerms,
    lattice: LatticeSpec,
    J: float,
    sign: int | Sequence[int] = -1,
    flux: FluxSpec | None = None,
) -> HamiltonianTerms:
    """Append links c1-c2, c2-c3, c3-c4, c4-c1 with amplitude ``sign * J``."""
    if J < 0:
        raise DomainError(f"corner-link strength must be >= 0, got {J}")
    c = lattice.corners
    signs = _link_signs(sign)
    start = len(terms.hoppings)
    links = [(c[q], c[(q + 1) % 4], complex(signs[q] * J)) for q in range(4)]
    out = replace(
        terms,
        hoppings=terms.hoppings + tuple(links),
        corner_links=terms.corner_links + tuple(range(start, start + 4)),
    )
    return apply_flux(out, lattice, flux) if flux is not None else out


def apply_flux(terms: HamiltonianTerms, lattice: LatticeSpec, flux: FluxSpec) -> HamiltonianTerms:
    """Gauge-twist the corner links at one corner: ``exp(-i theta n_i) H^C exp(+i theta n_i)``."""
    if not terms.corner_links:
        raise UsageError("flux twist requires corner links")
    ci = lattice.corners[flux.corner_index - 1]
    hops = list(terms.hoppings)
    for pos in terms.corner_links:
        a, b, amp = hops[pos]
        if a == ci:  # creation at c_i
            amp = amp * np.exp(-1j * flux.theta)
        elif b == ci:  # annihilation at c_i
            amp = amp * np.exp(1j * flux.theta)
        hops[pos] = (a, b, amp)
    return replace(terms, hoppings=tuple(hops))


def add_disorder(terms: HamiltonianTerms, xi: np.ndarray, W: float) -> HamiltonianTerms:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (terms.n_sites,):
        raise DomainError(f"disorder vector must have shape ({terms.n_sites},)")
    if np.any(np.abs(xi) > 1):
        raise DomainError("disorder samples must lie in [-1, 1]")
    if W < 0:
        raise DomainError(f"disorder strength must be >= 0, got {W}")
    return terms.with_potentials(terms.potentials + W * xi)


def hop_triplets(hoppings: Sequence[Hopping], sector: Sector, hermitian: bool = True):
    """COO triplets of the off-diagonal part.

    With ``hermitian=False`` only ``amp * adag_a a_b`` is emitted, not its conjugate.
    """
    states = sector.states
    rows, cols, vals = [], [], []
    one = np.uint64(1)
    for a, b, amp in hoppings:
        if amp == 0:
            continue
        a_occ = ((states >> np.uint64(a)) & one).astype(bool)
        b_occ = ((states >> np.uint64(b)) & one).astype(bool)
        # amp * adag_a a_b: source has b occupied and a empty
        src = np.nonzero(b_occ & ~a_occ)[0]
        tgt = sector.index(states[src] ^ ((one << np.uint64(a)) | (one << np.uint64(b))))
        rows.append(tgt)
        cols.append(src)
        vals.append(np.full(len(src), amp, dtype=complex))
        if hermitian:
            rows.append(src)
            cols.append(tgt)
            vals.append(np.full(len(src), np.conj(amp), dtype=complex))
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, complex)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


class OperatorFamily:
    """Named sparse parts on one shared CSR pattern.

    ``combine({"name": coeff, ...})`` forms the linear combination by scaling data
    vectors only, so repeated evaluation along a pump path stays cheap.
    Parts may be non-Hermitian (e.g. one direction of a twisted link); the caller is
    responsible for Hermitian combinations.
    """

    def __init__(self, sector: Sector, parts: Mapping[str, tuple[np.ndarray, np.ndarray, np.ndarray]]):
        dim = sector.dim
        self.sector = sector
        diag = np.arange(dim, dtype=np.int64)
        all_keys = [diag * dim + diag] + [r * dim + c for r, c, _ in parts.values()]
        keys = np.unique(np.concatenate(all_keys))
        self.shape = (dim, dim)
        self.indices = (keys % dim).astype(np.int32)
        self.indptr = np.searchsorted(keys // dim, np.arange(dim + 1)).astype(np.int32)
        self.data: dict[str, np.ndarray] = {}
        for name, (r, c, v) in parts.items():
            d = np.zeros(len(keys), dtype=complex)
            np.add.at(d, np.searchsorted(keys, r * dim + c), v)
            self.data[name] = d

    @classmethod
    def from_terms(cls, sector: Sector, parts: Mapping[str, HamiltonianTerms], diagonals: Mapping[str, np.ndarray] = {}):
        """Build from hopping-only terms plus named on-site vectors (site potentials)."""
        trip = {}
        for name, terms in parts.items():
            trip[name] = hop_triplets(terms.hoppings, sector)
        idx = np.arange(sector.dim, dtype=np.int64)
        for name, pot in diagonals.items():
            trip[name] = (idx, idx, (sector.occupation_matrix @ np.asarray(pot, float)).astype(complex))
        return cls(sector, trip)

    def combine(self, coeffs: Mapping[str, complex], extra_diagonal: np.ndarray | None = None) -> sp.csr_matrix:
        data = np.zeros_like(next(iter(self.data.values())))
        for name, c in coeffs.items():
            if c != 0:
                data += c * self.data[name]
        if extra_diagonal is not None:
            data[self._diag_positions] += extra_diagonal
        return sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)

    @property
    def _diag_positions(self) -> np.ndarray:
        pos = getattr(self, "_diag_pos", None)
        if pos is None:
            rows = np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))
            pos = np.nonzero(rows == self.indices)[0]
            self._diag_pos = pos
        return pos


def assemble(terms: HamiltonianTerms, sector: Sector) -> sp.csr_matrix:
    """Hermitian sparse matrix of ``terms`` restricted to ``sector``."""
    if terms.n_sites != sector.n_sites:
        raise DomainError("terms and sector disagree on n_sites")
    fam = OperatorFamily.from_terms(sector, {"hop": terms}, {"pot": terms.potentials})
    return fam.combine({"hop": 1.0, "pot": 1.0})


def single_particle_matrix(terms: HamiltonianTerms) -> np.ndarray:
    """One-particle matrix ``M[a, b]`` of the same terms (equals the k=1 sector block)."""
    n = terms.n_sites
    m = np.zeros((n, n), dtype=complex)
    for a, b, amp in terms.hoppings:
        m[a, b] += amp
        m[b, a] += np.conj(amp)
    m[np.diag_indices(n)] += terms.potentials
    return m


def pump_terms(
    lattice: LatticeSpec,
    J: float,
    J0: float,
    h: float,
    variant: Variant,
    corner_links: bool = False,
    sign: int | Sequence[int] = -1,
    flux: FluxSpec | None = None,
) -> HamiltonianTerms:
    terms = add_onsite(build_obc(lattice, J, J0), lattice, h, variant)
    if corner_links:
        terms = add_corner_links(terms, lattice, J, sign, flux)
    elif flux is not None:
        raise UsageError("flux twist requires corner links")
    return terms


def pi_flux_gauge(lattice: LatticeSpec, terms: HamiltonianTerms) -> HamiltonianTerms:
    """Flip the sign of y-bonds in odd columns: pi flux through every elementary square."""
    n = lattice.n_side
    hops = []
    for pos, (a, b, amp) in enumerate(terms.hoppings):
        if pos not in terms.corner_links and b - a == n and (a % n) % 2 == 1:
            amp = -amp
        hops.append((a, b, amp))
    return replace(terms, hoppings=tuple(hops))


def surrogate_matrix(
    lattice: LatticeSpec,
    J: float,
    J0: float,
    h: float,
    variant: Variant,
    disorder: np.ndarray | None = None,
    corner_signs: Sequence[int] = SURROGATE_CORNER_SIGNS,
) -> np.ndarray:
    """Free-fermion (BBH-type) single-particle matrix under corner-periodic boundaries.

    Same staggered hoppings and potentials as the hard-core model, with pi flux per
    square plaquette and through the corner ring. ``disorder`` is added to the
    diagonal as site energies in MHz.
    """
    terms = pump_terms(lattice, J, J0, h, variant, corner_links=True, sign=corner_signs)
    terms = pi_flux_gauge(lattice, terms)
    if disorder is not None:
        terms = terms.with_potentials(terms.potentials + np.asarray(disorder, float))
    return single_particle_matrix(terms)


def is_hermitian(op, atol: float = 1e-12) -> bool:
    diff = op - op.conj().T
    if sp.issparse(diff):
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= atol
    return float(np.max(np.abs(diff), initial=0.0)) <= atol


def write_matrix_market(op: sp.spmatrix, path: str | Path) -> None:
    """Coordinate dump with 1-based ``row col re im`` lines, readable by ``scipy.io.mmread``."""
    coo = sp.coo_matrix(op)
    order = np.lexsort((coo.col, coo.row))
    lines = ["%%MatrixMarket matrix coordinate complex general", f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        lines.append(f"{r + 1} {c + 1} {v.real:.17g} {v.imag:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")
