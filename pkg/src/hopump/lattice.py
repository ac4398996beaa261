"""Square superlattice geometry: sites, staggered bonds, on-site sign patterns, corners.

Sites are indexed ``s = i + n_side * j`` for integer grid coordinates ``(i, j)``.
Bonds starting at an even coordinate are intra-cell, bonds starting at an odd
coordinate are inter-cell, identically along both axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigurationError, DomainError

Variant = Literal["diag", "nondiag"]
BondClass = Literal["intra", "inter", "corner_link"]

MAX_SITES = 64


@dataclass(frozen=True)
class Bond:
    site_a: int
    site_b: int
    axis: Literal["x", "y", "corner"]
    kind: BondClass


@dataclass(frozen=True)
class LatticeSpec:
    n_side: int
    bonds: tuple[Bond, ...] = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.n_side * self.n_side

    @property
    def half_width(self) -> float:
        """Offset D between grid indices and centred coordinates (x = i - D)."""
        return (self.n_side - 1) / 2

    def site(self, i: int, j: int) -> int:
        if not (0 <= i < self.n_side and 0 <= j < self.n_side):
            raise DomainError(f"grid point ({i}, {j}) outside {self.n_side}x{self.n_side} lattice")
        return i + self.n_side * j

    def coords(self, s: int) -> tuple[int, int]:
        if not 0 <= s < self.n_sites:
            raise DomainError(f"site {s} out of range")
        return s % self.n_side, s // self.n_side

    @property
    def corners(self) -> tuple[int, int, int, int]:
        """Corner sites c1..c4: (0,0), (0,n-1), (n-1,n-1), (n-1,0), counterclockwise from c1."""
        m = self.n_side - 1
        return (self.site(0, 0), self.site(0, m), self.site(m, m), self.site(m, 0))

    def corner_links(self) -> tuple[Bond, ...]:
        c = self.corners
        return tuple(Bond(c[q], c[(q + 1) % 4], "corner", "corner_link") for q in range(4))

    def bonds_of(self, kind: BondClass) -> list[Bond]:
        return [b for b in self.bonds if b.kind == kind]

    def rotate_site(self, s: int) -> int:
        """C4 rotation (i, j) -> (j, n-1-i); carries corner c_k to c_{k+1}."""
        i, j = self.coords(s)
        return self.site(j, self.n_side - 1 - i)

    def rotation_permutation(self) -> np.ndarray:
        return np.array([self.rotate_site(s) for s in range(self.n_sites)])

    def reflect_y_permutation(self) -> np.ndarray:
        """Mirror j -> n-1-j."""
        return np.array(
            [self.site(i, self.n_side - 1 - j) for i, j in map(self.coords, range(self.n_sites))]
        )


def build_lattice(n_side: int = 4) -> LatticeSpec:
    if not isinstance(n_side, (int, np.integer)) or isinstance(n_side, bool):
        raise ConfigurationError(f"n_side must be an integer, got {n_side!r}")
    if n_side < 2 or n_side % 2 or n_side * n_side > MAX_SITES:
        raise ConfigurationError(
            f"n_side must be even with 2 <= n_side and n_side**2 <= {MAX_SITES}, got {n_side}"
        )
    n = int(n_side)
    bonds = []
    for j in range(n):
        for i in range(n - 1):
            bonds.append(Bond(i + n * j, i + 1 + n * j, "x", "intra" if i % 2 == 0 else "inter"))
    for i in range(n):
        for j in range(n - 1):
            bonds.append(Bond(i + n * j, i + n * (j + 1), "y", "intra" if j % 2 == 0 else "inter"))
    return LatticeSpec(n, tuple(bonds))


def bond_amplitude(bond: Bond, J: float, J0: float) -> float:
    """Hopping magnitude of a bond when the intra/inter pair sums to ``J0``.

    Intra-cell bonds carry ``J0 - J``; inter-cell bonds and corner links carry ``J``.
    """
    if J < 0 or J > J0 + 1e-12 * max(1.0, abs(J0)):
        raise DomainError(f"J={J} outside [0, J0={J0}]")
    if bond.kind == "intra":
        return J0 - J
    return J


def site_sign(lattice: LatticeSpec, s: int, variant: Variant) -> int:
    """Sign multiplying ``h`` in the on-site term ``h * sign(s) * n_s``.

    diag: -1 on sites with ``i + j`` even (c1, c3 lowered for h > 0).
    nondiag: -1 on even columns (left corners c1, c2 lowered for h > 0).
    """
    i, j = lattice.coords(s)
    if variant == "diag":
        return -1 if (i + j) % 2 == 0 else 1
    if variant == "nondiag":
        return -1 if i % 2 == 0 else 1
    raise ConfigurationError(f"unknown variant {variant!r}")


def sign_pattern(lattice: LatticeSpec, variant: Variant) -> np.ndarray:
    return np.array([site_sign(lattice, s, variant) for s in range(lattice.n_sites)], dtype=float)
