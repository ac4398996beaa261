"""Hard-core boson Fock space with fixed particle number.

Basis states are occupation bitmasks (bit ``s`` set means site ``s`` is occupied),
ordered by increasing integer value. For a fixed popcount that order is the
colexicographic order of the occupied-site sets, so the dense index of a state is
its rank in the combinatorial number system and can be computed without a table.
"""

from __future__ import annotations

from functools import cached_property
from itertools import combinations
from math import comb

import numpy as np

from .errors import DomainError


class Sector:
    """All ``C(n_sites, k)`` bitmasks with ``k`` set bits, in ascending order."""

    def __init__(self, n_sites: int, k: int):
        if not 0 <= n_sites <= 64:
            raise DomainError(f"n_sites={n_sites} not in [0, 64]")
        if not 0 <= k <= n_sites:
            raise DomainError(f"particle number k={k} not in [0, {n_sites}]")
        self.n_sites = n_sites
        self.k = k
        self._binom = np.array(
            [[comb(s, t) for t in range(k + 2)] for s in range(n_sites + 1)], dtype=np.uint64
        )
        self.states = self._enumerate()

    def _enumerate(self) -> np.ndarray:
        dim = comb(self.n_sites, self.k)
        states = np.empty(dim, dtype=np.uint64)
        # colex order of subsets == ascending bitmask order
        for m, occ in enumerate(combinations(range(self.n_sites), self.k)):
            states[m] = sum(1 << s for s in occ)
        states.sort()
        return states

    def __len__(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def __repr__(self) -> str:
        return f"Sector(n_sites={self.n_sites}, k={self.k}, dim={self.dim})"

    def index(self, bits):
        """Dense index of one bitmask or an array of bitmasks (combinatorial rank)."""
        scalar = np.ndim(bits) == 0
        b = np.atleast_1d(np.asarray(bits, dtype=np.uint64))
        rank = np.zeros(b.shape, dtype=np.uint64)
        seen = np.zeros(b.shape, dtype=np.int64)
        for s in range(self.n_sites):
            bit = ((b >> np.uint64(s)) & np.uint64(1)).astype(bool)
            # next set bit is the (seen+1)-th: contributes C(s, seen+1)
            rank[bit] += self._binom[s, np.minimum(seen[bit] + 1, self.k + 1)]
            seen += bit
        if np.any(seen != self.k):
            raise DomainError("bitmask not in this particle-number sector")
        rank = rank.astype(np.int64)
        return int(rank[0]) if scalar else rank

    @cached_property
    def occupation_matrix(self) -> np.ndarray:
        """``occ[m, s] = 1`` if site ``s`` is occupied in basis state ``m``."""
        shifts = np.arange(self.n_sites, dtype=np.uint64)
        return ((self.states[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.float64)

    def basis_vector(self, bits: int) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(bits)] = 1.0
        return psi


def enumerate_sector(n_sites: int, k: int) -> Sector:
    return Sector(n_sites, k)


def hop_element(bits: int, src: int, dst: int) -> int | None:
    """Move a boson from ``src`` to ``dst``; amplitude is +1 (no exchange sign).

    Returns ``None`` when ``src`` is empty or ``dst`` is occupied.
    """
    if src == dst:
        raise DomainError("hop requires distinct sites")
    if not (bits >> src) & 1 or (bits >> dst) & 1:
        return None
    return bits ^ ((1 << src) | (1 << dst))


def occupations(psi: np.ndarray, sector: Sector) -> np.ndarray:
    """Site excitation probabilities ``P1[s] = <n_s>``."""
    prob = np.abs(np.asarray(psi)) ** 2
    return prob @ sector.occupation_matrix


def normalize(psi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise DomainError("cannot normalize the zero vector")
    return psi / norm
