"""Eigen- and propagation kernels for sector-restricted Hermitian operators.

Unit convention used everywhere: operators are in MHz (linear frequency), times in
ns, and one propagation step applies ``exp(-i * 2*pi * H * dt * 1e-3)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import DomainError, NumericalError

log = logging.getLogger(__name__)

PHASE_PER_MHZ_NS = 2 * np.pi * 1e-3


@dataclass(frozen=True)
class EigsConfig:
    tol: float = 1e-10
    max_iterations: int | None = None
    restart_dim: int | None = None  # ARPACK ncv
    seed: int = 0
    dense_cutoff: int = 64  # below this dimension use a dense solve

    def __post_init__(self):
        if self.tol <= 0:
            raise DomainError("eigensolver tolerance must be positive")


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float = 0.5  # ns
    krylov_dim: int = 20
    tol: float = 1e-10  # local error per step

    def __post_init__(self):
        if self.dt <= 0:
            raise DomainError("time step must be positive")
        if self.krylov_dim < 2:
            raise DomainError("krylov_dim must be >= 2")


@dataclass
class GroundState:
    energy: float
    psi: np.ndarray
    gap: float  # E1 - E0, inf for a one-dimensional space
    residual: float
    near_degenerate: bool = False


@dataclass
class StepInfo:
    norm_drift: float
    substeps: int = 1
    krylov_used: int = 0
    error_estimate: float = 0.0
    effective_dt: float = field(default=0.0)


def fix_gauge(psi: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the largest-magnitude amplitude is real and positive."""
    k = int(np.argmax(np.abs(psi)))
    out = psi * (np.abs(psi[k]) / psi[k])
    out[k] = abs(psi[k])  # exactly real, free of rounding in the imaginary part
    return out


def dense_hermitian_eigs(M, vectors: bool = False, atol: float = 1e-10):
    M = M.toarray() if sp.issparse(M) else np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError("matrix must be square")
    if M.size and np.max(np.abs(M - M.conj().T)) > atol:
        raise DomainError("matrix is not Hermitian")
    if vectors:
        return np.linalg.eigh(M)
    return np.linalg.eigvalsh(M)


def _residual(H, E, psi) -> float:
    return float(np.linalg.norm(H @ psi - E * psi))


def _start_vector(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim) + 1j * rng.standard_normal(dim)


def _arpack(H, k: int, cfg: EigsConfig, v0):
    dim = H.shape[0]
    if v0 is None:
        v0 = _start_vector(dim, cfg.seed)
    kw = dict(k=k, which="SA", v0=v0, tol=0, maxiter=cfg.max_iterations)
    if cfg.restart_dim:
        kw["ncv"] = min(dim, max(cfg.restart_dim, 2 * k + 1))
    try:
        vals, vecs = eigsh(H, **kw)
    except ArpackNoConvergence as exc:
        best = np.inf
        if len(exc.eigenvalues):
            best = _residual(H, exc.eigenvalues[0], exc.eigenvectors[:, 0])
        raise NumericalError(f"Lanczos eigensolver did not converge (best residual {best:.3g})", best) from exc
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def ground_state(
    H, cfg: EigsConfig = EigsConfig(), v0: np.ndarray | None = None, method: str = "auto", with_gap: bool = True
) -> GroundState:
    """Lowest eigenpair with a deterministic phase and the gap to the next level.

    ``method`` is ``"auto"``, ``"lanczos"`` (ARPACK implicitly restarted Lanczos) or
    ``"dense"``. ``v0`` warm-starts the Krylov iteration. ``with_gap=False`` skips the
    second eigenvalue (about 3x cheaper with Lanczos) and reports ``gap = nan``.
    """
    dim = H.shape[0]
    if method == "auto":
        method = "dense" if dim <= cfg.dense_cutoff else "lanczos"
    if method == "lanczos" and dim < 4:
        method = "dense"
    if method == "dense":
        vals, vecs = dense_hermitian_eigs(H, vectors=True)
    elif method == "lanczos":
        vals, vecs = _arpack(H, 2 if with_gap else 1, cfg, v0)
    else:
        raise DomainError(f"unknown eigensolver method {method!r}")
    psi = fix_gauge(vecs[:, 0].astype(complex))
    E = float(vals[0])
    res = _residual(H, E, psi)
    if res > cfg.tol:
        raise NumericalError(f"ground-state residual {res:.3g} exceeds tolerance {cfg.tol:.3g}", res)
    if not with_gap:
        gap = np.nan
    else:
        gap = float(vals[1] - vals[0]) if len(vals) > 1 else np.inf
    degenerate = bool(gap < 10 * cfg.tol)
    if degenerate:
        warnings.warn(f"near-degenerate ground space (gap {gap:.3g} MHz)", RuntimeWarning, stacklevel=2)
    return GroundState(E, psi, gap, res, degenerate)


def lowest_k(H, k: int, cfg: EigsConfig = EigsConfig(), method: str = "auto") -> np.ndarray:
    dim = H.shape[0]
    if k < 1 or k > dim:
        raise DomainError(f"k={k} outside [1, {dim}]")
    if method == "auto":
        method = "dense" if (dim <= cfg.dense_cutoff or k >= dim - 1) else "lanczos"
    if method == "dense":
        vals, vecs = dense_hermitian_eigs(H, vectors=True)
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        vals, vecs = _arpack(H, k, cfg, None)
    for E, v in zip(vals, vecs.T):
        res = _residual(H, E, v)
        if res > cfg.tol:
            raise NumericalError(f"eigenpair residual {res:.3g} exceeds tolerance", res)
    return np.asarray(vals, dtype=float)


def _lanczos_expm(H, v: np.ndarray, tau: complex, m_max: int, tol: float):
    """exp(tau*H) v on a Krylov space of dimension <= m_max.

    Returns (result, error_estimate, dimension_used). Full reorthogonalization keeps
    the small basis numerically orthonormal.
    """
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        return v.copy(), 0.0, 0
    dim = v.shape[0]
    m_max = min(m_max, dim)
    V = np.empty((m_max + 1, dim), dtype=complex)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max)
    V[0] = v / beta0
    err = np.inf
    y = None
    for j in range(m_max):
        w = H @ V[j]
        alpha[j] = np.vdot(V[j], w).real
        w -= alpha[j] * V[j]
        if j:
            w -= beta[j - 1] * V[j - 1]
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        m = j + 1
        evals, evecs = sla.eigh_tridiagonal(alpha[:m], beta[: m - 1])
        y = evecs @ (np.exp(tau * evals) * evecs[0].conj())
        err = beta0 * beta[j] * abs(y[-1])
        if beta[j] <= 1e-13 * max(1.0, abs(alpha[j])):  # invariant subspace reached
            err = 0.0
            break
        if err <= tol:
            break
        V[j + 1] = w / beta[j]
    return beta0 * (V[:m].T @ y), float(err), m


def propagate_step(psi: np.ndarray, H, cfg: PropagatorConfig = PropagatorConfig(), dt: float | None = None):
    """Advance one step of length ``dt`` (default ``cfg.dt``) under constant ``H``.

    The step is split in halves until the Krylov error estimate meets ``cfg.tol``.
    Returns ``(psi_next, StepInfo)``; ``psi_next`` is renormalized and the
    pre-normalization drift is reported.
    """
    dt = cfg.dt if dt is None else dt
    pieces = 1
    while True:
        sub = dt / pieces
        tau = -1j * PHASE_PER_MHZ_NS * sub
        out = psi
        worst, used, ok = 0.0, 0, True
        for _ in range(pieces):
            out, err, m = _lanczos_expm(H, out, tau, cfg.krylov_dim, cfg.tol)
            worst, used = max(worst, err), max(used, m)
            if err > cfg.tol:
                ok = False
                break
        if ok:
            break
        if pieces >= 1 << 12:
            raise NumericalError(f"Krylov step failed to reach tolerance (estimate {worst:.3g})", worst)
        pieces *= 2
    norm = np.linalg.norm(out)
    drift = abs(norm - np.linalg.norm(psi))
    return out / norm, StepInfo(drift, pieces, used, worst, sub)


def expectation(H, psi: np.ndarray) -> float:
    return float(np.vdot(psi, H @ psi).real)
