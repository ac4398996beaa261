from math import comb

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from hopump.errors import DomainError, NumericalError
from hopump.fock import Sector
from hopump.hamiltonian import assemble, pump_terms
from hopump.solver import (
    PHASE_PER_MHZ_NS,
    EigsConfig,
    PropagatorConfig,
    dense_hermitian_eigs,
    expectation,
    fix_gauge,
    ground_state,
    lowest_k,
    propagate_step,
)

SMALL_SECTORS = [k for k in range(17) if comb(16, k) <= 1000]


def _hamiltonian(lat, sector, J=1.2, h=4.0, variant="diag", links=True):
    return assemble(pump_terms(lat, J, 6.0, h, variant, corner_links=links), sector)


@pytest.mark.parametrize("k", SMALL_SECTORS)
def test_lanczos_matches_dense_on_small_sectors(lat4, k):
    sector = Sector(16, k)
    H = _hamiltonian(lat4, sector)
    ref = dense_hermitian_eigs(H)
    method = "lanczos" if sector.dim >= 4 else "dense"
    gs = ground_state(H, EigsConfig(tol=1e-9), method=method)
    assert abs(gs.energy - ref[0]) < 1e-9
    if sector.dim > 1:
        assert abs(gs.gap - (ref[1] - ref[0])) < 1e-9
    if sector.dim > 8:
        assert np.allclose(lowest_k(H, 4, method="lanczos"), ref[:4], atol=1e-9)


def test_ground_state_is_deterministic_and_gauge_fixed(lat4):
    sector = Sector(16, 3)
    H = _hamiltonian(lat4, sector)
    a = ground_state(H, method="lanczos")
    b = ground_state(H, method="lanczos")
    assert np.array_equal(a.psi, b.psi)
    k = np.argmax(np.abs(a.psi))
    assert a.psi[k].imag == 0 and a.psi[k].real > 0
    assert a.residual < 1e-10


def test_warm_start_and_without_gap(lat4, half_filled):
    H = _hamiltonian(lat4, half_filled)
    cold = ground_state(H)
    warm = ground_state(H, v0=cold.psi, with_gap=False)
    assert np.isnan(warm.gap)
    assert abs(np.vdot(cold.psi, warm.psi)) == pytest.approx(1, abs=1e-10)


def test_degenerate_ground_space_warns(lat2):
    # no terms at all: every configuration has zero energy
    H = sp.csr_matrix((6, 6), dtype=complex)
    with pytest.warns(RuntimeWarning):
        gs = ground_state(H)
    assert gs.near_degenerate


def test_dense_rejects_non_hermitian():
    with pytest.raises(DomainError):
        dense_hermitian_eigs(np.array([[0, 1], [0, 0]]))
    with pytest.raises(DomainError):
        lowest_k(sp.identity(3), 4)


def test_unreachable_tolerance_raises(lat4, half_filled):
    H = _hamiltonian(lat4, half_filled)
    with pytest.raises(NumericalError):
        ground_state(H, EigsConfig(tol=1e-30))


def test_fix_gauge_idempotent():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    g = fix_gauge(v)
    assert np.allclose(fix_gauge(g), g)
    assert abs(np.vdot(g, v)) == pytest.approx(np.vdot(v, v).real)


@pytest.mark.parametrize("dt", [0.1, 0.5, 2.0])
def test_krylov_step_matches_expm_multiply(lat4, half_filled, dt):
    H = _hamiltonian(lat4, half_filled, h=10.0)
    rng = np.random.default_rng(1)
    psi = rng.standard_normal(half_filled.dim) + 1j * rng.standard_normal(half_filled.dim)
    psi /= np.linalg.norm(psi)
    out, info = propagate_step(psi, H, PropagatorConfig(dt=dt))
    ref = expm_multiply(-1j * PHASE_PER_MHZ_NS * dt * H, psi)
    assert np.linalg.norm(out - ref) < 1e-9
    assert info.norm_drift < 1e-12


def test_step_halving_kicks_in(lat4, half_filled):
    H = _hamiltonian(lat4, half_filled, h=10.0)
    psi = np.zeros(half_filled.dim, complex)
    psi[0] = 1
    cfg = PropagatorConfig(dt=20.0, krylov_dim=6, tol=1e-10)
    out, info = propagate_step(psi, H, cfg)
    assert info.substeps > 1
    assert info.effective_dt == pytest.approx(20.0 / info.substeps)
    ref = expm_multiply(-1j * PHASE_PER_MHZ_NS * 20.0 * H, psi)
    assert np.linalg.norm(out - ref) < 1e-8


def test_energy_conserved_under_static_evolution(lat4, half_filled):
    H = _hamiltonian(lat4, half_filled)
    rng = np.random.default_rng(5)
    psi = rng.standard_normal(half_filled.dim) + 0j
    psi /= np.linalg.norm(psi)
    e0 = expectation(H, psi)
    for _ in range(20):
        psi, _ = propagate_step(psi, H)
    assert expectation(H, psi) == pytest.approx(e0, abs=1e-9)


def test_invariant_subspace_terminates_early(lat2):
    # two-level problem: Krylov space exhausts after two vectors
    H = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex))
    out, info = propagate_step(np.array([1, 0], complex), H, PropagatorConfig(dt=100.0))
    phase = PHASE_PER_MHZ_NS * 100.0
    assert np.allclose(out, [np.cos(phase), -1j * np.sin(phase)], atol=1e-12)
    assert info.krylov_used == 2


def test_config_validation():
    with pytest.raises(DomainError):
        PropagatorConfig(dt=0)
    with pytest.raises(DomainError):
        PropagatorConfig(krylov_dim=1)
    with pytest.raises(DomainError):
        EigsConfig(tol=0)


def test_two_site_swap():
    # hopping -J between two sites: P(t) = sin^2(2 pi J t * 1e-3), full transfer at 1/(4J) us
    J = 3.0
    H = sp.csr_matrix(np.array([[0, -J], [-J, 0]], dtype=complex))
    psi = np.array([1, 0], complex)
    t_swap = 1e3 / (4 * J)
    out, _ = propagate_step(psi, H, PropagatorConfig(dt=t_swap))
    assert abs(out[1]) ** 2 == pytest.approx(1, abs=1e-12)
    half, _ = propagate_step(psi, H, PropagatorConfig(dt=t_swap / 2))
    assert abs(half[1]) ** 2 == pytest.approx(0.5, abs=1e-12)


def test_small_spectra():
    assert np.allclose(lowest_k(np.array([[0, 1], [1, 0]]), 2), [-1, 1])
    D = sp.diags([3.0, -2.0, 5.0, 1.0]).tocsr()
    gs = ground_state(D)
    assert gs.energy == -2.0 and np.allclose(np.abs(gs.psi), [0, 1, 0, 0])
    assert np.allclose(dense_hermitian_eigs(2.5 * np.eye(3)), 2.5)


def test_zero_hamiltonian_is_identity():
    psi = np.array([0.6, 0.8j])
    out, info = propagate_step(psi, sp.csr_matrix((2, 2), dtype=complex))
    assert np.allclose(out, psi)


def test_plaquette_spectrum(lat2):
    from hopump.hamiltonian import build_obc

    H = assemble(build_obc(lat2, 0.0, 3.0), Sector(4, 2))
    E = lowest_k(H, 2)
    assert np.allclose(E, [-6 * np.sqrt(2), 0.0], atol=1e-12)
