import math

import numpy as np
import pytest
import scipy.sparse as sp

from hopump.errors import DomainError, NumericalError
from hopump.pump import PumpSchedule
from hopump.solver import expectation, ground_state
from hopump.topology import (
    CornerTwistFamily,
    ZakGrid,
    ZakProfile,
    chern_from_profile,
    delta_q_from_zak,
    transport_current,
    wilson_phase,
    zak_phase,
)


def _cone(n, polar):
    phi = 2 * np.pi * np.arange(n) / n
    return [np.array([math.cos(polar / 2), np.exp(1j * p) * math.sin(polar / 2)]) for p in phi]


def test_wilson_phase_equator_is_pi():
    gamma, smallest = wilson_phase(_cone(64, math.pi / 2))
    assert abs(abs(gamma) - math.pi) < 1e-12
    assert smallest == pytest.approx(math.cos(math.pi / 64))


@pytest.mark.parametrize("polar", [0.3, 1.0, 2.2])
def test_wilson_phase_converges_to_solid_angle(polar):
    gamma, _ = wilson_phase(_cone(4000, polar))
    expected = -math.pi * (1 - math.cos(polar))
    assert abs(np.angle(np.exp(1j * (gamma - expected)))) < 1e-5


def test_wilson_phase_gauge_invariant():
    rng = np.random.default_rng(42)
    states = [v / np.linalg.norm(v) for v in rng.standard_normal((24, 6)) + 1j * rng.standard_normal((24, 6))]
    # keep neighbours overlapping
    states = [states[0] + 0.2 * s for s in states]
    states = [s / np.linalg.norm(s) for s in states]
    g0, _ = wilson_phase(states)
    for _ in range(5):
        phases = np.exp(2j * np.pi * rng.random(len(states)))
        g, _ = wilson_phase([p * s for p, s in zip(phases, states)])
        assert abs(np.angle(np.exp(1j * (g - g0)))) < 1e-10


def test_wilson_phase_rejects_orthogonal_neighbours():
    with pytest.raises(NumericalError):
        wilson_phase([np.array([1, 0]), np.array([0, 1])])


@pytest.fixture(scope="module")
def twist(lat4, half_filled):
    return CornerTwistFamily(lat4, half_filled, "diag")


def test_current_is_flux_derivative(lat4, half_filled, twist):
    J, h, eps = 2.0, 3.0, 1e-6
    for corner in range(4):
        fd = (twist.hamiltonian(J, 6.0, h, corner, eps) - twist.hamiltonian(J, 6.0, h, corner, -eps)) / (2 * eps)
        cur = twist.current(J, corner)
        assert abs(fd - cur).max() < 1e-8
        assert abs(cur - cur.conj().T).max() < 1e-14
        assert abs(transport_current(lat4, half_filled, corner + 1, J) - cur).max() < 1e-14


def test_ground_state_carries_no_static_current(twist):
    # time-reversal symmetric H(theta=0): real ground state, zero current
    H = twist.hamiltonian(2.0, 6.0, 3.0, 0, 0.0)
    psi = ground_state(H).psi
    for corner in range(4):
        assert abs(expectation(twist.current(2.0, corner), psi)) < 1e-9


def test_zak_phase_trivial_without_links(lat4, half_filled, twist):
    # at lam = pi the hopping across corner links vanishes
    g = zak_phase(lat4, half_filled, 0.0, 6.0, 0.0, "diag", 1, ZakGrid(8, 12), family=twist)
    assert abs(g) < 1e-9
    with pytest.raises(DomainError):
        zak_phase(lat4, half_filled, 0.0, 6.0, 0.0, "diag", 0, ZakGrid(8, 12), family=twist)


def test_zak_phase_quantized_by_inversion(lat4, half_filled, twist):
    # lam = 0: h = 0 and the C2-symmetric model pins each corner phase to 0 or pi
    g = zak_phase(lat4, half_filled, 6.0, 6.0, 0.0, "diag", 1, ZakGrid(16, 12), family=twist)
    assert min(abs(g), abs(abs(g) - math.pi)) < 1e-6


def test_grid_validation():
    with pytest.raises(DomainError):
        ZakGrid(n_theta=4)
    with pytest.raises(DomainError):
        ZakGrid(n_lambda=6)


def _synthetic(windings, n=24, min_gap=1.0, jump=None):
    lam = math.pi - 2 * math.pi * np.arange(n + 1) / n
    g = np.outer(np.arange(n + 1) / n, 2 * math.pi * np.asarray(windings, float))
    return ZakProfile(lam, g, 0.99, min_gap, jump if jump is not None else 2 * math.pi / n * max(map(abs, windings)))


def test_chern_from_profile():
    res = chern_from_profile(_synthetic([-1, 1, -1, 1]))
    assert res.chern == (-1, 1, -1, 1)
    assert res.residual < 1e-12 and not res.gap_closed
    assert '"chern": [\n    -1' in res.to_json()


def test_chern_residual_and_gap_flags():
    with pytest.raises(NumericalError):
        chern_from_profile(_synthetic([0.3, 0, 0, 0]))
    closed = chern_from_profile(_synthetic([0.5, 0, 0, 0], jump=math.pi))
    assert closed.gap_closed


def test_delta_q_from_zak_half_cycle():
    prof = _synthetic([-1, 1, -1, 1])
    dq = delta_q_from_zak(prof, math.pi, 0.0)
    assert np.allclose(dq, [0.5, -0.5, 0.5, -0.5])
    with pytest.raises(DomainError):
        delta_q_from_zak(prof, 0.0, math.pi)
    with pytest.raises(DomainError):
        delta_q_from_zak(prof, 0.123, 0.0)


def test_zak_phase_grid_convergence(lat4, half_filled, twist):
    s = PumpSchedule("diag", 3.0, 10.0, 500.0)
    lam = math.pi / 2
    g32 = zak_phase(lat4, half_filled, s.hopping(lam), 6.0, s.onsite(lam), "diag", 1, ZakGrid(32, 12), family=twist)
    g64 = zak_phase(lat4, half_filled, s.hopping(lam), 6.0, s.onsite(lam), "diag", 1, ZakGrid(64, 12), family=twist)
    assert abs(np.angle(np.exp(1j * (g32 - g64)))) < 1e-3


def test_zak_phases_equal_at_symmetric_point(lat4, half_filled, twist):
    # h = 0: the four corners are related by lattice symmetries
    g = [zak_phase(lat4, half_filled, 2.0, 6.0, 0.0, "diag", i, ZakGrid(16, 12), family=twist) for i in (1, 2, 3, 4)]
    assert np.ptp(np.unwrap(g)) < 1e-8


def test_zero_coupling_current(lat4, half_filled):
    cur = transport_current(lat4, half_filled, 2, 0.0)
    assert cur.nnz == 0 or abs(cur).max() == 0
    cur = transport_current(lat4, half_filled, 2, 1.0)
    assert abs(cur.diagonal()).max() == 0
