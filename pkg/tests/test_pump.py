import math

import numpy as np
import pytest

from hopump.errors import DomainError, UsageError
from hopump.fock import Sector, occupations
from hopump.pump import (
    PrepProtocol,
    PumpRecord,
    PumpSchedule,
    corner_delta_q,
    initial_ground_state,
    lambda_of_t,
    plaquette_product_state,
    plaquette_target_amplitudes,
    run_pump,
    simulate_preparation,
)
from hopump.solver import PropagatorConfig


def test_lambda_of_t():
    assert lambda_of_t(0, 500) == math.pi
    assert lambda_of_t(250, 500) == pytest.approx(0)
    assert lambda_of_t(125, 500) == pytest.approx(math.pi / 2)
    assert lambda_of_t(1000, 500) == pytest.approx(-3 * math.pi)  # not wrapped
    with pytest.raises(DomainError):
        lambda_of_t(0, 0)


def test_schedule_shape():
    s = PumpSchedule("diag", 3.0, 10.0, 500.0)
    assert s.hopping(math.pi) == 0
    assert s.hopping(0) == pytest.approx(6.0)
    assert s.bond_sum == 6.0
    assert s.onsite(math.pi / 2) == pytest.approx(10.0)
    assert s.onsite(0) == 0 and abs(s.onsite(math.pi)) < 1e-14
    for t in (0.0, 37.0, 410.0):
        assert s.at_time(t) == pytest.approx(s.at_time(t + 500.0))
    with pytest.raises(DomainError):
        PumpSchedule("radial")
    with pytest.raises(DomainError):
        PumpSchedule(t0=-1)


def test_plaquette_amplitudes_normalized():
    amps = plaquette_target_amplitudes()
    assert len(amps) == 6
    assert sum(a * a for a in amps.values()) == pytest.approx(1)
    assert sorted(amps.values()).count(0.5) == 2


def test_initial_state_is_plaquette_product(lat4, half_filled):
    psi = initial_ground_state(lat4, PumpSchedule(), half_filled)
    target = plaquette_product_state(lat4, half_filled)
    assert np.linalg.norm(target) == pytest.approx(1, abs=1e-14)
    assert abs(np.vdot(target, psi)) >= 1 - 1e-10
    assert np.allclose(occupations(psi, half_filled), 0.5, atol=1e-9)


def test_single_cell_initial_state(lat2):
    sector = Sector(4, 2)
    psi = initial_ground_state(lat2, PumpSchedule(), sector)
    assert abs(np.vdot(plaquette_product_state(lat2, sector), psi)) == pytest.approx(1, abs=1e-12)


@pytest.fixture(scope="module")
def short_diag(lat4, half_filled):
    # fast, strongly non-adiabatic pump: symmetry and conservation still hold exactly
    return run_pump(lat4, PumpSchedule("diag", 3.0, 10.0, 60.0), half_filled, sample_every=5.0, span="full")


def test_particle_number_conserved(short_diag):
    assert np.allclose(short_diag.p1.sum(axis=1), 8, atol=1e-9)
    assert short_diag.norm_drift_max < 1e-12


def test_diag_pump_rotation_symmetry(lat4, short_diag):
    perm = lat4.rotation_permutation()
    p = short_diag.p1
    # a quarter turn flips the potential pattern, compensated by particle-hole exchange
    assert np.max(np.abs(p[:, perm] - (1 - p))) < 1e-6
    assert np.max(np.abs(p[:, perm[perm]] - p)) < 1e-6


def test_nondiag_pump_mirror_symmetry(lat4, half_filled):
    rec = run_pump(lat4, PumpSchedule("nondiag", 3.0, 3.5, 60.0), half_filled, sample_every=10.0, span="half")
    perm = lat4.reflect_y_permutation()
    assert np.max(np.abs(rec.p1[:, perm] - rec.p1)) < 1e-6


def test_sampling_grid_and_csv(lat2):
    rec = run_pump(lat2, PumpSchedule("diag", 3.0, 10.0, 500.0), Sector(4, 2), sample_every=10.0, span="full")
    lines = rec.to_csv().split("\n")
    assert lines[0] == "t_ns,p1_s0,p1_s1,p1_s2,p1_s3"
    assert len(lines) == 1 + 51 + 1 and lines[-1] == ""
    assert lines[1].startswith("0,") and lines[-2].startswith("500,")
    assert "\r" not in rec.to_csv()
    with pytest.raises(UsageError):
        run_pump(lat2, PumpSchedule(t0=500.0), Sector(4, 2), sample_every=7.0)


def test_corner_delta_q_patterns(lat4):
    sched = PumpSchedule(t0=500.0)
    p = np.full((2, 16), 0.5)
    p[1, list(lat4.corners)] = [1, 0, 1, 0]
    rec = PumpRecord(np.array([0.0, 250.0]), p, lat4.corners, sched, 0.5, 0.0, 0.0)
    dq_i, dq = corner_delta_q(rec)
    assert np.allclose(dq_i, [0.5, -0.5, 0.5, -0.5]) and dq == pytest.approx(1.0)
    frozen = PumpRecord(np.array([0.0, 250.0]), np.full((2, 16), 0.5), lat4.corners, sched, 0.5, 0.0, 0.0)
    assert corner_delta_q(frozen)[1] == 0
    with pytest.raises(UsageError):
        corner_delta_q(PumpRecord(np.array([0.0]), p[:1], lat4.corners, sched, 0.5, 0.0, 0.0))


def test_summary_and_shot_noise(short_diag):
    s = short_diag.summary()
    assert {"delta_q", "delta_q_corners", "schedule", "seed", "norm_drift_max"} <= s.keys()
    noisy = short_diag.with_shot_noise(6000, seed=3)
    again = short_diag.with_shot_noise(6000, seed=3)
    assert np.array_equal(noisy.p1, again.p1)
    assert np.allclose(noisy.p1 * 6000, np.round(noisy.p1 * 6000))
    assert np.max(np.abs(noisy.p1 - short_diag.p1)) < 0.05


def test_preparation_endpoints():
    t, f, best = simulate_preparation(duration=0.0)
    assert f[0] == pytest.approx(0.5)
    t, f, best = simulate_preparation(PrepProtocol(coupling_start=0.0, coupling_end=0.0), duration=300.0)
    assert np.allclose(f, 0.5, atol=1e-12)


def test_slow_preparation_reaches_target():
    _, f, best = simulate_preparation(duration=2000.0)
    assert best >= 0.99
    assert f[-1] == pytest.approx(best, abs=0.01)


@pytest.mark.slow
def test_delta_q_grows_with_period(lat4, half_filled):
    dq = []
    for t0 in (100.0, 250.0, 500.0, 1000.0, 5000.0):
        rec = run_pump(lat4, PumpSchedule("diag", 3.0, 10.0, t0), half_filled, sample_every=t0 / 2)
        dq.append(corner_delta_q(rec)[1])
    assert all(b >= a - 0.01 for a, b in zip(dq, dq[1:])), dq
