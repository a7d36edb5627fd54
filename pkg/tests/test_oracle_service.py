import numpy as np
import pytest
from scipy.integrate import trapezoid

from services.eigenmodes_service import build_double_well, solve_modes
from services.oracle_service import (
    GridState1D,
    PropagationError,
    SingularPointError,
    absorbing_ramp,
    continuity_grid_check,
    dense_eigensolve,
    fd_phase_gradient,
    gaussian_packet,
    local_phase_velocity,
    mean_position,
    norm,
    phase_velocity_history,
    position_width,
    step_potential,
    tdse_propagate,
)
from tests.conftest import SMALL_L_Y


@pytest.fixture(scope='module')
def free_grid():
    x = np.linspace(-100.0, 100.0, 4001)
    return x, np.zeros(x.size, dtype=complex)


@pytest.mark.unit
def test_dense_matches_tridiagonal(small_geometry):
    pot = build_double_well(small_geometry, SMALL_L_Y, 1001)
    dense = dense_eigensolve(pot)
    tri = solve_modes(pot)
    assert dense.E_minus == pytest.approx(tri.E_minus, rel=1e-9)
    assert dense.E_plus == pytest.approx(tri.E_plus, rel=1e-9)
    np.testing.assert_allclose(dense.Phi_minus, tri.Phi_minus, atol=1e-6)


@pytest.mark.unit
def test_dense_oracle_size_limit(small_geometry):
    pot = build_double_well(small_geometry, SMALL_L_Y, 5003)
    with pytest.raises(ValueError):
        dense_eigensolve(pot)


@pytest.mark.unit
def test_phase_gradient_of_plane_wave():
    wave = lambda x, y: np.exp(1j * (0.3 * x - 0.7 * y))
    np.testing.assert_allclose(fd_phase_gradient(wave, (1.0, 2.0), 1e-4), [0.3, -0.7], rtol=1e-7)
    np.testing.assert_allclose(fd_phase_gradient(wave, (1.0, 2.0), 1e-4, m=2.0, axes=(1,)), [-0.35], rtol=1e-7)


@pytest.mark.unit
def test_phase_gradient_at_node():
    with pytest.raises(SingularPointError):
        fd_phase_gradient(lambda x: np.sin(x), (0.0,), 1e-3)


@pytest.mark.unit
def test_continuity_check_converges_quadratically():
    # j = (sin x cos y, sin y); div j = cos x cos y + cos y
    flux = lambda x, y: (np.sin(x) * np.cos(y), np.sin(y))
    sink = lambda x, y: -(np.cos(x) * np.cos(y) + np.cos(y))
    xs = np.linspace(0.1, 2.0, 15)
    ys = np.linspace(-1.0, 1.0, 15)
    coarse = continuity_grid_check(flux, sink, xs, ys, h=0.1)
    fine = continuity_grid_check(flux, sink, xs, ys, h=0.05)
    assert 3.8 <= coarse.max_abs / fine.max_abs <= 4.2
    assert fine.normalized_max == pytest.approx(fine.max_abs / fine.scale)


@pytest.mark.unit
def test_continuity_check_sourceless_normalization():
    report = continuity_grid_check(lambda x, y: (np.zeros_like(x), np.zeros_like(y)),
                                   lambda x, y: np.zeros_like(x), [0.0, 1.0], [0.0, 1.0], h=0.1)
    assert report.max_abs == 0.0
    assert report.normalized_max == 0.0
    report = continuity_grid_check(lambda x, y: (x, np.zeros_like(y)),
                                   lambda x, y: np.zeros_like(x), [0.0, 1.0], [0.0, 1.0], h=0.1)
    assert report.scale == pytest.approx(1.0)
    assert report.normalized_max == pytest.approx(1.0)


@pytest.mark.unit
def test_gaussian_packet_moments(free_grid):
    x, V = free_grid
    state = GridState1D(x=x, psi=gaussian_packet(x, -20.0, 5.0, 0.5), potential=V)
    assert norm(state) == pytest.approx(1.0, abs=1e-10)
    assert mean_position(state) == pytest.approx(-20.0)
    assert position_width(state) == pytest.approx(5.0, rel=1e-8)
    assert local_phase_velocity(state, -20.0) == pytest.approx(0.5, rel=1e-3)


@pytest.mark.unit
def test_free_spreading_and_unitarity(free_grid):
    x, V = free_grid
    sigma0, dt, steps = 5.0, 0.05, 1000
    state = GridState1D(x=x, psi=gaussian_packet(x, -20.0, sigma0, 0.5), potential=V)
    final = tdse_propagate(state, dt, steps)
    assert final.t == pytest.approx(dt * steps)
    expected = sigma0 * np.sqrt(1.0 + (final.t / (2.0 * sigma0 ** 2)) ** 2)
    assert position_width(final) == pytest.approx(expected, rel=1e-2)
    assert mean_position(final) == pytest.approx(-20.0 + 0.5 * final.t, rel=1e-2)
    assert norm(final) == pytest.approx(norm(state), rel=1e-10)


@pytest.mark.unit
def test_uniform_loss_is_exact(free_grid):
    x, V = free_grid
    gamma = 1e-3
    state = GridState1D(x=x, psi=gaussian_packet(x, 0.0, 5.0, 0.2), potential=V, gamma=gamma)
    final = tdse_propagate(state, 0.05, 400)
    assert norm(final) == pytest.approx(norm(state) * np.exp(-gamma * final.t), rel=1e-10)


@pytest.mark.unit
def test_absorbing_ramp_profile():
    x = np.linspace(-50.0, 50.0, 1001)
    W = absorbing_ramp(x, width_frac=0.1, strength=0.5)
    assert W[500] == 0.0
    assert W[0] == pytest.approx(-0.5j)
    assert W[-1] == pytest.approx(-0.5j)
    assert np.all(W.real == 0.0) and np.all(W.imag <= 0.0)


@pytest.mark.unit
def test_absorber_removes_outgoing_packet():
    x = np.linspace(-50.0, 50.0, 2001)
    state = GridState1D(x=x, psi=gaussian_packet(x, 0.0, 3.0, 1.0), potential=absorbing_ramp(x))
    final = tdse_propagate(state, 0.05, 2000)
    assert norm(final) < 0.1


@pytest.mark.unit
def test_step_potential_reflects_slow_packet():
    x = np.linspace(-150.0, 150.0, 3001)
    V = step_potential(x, 0.5)
    state = GridState1D(x=x, psi=gaussian_packet(x, -40.0, 8.0, 0.5), potential=V)
    final = tdse_propagate(state, 0.05, 3200)
    rho = np.abs(final.psi) ** 2
    assert trapezoid(np.where(x > 5.0, rho, 0.0), x) < 1e-3
    assert mean_position(final) < -20.0


@pytest.mark.unit
def test_unstable_step_rejected(free_grid):
    x, _ = free_grid
    state = GridState1D(x=x, psi=gaussian_packet(x, 0.0, 5.0, 0.0), potential=np.full(x.size, 20.0 + 0j))
    with pytest.raises(ValueError):
        tdse_propagate(state, 0.05, 10)


@pytest.mark.unit
def test_norm_growth_detected(free_grid):
    x, _ = free_grid
    gain = np.full(x.size, 1e-3j)
    state = GridState1D(x=x, psi=gaussian_packet(x, 0.0, 5.0, 0.0), potential=gain)
    with pytest.raises(PropagationError):
        tdse_propagate(state, 0.05, 10)


@pytest.mark.unit
def test_phase_velocity_flips_at_step_turnaround():
    x = np.linspace(-150.0, 150.0, 3001)
    state = GridState1D(x=x, psi=gaussian_packet(x, -60.0, 8.0, 0.5), potential=step_potential(x, 0.5))
    history = phase_velocity_history(state, 0.05, 3600, 20, 0.5)
    assert history.t.size == 181
    assert history.t[-1] == pytest.approx(180.0)

    t_star = history.turnaround
    assert 110.0 < t_star < 140.0
    for s in (2.0, 4.0, 8.0):
        assert history.velocity_at(t_star - s) > 0 > history.velocity_at(t_star + s)
    assert history.sign_change(near=t_star) == pytest.approx(t_star, abs=1.0)

    # inward and outward speeds grow linearly away from the turnaround
    inward = history.velocity_at(t_star - 8.0) / history.velocity_at(t_star - 4.0)
    outward = history.velocity_at(t_star + 8.0) / history.velocity_at(t_star + 4.0)
    assert 1.5 < inward < 2.5
    assert 1.5 < outward < 2.5


@pytest.mark.unit
def test_phase_velocity_history_arguments(free_grid):
    x, V = free_grid
    state = GridState1D(x=x, psi=gaussian_packet(x, 0.0, 5.0, 0.5), potential=V)
    with pytest.raises(ValueError):
        phase_velocity_history(state, 0.05, 10, 0, 0.0)
    history = phase_velocity_history(state, 0.05, 10, 4, 0.0)
    np.testing.assert_allclose(history.t, [0.0, 0.2, 0.4, 0.5])
    assert history.sign_change(near=0.0) is None
