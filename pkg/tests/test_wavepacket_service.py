import numpy as np
import pytest
from scipy.integrate import trapezoid

from services.oracle_service import fd_phase_gradient
from services.trajectory_service import weighted_ks_statistic
from services.wavepacket_service import (
    PacketError,
    PacketSpec,
    characteristic_speed,
    density_cdf,
    packet_density,
    packet_first_order,
    packet_quadrature,
    packet_trajectory,
    packet_velocity,
    penetration_distance,
    sample_positions,
    transport_positions,
    truncated_mass,
)


@pytest.fixture(scope='module')
def spec(default_params):
    return PacketSpec.from_params(default_params)


@pytest.mark.unit
def test_scales(spec, default_params):
    assert spec.gap == pytest.approx(6.0 * default_params.J0, rel=1e-6)
    assert spec.k0 == pytest.approx(np.sqrt(2.0 * spec.gap))
    assert spec.L * spec.k0 == pytest.approx(1.0)
    assert spec.tau * spec.sigma == pytest.approx(1.0)
    assert spec.linear_ratio < 1e-2


@pytest.mark.unit
def test_energy_above_step_rejected():
    with pytest.raises(PacketError):
        PacketSpec(E0=1.1, sigma=1e-5, V0=0.0)
    with pytest.raises(PacketError):
        PacketSpec(E0=0.9, sigma=0.0, V0=0.0)


@pytest.mark.unit
def test_wide_spectrum_rejected():
    wide = PacketSpec(E0=1.0 - 1e-4, sigma=5e-5, V0=0.0)
    with pytest.raises(PacketError):
        packet_first_order(0.0, 0.0, wide)
    with pytest.raises(PacketError):
        packet_quadrature(0.0, 0.0, wide)
    assert truncated_mass(wide) > 1e-6


@pytest.mark.unit
def test_quadrature_matches_first_order(spec):
    X, T = np.meshgrid(np.linspace(0.0, 3.0 * spec.L, 7), np.linspace(-2.0 * spec.tau, 2.0 * spec.tau, 9))
    first = packet_first_order(X, T, spec)
    quad = packet_quadrature(X, T, spec)
    np.testing.assert_allclose(quad, first, rtol=1e-5, atol=0.0)


@pytest.mark.unit
def test_quadrature_needs_enough_nodes(spec):
    with pytest.raises(PacketError):
        packet_quadrature(0.0, 0.0, spec, nodes=8)


@pytest.mark.unit
def test_velocity_reverses_at_turnaround(spec):
    assert packet_velocity(spec.L, -spec.tau, spec) > 0
    assert packet_velocity(spec.L, 0.0, spec) == 0.0
    assert packet_velocity(spec.L, spec.tau, spec) < 0
    assert packet_velocity(0.0, -spec.tau, spec) == packet_velocity(5.0 * spec.L, -spec.tau, spec)


@pytest.mark.unit
def test_velocity_matches_phase_gradient(spec):
    rng = np.random.default_rng(5)
    xs = rng.uniform(0.0, 3.0 * spec.L, 100)
    # keep away from the turnaround, where the velocity itself vanishes
    ts = rng.choice([-1.0, 1.0], 100) * rng.uniform(0.05, 2.0, 100) * spec.tau
    for x, t in zip(xs, ts):
        numeric = fd_phase_gradient(lambda xx, tt: packet_first_order(xx, tt, spec), (x, t),
                                    1e-4 * spec.L, spec.m, axes=(0,))[0]
        assert numeric == pytest.approx(float(packet_velocity(x, t, spec)), rel=1e-6)


@pytest.mark.unit
def test_speed_scales(spec):
    assert penetration_distance(spec) == pytest.approx(spec.L)
    assert characteristic_speed(spec) == pytest.approx(spec.L / spec.tau)


@pytest.mark.unit
def test_trajectory_turns_back(spec):
    path = packet_trajectory(spec.L, (-spec.tau, spec.tau), spec, samples=201)
    turn = int(np.argmax(path.x))
    assert path.t[turn] == pytest.approx(0.0, abs=spec.tau / 100.0)
    assert path.x[turn] == pytest.approx(spec.L + penetration_distance(spec))
    assert path.x[-1] == pytest.approx(spec.L)
    assert path.density.shape == path.t.shape


@pytest.mark.unit
def test_rk4_and_closed_trajectories_agree(spec):
    closed = packet_trajectory(0.5 * spec.L, (-1.5 * spec.tau, 0.5 * spec.tau), spec, method='closed')
    rk4 = packet_trajectory(0.5 * spec.L, (-1.5 * spec.tau, 0.5 * spec.tau), spec, method='rk4')
    np.testing.assert_allclose(rk4.x, closed.x, rtol=1e-10)


@pytest.mark.unit
@pytest.mark.parametrize("x0,t_span,method", [
    (-1.0, (-1.0, 1.0), 'closed'),
    (1.0, (1.0, -1.0), 'closed'),
    (1.0, (-1.0, 1.0), 'euler'),
])
def test_trajectory_arguments(spec, x0, t_span, method):
    with pytest.raises(ValueError):
        packet_trajectory(x0 * spec.L, (t_span[0] * spec.tau, t_span[1] * spec.tau), spec, method=method)


@pytest.mark.unit
def test_density_cdf_is_normalized(spec):
    grid, cdf = density_cdf(spec, 0.0)
    assert cdf[0] == 0.0
    assert cdf[-1] == pytest.approx(1.0)
    assert np.all(np.diff(cdf) >= 0)
    assert packet_density(0.0, 0.0, spec) == pytest.approx(1.0)


@pytest.mark.unit
def test_transport_keeps_born_distribution(spec):
    start = sample_positions(spec, 0.0, 100_000, rng_seed=7)
    moved, inside = transport_positions(start, 0.0, 0.5 * spec.tau, spec)
    assert 0.0 < inside.mean() < 1.0
    grid, cdf = density_cdf(spec, 0.5 * spec.tau)
    survivors = moved[inside]
    ks = weighted_ks_statistic(survivors, np.ones_like(survivors), lambda s: np.interp(s, grid, cdf))
    assert ks < 0.02


def _narrow_packet(gap, ratio):
    return PacketSpec(E0=1.0 - gap, sigma=ratio * gap, V0=0.0)


def _first_order_error(s):
    X, T = np.meshgrid(np.linspace(0.0, 3.0 * s.L, 7), np.linspace(-2.0 * s.tau, 2.0 * s.tau, 9))
    exact = packet_quadrature(X, T, s)
    return np.max(np.abs(packet_first_order(X, T, s) - exact) / np.abs(exact))


@pytest.mark.unit
def test_first_order_error_is_quadratic_in_sigma():
    coarse = _first_order_error(_narrow_packet(1e-3, 0.02))
    fine = _first_order_error(_narrow_packet(1e-3, 0.01))
    order = np.log2(coarse / fine)
    assert 1.7 <= order <= 2.3


@pytest.mark.unit
def test_quadrature_is_converged_at_default_nodes(spec):
    X, T = np.meshgrid(np.linspace(0.0, 3.0 * spec.L, 7), np.linspace(-2.0 * spec.tau, 2.0 * spec.tau, 9))
    base = packet_quadrature(X, T, spec, nodes=64)
    refined = packet_quadrature(X, T, spec, nodes=128)
    assert np.max(np.abs(base - refined)) / np.max(np.abs(refined)) < 1e-8


@pytest.mark.unit
def test_narrow_spectrum_limit_is_stationary_tail():
    gap = 1e-3
    X, T = np.meshgrid(np.linspace(0.0, 3.0 / np.sqrt(2.0 * gap), 7), np.linspace(-100.0 / gap, 100.0 / gap, 9))
    errors = []
    for ratio in (1e-3, 1e-4, 1e-5, 1e-6):
        s = _narrow_packet(gap, ratio)
        stationary = np.exp(-1j * s.E0 * T - s.k0 * X)
        errors.append(np.max(np.abs(packet_first_order(X, T, s) - stationary)))
    assert np.all(np.diff(errors) < 0)
    assert errors[-1] < 1e-7


def _integrated_speed(s):
    t = np.linspace(-s.tau, 0.0, 2001)
    return trapezoid(np.abs(packet_velocity(0.0, t, s)), t)


@pytest.mark.unit
def test_penetration_is_integrated_speed():
    base = _narrow_packet(1e-3, 0.01)
    assert _integrated_speed(base) == pytest.approx(base.L, rel=1e-6)
    assert _integrated_speed(_narrow_packet(1e-3, 0.02)) == pytest.approx(_integrated_speed(base), rel=1e-6)
    # four times the gap doubles k0
    steeper = _narrow_packet(4e-3, 0.0025)
    assert steeper.k0 == pytest.approx(2.0 * base.k0)
    assert _integrated_speed(steeper) == pytest.approx(0.5 * _integrated_speed(base), rel=1e-6)
    assert penetration_distance(steeper) == pytest.approx(0.5 * penetration_distance(base))
