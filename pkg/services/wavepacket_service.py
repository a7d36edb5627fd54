"""
Wavepacket Service Module
One-dimensional evanescent wave packet in the forbidden region x >= 0.

Two representations are provided: the closed first-order form, valid while the
energy spread sigma is small against the gap V0 - E0 + m, and a Gauss-Hermite
quadrature of the underlying energy superposition. Time origin is the
turnaround instant where the packet velocity vanishes.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import cumulative_trapezoid
from scipy.special import erfc

from services.params_service import CavityParams
from services.trajectory_service import rk4_step

LINEAR_LIMIT = 0.1
MAX_TRUNCATED_MASS = 1e-6
MIN_NODES = 32


class PacketError(ValueError):
    """Packet parameters outside the evanescent, narrow-band domain."""


@dataclass(frozen=True)
class PacketSpec:
    E0: float
    sigma: float
    V0: float
    m: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise PacketError(f"sigma must be positive, got {self.sigma}")
        if not self.gap > 0:
            raise PacketError(f"E0 is not below the step: V0 - E0 + m = {self.gap:.6g}")

    @classmethod
    def from_params(cls, p: CavityParams) -> 'PacketSpec':
        return cls(E0=p.E0, sigma=p.sigma, V0=p.V0, m=p.m)

    @property
    def gap(self) -> float:
        return self.V0 - self.E0 + self.m

    @property
    def k0(self) -> float:
        return float(np.sqrt(2.0 * self.m * self.gap))

    @property
    def L(self) -> float:
        return 1.0 / self.k0

    @property
    def tau(self) -> float:
        return 1.0 / self.sigma

    @property
    def linear_ratio(self) -> float:
        return self.sigma / self.gap

    def require_linear(self) -> None:
        if self.linear_ratio >= LINEAR_LIMIT:
            raise PacketError(
                f"sigma/gap = {self.linear_ratio:.3g} too large for the first-order packet (< {LINEAR_LIMIT})"
            )


@dataclass(frozen=True, eq=False)
class PacketPath:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    density: np.ndarray


def packet_first_order(x, t, s: PacketSpec):
    """exp(sigma^2 (i t - m x / k0)^2) exp(-i E0 t) exp(-k0 x), unnormalized."""
    s.require_linear()
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    envelope = np.exp(s.sigma ** 2 * (1j * t - s.m * x / s.k0) ** 2)
    return envelope * np.exp(-1j * s.E0 * t) * np.exp(-s.k0 * x)


def truncated_mass(s: PacketSpec) -> float:
    """Weight of the Gaussian spectrum lying above the step (E >= V0 + m)."""
    return float(0.5 * erfc(s.gap / (2.0 * s.sigma)))


def packet_quadrature(x, t, s: PacketSpec, nodes: int = 64):
    """Energy superposition integrated with Gauss-Hermite nodes.

    Normalized by sqrt(pi) so that it reduces to the first-order form for a
    narrow spectrum. Nodes at or above the step are dropped.
    """
    if nodes < MIN_NODES:
        raise PacketError(f"Quadrature needs at least {MIN_NODES} nodes, got {nodes}")
    mass = truncated_mass(s)
    if mass > MAX_TRUNCATED_MASS:
        raise PacketError(f"Spectrum above the step carries {mass:.3g} of the weight (> {MAX_TRUNCATED_MASS})")

    u, w = hermgauss(nodes)
    eps = 2.0 * s.sigma * u
    keep = eps < s.gap
    eps, w = eps[keep], w[keep]
    k = np.sqrt(2.0 * s.m * (s.gap - eps))

    x_b, t_b = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    terms = np.exp(-1j * np.multiply.outer(t_b, eps)) * np.exp(-np.multiply.outer(x_b, k))
    # common carrier kept outside the sum to preserve phase precision at large t
    return np.exp(-1j * s.E0 * t_b) * (terms @ w) / np.sqrt(np.pi)


def packet_density(x, t, s: PacketSpec):
    return np.abs(packet_first_order(x, t, s)) ** 2


def packet_velocity(x, t, s: PacketSpec):
    """Bohmian velocity -2 sigma^2 t / k0; the same at every x."""
    s.require_linear()
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    return -2.0 * s.sigma ** 2 * t / s.k0 + np.zeros_like(x)


def penetration_distance(s: PacketSpec) -> float:
    """Distance travelled between t = -tau and the turnaround: sigma^2 tau^2 / k0."""
    return s.sigma ** 2 * s.tau ** 2 / s.k0


def characteristic_speed(s: PacketSpec) -> float:
    """L / tau, the speed scale of the transient evanescent motion."""
    return s.L / s.tau


def packet_trajectory(x0: float, t_span: Tuple[float, float], s: PacketSpec,
                      samples: int = 201, method: str = 'closed') -> PacketPath:
    """Trajectory through x0 at t_span[0], by closed form or by RK4 on the velocity field."""
    s.require_linear()
    t_start, t_end = float(t_span[0]), float(t_span[1])
    if not t_end > t_start:
        raise ValueError(f"t_span must be increasing, got {t_span}")
    if x0 < 0:
        raise PacketError(f"Only the forbidden region x >= 0 is modelled, got x0={x0}")
    t = np.linspace(t_start, t_end, samples)

    if method == 'closed':
        x = x0 - (s.sigma ** 2 / s.k0) * (t ** 2 - t_start ** 2)
    elif method == 'rk4':
        x = np.empty_like(t)
        x[0] = x0
        rate = lambda tt, xx: packet_velocity(xx, tt, s)
        for i in range(1, t.size):
            x[i] = rk4_step(rate, t[i - 1], x[i - 1], t[i] - t[i - 1])
    else:
        raise ValueError(f"Unknown trajectory method '{method}'")

    return PacketPath(t=t, x=x, v=packet_velocity(x, t, s), density=packet_density(x, t, s))


def density_cdf(s: PacketSpec, t: float, x_max: Optional[float] = None,
                points: int = 20001) -> Tuple[np.ndarray, np.ndarray]:
    """Normalized cumulative |psi(x, t)|^2 on [0, x_max]."""
    x_max = 30.0 * s.L if x_max is None else x_max
    grid = np.linspace(0.0, x_max, points)
    cdf = cumulative_trapezoid(packet_density(grid, t, s), grid, initial=0.0)
    return grid, cdf / cdf[-1]


def sample_positions(s: PacketSpec, t: float, n: int, rng_seed: int = 0,
                     x_max: Optional[float] = None) -> np.ndarray:
    """Born-distributed positions on x >= 0 by inverse CDF."""
    grid, cdf = density_cdf(s, t, x_max)
    rng = np.random.default_rng(rng_seed)
    return np.interp(rng.random(n), cdf, grid)


def transport_positions(x: np.ndarray, t0: float, t1: float, s: PacketSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Carry positions along the packet flow; returns (positions, still inside x >= 0)."""
    shift = (s.sigma ** 2 / s.k0) * (t1 ** 2 - t0 ** 2)
    moved = np.asarray(x, dtype=float) - shift
    return moved, moved >= 0.0
