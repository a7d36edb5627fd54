"""
Oracle Service Module
Brute-force numerical references used to validate the closed forms:
dense eigensolver, finite-difference phase gradient, Crank-Nicolson
propagation of the 1D Schrodinger equation, and a grid continuity check.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import LinAlgError, eigh, solve_banded

from services.eigenmodes_service import (
    ModeBasis,
    ModeError,
    PotentialGrid,
    assemble_basis,
    hamiltonian_bands,
)
from services.logging_service import logger

MAX_DENSE_SIZE = 5000
NORM_GROWTH_LIMIT = 1e-6
STABILITY_LIMIT = 0.5


class SingularPointError(ValueError):
    """Velocity requested where the wavefunction vanishes."""


class PropagationError(RuntimeError):
    """Time stepping produced unphysical norm growth."""


@dataclass(frozen=True)
class ContinuityReport:
    max_abs: float
    rms: float
    normalized_max: float
    normalized_rms: float
    h: float
    scale: float


@dataclass(frozen=True, eq=False)
class GridState1D:
    x: np.ndarray
    psi: np.ndarray
    potential: np.ndarray
    t: float = 0.0
    gamma: float = 0.0

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])


def dense_eigensolve(pot: PotentialGrid, m: float = 1.0) -> ModeBasis:
    """Same FD Hamiltonian as solve_modes, diagonalized as a full matrix."""
    diag, off = hamiltonian_bands(pot, m)
    if diag.size > MAX_DENSE_SIZE:
        raise ValueError(f"Dense oracle limited to {MAX_DENSE_SIZE} interior points, got {diag.size}")
    H = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    try:
        energies, vectors = eigh(H, subset_by_index=[0, 1])
    except LinAlgError as e:
        raise ModeError(f"Dense eigensolver failed: {e}")
    return assemble_basis(pot, energies, vectors)


def fd_phase_gradient(evaluate: Callable[..., complex], point: Sequence[float],
                      h: Union[float, Sequence[float]], m: float = 1.0,
                      axes: Optional[Sequence[int]] = None, floor: float = 1e-30) -> np.ndarray:
    """Im(d psi / psi)/m along each requested axis by central differences."""
    point = np.asarray(point, dtype=float)
    axes = range(point.size) if axes is None else axes
    steps = np.broadcast_to(np.asarray(h, dtype=float), point.shape)
    psi0 = complex(evaluate(*point))
    if abs(psi0) ** 2 < floor:
        raise SingularPointError(f"|psi|^2 = {abs(psi0) ** 2:.3g} at {point.tolist()}")

    result = []
    for axis in axes:
        shift = np.zeros_like(point)
        shift[axis] = steps[axis]
        forward = complex(evaluate(*(point + shift)))
        backward = complex(evaluate(*(point - shift)))
        gradient = (forward - backward) / (2.0 * steps[axis])
        result.append((gradient / psi0).imag / m)
    return np.array(result)


def continuity_grid_check(flux: Callable, sink: Callable, xs: np.ndarray, ys: np.ndarray,
                          h: float) -> ContinuityReport:
    """Residual of div j + sink on the xs-by-ys lattice, derivatives by central differences of step h.

    The residual is normalized by the largest sink value (or divergence when
    the sink vanishes everywhere).
    """
    X, Y = np.meshgrid(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
    jx_forward, _ = flux(X + h, Y)
    jx_backward, _ = flux(X - h, Y)
    _, jy_forward = flux(X, Y + h)
    _, jy_backward = flux(X, Y - h)
    divergence = (jx_forward - jx_backward) / (2.0 * h) + (jy_forward - jy_backward) / (2.0 * h)
    source = sink(X, Y)
    residual = divergence + source

    scale = float(np.max(np.abs(source)))
    if scale == 0.0:
        scale = float(np.max(np.abs(divergence)))
    max_abs = float(np.max(np.abs(residual)))
    rms = float(np.sqrt(np.mean(residual ** 2)))
    if scale == 0.0:
        return ContinuityReport(max_abs, rms, 0.0, 0.0, h, 0.0)
    return ContinuityReport(max_abs, rms, max_abs / scale, rms / scale, h, scale)


def gaussian_packet(x: np.ndarray, x0: float, sigma0: float, k0: float) -> np.ndarray:
    """Normalized Gaussian with position spread sigma0 and mean momentum k0."""
    amplitude = (2.0 * np.pi * sigma0 ** 2) ** -0.25
    return amplitude * np.exp(-((x - x0) ** 2) / (4.0 * sigma0 ** 2) + 1j * k0 * x)


def step_potential(x: np.ndarray, V0: float, x_step: float = 0.0) -> np.ndarray:
    return np.where(x >= x_step, V0, 0.0).astype(complex)


def absorbing_ramp(x: np.ndarray, width_frac: float = 0.1, strength: float = 1.0) -> np.ndarray:
    """Negative-imaginary quartic ramp over width_frac of the domain at both edges."""
    span = x[-1] - x[0]
    ramp = width_frac * span
    W = np.zeros_like(x, dtype=float)
    if ramp > 0:
        left = x < x[0] + ramp
        right = x > x[-1] - ramp
        W[left] = ((x[0] + ramp - x[left]) / ramp) ** 4
        W[right] = ((x[right] - x[-1] + ramp) / ramp) ** 4
    return -1j * strength * W


def norm(state: GridState1D) -> float:
    return float(trapezoid(np.abs(state.psi) ** 2, state.x))


def mean_position(state: GridState1D) -> float:
    rho = np.abs(state.psi) ** 2
    return float(trapezoid(state.x * rho, state.x) / trapezoid(rho, state.x))


def position_width(state: GridState1D) -> float:
    rho = np.abs(state.psi) ** 2
    total = trapezoid(rho, state.x)
    mean = trapezoid(state.x * rho, state.x) / total
    return float(np.sqrt(trapezoid((state.x - mean) ** 2 * rho, state.x) / total))


def local_phase_velocity(state: GridState1D, x_at: float, m: float = 1.0) -> float:
    """Im(d psi / psi)/m at the grid node nearest x_at."""
    i = int(np.argmin(np.abs(state.x - x_at)))
    i = min(max(i, 1), state.x.size - 2)
    psi = state.psi
    if abs(psi[i]) ** 2 < 1e-300:
        raise SingularPointError(f"|psi|^2 vanishes at x={state.x[i]:.6g}")
    gradient = (psi[i + 1] - psi[i - 1]) / (2.0 * state.h)
    return float((gradient / psi[i]).imag / m)


def _crank_nicolson_bands(state: GridState1D, dt: float, m: float) -> Tuple[np.ndarray, np.ndarray, complex]:
    kinetic = 1.0 / (2.0 * m * state.h ** 2)
    diag_H = 2.0 * kinetic + state.potential
    half = 0.5j * dt
    ab = np.zeros((3, state.x.size), dtype=complex)
    ab[0, 1:] = -half * kinetic
    ab[1, :] = 1.0 + half * diag_H
    ab[2, :-1] = -half * kinetic
    return ab, 1.0 - half * diag_H, half * kinetic


def tdse_propagate(state: GridState1D, dt: float, steps: int, m: float = 1.0) -> GridState1D:
    """Crank-Nicolson steps of H = -d^2/2m + V(x) - i gamma/2 with Dirichlet edges.

    The uniform loss is applied exactly as exp(-gamma dt / 2) per step; any
    position-dependent absorber sits inside state.potential.
    """
    if dt * np.max(np.abs(state.potential)) >= STABILITY_LIMIT:
        raise ValueError(f"dt*max|V| = {dt * np.max(np.abs(state.potential)):.3g} >= {STABILITY_LIMIT}")
    ab, rhs_diag, rhs_off = _crank_nicolson_bands(state, dt, m)
    decay = np.exp(-0.5 * state.gamma * dt)

    psi = np.array(state.psi, dtype=complex)
    previous = np.sum(np.abs(psi) ** 2)
    for step in range(steps):
        rhs = rhs_diag * psi
        rhs[1:] += rhs_off * psi[:-1]
        rhs[:-1] += rhs_off * psi[1:]
        psi = solve_banded((1, 1), ab, rhs)
        current = np.sum(np.abs(psi) ** 2)
        if current > previous * (1.0 + NORM_GROWTH_LIMIT):
            raise PropagationError(f"Norm grew by {current / previous - 1.0:.3g} at step {step}")
        psi *= decay
        previous = current * decay ** 2
    logger.debug(f"Propagated {steps} CN steps of dt={dt:.6g}")
    return replace(state, psi=psi, t=state.t + steps * dt)


@dataclass(frozen=True, eq=False)
class PhaseVelocityHistory:
    t: np.ndarray
    velocity: np.ndarray
    beyond: np.ndarray
    x_at: float

    @property
    def turnaround(self) -> float:
        """Time at which the norm beyond x_at peaks (three-point parabolic refinement)."""
        i = int(np.argmax(self.beyond))
        if i == 0 or i == self.t.size - 1:
            return float(self.t[i])
        a, b, c = self.beyond[i - 1:i + 2]
        curvature = a - 2.0 * b + c
        shift = 0.0 if curvature == 0 else 0.5 * (a - c) / curvature
        return float(self.t[i] + shift * (self.t[i + 1] - self.t[i]))

    def velocity_at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.velocity))

    def sign_change(self, near: float) -> Optional[float]:
        """Time, closest to `near`, at which the phase velocity at x_at turns from positive to non-positive."""
        flips = np.flatnonzero((self.velocity[:-1] > 0) & (self.velocity[1:] <= 0))
        if flips.size == 0:
            return None
        i = int(flips[np.argmin(np.abs(self.t[flips] - near))])
        v0, v1 = self.velocity[i], self.velocity[i + 1]
        return float(self.t[i] + v0 / (v0 - v1) * (self.t[i + 1] - self.t[i]))


def phase_velocity_history(state: GridState1D, dt: float, steps: int, every: int, x_at: float,
                           m: float = 1.0) -> PhaseVelocityHistory:
    """Propagate and record, every `every` steps, the phase velocity at x_at and the norm on x >= x_at."""
    if every < 1:
        raise ValueError(f"every must be >= 1, got {every}")
    beyond_mask = state.x >= state.x[int(np.argmin(np.abs(state.x - x_at)))]

    def record(s: GridState1D):
        rho = np.where(beyond_mask, np.abs(s.psi) ** 2, 0.0)
        return s.t, local_phase_velocity(s, x_at, m), float(trapezoid(rho, s.x))

    rows = [record(state)]
    done = 0
    while done < steps:
        chunk = min(every, steps - done)
        state = tdse_propagate(state, dt, chunk, m)
        done += chunk
        rows.append(record(state))
    t, v, beyond = (np.array(column) for column in zip(*rows))
    return PhaseVelocityHistory(t=t, velocity=v, beyond=beyond, x_at=float(x_at))
