"""
Eigenmodes Service Module
Transverse double-well potential, its two lowest eigenmodes and the
guide-localized hybrid modes built from them.

The Hamiltonian is the 3-point finite-difference operator on a uniform grid
with Dirichlet nodes at both ends of [-L_y, L_y].
"""

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import LinAlgError, eigh_tridiagonal
from scipy.optimize import root_scalar

from services.logging_service import logger
from services.params_service import CavityParams

MIN_GRID_POINTS = 501
MIN_POINTS_PER_WELL = 20
MIN_LOCALIZATION = 0.9
SYMMETRY_TOL = 1e-12
CALIBRATION_RTOL = 5e-3
DEFAULT_GRID_POINTS = 4001


class PotentialError(ValueError):
    """Invalid well geometry or potential grid."""


class ModeError(RuntimeError):
    """Eigenpairs do not form the expected symmetric/antisymmetric pair."""


@dataclass(frozen=True)
class WellGeometry:
    well_depth: float
    well_width: float
    separation: float
    shape: str = 'rectangular'
    edge_width: float = 0.0


@dataclass(frozen=True, eq=False)
class PotentialGrid:
    y: np.ndarray
    V: np.ndarray
    symmetric: bool = True

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if y.ndim != 1 or y.shape != V.shape:
            raise PotentialError("y and V must be 1D arrays of equal length")
        if y.size < 5:
            raise PotentialError(f"Grid needs at least 5 points, got {y.size}")
        steps = np.diff(y)
        if steps.min() <= 0 or not np.allclose(steps, steps.mean(), rtol=1e-9, atol=0.0):
            raise PotentialError("Grid spacing must be uniform and increasing")
        if self.symmetric:
            scale = max(1.0, float(np.max(np.abs(V))))
            if np.max(np.abs(V - V[::-1])) > SYMMETRY_TOL * scale:
                raise PotentialError("Potential is not symmetric under y -> -y")
            if np.max(np.abs(y + y[::-1])) > SYMMETRY_TOL * max(1.0, y[-1]):
                raise PotentialError("Grid is not centered on y = 0")
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'V', V)

    @property
    def h(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def L_y(self) -> float:
        return float(self.y[-1])


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Two lowest transverse modes and, once hybridized, the guide modes."""
    y: np.ndarray
    V: np.ndarray
    Phi_plus: np.ndarray
    Phi_minus: np.ndarray
    E_plus: float
    E_minus: float
    main_center: float
    Phi_m: Optional[np.ndarray] = None
    Phi_a: Optional[np.ndarray] = None

    @property
    def J0_eff(self) -> float:
        return 0.5 * (self.E_plus - self.E_minus)

    @property
    def E0_eff(self) -> float:
        return 0.5 * (self.E_plus + self.E_minus)

    @property
    def L_y(self) -> float:
        return float(self.y[-1])

    @property
    def is_hybridized(self) -> bool:
        return self.Phi_m is not None and self.Phi_a is not None


def _symmetric_axis(L_y: float, N: int) -> np.ndarray:
    y = L_y * np.linspace(-1.0, 1.0, N)
    return 0.5 * (y - y[::-1])


def _well_profile(u: np.ndarray, geometry: WellGeometry) -> np.ndarray:
    half = 0.5 * geometry.well_width
    if geometry.shape == 'parabolic':
        return np.clip(1.0 - (u / half) ** 2, 0.0, None)
    if geometry.shape != 'rectangular':
        raise PotentialError(f"Unknown well shape '{geometry.shape}'")
    if geometry.edge_width > 0:
        e = geometry.edge_width
        return 0.5 * (np.tanh((u + half) / e) - np.tanh((u - half) / e))
    return (np.abs(u) <= half).astype(float)


def _check_geometry(geometry: WellGeometry, L_y: float, N: int) -> float:
    if not geometry.well_width > 0:
        raise PotentialError(f"Well width must be positive, got {geometry.well_width}")
    if not geometry.separation > geometry.well_width:
        raise PotentialError(
            f"Wells overlap: separation {geometry.separation:.6g} <= width {geometry.well_width:.6g}"
        )
    if geometry.well_depth < 0:
        raise PotentialError(f"Well depth must be non-negative, got {geometry.well_depth}")
    if N < MIN_GRID_POINTS:
        raise PotentialError(f"Grid too small: N={N} < {MIN_GRID_POINTS}")
    if L_y <= 0.5 * (geometry.separation + geometry.well_width):
        raise PotentialError(f"Half-width L_y={L_y:.6g} does not contain both wells")
    h = 2.0 * L_y / (N - 1)
    if geometry.well_width / h < MIN_POINTS_PER_WELL:
        raise PotentialError(
            f"Grid too coarse: {geometry.well_width / h:.1f} points per well (< {MIN_POINTS_PER_WELL})"
        )
    return h


def build_double_well(geometry: WellGeometry, L_y: float, N: int, V0: float = 0.0) -> PotentialGrid:
    """Two identical wells of depth well_depth below the V0 plateau at +/- separation/2."""
    _check_geometry(geometry, L_y, N)
    y = _symmetric_axis(L_y, N)
    c = 0.5 * geometry.separation
    s = np.abs(y)
    wells = _well_profile(s - c, geometry) + _well_profile(s + c, geometry)
    return PotentialGrid(y=y, V=V0 - geometry.well_depth * wells)


def build_single_well(geometry: WellGeometry, L_y: float, N: int, V0: float = 0.0,
                      center: Optional[float] = None) -> PotentialGrid:
    """One well of the pair, the other removed. Used as an isolated-guide reference."""
    _check_geometry(geometry, L_y, N)
    y = _symmetric_axis(L_y, N)
    c = 0.5 * geometry.separation if center is None else center
    return PotentialGrid(y=y, V=V0 - geometry.well_depth * _well_profile(y - c, geometry), symmetric=False)


def hamiltonian_bands(pot: PotentialGrid, m: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the FD Hamiltonian on the interior nodes."""
    inv = 1.0 / (m * pot.h ** 2)
    diag = inv + pot.V[1:-1]
    off = np.full(pot.y.size - 3, -0.5 * inv)
    return diag, off


def node_count(phi: np.ndarray, rel_tol: float = 1e-6) -> int:
    significant = phi[np.abs(phi) > rel_tol * np.max(np.abs(phi))]
    return int(np.count_nonzero(np.diff(np.sign(significant))))


def localization(y: np.ndarray, phi: np.ndarray, side: int = 1) -> float:
    """Fraction of |phi|^2 on the half-plane sign(y) == side."""
    weight = phi ** 2
    total = trapezoid(weight, y)
    return float(trapezoid(np.where(side * y > 0, weight, 0.0), y) / total)


def _normalize(y: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return phi / np.sqrt(trapezoid(phi ** 2, y))


def assemble_basis(pot: PotentialGrid, energies: np.ndarray, vectors: np.ndarray) -> ModeBasis:
    """Pad interior eigenvectors with the Dirichlet nodes, normalize, fix signs, check nodes."""
    y = pot.y
    padded = np.zeros((y.size, 2))
    padded[1:-1, :] = vectors[:, :2]
    phi_minus = _normalize(y, padded[:, 0])
    phi_plus = _normalize(y, padded[:, 1])

    if trapezoid(phi_minus, y) < 0:
        phi_minus = -phi_minus
    if trapezoid(np.where(y > 0, phi_plus, 0.0), y) < 0:
        phi_plus = -phi_plus

    if node_count(phi_minus) != 0 or node_count(phi_plus) != 1:
        raise ModeError(
            f"Lowest pair has {node_count(phi_minus)} and {node_count(phi_plus)} nodes, expected 0 and 1"
        )
    if pot.symmetric:
        scale = np.max(np.abs(phi_minus))
        if np.max(np.abs(phi_minus - phi_minus[::-1])) > 1e-6 * scale:
            raise ModeError("Ground mode is not symmetric; splitting below solver resolution")
        if np.max(np.abs(phi_plus + phi_plus[::-1])) > 1e-6 * scale:
            raise ModeError("First excited mode is not antisymmetric; splitting below solver resolution")

    upper = y >= 0
    main_center = float(y[upper][np.argmax(np.abs(phi_minus[upper]))])
    return ModeBasis(
        y=y,
        V=pot.V,
        Phi_plus=phi_plus,
        Phi_minus=phi_minus,
        E_plus=float(energies[1]),
        E_minus=float(energies[0]),
        main_center=main_center,
    )


def solve_modes(pot: PotentialGrid, m: float = 1.0) -> ModeBasis:
    """Two lowest eigenpairs of the tridiagonal FD Hamiltonian."""
    diag, off = hamiltonian_bands(pot, m)
    try:
        energies, vectors = eigh_tridiagonal(diag, off, select='i', select_range=(0, 1))
    except (LinAlgError, ValueError) as e:
        raise ModeError(f"Tridiagonal eigensolver failed: {e}")
    return assemble_basis(pot, energies, vectors)


def hybridize(basis: ModeBasis) -> ModeBasis:
    """Build the guide modes Phi_m (main, y > 0) and Phi_a (auxiliary, y < 0)."""
    y = basis.y
    phi_plus = basis.Phi_plus
    main = int(np.argmin(np.abs(y - basis.main_center)))
    phi_m = (basis.Phi_minus + phi_plus) / np.sqrt(2.0)
    if phi_m[main] < 0:
        phi_plus = -phi_plus
        phi_m = (basis.Phi_minus + phi_plus) / np.sqrt(2.0)
    phi_a = (basis.Phi_minus - phi_plus) / np.sqrt(2.0)

    share = localization(y, phi_m, side=1)
    if share < MIN_LOCALIZATION:
        raise ModeError(f"Main mode only {share:.1%} localized in its guide (< {MIN_LOCALIZATION:.0%})")
    return replace(basis, Phi_plus=phi_plus, Phi_m=phi_m, Phi_a=phi_a)


def isolated_well_mode(geometry: WellGeometry, L_y: float, N: int, m: float = 1.0,
                       V0: float = 0.0, center: Optional[float] = None) -> Tuple[float, np.ndarray]:
    """Ground state of a single well on the same grid as the double well."""
    pot = build_single_well(geometry, L_y, N, V0, center)
    diag, off = hamiltonian_bands(pot, m)
    try:
        energies, vectors = eigh_tridiagonal(diag, off, select='i', select_range=(0, 0))
    except (LinAlgError, ValueError) as e:
        raise ModeError(f"Tridiagonal eigensolver failed: {e}")
    phi = np.zeros(pot.y.size)
    phi[1:-1] = vectors[:, 0]
    phi = _normalize(pot.y, phi)
    if trapezoid(phi, pot.y) < 0:
        phi = -phi
    return float(energies[0]), phi


def calibrate_J0(target: float, geometry: WellGeometry, L_y: float, N: int = DEFAULT_GRID_POINTS,
                 m: float = 1.0, V0: float = 0.0) -> Tuple[WellGeometry, ModeBasis]:
    """Tune well_depth so the computed half-splitting matches target within 0.5%.

    The search stays on the tunneling branch, where the splitting falls as the
    wells deepen; very shallow wells are dominated by the box and are skipped.
    """
    if not target > 0:
        raise ValueError(f"Target coupling must be positive, got {target}")

    def mismatch(depth: float) -> float:
        try:
            pot = build_double_well(replace(geometry, well_depth=depth), L_y, N, V0)
            return solve_modes(pot, m).J0_eff - target
        except ModeError:
            # pair unresolved: splitting far below any usable target
            return -target

    box_energy = np.pi ** 2 / (2.0 * m * geometry.well_width ** 2)
    hi = 2.0 * box_energy
    for _ in range(12):
        if mismatch(hi) < 0:
            break
        hi *= 2.0
    else:
        raise ModeError(f"Cannot reach J0={target:.6g}: splitting stays too large")

    lo = hi
    for _ in range(40):
        lo *= 0.5
        if mismatch(lo) > 0:
            break
    else:
        raise ModeError(f"Cannot reach J0={target:.6g}: splitting stays too small")

    result = root_scalar(mismatch, bracket=[lo, 2.0 * lo], method='bisect', rtol=1e-9)
    depth = float(result.root)
    calibrated = replace(geometry, well_depth=depth)
    basis = hybridize(solve_modes(build_double_well(calibrated, L_y, N, V0), m))
    error = abs(basis.J0_eff / target - 1.0)
    if error > CALIBRATION_RTOL:
        raise ModeError(f"Calibration missed J0 by {error:.2%}")
    logger.info(f"Calibrated well depth {depth:.6g} -> J0_eff={basis.J0_eff:.6g} (target {target:.6g})")
    return calibrated, basis


def default_geometry(params: CavityParams) -> Tuple[WellGeometry, float]:
    """Well geometry and grid half-width for a parameter set (depth still to be calibrated)."""
    geometry = WellGeometry(
        well_depth=0.0,
        well_width=params.guide_width,
        separation=params.guide_separation,
        shape=params.well_shape,
        edge_width=params.edge_width,
    )
    return geometry, params.guide_separation + 5.0 * params.guide_width


@lru_cache(maxsize=16)
def modes_for(params: CavityParams, N: int = DEFAULT_GRID_POINTS) -> Tuple[WellGeometry, ModeBasis]:
    """Calibrated geometry and hybridized basis whose splitting matches params.J0."""
    geometry, L_y = default_geometry(params)
    return calibrate_J0(params.J0, geometry, L_y, N, params.m, params.V0)
