"""
Stationary Field Service Module
Stationary 2D field of the coupled guides with uniform radiative loss.

The field is the sum of the two transverse modes, each carried by its own
longitudinal wavevector:

    k_plus^2  = 2m (Delta + J0 + i Gamma/2)   (symmetric mode Phi_minus)
    k_minus^2 = 2m (Delta - J0 + i Gamma/2)   (antisymmetric mode Phi_plus)

Rewritten on the guide modes this gives
    Psi = A exp(i k2 x) [cos(k1 x) Phi_m - i sin(k1 x) Phi_a]
with k1 = (k_minus - k_plus)/2 and k2 = (k_minus + k_plus)/2, an exact
solution of the lossy wave equation for the FD mode energies.
"""

from dataclasses import dataclass, field as dataclass_field, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.interpolate import make_interp_spline

from services.eigenmodes_service import ModeBasis, hybridize
from services.oracle_service import ContinuityReport, SingularPointError, continuity_grid_check
from services.params_service import (
    CavityParams,
    Regime,
    RegimeError,
    kinetic_offset,
    regime_of,
    require_perturbative,
)

SINGULAR_FLOOR = 1e-30
SPLINE_ORDER = 5


def _branch_sqrt(z):
    """Square root on the branch Im >= 0 (positive real part on the cut); works elementwise."""
    root = np.sqrt(np.asarray(z, dtype=complex))
    flip = (root.imag < 0) | ((root.imag == 0) & (root.real < 0))
    root = np.where(flip, -root, root)
    return complex(root) if root.ndim == 0 else root


@dataclass(frozen=True)
class Wavevectors:
    k_plus: complex
    k_minus: complex
    degenerate: bool = False

    @property
    def k1(self) -> complex:
        return 0.5 * (self.k_minus - self.k_plus)

    @property
    def k2(self) -> complex:
        return 0.5 * (self.k_minus + self.k_plus)

    @property
    def kappa1(self) -> float:
        return float((-1j * self.k1).real)

    @property
    def kappa2(self) -> float:
        return float((-1j * self.k2).real)

    @property
    def kappa_product(self) -> complex:
        """(-i k1)(-i k2), equal to m J0 for every energy and loss."""
        return (-1j * self.k1) * (-1j * self.k2)


def wavevectors(E, p: CavityParams, gamma=None) -> Wavevectors:
    """Longitudinal wavevectors on the branch Im k >= 0.

    E and gamma may be arrays (broadcast together); k_plus and k_minus are then arrays too.
    """
    gamma = p.Gamma if gamma is None else gamma
    if np.any(np.asarray(gamma) < 0):
        raise ValueError(f"Gamma must be non-negative, got {gamma}")
    delta = kinetic_offset(E, p)
    z_plus = 2.0 * p.m * (delta + p.J0) + 1j * p.m * gamma
    z_minus = 2.0 * p.m * (delta - p.J0) + 1j * p.m * gamma
    return Wavevectors(
        k_plus=_branch_sqrt(z_plus),
        k_minus=_branch_sqrt(z_minus),
        degenerate=bool(np.any(z_plus == 0) or np.any(z_minus == 0)),
    )


@dataclass(frozen=True, eq=False)
class Field2D:
    params: CavityParams
    basis: ModeBasis
    waves: Wavevectors
    A: float = 1.0
    _splines: Dict[str, object] = dataclass_field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if not self.basis.is_hybridized:
            raise ValueError("Field2D needs a hybridized mode basis")
        y = self.basis.y
        phi_m = make_interp_spline(y, self.basis.Phi_m, k=SPLINE_ORDER)
        phi_a = make_interp_spline(y, self.basis.Phi_a, k=SPLINE_ORDER)
        self._splines.update({
            'm': phi_m,
            'a': phi_a,
            'dm': phi_m.derivative(),
            'da': phi_a.derivative(),
        })

    @property
    def E(self) -> float:
        return self.params.E0

    @property
    def Gamma(self) -> float:
        return self.params.Gamma

    @property
    def m(self) -> float:
        return self.params.m

    @property
    def J0(self) -> float:
        return self.params.J0

    @property
    def delta(self) -> float:
        return self.params.delta

    @property
    def regime(self) -> Regime:
        return regime_of(self.E, self.params)

    @property
    def L_y(self) -> float:
        return self.basis.L_y

    @property
    def length_scale(self) -> float:
        """1/|k2|: decay length when evanescent, reduced wavelength otherwise."""
        scale = abs(self.waves.k2) or abs(self.waves.k1)
        return 1.0 / scale

    @property
    def peak_density(self) -> float:
        return float(self.A ** 2 * np.max(self.basis.Phi_m ** 2))

    def mode(self, name: str, y):
        """Spline of Phi_m ('m'), Phi_a ('a') or their y-derivatives ('dm', 'da'); zero outside the grid."""
        y = np.asarray(y, dtype=float)
        values = self._splines[name](np.clip(y, -self.L_y, self.L_y))
        return np.where(np.abs(y) <= self.L_y, values, 0.0)


def build_field(p: CavityParams, basis: ModeBasis, delta_over_J0: Optional[float] = None,
                gamma: Optional[float] = None, A: float = 1.0) -> Field2D:
    """Field at the requested Delta/J0 (default: the one in p), adopting the basis splitting as J0."""
    if not basis.is_hybridized:
        basis = hybridize(basis)
    adopted = p.with_J0(basis.J0_eff)
    if delta_over_J0 is not None:
        adopted = adopted.with_delta(delta_over_J0 * adopted.J0)
    if gamma is not None:
        adopted = replace(adopted, Gamma=gamma)
    return Field2D(params=adopted, basis=basis, waves=wavevectors(adopted.E0, adopted), A=A)


def _bracket(fld: Field2D, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k1 = fld.waves.k1
    c = np.cos(k1 * x)
    s = np.sin(k1 * x)
    phi_m = fld.mode('m', y)
    phi_a = fld.mode('a', y)
    prefactor = fld.A * np.exp(1j * fld.waves.k2 * x)
    return prefactor, c, s, phi_m, phi_a


def field(fld: Field2D, x, y):
    prefactor, c, s, phi_m, phi_a = _bracket(fld, x, y)
    return prefactor * (c * phi_m - 1j * s * phi_a)


def field_real_form(fld: Field2D, x, y):
    """cosh/sinh form of the lossless evanescent field."""
    if fld.Gamma != 0 or fld.regime is not Regime.EVANESCENT:
        raise RegimeError("Real form exists only for Gamma = 0 below the gap")
    x = np.asarray(x, dtype=float)
    k1, k2 = fld.waves.kappa1, fld.waves.kappa2
    return fld.A * np.exp(-k2 * x) * (np.cosh(k1 * x) * fld.mode('m', y) + np.sinh(k1 * x) * fld.mode('a', y))


def density(fld: Field2D, x, y):
    return np.abs(field(fld, x, y)) ** 2


def _derivatives(fld: Field2D, x, y):
    prefactor, c, s, phi_m, phi_a = _bracket(fld, x, y)
    k1 = fld.waves.k1
    bracket = c * phi_m - 1j * s * phi_a
    d_x = -k1 * s * phi_m - 1j * k1 * c * phi_a
    d_y = c * fld.mode('dm', y) - 1j * s * fld.mode('da', y)
    return prefactor, bracket, d_x, d_y


def singular_mask(fld: Field2D, x, y):
    return density(fld, x, y) < SINGULAR_FLOOR * fld.peak_density


def velocity(fld: Field2D, x, y) -> Tuple[np.ndarray, np.ndarray]:
    """Bohmian velocity Im(grad Psi / Psi)/m; NaN at singular samples."""
    prefactor, bracket, d_x, d_y = _derivatives(fld, x, y)
    singular = np.abs(prefactor * bracket) ** 2 < SINGULAR_FLOOR * fld.peak_density
    safe = np.where(singular, 1.0, bracket)
    vx = fld.waves.k2.real / fld.m + np.imag(d_x / safe) / fld.m
    vy = np.imag(d_y / safe) / fld.m
    return np.where(singular, np.nan, vx), np.where(singular, np.nan, vy)


def velocity_at(fld: Field2D, x: float, y: float) -> Tuple[float, float]:
    vx, vy = velocity(fld, x, y)
    if np.isnan(vx) or np.isnan(vy):
        raise SingularPointError(f"Wavefunction vanishes at ({x:.6g}, {y:.6g})")
    return float(vx), float(vy)


def probability_current(fld: Field2D, x, y) -> Tuple[np.ndarray, np.ndarray]:
    """j = Im(Psi* grad Psi)/m, evaluated without dividing by Psi."""
    prefactor, bracket, d_x, d_y = _derivatives(fld, x, y)
    weight = np.abs(prefactor) ** 2
    jx = weight * (fld.waves.k2.real * np.abs(bracket) ** 2 + np.imag(np.conj(bracket) * d_x)) / fld.m
    jy = weight * np.imag(np.conj(bracket) * d_y) / fld.m
    return jx, jy


def density_grid(fld: Field2D, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """|Psi|^2 with rows along ys and columns along xs."""
    X, Y = np.meshgrid(xs, ys)
    return density(fld, X, Y)


def leakage_velocity_estimate(delta: float, p: CavityParams) -> float:
    """First-order drift (Gamma/2m)/sqrt(-2 Delta/m) of the evanescent field."""
    if delta >= -p.J0:
        raise RegimeError(f"Leakage estimate needs Delta < -J0, got Delta/J0 = {delta / p.J0:.6g}")
    require_perturbative(p)
    return (p.Gamma / (2.0 * p.m)) / np.sqrt(-2.0 * delta / p.m)


def continuity_residual(fld: Field2D, xs: np.ndarray, ys: np.ndarray,
                        h: Optional[float] = None) -> ContinuityReport:
    """div j + Gamma |Psi|^2 by central differences with step h (default L/200)."""
    h = fld.length_scale / 200.0 if h is None else h
    return continuity_grid_check(
        flux=lambda x, y: probability_current(fld, x, y),
        sink=lambda x, y: fld.Gamma * density(fld, x, y),
        xs=xs,
        ys=ys,
        h=h,
    )
