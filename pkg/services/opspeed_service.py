"""
Operational Speed Service Module
Energy-velocity extraction from the population transferred into the
auxiliary guide, and its comparison with the closed form and with the
leakage-driven Bohmian drift.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq, curve_fit

from services.logging_service import logger
from services.params_service import CavityParams, RegimeError, energy_for_offset
from services.stationary_service import Field2D, Wavevectors, density, leakage_velocity_estimate, wavevectors

MIN_SAMPLES = 8
QUADRATIC_RHO_LIMIT = 0.05
ARCSIN_RHO_LIMIT = 0.95
FIT_WINDOW_RHO = 0.01
FIT_SAMPLES = 16
POPULATION_FLOOR = 1e-300


class FitWindowError(ValueError):
    """Population samples unsuitable for the requested linearization."""


class FitMethod(str, Enum):
    QUADRATIC_SMALL_X = 'quadratic-small-x'
    ARCSIN_LINEARIZED = 'arcsin-linearized'


@dataclass(frozen=True)
class SpeedFit:
    v: float
    window: Tuple[float, float]
    residual_rms: float
    method: FitMethod
    n_samples: int


@dataclass(frozen=True)
class SpeedCurveRow:
    delta: float
    delta_over_J0: float
    v_closed: float
    v_fit: float
    v_bohm_leak: float
    v_closed_km_s: float
    v_fit_km_s: float
    v_bohm_leak_km_s: float


def population_ratio_wavevectors(waves: Wavevectors, x):
    """|c_a|^2 / (|c_a|^2 + |c_m|^2) for c_m = cos(k1 x), c_a = -i sin(k1 x)."""
    x = np.asarray(x, dtype=float)
    main = np.abs(np.cos(waves.k1 * x)) ** 2
    aux = np.abs(np.sin(waves.k1 * x)) ** 2
    total = main + aux
    if np.any(total < POPULATION_FLOOR):
        raise FloatingPointError("Both guide amplitudes vanish")
    return aux / total


def population_ratio(fld: Field2D, x):
    return population_ratio_wavevectors(fld.waves, x)


def population_ratio_closed_form(kappa1: float, x):
    """sinh^2(k x) / (1 + 2 sinh^2(k x)), the lossless evanescent ratio."""
    s2 = np.sinh(kappa1 * np.asarray(x, dtype=float)) ** 2
    return s2 / (1.0 + 2.0 * s2)


def population_ratio_from_density(fld: Field2D, x: float) -> float:
    """Share of the |Psi|^2 cross-section lying in the auxiliary half-plane."""
    y = fld.basis.y
    rho = density(fld, np.full_like(y, float(x)), y)
    return float(trapezoid(np.where(y < 0, rho, 0.0), y) / trapezoid(rho, y))


def _through_origin(x, slope):
    return slope * x


def fit_speed(x: Sequence[float], rho: Sequence[float], J0: float,
              method: FitMethod = FitMethod.QUADRATIC_SMALL_X) -> SpeedFit:
    """Fit v from rho(x) ~ (J0 x / v)^2, either directly on sqrt(rho) or after arcsin."""
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    method = FitMethod(method)
    if x.size < MIN_SAMPLES or x.size != rho.size:
        raise FitWindowError(f"Need at least {MIN_SAMPLES} paired samples, got {x.size}")
    if np.any(x < 0) or np.any(rho < 0):
        raise FitWindowError("Samples must have x >= 0 and rho >= 0")
    limit = QUADRATIC_RHO_LIMIT if method is FitMethod.QUADRATIC_SMALL_X else ARCSIN_RHO_LIMIT
    if np.max(rho) >= limit:
        raise FitWindowError(f"Largest ratio {np.max(rho):.3g} outside the {method.value} window (< {limit})")

    order = np.argsort(x)
    x, rho = x[order], rho[order]
    root = np.sqrt(rho)
    if np.any(np.diff(root) < -1e-12 * max(root.max(), 1e-300)):
        raise FitWindowError("sqrt(rho) is not monotone in x")

    target = root if method is FitMethod.QUADRATIC_SMALL_X else np.arcsin(root)
    guess = float(np.dot(x, target) / np.dot(x, x))
    (slope,), _ = curve_fit(_through_origin, x, target, p0=[guess])
    if not slope > 0:
        raise FitWindowError(f"Fitted slope {slope:.3g} is not positive")
    residual = target - _through_origin(x, slope)
    return SpeedFit(
        v=float(J0 / slope),
        window=(float(x[0]), float(x[-1])),
        residual_rms=float(np.sqrt(np.mean(residual ** 2))),
        method=method,
        n_samples=int(x.size),
    )


def closed_form_speed(delta: float, p: CavityParams) -> float:
    """2 J0 / (kappa_- - kappa_+), written as (kappa_+ + kappa_-)/2m to avoid cancellation."""
    if delta >= -p.J0:
        raise RegimeError(f"Closed-form speed needs Delta < -J0, got Delta/J0 = {delta / p.J0:.6g}")
    kappa_plus = np.sqrt(2.0 * p.m * (-delta - p.J0))
    kappa_minus = np.sqrt(2.0 * p.m * (-delta + p.J0))
    return float((kappa_plus + kappa_minus) / (2.0 * p.m))


def fit_window(waves: Wavevectors, rho_max: float = FIT_WINDOW_RHO) -> float:
    """x at which the population ratio first reaches rho_max."""
    scale = 1.0 / max(abs(waves.k1), 1e-300)
    upper = scale
    while population_ratio_wavevectors(waves, upper) < rho_max:
        upper *= 2.0
    return brentq(lambda x: float(population_ratio_wavevectors(waves, x)) - rho_max, 0.0, upper)


def _speed_row(delta: float, p: CavityParams) -> SpeedCurveRow:
    waves = wavevectors(energy_for_offset(delta, p), p)
    x_window = fit_window(waves)
    xs = np.linspace(x_window / FIT_SAMPLES, x_window, FIT_SAMPLES)
    fitted = fit_speed(xs, population_ratio_wavevectors(waves, xs), p.J0, FitMethod.QUADRATIC_SMALL_X)
    v_closed = closed_form_speed(delta, p)
    v_leak = leakage_velocity_estimate(delta, p) if p.Gamma > 0 else 0.0
    speed = p.units.speed_to_km_s
    return SpeedCurveRow(
        delta=float(delta),
        delta_over_J0=float(delta / p.J0),
        v_closed=v_closed,
        v_fit=fitted.v,
        v_bohm_leak=float(v_leak),
        v_closed_km_s=float(speed(v_closed)),
        v_fit_km_s=float(speed(fitted.v)),
        v_bohm_leak_km_s=float(speed(v_leak)),
    )


def speed_curve(deltas: Sequence[float], p: CavityParams, threads: int = 1) -> List[SpeedCurveRow]:
    """One row per Delta (natural units), all in the evanescent regime."""
    deltas = [float(d) for d in deltas]
    for d in deltas:
        if d >= -p.J0:
            raise RegimeError(f"Speed curve needs Delta < -J0, got Delta/J0 = {d / p.J0:.6g}")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda d: _speed_row(d, p), deltas))
    logger.info(f"Computed speed curve with {len(rows)} rows")
    return rows


def parse_delta_range(text: str) -> List[float]:
    """'start:stop:step' in units of J0, inclusive of stop, stepping from start towards stop."""
    parts = text.split(':')
    if len(parts) != 3:
        raise ValueError(f"Expected start:stop:step, got '{text}'")
    try:
        start, stop, step = (float(part) for part in parts)
    except ValueError:
        raise ValueError(f"Non-numeric delta range '{text}'")
    step = abs(step)
    if step == 0:
        raise ValueError("Delta step must be non-zero")
    count = int(np.floor(abs(stop - start) / step + 1e-9)) + 1
    direction = 1.0 if stop >= start else -1.0
    return [start + direction * i * step for i in range(count)]


def speed_ratio(p: CavityParams, delta: Optional[float] = None) -> float:
    """Closed-form speed over the leakage drift at one operating point."""
    delta = p.delta if delta is None else delta
    return closed_form_speed(delta, p) / leakage_velocity_estimate(delta, p)
