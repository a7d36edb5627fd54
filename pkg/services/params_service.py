"""
Parameters Service Module
Unit system and physical parameters of the coupled-cavity model.

Every formula in the other services is evaluated in natural units
(hbar = 1, speed of light in the medium = 1, photon effective mass m = 1).
This module is the only place that knows about eV, ps, ns, um or km/s.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
from scipy import constants

from services.logging_service import logger

HBAR_EV_S = constants.hbar / constants.e
C_M_S = constants.c

DEFAULT_M_EV = 1.22
DEFAULT_N_MEDIUM = 1.4
PERTURBATIVE_LIMIT = 1e-2


class ConfigError(ValueError):
    """Configuration document is missing fields or holds invalid values."""


class PerturbativeRangeError(ValueError):
    """Gamma/m is too large for the first-order leakage formulas."""


class RegimeError(ValueError):
    """Operation requested outside the energy regime it is defined for."""


class Regime(str, Enum):
    PROPAGATIVE = 'propagative'
    GAP = 'gap'
    EVANESCENT = 'evanescent'


@dataclass(frozen=True)
class UnitSystem:
    """Natural units built from the photon rest energy and the refractive index."""
    m_eV: float = DEFAULT_M_EV
    n_medium: float = DEFAULT_N_MEDIUM

    @property
    def energy_eV(self) -> float:
        return self.m_eV

    @property
    def time_s(self) -> float:
        return HBAR_EV_S / self.m_eV

    @property
    def speed_m_s(self) -> float:
        return C_M_S / self.n_medium

    @property
    def length_m(self) -> float:
        return self.speed_m_s * self.time_s

    def energy_from_eV(self, value_eV):
        return value_eV / self.m_eV

    def energy_to_eV(self, value):
        return value * self.m_eV

    def rate_from_lifetime_ps(self, lifetime_ps: float) -> float:
        # Gamma = hbar / tau, expressed in units of m
        return HBAR_EV_S / (lifetime_ps * 1e-12) / self.m_eV

    def lifetime_ps_from_rate(self, rate: float) -> float:
        return HBAR_EV_S / (rate * self.m_eV) * 1e12

    def length_from_um(self, value_um):
        return value_um * 1e-6 / self.length_m

    def length_to_um(self, value):
        return value * self.length_m * 1e6

    def time_to_ns(self, value):
        return value * self.time_s * 1e9

    def time_from_ns(self, value_ns):
        return value_ns * 1e-9 / self.time_s

    def speed_to_km_s(self, value):
        return value * self.speed_m_s / 1e3

    def conversion_factors(self) -> Dict[str, float]:
        return {
            'energy_eV': self.energy_eV,
            'time_s': self.time_s,
            'length_m': self.length_m,
            'speed_m_s': self.speed_m_s,
        }


@dataclass(frozen=True)
class CavityParams:
    """All physical parameters in natural units.

    E0 is the single source of truth for the operating energy; the kinetic
    offset Delta is always derived from it.
    """
    V0: float
    J0: float
    Gamma: float
    E0: float
    sigma: float
    m: float = 1.0
    guide_separation: float = 0.0
    guide_width: float = 0.0
    edge_width: float = 0.0
    D0: float = 0.0
    q: Optional[float] = None
    well_shape: str = 'rectangular'
    units: UnitSystem = field(default_factory=UnitSystem)

    def __post_init__(self):
        if not self.m > 0:
            raise ConfigError(f"Effective mass must be positive, got {self.m}")
        if not self.J0 > 0:
            raise ConfigError(f"Coupling J0 must be positive, got {self.J0}")
        if not self.sigma > 0:
            raise ConfigError(f"Energy spread sigma must be positive, got {self.sigma}")
        if not self.Gamma >= 0:
            raise ConfigError(f"Leakage rate Gamma must be non-negative, got {self.Gamma}")
        if not np.isfinite(self.V0):
            raise ConfigError(f"Step height V0 must be a finite real number, got {self.V0}")
        if self.well_shape not in ('rectangular', 'parabolic'):
            raise ConfigError(f"Unknown well shape '{self.well_shape}'")

    @property
    def delta(self) -> float:
        return kinetic_offset(self.E0, self)

    @property
    def delta_over_J0(self) -> float:
        return self.delta / self.J0

    @property
    def implied_q(self) -> float:
        """Longitudinal mode index implied by D0 and the photon rest energy."""
        return self.D0 / np.pi

    def conversion_factors(self) -> Dict[str, float]:
        return self.units.conversion_factors()

    def with_J0(self, J0: float) -> 'CavityParams':
        """New coupling at the same Delta/J0."""
        return replace(self, J0=J0, E0=self.m + self.V0 - J0 + self.delta_over_J0 * J0)

    def with_delta(self, delta: float) -> 'CavityParams':
        return replace(self, E0=energy_for_offset(delta, self))

    def to_si(self) -> Dict[str, Any]:
        u = self.units
        doc = {
            'm_eV': u.m_eV,
            'n_medium': u.n_medium,
            'V0_eV': u.energy_to_eV(self.V0),
            'J0_eV': u.energy_to_eV(self.J0),
            'lifetime_ps': u.lifetime_ps_from_rate(self.Gamma) if self.Gamma > 0 else None,
            'pulse_ns': HBAR_EV_S / (self.sigma * u.m_eV) * 1e9,
            'E0_eV': u.energy_to_eV(self.E0),
            'guide_separation_um': u.length_to_um(self.guide_separation),
            'guide_width_um': u.length_to_um(self.guide_width),
            'edge_width_um': u.length_to_um(self.edge_width),
            'D0_um': u.length_to_um(self.D0),
            'well_shape': self.well_shape,
        }
        if self.q is not None:
            doc['q'] = self.q
        return doc

    @classmethod
    def from_si(cls, doc: Mapping[str, Any]) -> 'CavityParams':
        return load_config(doc)

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['delta'] = self.delta
        data['conversion_factors'] = self.conversion_factors()
        return data


@dataclass(frozen=True)
class EnergyPoint:
    E: float
    params: CavityParams

    @property
    def delta(self) -> float:
        return kinetic_offset(self.E, self.params)

    @property
    def regime(self) -> Regime:
        return regime_of(self.E, self.params)


REQUIRED_FIELDS = ('V0_eV', 'J0_eV', 'lifetime_ps', 'pulse_ns')


def _read_document(source: Union[str, os.PathLike, Mapping[str, Any]]) -> Dict[str, Any]:
    if isinstance(source, Mapping):
        return dict(source)
    try:
        with open(source, 'r', encoding='utf-8') as handle:
            doc = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {source}")
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config {source}: {e}")
    if not isinstance(doc, dict):
        raise ConfigError(f"Config {source} must hold a JSON object")
    return doc


def _number(doc: Mapping[str, Any], key: str, default: Optional[float] = None) -> float:
    value = doc.get(key, default)
    if value is None:
        raise ConfigError(f"Missing required config field '{key}'")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"Config field '{key}' must be a number, got {value!r}")


def load_config(source: Union[str, os.PathLike, Mapping[str, Any]]) -> CavityParams:
    """Parse an SI-valued config document (path or mapping) into natural units.

    A null lifetime_ps means no leakage (Gamma = 0). Exactly one of E0_eV and
    delta_over_J0 selects the operating energy.
    """
    doc = _read_document(source)
    missing = [key for key in REQUIRED_FIELDS if key not in doc]
    if missing:
        raise ConfigError(f"Missing required config field(s): {', '.join(missing)}")
    has_energy = doc.get('E0_eV') is not None
    has_offset = doc.get('delta_over_J0') is not None
    if has_energy == has_offset:
        raise ConfigError("Exactly one of 'E0_eV' and 'delta_over_J0' must be given")

    m_eV = _number(doc, 'm_eV', DEFAULT_M_EV)
    n_medium = _number(doc, 'n_medium', DEFAULT_N_MEDIUM)
    if m_eV <= 0:
        raise ConfigError(f"m_eV must be positive, got {m_eV}")
    if n_medium <= 0:
        raise ConfigError(f"n_medium must be positive, got {n_medium}")
    units = UnitSystem(m_eV=m_eV, n_medium=n_medium)

    lifetime = doc.get('lifetime_ps')
    if lifetime is None:
        gamma = 0.0
    else:
        lifetime = _number(doc, 'lifetime_ps')
        if lifetime <= 0:
            raise ConfigError(f"lifetime_ps must be positive, got {lifetime}")
        gamma = units.rate_from_lifetime_ps(lifetime)

    pulse = _number(doc, 'pulse_ns')
    if pulse <= 0:
        raise ConfigError(f"pulse_ns must be positive, got {pulse}")
    sigma = HBAR_EV_S / (pulse * 1e-9) / m_eV

    V0 = units.energy_from_eV(_number(doc, 'V0_eV'))
    J0 = units.energy_from_eV(_number(doc, 'J0_eV'))
    if J0 <= 0:
        raise ConfigError(f"J0_eV must be positive, got {J0 * m_eV}")
    if has_energy:
        E0 = units.energy_from_eV(_number(doc, 'E0_eV'))
    else:
        E0 = 1.0 + V0 - J0 + _number(doc, 'delta_over_J0') * J0

    q = doc.get('q')
    params = CavityParams(
        V0=V0,
        J0=J0,
        Gamma=gamma,
        E0=E0,
        sigma=sigma,
        guide_separation=units.length_from_um(_number(doc, 'guide_separation_um', 20.0)),
        guide_width=units.length_from_um(_number(doc, 'guide_width_um', 5.0)),
        edge_width=units.length_from_um(_number(doc, 'edge_width_um', 0.5)),
        D0=units.length_from_um(_number(doc, 'D0_um', 15.0)),
        q=None if q is None else float(q),
        well_shape=str(doc.get('well_shape', 'rectangular')),
        units=units,
    )
    logger.debug(f"Loaded cavity params: Delta/J0={params.delta_over_J0:.6g}, Gamma={gamma:.6g}")
    return params


def kinetic_offset(E: float, p: CavityParams) -> float:
    """Delta = E - m - V0 + J0, the longitudinal kinetic offset."""
    return E - p.m - p.V0 + p.J0


def energy_for_offset(delta: float, p: CavityParams) -> float:
    return p.m + p.V0 - p.J0 + delta


def regime_of(E: float, p: CavityParams) -> Regime:
    delta = kinetic_offset(E, p)
    if delta < -p.J0:
        return Regime.EVANESCENT
    if delta > p.J0:
        return Regime.PROPAGATIVE
    return Regime.GAP


def require_perturbative(p: CavityParams, gamma: Optional[float] = None) -> None:
    gamma = p.Gamma if gamma is None else gamma
    if gamma / p.m >= PERTURBATIVE_LIMIT:
        raise PerturbativeRangeError(
            f"Gamma/m = {gamma / p.m:.3g} is outside the perturbative range (< {PERTURBATIVE_LIMIT})"
        )


def config_fingerprint(doc: Mapping[str, Any]) -> str:
    """sha256 of the canonical JSON form of a config document."""
    canonical = json.dumps(doc, sort_keys=True, separators=(',', ':'), default=float)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def params_fingerprint(p: CavityParams) -> str:
    return config_fingerprint(p.to_si())
