"""
Pytest configuration and shared fixtures for testing.
Provides a small synthetic double well (fast to diagonalize), parameter sets
built on it, and the default configuration shipped in configs/.
"""
import os
import sys

import pytest

# Add project root to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from services.eigenmodes_service import WellGeometry, build_double_well, hybridize, solve_modes
from services.params_service import CavityParams, load_config
from services.stationary_service import build_field

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
DEFAULT_CONFIG = os.path.join(ROOT, 'configs', 'defaults.json')

SMALL_L_Y = 16.0
SMALL_N = 1601


@pytest.fixture(scope='session')
def default_config_path():
    return DEFAULT_CONFIG


@pytest.fixture(scope='session')
def default_params():
    """Parameters from configs/defaults.json (natural units)."""
    return load_config(DEFAULT_CONFIG)


@pytest.fixture(scope='session')
def small_geometry():
    """Wells of width 4 and depth 0.5 with centers 10 apart; smooth 1.0 edges."""
    return WellGeometry(well_depth=0.5, well_width=4.0, separation=10.0, edge_width=1.0)


@pytest.fixture(scope='session')
def small_potential(small_geometry):
    return build_double_well(small_geometry, SMALL_L_Y, SMALL_N)


@pytest.fixture(scope='session')
def small_basis(small_potential):
    return hybridize(solve_modes(small_potential))


def make_params(J0, delta_over_J0=-2.0, gamma_over_J0=0.1, sigma=1e-4, V0=0.0):
    """CavityParams on the small well with Delta and Gamma given relative to J0."""
    base = CavityParams(V0=V0, J0=J0, Gamma=gamma_over_J0 * J0, E0=1.0, sigma=sigma)
    return base.with_delta(delta_over_J0 * J0)


@pytest.fixture(scope='session')
def small_params(small_basis):
    return make_params(small_basis.J0_eff)


@pytest.fixture(scope='session')
def small_field(small_params, small_basis):
    """Lossy evanescent field at Delta = -2 J0."""
    return build_field(small_params, small_basis)


@pytest.fixture(scope='session')
def lossless_field(small_params, small_basis):
    return build_field(small_params, small_basis, gamma=0.0)


@pytest.fixture(scope='session')
def propagative_field(small_params, small_basis):
    return build_field(small_params, small_basis, delta_over_J0=2.0)

