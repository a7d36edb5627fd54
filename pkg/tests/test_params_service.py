import json

import pytest

from services.params_service import (
    HBAR_EV_S,
    CavityParams,
    ConfigError,
    PerturbativeRangeError,
    Regime,
    UnitSystem,
    config_fingerprint,
    energy_for_offset,
    kinetic_offset,
    load_config,
    params_fingerprint,
    regime_of,
    require_perturbative,
)

BASE_DOC = {
    'V0_eV': 0.00122,
    'J0_eV': 3.05e-05,
    'lifetime_ps': 270,
    'pulse_ns': 26,
    'delta_over_J0': -2,
}


@pytest.mark.unit
def test_natural_length_and_speed_units():
    u = UnitSystem()
    assert u.length_m == pytest.approx(115.5e-9, abs=0.5e-9)
    assert u.speed_to_km_s(1e-4) == pytest.approx(21.41, rel=1e-3)
    assert u.length_to_um(u.length_from_um(20.0)) == pytest.approx(20.0)


@pytest.mark.unit
def test_load_defaults(default_params):
    p = default_params
    assert p.m == 1.0
    assert p.J0 == pytest.approx(1e-5, rel=1e-12)
    assert p.V0 == pytest.approx(1e-3, rel=1e-12)
    assert p.delta_over_J0 == pytest.approx(-5.0, rel=1e-9)
    assert p.Gamma == pytest.approx(HBAR_EV_S / 270e-12 / 1.22, rel=1e-12)
    assert p.sigma == pytest.approx(HBAR_EV_S / 26e-9 / 1.22, rel=1e-12)
    assert p.units.length_to_um(p.guide_separation) == pytest.approx(20.0)
    assert regime_of(p.E0, p) is Regime.EVANESCENT


@pytest.mark.unit
def test_load_config_from_file(tmp_path):
    path = tmp_path / "cavity.json"
    path.write_text(json.dumps(BASE_DOC))
    assert load_config(str(path)).J0 == load_config(BASE_DOC).J0


@pytest.mark.unit
def test_null_lifetime_means_no_loss():
    p = load_config(dict(BASE_DOC, lifetime_ps=None))
    assert p.Gamma == 0.0
    assert p.to_si()['lifetime_ps'] is None


@pytest.mark.unit
@pytest.mark.parametrize("missing", ['V0_eV', 'J0_eV', 'lifetime_ps', 'pulse_ns'])
def test_missing_required_field(missing):
    doc = {k: v for k, v in BASE_DOC.items() if k != missing}
    with pytest.raises(ConfigError, match=missing):
        load_config(doc)


@pytest.mark.unit
def test_energy_selection_must_be_unique():
    with pytest.raises(ConfigError):
        load_config(dict(BASE_DOC, E0_eV=1.22))
    with pytest.raises(ConfigError):
        load_config({k: v for k, v in BASE_DOC.items() if k != 'delta_over_J0'})


@pytest.mark.unit
@pytest.mark.parametrize("key,value", [('J0_eV', -1e-5), ('pulse_ns', 0), ('lifetime_ps', -3), ('m_eV', 0),
                                       ('V0_eV', 'high')])
def test_invalid_values(key, value):
    with pytest.raises(ConfigError):
        load_config(dict(BASE_DOC, **{key: value}))


@pytest.mark.unit
def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "absent.json"))


@pytest.mark.unit
def test_offset_and_energy_are_inverse(default_params):
    p = default_params
    for delta in (-20 * p.J0, -p.J0, 0.0, 3 * p.J0):
        assert kinetic_offset(energy_for_offset(delta, p), p) == pytest.approx(delta, abs=1e-15)


@pytest.mark.unit
def test_regime_boundaries(default_params):
    p = default_params
    assert regime_of(energy_for_offset(-1.5 * p.J0, p), p) is Regime.EVANESCENT
    assert regime_of(energy_for_offset(0.5 * p.J0, p), p) is Regime.GAP
    assert regime_of(energy_for_offset(1.5 * p.J0, p), p) is Regime.PROPAGATIVE


@pytest.mark.unit
def test_with_J0_keeps_relative_offset(default_params):
    adopted = default_params.with_J0(1.01 * default_params.J0)
    assert adopted.J0 == pytest.approx(1.01 * default_params.J0)
    assert adopted.delta_over_J0 == pytest.approx(default_params.delta_over_J0, rel=1e-9)


@pytest.mark.unit
def test_invalid_params_rejected():
    with pytest.raises(ConfigError):
        CavityParams(V0=0.0, J0=0.0, Gamma=0.0, E0=1.0, sigma=1e-4)
    with pytest.raises(ConfigError):
        CavityParams(V0=0.0, J0=1e-3, Gamma=-1.0, E0=1.0, sigma=1e-4)
    with pytest.raises(ConfigError):
        CavityParams(V0=0.0, J0=1e-3, Gamma=0.0, E0=1.0, sigma=1e-4, well_shape='triangular')


@pytest.mark.unit
def test_perturbative_range(default_params):
    require_perturbative(default_params)
    with pytest.raises(PerturbativeRangeError):
        require_perturbative(default_params, gamma=0.05)


@pytest.mark.unit
def test_si_document_reloads(default_params):
    again = CavityParams.from_si(default_params.to_si())
    assert again.E0 == pytest.approx(default_params.E0, rel=1e-14)
    assert again.Gamma == pytest.approx(default_params.Gamma, rel=1e-12)
    assert again.guide_width == pytest.approx(default_params.guide_width, rel=1e-12)


@pytest.mark.unit
def test_fingerprints_ignore_key_order(default_params):
    reordered = dict(reversed(list(BASE_DOC.items())))
    assert config_fingerprint(BASE_DOC) == config_fingerprint(reordered)
    assert config_fingerprint(BASE_DOC) != config_fingerprint(dict(BASE_DOC, pulse_ns=27))
    assert len(params_fingerprint(default_params)) == 64


@pytest.mark.unit
def test_implied_mode_index(default_params):
    assert default_params.implied_q == pytest.approx(default_params.D0 / 3.141592653589793)
    assert default_params.as_dict()['delta'] == pytest.approx(default_params.delta)
