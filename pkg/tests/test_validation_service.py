import numpy as np
import pytest

from services.oracle_service import PhaseVelocityHistory
from services.validation_service import SUITES, run_suite, step_turnaround_checks, tdse_checks


@pytest.mark.unit
def test_tdse_suite_passes(default_params):
    report = run_suite('tdse', default_params)
    assert list(report['suites']) == ['tdse']
    assert report['passed']
    names = [check['name'] for check in report['suites']['tdse']['checks']]
    assert names == ['free_width_rel_error', 'unitarity_drift', 'loss_rel_error',
                     'step_turnaround_sign_violations', 'step_turnaround_trend_violations', 'step_turnaround_offset']


@pytest.mark.unit
def test_check_records_are_plain(default_params):
    for check in tdse_checks(default_params):
        assert set(check) == {'name', 'value', 'tolerance', 'passed'}
        assert isinstance(check['value'], float) and isinstance(check['passed'], bool)


@pytest.mark.unit
def test_unknown_suite(default_params):
    with pytest.raises(ValueError):
        run_suite('spectral', default_params)


@pytest.mark.unit
def test_step_turnaround_checks_fail_without_reversal(mocker):
    t = np.linspace(0.0, 40.0, 41)
    steady = PhaseVelocityHistory(t=t, velocity=np.full(t.size, 0.3), beyond=np.exp(-((t - 20.0) / 5.0) ** 2),
                                  x_at=0.5)
    mocker.patch('services.validation_service.step_turnaround_history', return_value=steady)
    checks = {c['name']: c for c in step_turnaround_checks()}
    assert checks['step_turnaround_sign_violations']['value'] == 2.0
    assert checks['step_turnaround_offset']['value'] == np.inf
    assert not any(c['passed'] for c in checks.values())


@pytest.mark.slow
@pytest.mark.integration
def test_all_suites_pass_at_defaults(default_params):
    report = run_suite('all', default_params)
    assert tuple(report['suites']) == SUITES
    failed = [(suite, c['name'], c['value']) for suite, r in report['suites'].items()
              for c in r['checks'] if not c['passed']]
    assert failed == []
    assert report['passed']
