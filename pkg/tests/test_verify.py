import warnings

import pytest

from meclight.dynamics import _result, beta_closed_form
from meclight.quantities import AdiabaticityWarning, load_config
from meclight.verify import verify


def by_name(report):
    return {c.name: c for c in report.checks}


def test_default_config_passes():
    report = verify()
    assert report.passed, [c for c in report.checks if not c.passed]
    assert set(by_name(report)) >= {
        "hamiltonian_closed_form", "hamiltonian_6j_chain", "fields_from_hamiltonian",
        "beta_quasistatic_oracle", "dark_reduction", "exchange_conservation",
        "spectral_consistency", "lineshape_quadrature", "dark_shift_positive"}


def flipped_numerator(B0, fields, atomic, exch):
    """beta with the sign of the field term in the numerator reversed."""
    tau = exch.tau_metastable
    gm = atomic.gamma_metastable
    wt = gm * B0 * tau
    b1 = gm * fields.deltaB_half * tau
    b3 = gm * fields.deltaB_threehalf * tau
    num = -1j * (20 * b1 + b3) + 21j * wt + 9
    den = (12 * b1 * (3 * wt + 3 * b3 + 2j) + 3 * b3 * (7j + 12 * wt)
           - 9 * (1 - 1j * wt) * (1 - 4j * wt))
    return _result(num / den, exch)


def test_injected_sign_error_fails_reduction():
    report = verify(beta_fn=flipped_numerator)
    checks = by_name(report)
    assert not report.passed
    assert not checks["dark_reduction"].passed
    assert not checks["beta_quasistatic_oracle"].passed


def test_large_tau_over_T_downgrades_spectral_check():
    with pytest.warns(AdiabaticityWarning):
        cfg = load_config("exchange: {t_ground: 2.2e-6, tau_metastable: 2.2e-7}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdiabaticityWarning)
        report = verify(cfg)
    spectral = by_name(report)["spectral_consistency"]
    assert spectral.level == "warning"
    assert not spectral.passed
    assert spectral.measured > 1e-3
    assert "tau/T" in spectral.detail
    assert report.passed  # warnings do not fail the report


def test_report_dict():
    doc = verify(samples=3).to_dict()
    assert doc["passed"] is True
    assert all({"name", "passed", "level", "measured", "tolerance"} <= set(c) for c in doc["checks"])


def test_reference_beta_is_used_by_default():
    assert by_name(verify(beta_fn=beta_closed_form, samples=2))["dark_reduction"].passed
