import math
import warnings

import pytest
import yaml
from hypothesis import given, settings, strategies as st
from scipy import constants as sc

from meclight.quantities import (CONSTANTS, LINEAR_X, SIGMA_PLUS, TWO_PI, AdiabaticityWarning,
                                 AtomicConfig, ConfigError, ExchangeConfig, LaserConfig,
                                 PhysicalConstants, SaturationWarning, config_from_dict,
                                 default_config, doppler_width, load_config, mw_cm2_to_w_m2,
                                 provenance_echo, serialize_config)

TABLE_ONE = """
exchange: {t_relax: 170, t_ground: 0.37, tau_metastable: 2.2e-7}
laser: {intensity_mw_cm2: 100}
atomic: {excited_decay: 1.022e7, doppler_width: 7414158662.471911}
"""


def test_constants_are_codata():
    assert CONSTANTS.elementary_charge == sc.e
    assert CONSTANTS.reduced_planck == sc.hbar
    assert CONSTANTS.helium3_mass == pytest.approx(3.0160293 * sc.atomic_mass, rel=1e-8)


def test_constants_are_read_only():
    with pytest.raises(AttributeError):
        CONSTANTS.speed_of_light = 1.0


def test_constants_reject_non_positive():
    with pytest.raises(ConfigError):
        PhysicalConstants(boltzmann=0.0)


def test_default_atomic_invariants():
    a = AtomicConfig()
    split = a.omega9 - a.omega8
    assert split > 0
    assert abs(split / (TWO_PI * 6.74e9) - 1) < 0.01
    assert abs(a.gamma_metastable / a.gamma_ground / 864 - 1) < 0.01
    assert a.oscillator_strength == 0.0599


def test_table_one_document_accepted():
    loaded = load_config(TABLE_ONE)
    assert loaded.exchange.t_relax == 170
    assert loaded.exchange.t_ground == 0.37
    assert loaded.laser.intensity == pytest.approx(1000.0)
    assert loaded.atomic.doppler_width == pytest.approx(TWO_PI * 1.18e9)
    assert loaded.provenance["exchange.t_relax"] == "user"


def test_tau_equal_T_rejected():
    with pytest.raises(ConfigError, match="tau << T violated"):
        load_config("exchange: {t_ground: 1.0e-3, tau_metastable: 1.0e-3}")


def test_tau_close_to_T_warns():
    with pytest.warns(AdiabaticityWarning):
        ExchangeConfig(t_ground=1.0, tau_metastable=0.1)


def test_density_ratio_is_tau_over_T():
    e = ExchangeConfig()
    assert e.density_ratio == e.tau_metastable / e.t_ground


def test_empty_document_defaults_with_provenance():
    loaded = load_config("")
    echo = provenance_echo(loaded)
    assert "atomic.oscillator_strength = 0.0599 [paper]" in echo
    assert any(line.startswith("atomic.omega8") and line.endswith("[external]") for line in echo)


def test_unparsable_document():
    with pytest.raises(ConfigError, match="does not parse"):
        load_config("atomic: [unclosed")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config("atomic: {colour: blue}")


def test_non_unit_polarization_named():
    with pytest.raises(ConfigError, match="unit norm"):
        load_config("laser: {polarization: [1, 1, 0]}")


def test_polarization_pairs_and_names():
    loaded = load_config("laser: {polarization: [[0.6, 0], [0, 0.8], 0]}")
    assert loaded.laser.polarization == (0.6 + 0j, 0.8j, 0j)
    assert load_config("laser: {polarization: linear-x}").laser.polarization == LINEAR_X


def test_detuning_key_is_relative_to_c8():
    loaded = load_config("laser: {detuning_hz: -2.0e9}")
    assert loaded.laser.angular_frequency == loaded.atomic.omega8 - TWO_PI * 2e9
    assert loaded.provenance["laser.angular_frequency"] == "user"


def test_null_doppler_width_is_derived():
    loaded = load_config("atomic: {doppler_width: null}")
    assert loaded.provenance["atomic.doppler_width"] == "derived"
    assert 1.18e9 <= loaded.atomic.doppler_width / TWO_PI <= 1.19e9


def test_saturation_warning():
    with pytest.warns(SaturationWarning):
        LaserConfig(intensity=mw_cm2_to_w_m2(600.0))


def test_laser_accepts_exact_unit_norm(no_warnings):
    LaserConfig(polarization=SIGMA_PLUS)


@pytest.mark.parametrize("doc", ["", TABLE_ONE,
                                 "laser: {polarization: [[0.6, 0], [0, 0.8], 0]}",
                                 "atomic: {omega8: 1.7e15, temperature: 77}"])
def test_serialize_round_trip(doc):
    loaded = load_config(doc)
    again = load_config(serialize_config(loaded))
    assert again[:4] == loaded[:4]


def test_serialized_document_is_plain_yaml():
    doc = yaml.safe_load(serialize_config(default_config()))
    assert set(doc) == {"atomic", "exchange", "laser"}


# doppler width

def test_doppler_width_table_one():
    a = AtomicConfig()
    D = doppler_width(a.omega8, 300.0, CONSTANTS.helium3_mass)
    assert 1.18e9 <= D / TWO_PI <= 1.19e9
    assert abs(D / a.doppler_width - 1) < 0.01


def test_doppler_width_zero_temperature():
    assert doppler_width(1e15, 0.0, CONSTANTS.helium3_mass) == 0.0


def test_doppler_width_rejects_negative():
    with pytest.raises(ValueError):
        doppler_width(1e15, -1.0, CONSTANTS.helium3_mass)
    with pytest.raises(ValueError):
        doppler_width(0.0, 300.0, CONSTANTS.helium3_mass)


positive = st.floats(min_value=1e-3, max_value=1e6, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(w=positive, T=positive, k=st.floats(min_value=0.01, max_value=100.0))
def test_doppler_width_scaling(w, T, k):
    m = CONSTANTS.helium3_mass
    D = doppler_width(w, T, m)
    assert doppler_width(k * w, T, m) == pytest.approx(k * D, rel=1e-12)
    assert doppler_width(w, k * T, m) == pytest.approx(math.sqrt(k) * D, rel=1e-12)


def test_doubling_temperature():
    m = CONSTANTS.helium3_mass
    assert doppler_width(1e15, 600.0, m) == pytest.approx(math.sqrt(2) * doppler_width(1e15, 300.0, m),
                                                          rel=1e-14)


def test_configs_are_immutable(cfg):
    with pytest.raises(AttributeError):
        cfg.atomic.omega8 = 1.0


def test_numeric_type_checked():
    with pytest.raises(ConfigError, match="numeric"):
        config_from_dict({"exchange": {"t_ground": "fast"}})


def test_no_warning_for_defaults():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        default_config()
