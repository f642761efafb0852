"""Physical constants and validated configuration for the MEOP light-shift model.

All frequencies and rates are stored as angular frequencies [rad/s]; fields in
tesla; gyromagnetic ratios as magnitudes [rad/(s T)].  The only unit
conversion performed at the interface is the laser intensity, which is given
in mW/cm^2 and stored in W/m^2.

Configuration documents are YAML with three sections (``atomic``,
``exchange``, ``laser``).  Every key is optional; unknown keys are rejected.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Any, NamedTuple

import numpy as np
import yaml
from scipy import constants as _sc

TWO_PI = 2.0 * math.pi

# 3He atomic mass in unified atomic mass units (AME2020)
HELIUM3_MASS_U = 3.0160293201

# provenance tags
PAPER = "paper"
EXTERNAL = "external"
USER = "user"
DERIVED = "derived"

MAX_TAU_OVER_T = 1e-3
SATURATION_WARN_MW_CM2 = 500.0


class ConfigError(ValueError):
    """A configuration value violates a named invariant."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        msg = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(msg)


class AdiabaticityWarning(UserWarning):
    """tau/T is not small enough for adiabatic elimination to be accurate."""


class SaturationWarning(UserWarning):
    """Pump intensity approaches the saturation regime of the 2^3S-2^3P line."""


@dataclass(frozen=True)
class PhysicalConstants:
    elementary_charge: float = _sc.e
    electron_mass: float = _sc.m_e
    speed_of_light: float = _sc.c
    vacuum_permittivity: float = _sc.epsilon_0
    reduced_planck: float = _sc.hbar
    boltzmann: float = _sc.k
    helium3_mass: float = HELIUM3_MASS_U * _sc.atomic_mass

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError("constants must be strictly positive", f"{f.name}={v}")


CONSTANTS = PhysicalConstants()


def doppler_width(omega0: float, temperature: float, mass: float,
                  constants: PhysicalConstants = CONSTANTS) -> float:
    """Doppler width D = omega0 * sqrt(2 k_B T / (m c^2)) in rad/s.

    A zero temperature gives D = 0; negative inputs (or non-positive
    ``omega0``/``mass``) raise ``ValueError``.
    """
    if omega0 <= 0 or mass <= 0:
        raise ValueError(f"omega0 and mass must be positive, got {omega0}, {mass}")
    if temperature < 0:
        raise ValueError(f"temperature must be non-negative, got {temperature}")
    c = constants.speed_of_light
    return omega0 * math.sqrt(2.0 * constants.boltzmann * temperature / (mass * c * c))


# C8 line (2^3S_1 F=1/2 -> 2^3P_0), 1083 nm; C9 lies one metastable hyperfine
# splitting above it.
DEFAULT_OMEGA8 = TWO_PI * 276.7e12
METASTABLE_HFS = TWO_PI * 6.7397e9


@dataclass(frozen=True)
class AtomicConfig:
    oscillator_strength: float = 0.0599
    omega8: float = DEFAULT_OMEGA8
    omega9: float = DEFAULT_OMEGA8 + METASTABLE_HFS
    excited_decay: float = 1.022e7
    doppler_width: float = TWO_PI * 1.18e9
    gamma_metastable: float = TWO_PI * 28.025e9
    gamma_ground: float = TWO_PI * 32.434e6
    temperature: float = 300.0

    def __post_init__(self):
        if not self.oscillator_strength > 0:
            raise ConfigError("oscillator strength must be positive")
        if not 0 < self.omega8 < self.omega9:
            raise ConfigError("omega9 > omega8 > 0 required", f"{self.omega8}, {self.omega9}")
        if not self.excited_decay > 0:
            raise ConfigError("gamma_e > 0 required", str(self.excited_decay))
        if not self.doppler_width > 0:
            raise ConfigError("D > 0 required", str(self.doppler_width))
        if not (self.gamma_metastable > 0 and self.gamma_ground > 0):
            raise ConfigError("gyromagnetic ratios are stored as positive magnitudes")
        if not self.temperature >= 0:
            raise ConfigError("temperature must be non-negative")


@dataclass(frozen=True)
class ExchangeConfig:
    """MEC times.  ``math.inf`` for both T and tau switches exchange off."""

    t_ground: float = 0.37
    tau_metastable: float = 2.2e-7
    t_relax: float = 170.0

    def __post_init__(self):
        for name in ("t_ground", "tau_metastable", "t_relax"):
            if not getattr(self, name) > 0:
                raise ConfigError("collision and relaxation times must be positive", name)
        if math.isinf(self.t_ground) and math.isinf(self.tau_metastable):
            return
        ratio = self.tau_metastable / self.t_ground
        if not ratio < 1.0:
            raise ConfigError("tau << T violated", f"tau/T = {ratio:g}")
        if ratio >= MAX_TAU_OVER_T:
            warnings.warn(f"tau/T = {ratio:g} >= {MAX_TAU_OVER_T:g}; adiabatic elimination "
                          "is inaccurate", AdiabaticityWarning, stacklevel=3)

    @property
    def density_ratio(self) -> float:
        """n/N, identical to tau/T (0 when exchange is off)."""
        if math.isinf(self.tau_metastable):
            return 0.0
        return self.tau_metastable / self.t_ground

    @property
    def rate_ground(self) -> float:
        return 0.0 if math.isinf(self.t_ground) else 1.0 / self.t_ground

    @property
    def rate_metastable(self) -> float:
        return 0.0 if math.isinf(self.tau_metastable) else 1.0 / self.tau_metastable

    @property
    def rate_relax(self) -> float:
        return 0.0 if math.isinf(self.t_relax) else 1.0 / self.t_relax

    @classmethod
    def no_exchange(cls, t_relax: float = 170.0) -> "ExchangeConfig":
        return cls(math.inf, math.inf, t_relax)


SIGMA_PLUS = (1 / math.sqrt(2), 1j / math.sqrt(2), 0j)
SIGMA_MINUS = (1 / math.sqrt(2), -1j / math.sqrt(2), 0j)
LINEAR_X = (1 + 0j, 0j, 0j)
LINEAR_Y = (0j, 1 + 0j, 0j)
LINEAR_Z = (0j, 0j, 1 + 0j)

NAMED_POLARIZATIONS = {
    "sigma+": SIGMA_PLUS,
    "sigma-": SIGMA_MINUS,
    "linear-x": LINEAR_X,
    "linear-y": LINEAR_Y,
    "linear-z": LINEAR_Z,
}


def mw_cm2_to_w_m2(value: float) -> float:
    return value * 10.0


def w_m2_to_mw_cm2(value: float) -> float:
    return value / 10.0


@dataclass(frozen=True)
class LaserConfig:
    """Pump laser: intensity in W/m^2, angular frequency, complex polarization."""

    intensity: float = mw_cm2_to_w_m2(100.0)
    angular_frequency: float = DEFAULT_OMEGA8 - TWO_PI * 1e9
    polarization: tuple[complex, complex, complex] = SIGMA_PLUS

    def __post_init__(self):
        pol = tuple(complex(c) for c in self.polarization)
        if len(pol) != 3:
            raise ConfigError("polarization must be a complex 3-vector")
        object.__setattr__(self, "polarization", pol)
        norm = math.sqrt(sum(abs(c) ** 2 for c in pol))
        if abs(norm - 1.0) > 1e-12:
            raise ConfigError("polarization must have unit norm", f"|eps| = {norm!r}")
        if not self.intensity >= 0:
            raise ConfigError("intensity must be non-negative", str(self.intensity))
        if not self.angular_frequency > 0:
            raise ConfigError("laser angular frequency must be positive")
        if w_m2_to_mw_cm2(self.intensity) > SATURATION_WARN_MW_CM2:
            warnings.warn("pump intensity above 0.5 W/cm^2: the perturbative light-shift "
                          "model is outside its validity range", SaturationWarning, stacklevel=3)

    @property
    def epsilon(self) -> np.ndarray:
        return np.array(self.polarization, dtype=complex)

    @property
    def intensity_mw_cm2(self) -> float:
        return w_m2_to_mw_cm2(self.intensity)

    def detuning_from(self, omega0: float) -> float:
        """omega - omega0 in rad/s."""
        return self.angular_frequency - omega0

    def with_detuning(self, omega0: float, detuning_hz: float) -> "LaserConfig":
        return replace(self, angular_frequency=omega0 + TWO_PI * detuning_hz)

    def with_intensity_mw_cm2(self, value: float) -> "LaserConfig":
        return replace(self, intensity=mw_cm2_to_w_m2(value))


class LoadedConfig(NamedTuple):
    constants: PhysicalConstants
    atomic: AtomicConfig
    exchange: ExchangeConfig
    laser: LaserConfig
    provenance: dict


_ATOMIC_TAGS = {
    "oscillator_strength": PAPER,
    "omega8": EXTERNAL,
    "omega9": EXTERNAL,
    "excited_decay": PAPER,
    "doppler_width": PAPER,
    "gamma_metastable": EXTERNAL,
    "gamma_ground": EXTERNAL,
    "temperature": EXTERNAL,
}
_EXCHANGE_TAGS = {"t_ground": PAPER, "tau_metastable": PAPER, "t_relax": PAPER}
_LASER_KEYS = {"intensity_mw_cm2", "angular_frequency", "detuning_hz", "polarization"}
_LASER_TAGS = {"intensity_mw_cm2": PAPER, "angular_frequency": PAPER, "polarization": EXTERNAL}


def _number(section: str, key: str, value: Any) -> float:
    # YAML 1.1 reads forms like 2.2e-7 as strings, so numeric strings are accepted
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("numeric value required", f"{section}.{key} = {value!r}")
    return float(value)


def _parse_polarization(value: Any) -> tuple[complex, complex, complex]:
    if isinstance(value, str):
        try:
            return NAMED_POLARIZATIONS[value]
        except KeyError:
            raise ConfigError("unknown polarization name", value) from None
    if isinstance(value, (list, tuple)) and len(value) == 3:
        out = []
        for comp in value:
            if isinstance(comp, (list, tuple)) and len(comp) == 2:
                out.append(complex(_number("laser", "polarization", comp[0]),
                                   _number("laser", "polarization", comp[1])))
            elif isinstance(comp, (int, float, str)) and not isinstance(comp, bool):
                out.append(complex(_number("laser", "polarization", comp)))
            else:
                raise ConfigError("polarization components must be numbers or [re, im] pairs")
        return tuple(out)
    raise ConfigError("polarization must be a name or a list of three components", repr(value))


def _check_keys(section: str, doc: dict, allowed) -> None:
    if not isinstance(doc, dict):
        raise ConfigError("section must be a mapping", section)
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError("unknown keys rejected", f"{section}: {', '.join(map(str, unknown))}")


def config_from_dict(doc: dict | None) -> LoadedConfig:
    doc = {} if doc is None else doc
    _check_keys("<root>", doc, ("atomic", "exchange", "laser"))
    provenance: dict[str, str] = {}

    atomic_doc = doc.get("atomic") or {}
    _check_keys("atomic", atomic_doc, _ATOMIC_TAGS)
    atomic_kw = {}
    for key, tag in _ATOMIC_TAGS.items():
        if key in atomic_doc and atomic_doc[key] is not None:
            atomic_kw[key] = _number("atomic", key, atomic_doc[key])
            provenance[f"atomic.{key}"] = USER
        else:
            provenance[f"atomic.{key}"] = tag
    if "omega8" in atomic_kw and "omega9" not in atomic_kw:
        atomic_kw["omega9"] = atomic_kw["omega8"] + METASTABLE_HFS
        provenance["atomic.omega9"] = DERIVED
    if "doppler_width" in atomic_doc and atomic_doc["doppler_width"] is None:
        atomic_kw["doppler_width"] = doppler_width(
            atomic_kw.get("omega8", DEFAULT_OMEGA8),
            atomic_kw.get("temperature", AtomicConfig.temperature),
            CONSTANTS.helium3_mass)
        provenance["atomic.doppler_width"] = DERIVED
    atomic = AtomicConfig(**atomic_kw)

    exch_doc = doc.get("exchange") or {}
    _check_keys("exchange", exch_doc, _EXCHANGE_TAGS)
    exch_kw = {}
    for key, tag in _EXCHANGE_TAGS.items():
        if key in exch_doc:
            exch_kw[key] = _number("exchange", key, exch_doc[key])
            provenance[f"exchange.{key}"] = USER
        else:
            provenance[f"exchange.{key}"] = tag
    exchange = ExchangeConfig(**exch_kw)

    laser_doc = doc.get("laser") or {}
    _check_keys("laser", laser_doc, _LASER_KEYS)
    if "angular_frequency" in laser_doc and "detuning_hz" in laser_doc:
        raise ConfigError("laser frequency given twice", "use angular_frequency or detuning_hz")
    laser_kw = {}
    if "intensity_mw_cm2" in laser_doc:
        laser_kw["intensity"] = mw_cm2_to_w_m2(_number("laser", "intensity_mw_cm2",
                                                       laser_doc["intensity_mw_cm2"]))
    if "angular_frequency" in laser_doc:
        laser_kw["angular_frequency"] = _number("laser", "angular_frequency",
                                                laser_doc["angular_frequency"])
    elif "detuning_hz" in laser_doc:
        laser_kw["angular_frequency"] = atomic.omega8 + TWO_PI * _number(
            "laser", "detuning_hz", laser_doc["detuning_hz"])
    elif "omega8" in atomic_kw:
        # keep the default detuning (1 GHz red of C8) relative to the user's line
        laser_kw["angular_frequency"] = atomic.omega8 - TWO_PI * 1e9
    if "polarization" in laser_doc:
        laser_kw["polarization"] = _parse_polarization(laser_doc["polarization"])
    for key, tag in _LASER_TAGS.items():
        given = key in laser_doc or (key == "angular_frequency" and "detuning_hz" in laser_doc)
        provenance[f"laser.{key}"] = USER if given else tag
    laser = LaserConfig(**laser_kw)

    return LoadedConfig(CONSTANTS, atomic, exchange, laser, provenance)


def load_config(source: str | None) -> LoadedConfig:
    """Parse a YAML configuration document (text, not a path)."""
    try:
        doc = yaml.safe_load(source) if source else None
    except yaml.YAMLError as exc:
        raise ConfigError("config document does not parse", str(exc)) from exc
    return config_from_dict(doc)


def load_config_file(path) -> LoadedConfig:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read())


def config_to_dict(config: LoadedConfig) -> dict:
    atomic = {f.name: getattr(config.atomic, f.name) for f in fields(config.atomic)}
    exchange = {f.name: getattr(config.exchange, f.name) for f in fields(config.exchange)}
    laser = {
        "intensity_mw_cm2": config.laser.intensity_mw_cm2,
        "angular_frequency": config.laser.angular_frequency,
        "polarization": [[c.real, c.imag] for c in config.laser.polarization],
    }
    return {"atomic": atomic, "exchange": exchange, "laser": laser}


def serialize_config(config: LoadedConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


def provenance_echo(config: LoadedConfig) -> list[str]:
    """One line per configuration value: ``key = value [tag]``."""
    flat = {}
    for section, values in config_to_dict(config).items():
        for key, value in values.items():
            flat[f"{section}.{key}"] = value
    lines = []
    for key, value in flat.items():
        tag = config.provenance.get(key, USER)
        lines.append(f"{key} = {value!r} [{tag}]")
    return lines


def default_config() -> LoadedConfig:
    return config_from_dict({})
