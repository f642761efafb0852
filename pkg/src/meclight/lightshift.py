"""Complex effective magnetic fields produced by the pump light.

The vector part of the light-induced Hamiltonian acts on each metastable
hyperfine level like a fictitious field along z.  Its real part shifts the
metastable Larmor frequency; its imaginary part damps (or, for negative
values, anti-damps) the metastable coherence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .angular import (F_HALF, F_THREEHALF, EffectiveHamiltonian, decompose_irreducible,
                      photon_spin)
from .lineshape import plasma_dispersion_value
from .quantities import CONSTANTS, AtomicConfig, LaserConfig, PhysicalConstants

# Lande factors of the metastable hyperfine levels relative to gamma_m
LANDE_HALF = 4.0 / 3.0
LANDE_THREEHALF = 2.0 / 3.0


class AntiRelaxationWarning(UserWarning):
    """A light-induced field with negative imaginary part (net gain of coherence)."""


@dataclass(frozen=True)
class LightShiftFields:
    """Effective fields [T] on the F = 1/2 and F = 3/2 metastable levels."""

    deltaB_half: complex = 0j
    deltaB_threehalf: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "deltaB_half", complex(self.deltaB_half))
        object.__setattr__(self, "deltaB_threehalf", complex(self.deltaB_threehalf))

    @property
    def anti_relaxing(self) -> bool:
        return self.deltaB_half.imag < 0 or self.deltaB_threehalf.imag < 0

    def scaled(self, factor: float) -> "LightShiftFields":
        return LightShiftFields(factor * self.deltaB_half, factor * self.deltaB_threehalf)

    def as_array(self) -> np.ndarray:
        return np.array([self.deltaB_half, self.deltaB_threehalf])


DARK = LightShiftFields()


def field_prefactor(atomic: AtomicConfig, laser: LaserConfig,
                    constants: PhysicalConstants = CONSTANTS) -> float:
    """3 f I e^2 / (8 hbar gamma_m c eps0 m_e) in T rad/s per (s/rad)."""
    c = constants
    return (3.0 * atomic.oscillator_strength * laser.intensity * c.elementary_charge ** 2
            / (8.0 * c.reduced_planck * atomic.gamma_metastable * c.speed_of_light
               * c.vacuum_permittivity * c.electron_mass))


def effective_fields(constants: PhysicalConstants, atomic: AtomicConfig,
                     laser: LaserConfig, warn: bool = True) -> LightShiftFields:
    """deltaB_F = K (Z(omega; omega_F) / omega_F) s_z for F = 1/2 (C8) and 3/2 (C9)."""
    s_z = photon_spin(laser.epsilon)[2]
    if laser.intensity == 0.0 or s_z == 0.0:
        return DARK
    k = field_prefactor(atomic, laser, constants)
    z8 = plasma_dispersion_value(laser.angular_frequency, atomic.omega8,
                                 atomic.doppler_width, atomic.excited_decay)
    z9 = plasma_dispersion_value(laser.angular_frequency, atomic.omega9,
                                 atomic.doppler_width, atomic.excited_decay)
    fields = LightShiftFields(k * z8 / atomic.omega8 * s_z, k * z9 / atomic.omega9 * s_z)
    if warn and fields.anti_relaxing:
        warnings.warn("light-induced field has negative imaginary part (sigma- pumping "
                      "anti-relaxes the metastable coherence)", AntiRelaxationWarning,
                      stacklevel=2)
    return fields


def fields_from_hamiltonian(H: EffectiveHamiltonian) -> LightShiftFields:
    """Read the fields off the F_z coefficient of the vector part of H.

    A block term a F_z equals hbar g_F gamma_m deltaB F_z, with g_F = 4/3
    (F = 1/2) and 2/3 (F = 3/2).
    """
    parts = decompose_irreducible(H)
    hbar = H.constants.reduced_planck
    gm = H.atomic.gamma_metastable
    a_half = parts.vector_coefficients[F_HALF][2]
    a_three = parts.vector_coefficients[F_THREEHALF][2]
    return LightShiftFields(a_half / (hbar * LANDE_HALF * gm),
                            a_three / (hbar * LANDE_THREEHALF * gm))
