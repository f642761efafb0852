"""Self-consistency checks across modules.

Each check compares two independent routes to the same quantity and reports
the measured discrepancy against a tolerance.  Checks marked as warnings do
not fail the report.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .angular import (closed_form_parts, derivation_chain, effective_hamiltonian_brute,
                      relative_frobenius)
from .dynamics import (TransverseState, beta_closed_form, beta_quasistatic, build_system_matrix,
                       conservation_defect, dark_bracket_offset, pure_exchange_matrix,
                       slow_mode)
from .lightshift import DARK, LightShiftFields, effective_fields, fields_from_hamiltonian
from .lineshape import integral_oracle, plasma_dispersion_value
from .quantities import (MAX_TAU_OVER_T, TWO_PI, LaserConfig, LoadedConfig, default_config)
from .sweep import REFERENCE_LARMOR_HZ, larmor_field


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    level: str = "error"  # or "warning"
    detail: str = ""


@dataclass(frozen=True)
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.level == "error")

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": bool(c.passed), "level": c.level,
                        "measured": float(c.measured), "tolerance": float(c.tolerance),
                        "detail": c.detail} for c in self.checks],
        }


def _random_laser(rng: np.random.Generator, atomic) -> LaserConfig:
    eps = rng.normal(size=3) + 1j * rng.normal(size=3)
    eps /= np.linalg.norm(eps)
    detuning = rng.uniform(-10e9, 17e9)
    return LaserConfig(intensity=rng.uniform(1.0, 4000.0),
                       angular_frequency=atomic.omega8 + TWO_PI * detuning,
                       polarization=tuple(eps))


def _check(name, measured, tol, level="error", detail="") -> CheckResult:
    ok = bool(np.isfinite(measured) and measured <= tol)
    return CheckResult(name, ok, float(measured), tol, level, detail)


def verify(config: LoadedConfig | None = None, seed: int = 0, beta_fn=None,
           samples: int = 20) -> VerifyReport:
    """Run all cross-module identities.

    Parameters
    ----------
    beta_fn
        Replacement for ``beta_closed_form`` (used to inject faults).
    """
    cfg = config or default_config()
    atomic, exch = cfg.atomic, cfg.exchange
    beta_fn = beta_fn or beta_closed_form
    rng = np.random.default_rng(seed)
    checks = []
    lasers = [_random_laser(rng, atomic) for _ in range(samples)]

    worst_a = worst_c = worst_f = 0.0
    for laser in lasers:
        brute = effective_hamiltonian_brute(atomic, laser, cfg.constants)
        worst_a = max(worst_a, relative_frobenius(
            brute.matrix, closed_form_parts(atomic, laser, cfg.constants).matrix))
        worst_c = max(worst_c, relative_frobenius(
            brute.matrix, derivation_chain(atomic, laser, cfg.constants).matrix))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            direct = effective_fields(cfg.constants, atomic, laser).as_array()
        read = fields_from_hamiltonian(brute).as_array()
        scale = max(np.max(np.abs(direct)), 1e-300)
        worst_f = max(worst_f, float(np.max(np.abs(direct - read)) / scale))
    checks.append(_check("hamiltonian_closed_form", worst_a, 1e-12))
    checks.append(_check("hamiltonian_6j_chain", worst_c, 1e-12))
    checks.append(_check("fields_from_hamiltonian", worst_f, 1e-10))

    # beta: closed form against the quasi-static solve
    worst_b = 0.0
    for _ in range(200):
        b0 = rng.uniform(0.0, 1e-4)
        fields = LightShiftFields(complex(rng.normal(0, 2e-6), abs(rng.normal(0, 1e-6))),
                                  complex(rng.normal(0, 5e-7), abs(rng.normal(0, 1e-7))))
        a = beta_fn(b0, fields, atomic, exch).beta
        b = beta_quasistatic(b0, fields, atomic, exch).beta
        worst_b = max(worst_b, abs(a - b) / abs(b))
    checks.append(_check("beta_quasistatic_oracle", worst_b, 1e-12))

    # dark reduction: Re beta = bracket - 1
    worst_r = abs(beta_fn(0.0, DARK, atomic, exch).beta + 1.0)
    for b0 in np.geomspace(1e-9, 1e-2, 57):
        beta = beta_fn(b0, DARK, atomic, exch).beta
        expect = dark_bracket_offset(b0, exch, atomic)
        worst_r = max(worst_r, abs(beta.real - expect) / abs(expect))
    checks.append(_check("dark_reduction", worst_r, 1e-12))

    # conservation of N I + n (F32 + F12) under exact propagation
    P = pure_exchange_matrix(exch, atomic)
    s0 = TransverseState(1.0, 0.3 - 0.1j, -0.2j)
    worst_k = max(conservation_defect(P, s0, t)
                  for t in np.linspace(0.0, 10.0 * exch.t_ground, 21)[1:])
    checks.append(_check("exchange_conservation", worst_k, 1e-12))

    # slow eigenvalue against the adiabatic prediction
    ratio = exch.density_ratio
    level = "error" if ratio < MAX_TAU_OVER_T else "warning"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pumped = effective_fields(cfg.constants, atomic, cfg.laser)
    worst_s = 0.0
    for fields in (DARK, pumped):
        for b0 in np.concatenate([[0.0], np.geomspace(1e-9, 1e-5, 9)]):
            M = build_system_matrix(b0, fields, exch, atomic)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                lam = slow_mode(M)
            pred = beta_fn(b0, fields, atomic, exch).slow_eigenvalue(b0, atomic)
            worst_s = max(worst_s, abs(lam - pred) / abs(pred))
    detail = "" if level == "error" else f"tau/T = {ratio:.3g}; adiabatic elimination inexact"
    checks.append(_check("spectral_consistency", worst_s, 1e-3, level, detail))

    # Faddeeva route against quadrature of the defining integral
    worst_z = 0.0
    for _ in range(10):
        det = rng.uniform(-8.0, 8.0) * atomic.doppler_width
        w = atomic.omega8 + det
        a = plasma_dispersion_value(w, atomic.omega8, atomic.doppler_width, atomic.excited_decay)
        b = integral_oracle(w, atomic.omega8, atomic.doppler_width, atomic.excited_decay)
        worst_z = max(worst_z, abs(a - b) / abs(a))
    checks.append(_check("lineshape_quadrature", worst_z, 1e-8))

    # dark discharge must shift the precession frequency upwards
    b_ref = larmor_field(REFERENCE_LARMOR_HZ, atomic)
    shift = beta_fn(b_ref, DARK, atomic, exch).frequency_shift
    checks.append(CheckResult("dark_shift_positive", bool(shift > 0), shift, 0.0, "error",
                              "frequency shift at the reference field [Hz]"))
    return VerifyReport(checks)

