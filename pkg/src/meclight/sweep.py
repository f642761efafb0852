"""Parameter sweeps, discharge-line analysis and reproducible outputs.

A sweep varies one quantity (B0, laser detuning from the C8 line, pump
intensity or discharge voltage), evaluates the light-shift fields and the
elimination coefficient beta at every grid point, and returns rows in grid
order.  Rows can be written as CSV together with a YAML manifest holding
everything needed to regenerate them.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__
from .dynamics import beta_closed_form
from .lightshift import DARK, LightShiftFields, effective_fields
from .quantities import (TWO_PI, AtomicConfig, ExchangeConfig, LaserConfig, LoadedConfig,
                         config_from_dict, config_to_dict, default_config)

AXES = ("field", "detuning", "intensity", "discharge")
AXIS_UNITS = {"field": "T", "detuning": "Hz", "intensity": "mW/cm^2", "discharge": "V"}

# Larmor frequency of the ground state at the extinction voltage
REFERENCE_LARMOR_HZ = 7.821


def larmor_field(frequency_hz: float, atomic: AtomicConfig) -> float:
    """B0 [T] at which the ground state precesses at ``frequency_hz``."""
    return TWO_PI * frequency_hz / atomic.gamma_ground


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    count: int
    scale: str = "lin"

    def __post_init__(self):
        if self.scale not in ("lin", "log"):
            raise ValueError(f"grid scale must be 'lin' or 'log', got {self.scale!r}")
        if int(self.count) != self.count or self.count < 2:
            raise ValueError("grid needs count >= 2")
        if not self.lo < self.hi:
            raise ValueError("grid needs min < max")
        if self.scale == "log" and not self.lo > 0:
            raise ValueError("log grid needs min > 0")

    @classmethod
    def parse(cls, text: str) -> "Grid":
        """'min:max:count:lin|log'."""
        parts = text.split(":")
        if len(parts) != 4:
            raise ValueError(f"grid must be min:max:count:lin|log, got {text!r}")
        lo, hi, count, scale = parts
        try:
            return cls(float(lo), float(hi), int(count), scale)
        except ValueError as exc:
            raise ValueError(f"bad grid {text!r}: {exc}") from exc

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.lo, self.hi, self.count)
        return np.linspace(self.lo, self.hi, self.count)

    def __str__(self) -> str:
        return f"{self.lo!r}:{self.hi!r}:{self.count}:{self.scale}"


@dataclass(frozen=True)
class DischargeModel:
    """1/T = slope (V - v_extinguish) above extinction, zero below."""

    v_extinguish: float = 0.035
    slope: float = 41.58

    def __post_init__(self):
        if not self.slope >= 0:
            raise ValueError("discharge slope must be non-negative")

    def rate(self, voltage: float) -> float:
        return self.slope * max(voltage - self.v_extinguish, 0.0)

    def t_ground(self, voltage: float) -> float:
        r = self.rate(voltage)
        return math.inf if r == 0 else 1.0 / r

    def exchange(self, voltage: float, base: ExchangeConfig) -> ExchangeConfig:
        """Exchange times at ``voltage``; the metastable time tau is unchanged."""
        return ExchangeConfig(self.t_ground(voltage), base.tau_metastable, base.t_relax)


@dataclass(frozen=True, eq=False)
class SweepSpec:
    axis: str
    grid: Grid
    config: LoadedConfig = field(default_factory=default_config)
    pump: bool = True
    b0: float | None = None
    discharge: DischargeModel = DischargeModel()
    seed: int = 0

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {', '.join(AXES)}; got {self.axis!r}")

    @property
    def bias_field(self) -> float:
        if self.b0 is not None:
            return self.b0
        return larmor_field(REFERENCE_LARMOR_HZ, self.config.atomic)


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    frequency_hz: float
    frequency_shift_hz: float
    gamma2: float
    beta: complex
    fields: LightShiftFields
    error: str = ""

    COLUMNS = ("axis_value", "frequency_hz", "frequency_shift_hz", "gamma2_per_s", "beta_re",
               "beta_im", "dB_half_re_T", "dB_half_im_T", "dB_threehalf_re_T",
               "dB_threehalf_im_T", "error")

    def cells(self) -> list[str]:
        vals = [self.axis_value, self.frequency_hz, self.frequency_shift_hz, self.gamma2,
                self.beta.real, self.beta.imag, self.fields.deltaB_half.real,
                self.fields.deltaB_half.imag, self.fields.deltaB_threehalf.real,
                self.fields.deltaB_threehalf.imag]
        return [repr(float(v)) for v in vals] + [self.error.replace(",", ";").replace("\n", " ")]


def _point(spec: SweepSpec, value: float):
    cfg = spec.config
    atomic, exch, laser = cfg.atomic, cfg.exchange, cfg.laser
    b0 = spec.bias_field
    if spec.axis == "field":
        b0 = value
    elif spec.axis == "detuning":
        laser = laser.with_detuning(atomic.omega8, value)
    elif spec.axis == "intensity":
        laser = laser.with_intensity_mw_cm2(value)
    else:
        exch = spec.discharge.exchange(value, exch)
    return b0, atomic, exch, laser


def evaluate_point(spec: SweepSpec, value: float) -> SweepRow:
    try:
        b0, atomic, exch, laser = _point(spec, value)
        fields = (effective_fields(spec.config.constants, atomic, laser, warn=False)
                  if spec.pump else DARK)
        res = beta_closed_form(b0, fields, atomic, exch)
        base = atomic.gamma_ground * b0 / TWO_PI
        return SweepRow(float(value), base + res.frequency_shift, res.frequency_shift,
                        res.gamma2, res.beta, fields)
    except Exception as exc:  # recorded per point; the sweep continues
        nan = float("nan")
        return SweepRow(float(value), nan, nan, nan, complex(nan, nan),
                        LightShiftFields(complex(nan, nan), complex(nan, nan)),
                        f"{type(exc).__name__}: {exc}")


def run_sweep(spec: SweepSpec, workers: int | None = None) -> list[SweepRow]:
    """Evaluate every grid point; rows come back in grid order."""
    values = spec.grid.values()
    if workers == 1:
        return [evaluate_point(spec, v) for v in values]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda v: evaluate_point(spec, v), values))


def rows_to_csv(rows: list[SweepRow]) -> str:
    lines = [",".join(SweepRow.COLUMNS)]
    lines += [",".join(r.cells()) for r in rows]
    return "\n".join(lines) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sweep_manifest(spec: SweepSpec, csv_text: str, csv_name: str) -> dict:
    return {
        "tool": "meclight",
        "version": __version__,
        "kind": "sweep",
        "axis": spec.axis,
        "axis_unit": AXIS_UNITS[spec.axis],
        "grid": str(spec.grid),
        "pump": "on" if spec.pump else "off",
        "b0_tesla": spec.bias_field,
        "discharge": {"v_extinguish": spec.discharge.v_extinguish,
                      "slope": spec.discharge.slope},
        "seed": spec.seed,
        "config": config_to_dict(spec.config),
        "provenance": dict(spec.config.provenance),
        "output": {"file": csv_name, "sha256": sha256_text(csv_text),
                   "columns": list(SweepRow.COLUMNS)},
    }


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def manifest_path_for(csv_path) -> str:
    root, _ = os.path.splitext(str(csv_path))
    return root + ".manifest.yaml"


def write_sweep(spec: SweepSpec, rows: list[SweepRow], csv_path) -> str:
    """Write CSV and side-car manifest; returns the manifest path."""
    text = rows_to_csv(rows)
    _write_text(csv_path, text)
    mpath = manifest_path_for(csv_path)
    manifest = sweep_manifest(spec, text, os.path.basename(str(csv_path)))
    _write_text(mpath, yaml.safe_dump(manifest, sort_keys=False))
    return mpath


def spec_from_manifest(manifest: dict) -> SweepSpec:
    cfg = config_from_dict(manifest["config"])
    # provenance is part of the record; keep the original tags
    cfg = cfg._replace(provenance=dict(manifest.get("provenance", cfg.provenance)))
    d = manifest.get("discharge", {})
    return SweepSpec(manifest["axis"], Grid.parse(manifest["grid"]), cfg,
                     manifest["pump"] == "on", float(manifest["b0_tesla"]),
                     DischargeModel(float(d.get("v_extinguish", 0.035)),
                                    float(d.get("slope", 41.58))),
                     int(manifest.get("seed", 0)))


def run_from_manifest(path) -> tuple[SweepSpec, str]:
    """Re-run a sweep from its manifest; returns the spec and the regenerated CSV text."""
    with open(path, encoding="utf-8") as fh:
        manifest = yaml.safe_load(fh)
    spec = spec_from_manifest(manifest)
    return spec, rows_to_csv(run_sweep(spec))


# ---------------------------------------------------------------------------
# discharge lines


@dataclass(frozen=True)
class DischargeLine:
    label: str
    slope: float  # Hz / V
    intercept: float  # Hz
    beta: complex


@dataclass(frozen=True)
class Intersection:
    first: int
    second: int
    voltage: float
    frequency: float


@dataclass(frozen=True, eq=False)
class DischargeAnalysis:
    lines: list
    intersections: list
    voltages: np.ndarray
    frequencies: np.ndarray  # one row per setting


def discharge_lines(model: DischargeModel, settings, voltages, b0: float | None = None,
                    config: LoadedConfig | None = None) -> DischargeAnalysis:
    """Precession frequency against discharge voltage for several pump settings.

    Parameters
    ----------
    settings
        Sequence of ``LaserConfig`` or ``None`` (pump off).
    voltages
        Discharge voltages; at least two must lie above extinction.

    Each setting gives f(V) = gamma_g B0 / 2 pi - Im(beta) / (2 pi T(V)),
    fitted with a straight line.  Pairwise intersections are reported for
    non-parallel lines.
    """
    cfg = config or default_config()
    atomic = cfg.atomic
    if b0 is None:
        b0 = larmor_field(REFERENCE_LARMOR_HZ, atomic)
    v = np.asarray(voltages, dtype=float)
    live = v > model.v_extinguish
    if np.count_nonzero(live) < 2:
        raise ValueError("need at least two voltages above extinction")
    base = atomic.gamma_ground * b0 / TWO_PI
    lines, freqs = [], []
    for k, laser in enumerate(settings):
        if laser is None:
            fields, label = DARK, "pump off"
        else:
            fields = effective_fields(cfg.constants, atomic, laser, warn=False)
            label = f"{laser.intensity_mw_cm2:g} mW/cm^2"
        beta = beta_closed_form(b0, fields, atomic, cfg.exchange).beta
        f = base - beta.imag * np.array([model.rate(x) for x in v]) / TWO_PI
        slope, intercept = np.polyfit(v[live], f[live], 1)
        lines.append(DischargeLine(label, float(slope), float(intercept), beta))
        freqs.append(f)
    inter = []
    span = float(np.ptp(v[live]))
    f_scale = float(np.max(np.abs(freqs)))
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            a, b = lines[i], lines[j]
            dm = a.slope - b.slope
            # parallel when the lines diverge by less than rounding over the voltage span
            if abs(dm) * span <= 1e-12 * f_scale:
                continue
            vx = (b.intercept - a.intercept) / dm
            inter.append(Intersection(i, j, vx, a.slope * vx + a.intercept))
    return DischargeAnalysis(lines, inter, v, np.array(freqs))


def discharge_settings(config: LoadedConfig, intensities_mw_cm2) -> list:
    """Pump settings from intensities; zero means pump off."""
    out = []
    for x in intensities_mw_cm2:
        out.append(None if x == 0 else config.laser.with_intensity_mw_cm2(x))
    return out


def discharge_csv(analysis: DischargeAnalysis) -> str:
    head = ["voltage_V"] + [f"frequency_hz_{k}" for k in range(len(analysis.lines))]
    lines = [",".join(head)]
    for i, v in enumerate(analysis.voltages):
        lines.append(",".join([repr(float(v))] + [repr(float(f[i])) for f in analysis.frequencies]))
    return "\n".join(lines) + "\n"


def discharge_summary(analysis: DischargeAnalysis) -> dict:
    return {
        "lines": [{"label": l.label, "slope_hz_per_v": l.slope, "intercept_hz": l.intercept,
                   "beta": [l.beta.real, l.beta.imag]} for l in analysis.lines],
        "intersections": [{"lines": [x.first, x.second], "voltage_v": x.voltage,
                           "frequency_hz": x.frequency} for x in analysis.intersections],
    }

