"""Free-induction-decay synthesis and fitting.

Model::

    S(t) = S0 sin(2 pi f0 t + phi) exp(-t/T2) + S1 exp(-t/T1)

The second term is a slowly decaying offset from longitudinal polarization
leaking into the detection axis.  Fitting uses a damped Gauss-Newton
(Levenberg-Marquardt) iteration with the analytic Jacobian.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml
from scipy import signal

PARAM_NAMES = ("S0", "f0", "phi", "T2", "S1", "T1")
TWO_PI = 2.0 * math.pi


class InitialGuessError(ValueError):
    """The trace does not support a starting estimate (no usable spectral peak)."""


class TraceFormatError(ValueError):
    """Malformed trace file."""


def wrap_phase(phi: float) -> float:
    """Map an angle onto (-pi, pi]."""
    w = math.remainder(phi, TWO_PI)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class FidParams:
    S0: float
    f0: float
    phi: float
    T2: float
    S1: float = 0.0
    T1: float = 1.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if not (self.T2 > 0 and self.T1 > 0 and self.f0 > 0):
            raise ValueError(f"T2, T1 and f0 must be positive: {self}")
        object.__setattr__(self, "phi", wrap_phase(self.phi))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES])

    @classmethod
    def from_array(cls, x) -> "FidParams":
        return cls(*(float(v) for v in x))


@dataclass(frozen=True, eq=False)
class FidTrace:
    """Uniformly sampled real trace starting at ``start_time``.

    ``noise_sigma`` is None when the noise level is unknown.
    """

    sample_rate: float
    samples: np.ndarray
    noise_sigma: float | None = None
    start_time: float = 0.0

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if not self.sample_rate > 0:
            raise ValueError("sample rate must be positive")
        if s.ndim != 1 or s.size < 8:
            raise ValueError("trace needs at least 8 samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("trace contains non-finite samples")

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def fid_model(t, p: FidParams | np.ndarray) -> np.ndarray:
    S0, f0, phi, T2, S1, T1 = p.as_array() if isinstance(p, FidParams) else p
    t = np.asarray(t, dtype=float)
    return S0 * np.sin(TWO_PI * f0 * t + phi) * np.exp(-t / T2) + S1 * np.exp(-t / T1)


def jacobian(t, p: FidParams | np.ndarray) -> np.ndarray:
    """d model / d (S0, f0, phi, T2, S1, T1), one row per sample."""
    S0, f0, phi, T2, S1, T1 = p.as_array() if isinstance(p, FidParams) else p
    t = np.asarray(t, dtype=float)
    arg = TWO_PI * f0 * t + phi
    e2 = np.exp(-t / T2)
    e1 = np.exp(-t / T1)
    s = np.sin(arg) * e2
    c = np.cos(arg) * e2
    return np.column_stack([
        s,
        S0 * c * TWO_PI * t,
        S0 * c,
        S0 * s * t / (T2 * T2),
        e1,
        S1 * e1 * t / (T1 * T1),
    ])


def synthesize(p: FidParams, sample_rate: float, duration: float, noise_sigma: float = 0.0,
               rng_seed: int | None = 0) -> FidTrace:
    """Sample the model on t = k / sample_rate, k = 0 .. round(duration * rate) - 1.

    Gaussian white noise of standard deviation ``noise_sigma`` is added.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not sample_rate > 2.0 * p.f0:
        raise ValueError(f"sample rate {sample_rate} Hz violates Nyquist for f0 = {p.f0} Hz")
    if noise_sigma < 0:
        raise ValueError("noise sigma must be non-negative")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    y = fid_model(t, p)
    if noise_sigma > 0:
        y = y + np.random.default_rng(rng_seed).normal(0.0, noise_sigma, n)
    return FidTrace(sample_rate, y, noise_sigma)


# ---------------------------------------------------------------------------
# starting estimate


def _spectral_peak(t: np.ndarray, y: np.ndarray, fs: float) -> float:
    n = y.size
    duration = n / fs
    nfft = 8 * (1 << int(math.ceil(math.log2(n))))
    spec = np.abs(np.fft.rfft((y - y.mean()) * np.hanning(n), nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
    usable = np.nonzero(freqs >= 3.0 / duration)[0]
    if usable.size < 3:
        raise InitialGuessError("trace too short for a spectral estimate")
    k = int(usable[np.argmax(spec[usable])])
    floor = np.median(spec[usable])
    if k <= usable[0] or k >= spec.size - 1:
        raise InitialGuessError("spectral maximum sits on the band edge")
    if not (spec[k] > spec[k - 1] and spec[k] >= spec[k + 1]):
        raise InitialGuessError("no interior spectral peak")
    if not spec[k] >= 25.0 * floor:
        raise InitialGuessError("no spectral peak above the noise floor")
    # parabola through log power
    a, b, c = np.log(spec[k - 1:k + 2])
    den = a - 2 * b + c
    shift = 0.5 * (a - c) / den if den != 0 else 0.0
    return float(freqs[k] + shift * (freqs[1] - freqs[0]))


def _log_linear_fit(t, v):
    """(amplitude, rate) from log v = log amplitude - rate t."""
    slope, intercept = np.polyfit(t, np.log(v), 1)
    return math.exp(intercept), -slope


def initial_guess(trace: FidTrace) -> FidParams:
    """Starting estimate from the spectrum, a moving-average baseline and the envelope.

    Raises
    ------
    InitialGuessError
        Fewer than 10 periods, or no spectral peak above the noise floor.
    """
    t, y, fs = trace.times, trace.samples, trace.sample_rate
    duration = trace.duration
    f0 = _spectral_peak(t, y, fs)
    if f0 * duration < 10:
        raise InitialGuessError(f"only {f0 * duration:.1f} periods in the trace; need 10")

    # baseline: two passes of a one-period moving average suppress the oscillation
    width = max(int(round(fs / f0)), 1)
    kernel = np.ones(width) / width
    base = np.convolve(np.convolve(y, kernel, mode="valid"), kernel, mode="valid")
    tb = t[: base.size] + (width - 1) / fs
    head = base[: max(base.size // 10, 1)]
    noise = trace.noise_sigma or 0.0
    gate = max(3.0 * noise / math.sqrt(width), 5e-3 * float(np.max(np.abs(y))))
    S1, T1 = 0.0, duration
    if abs(head.mean()) > gate:
        sign = 1.0 if head.mean() > 0 else -1.0
        keep = sign * base > max(gate, 0.05 * abs(head.mean()))
        if np.count_nonzero(keep) >= 4:
            amp, rate = _log_linear_fit(tb[keep], sign * base[keep])
            S1 = sign * amp
            T1 = 1.0 / rate if rate > 1.0 / (10 * duration) else 10 * duration

    # envelope of the oscillating part
    osc = y - S1 * np.exp(-t / T1)
    env = np.abs(signal.hilbert(osc))
    edge = max(int(0.05 * env.size), width)
    inner = slice(edge, env.size - edge)
    keep = env[inner] > 3.0 * noise
    T2 = duration
    if np.count_nonzero(keep) >= 4:
        _, rate = _log_linear_fit(t[inner][keep], env[inner][keep])
        T2 = 1.0 / rate if rate > 1.0 / (10 * duration) else 10 * duration

    # amplitude and phase by projection onto the decaying carrier
    decay = np.exp(-t / T2)
    proj = np.sum(osc * decay * np.exp(-1j * TWO_PI * f0 * t))
    phi = math.atan2(proj.imag, proj.real) + math.pi / 2
    S0 = 2.0 * abs(proj) / np.sum(decay * decay)
    return FidParams(S0, f0, phi, T2, S1, T1)


# ---------------------------------------------------------------------------
# Levenberg-Marquardt


@dataclass(frozen=True, eq=False)
class FitReport:
    params: FidParams
    covariance: np.ndarray
    residual_rms: float
    converged: bool
    iterations: int
    rank_deficient: bool = False
    frozen: tuple = ()
    message: str = ""
    noise_sigma: float | None = None

    @property
    def uncertainties(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def snr(self) -> float:
        """S0 over the residual rms."""
        return self.params.S0 / self.residual_rms if self.residual_rms > 0 else math.inf

    def to_dict(self) -> dict:
        p = self.params
        return {
            "converged": bool(self.converged),
            "message": self.message,
            "iterations": int(self.iterations),
            "rank_deficient": bool(self.rank_deficient),
            "frozen": list(self.frozen),
            "residual_rms": float(self.residual_rms),
            "params": {n: float(getattr(p, n)) for n in PARAM_NAMES},
            "uncertainties": {n: float(u) for n, u in zip(PARAM_NAMES, self.uncertainties)},
            "covariance": [[float(v) for v in row] for row in self.covariance],
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def parse_freeze(spec) -> dict[str, float]:
    """'S1=0,T1=50' or an iterable of 'name=value' into {name: value}."""
    if spec is None:
        return {}
    text = spec if isinstance(spec, str) else ",".join(spec)
    items = text.split(",")
    out = {}
    for item in items:
        item = item.strip()
        if not item:
            continue
        name, sep, value = item.partition("=")
        name = name.strip()
        if not sep or name not in PARAM_NAMES:
            raise ValueError(f"bad freeze entry {item!r}; expected NAME=VALUE with NAME in "
                             f"{', '.join(PARAM_NAMES)}")
        out[name] = float(value)
    return out


def _normalized(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    if x[1] < 0:
        # sin(-a + phi) = -sin(a - phi)
        x[1], x[2], x[0] = -x[1], -x[2], -x[0]
    if x[0] < 0:
        x[0], x[2] = -x[0], x[2] + math.pi
    x[2] = wrap_phase(x[2])
    return x


def fit(trace: FidTrace, guess: FidParams, freeze: dict[str, float] | None = None,
        max_iter: int = 500, ftol: float = 1e-12, gtol: float = 1e-10) -> FitReport:
    """Levenberg-Marquardt fit of the two-term model.

    Parameters
    ----------
    trace, guess
        Data and starting point.
    freeze
        Parameters held fixed, by name.  Freezing S1 = 0 also freezes T1,
        which the data then cannot determine.
    max_iter
        Iteration cap; exhaustion returns the best point with
        ``converged=False``.
    """
    freeze = dict(freeze or {})
    if freeze.get("S1") == 0.0 and "T1" not in freeze:
        freeze["T1"] = guess.T1
    x = guess.as_array()
    for name, value in freeze.items():
        x[PARAM_NAMES.index(name)] = value
    if not np.all(np.isfinite(x)):
        raise ValueError("guess must be finite")
    free = np.array([n not in freeze for n in PARAM_NAMES])
    t, y = trace.times, trace.samples

    def residual(v):
        return fid_model(t, v) - y

    r = residual(x)
    cost = 0.5 * float(r @ r)
    J = jacobian(t, x)[:, free]
    g = J.T @ r
    A = J.T @ J
    lam = 1e-3 * float(np.max(np.diag(A))) if A.size else 0.0
    converged = False
    message = "iteration limit reached"
    it = 0
    for it in range(1, max_iter + 1):
        if cost == 0.0 or np.linalg.norm(g) < gtol:
            converged, message = True, "gradient below tolerance"
            break
        diag = np.maximum(np.diag(A), 1e-12 * max(float(np.max(np.diag(A))), 1e-300))
        try:
            step = np.linalg.solve(A + lam * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = x.copy()
        trial[free] += step
        if trial[3] <= 0 or trial[5] <= 0:
            lam *= 4.0
            continue
        r_new = residual(trial)
        cost_new = 0.5 * float(r_new @ r_new)
        if cost_new < cost:
            rel = (cost - cost_new) / cost
            x, r, cost = trial, r_new, cost_new
            J = jacobian(t, x)[:, free]
            g = J.T @ r
            A = J.T @ J
            lam = max(lam / 3.0, 1e-300)
            if rel < ftol:
                converged, message = True, "relative cost change below tolerance"
                break
        else:
            if abs(cost_new - cost) <= ftol * cost:
                converged, message = True, "cost flat"
                break
            lam *= 4.0
            if lam > 1e300:
                message = "damping overflow"
                break

    x = _normalized(x)
    r = residual(x)
    n_free = int(free.sum())
    dof = max(t.size - n_free, 1)
    rms = math.sqrt(float(r @ r) / t.size)
    J = jacobian(t, x)[:, free]
    A = J.T @ J
    s2 = float(r @ r) / dof
    cov = np.zeros((6, 6))
    rank_def = False
    try:
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > 1e14:
            raise np.linalg.LinAlgError
        sub = s2 * np.linalg.inv(A)
    except np.linalg.LinAlgError:
        rank_def = True
        sub = s2 * np.linalg.pinv(A)
    sub = 0.5 * (sub + sub.T)
    cov[np.ix_(free, free)] = sub

    noise = trace.noise_sigma
    if converged:
        reason = _basin_check(r, rms, y, noise)
        if reason:
            converged, message = False, reason
    frozen = tuple(n for n in PARAM_NAMES if n in freeze)
    try:
        params = FidParams.from_array(x)
    except ValueError as exc:
        raise ArithmeticError(f"fit left the parameter domain: {exc}") from exc
    return FitReport(params, cov, rms, converged, it, rank_def, frozen, message, noise)


def _basin_check(r: np.ndarray, rms: float, y: np.ndarray, noise: float | None) -> str:
    """Empty string if the residual looks like noise, else a reason ending in 'wrong basin'."""
    if noise:
        if rms > 3.0 * noise:
            return f"residual rms {rms:.3g} above {3.0 * noise:.3g}: wrong basin"
        return ""
    if rms <= 1e-6 * float(np.sqrt(np.mean(y * y))):
        return ""
    # unknown noise: a missed oscillation leaves a strongly correlated residual
    r1 = float(r[:-1] @ r[1:]) / float(r @ r)
    limit = 5.0 / math.sqrt(r.size)
    if abs(r1) > limit:
        return f"residual lag-1 autocorrelation {r1:.3g} above {limit:.3g}: wrong basin"
    return ""


def fit_trace(trace: FidTrace, freeze: dict[str, float] | None = None, **kwargs) -> FitReport:
    """initial_guess followed by fit."""
    guess = initial_guess(trace)
    if freeze:
        guess = replace(guess, **{k: v for k, v in freeze.items() if k in ("S0", "S1", "phi")})
    return fit(trace, guess, freeze, **kwargs)


# ---------------------------------------------------------------------------
# I/O

CSV_HEADER = ("time_s", "signal")


def write_trace_csv(path, trace: FidTrace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for ti, yi in zip(trace.times, trace.samples):
            fh.write(f"{float(ti)!r},{float(yi)!r}\n")


def read_trace_csv(path, noise_sigma: float | None = None) -> FidTrace:
    """Read a two-column ``time_s,signal`` trace with uniform sampling."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise TraceFormatError(f"{path}: not UTF-8 text") from exc
    if not rows or tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise TraceFormatError(f"{path}: header must be '{','.join(CSV_HEADER)}'")
    t, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise TraceFormatError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
        try:
            t.append(float(row[0]))
            y.append(float(row[1]))
        except ValueError as exc:
            raise TraceFormatError(f"{path}:{lineno}: {exc}") from exc
    if len(t) < 8:
        raise TraceFormatError(f"{path}: too few samples")
    t = np.array(t)
    dt = np.diff(t)
    step = float(np.median(dt))
    if not step > 0 or np.max(np.abs(dt - step)) > 1e-6 * step:
        raise TraceFormatError(f"{path}: sampling is not uniform")
    # the mean step over the whole record is less sensitive to rounding in the file
    fs = (t.size - 1) / (t[-1] - t[0])
    try:
        return FidTrace(fs, np.array(y), noise_sigma, float(t[0]))
    except ValueError as exc:
        raise TraceFormatError(f"{path}: {exc}") from exc
