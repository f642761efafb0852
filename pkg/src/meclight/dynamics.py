"""Coupled transverse dynamics of ground-state and metastable helium-3 spins.

State ordering is (I_+, F_3/2,+, F_1/2,+).  Metastability-exchange collisions
couple the three amplitudes; the pump light enters through the complex
effective fields of the two metastable hyperfine levels.

Exact propagation uses the eigen-decomposition of the 3x3 generator.  The
generator mixes rates of order 1/T (~1 s^-1) with rates of order 1/tau
(~10^7 s^-1), so each eigenvalue is refined on its own secular equation
(a Schur complement), which keeps the slow eigenvalue accurate to a few
ulps of 1/T instead of a few ulps of 1/tau.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .lightshift import DARK, LightShiftFields
from .quantities import AtomicConfig, ExchangeConfig

TWO_PI = 2.0 * math.pi


class ModeAmbiguityWarning(UserWarning):
    """Two eigenvectors have comparable ground-state weight."""


class PropagationError(ArithmeticError):
    """Both the eigen-decomposition and the matrix-exponential route failed."""


@dataclass(frozen=True)
class TransverseState:
    I_plus: complex
    F32_plus: complex = 0j
    F12_plus: complex = 0j

    def __post_init__(self):
        for name in ("I_plus", "F32_plus", "F12_plus"):
            v = complex(getattr(self, name))
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ArithmeticError(f"non-finite transverse amplitude {name}={v}")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.I_plus, self.F32_plus, self.F12_plus], dtype=complex)

    @classmethod
    def from_array(cls, values) -> "TransverseState":
        a, b, c = np.asarray(values, dtype=complex)
        return cls(a, b, c)

    @property
    def metastable_nuclear(self) -> complex:
        """Nuclear orientation carried by the metastable atoms, (F_3/2 - F_1/2)/3."""
        return (self.F32_plus - self.F12_plus) / 3.0


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    matrix: np.ndarray
    B0: float
    fields: LightShiftFields
    exchange: ExchangeConfig
    atomic: AtomicConfig

    @property
    def conservation_weights(self) -> np.ndarray:
        """(N, n, n) / N, the left null vector of the pure exchange part."""
        r = self.exchange.density_ratio
        return np.array([1.0, r, r])


def build_system_matrix(B0: float, fields: LightShiftFields, exch: ExchangeConfig,
                        atomic: AtomicConfig) -> SystemMatrix:
    """Generator M with d/dt (I_+, F_3/2,+, F_1/2,+) = M (I_+, F_3/2,+, F_1/2,+)."""
    g = exch.rate_ground
    m = exch.rate_metastable
    r = exch.rate_relax
    gm = atomic.gamma_metastable
    M = np.array([
        [1j * atomic.gamma_ground * B0 - (g + r), g / 3.0, -g / 3.0],
        [10.0 * m / 9.0, 1j * (2.0 / 3.0) * gm * (B0 + fields.deltaB_threehalf) - 4.0 * m / 9.0,
         10.0 * m / 9.0],
        [-m / 9.0, m / 9.0, 1j * (4.0 / 3.0) * gm * (B0 + fields.deltaB_half) - 7.0 * m / 9.0],
    ], dtype=complex)
    return SystemMatrix(M, float(B0), fields, exch, atomic)


def pure_exchange_matrix(exch: ExchangeConfig, atomic: AtomicConfig | None = None) -> SystemMatrix:
    """Exchange-only generator: B0 = 0, no light, no intrinsic relaxation."""
    bare = ExchangeConfig(exch.t_ground, exch.tau_metastable, math.inf)
    return build_system_matrix(0.0, DARK, bare, atomic or AtomicConfig())


def _matrix_of(M) -> np.ndarray:
    return M.matrix if isinstance(M, SystemMatrix) else np.asarray(M, dtype=complex)


# ---------------------------------------------------------------------------
# eigen-analysis


def characteristic_polynomial(M) -> tuple[complex, complex, complex]:
    """(c2, c1, c0) with det(lambda - M) = lambda^3 + c2 lambda^2 + c1 lambda + c0."""
    A = _matrix_of(M)
    c2 = -np.trace(A)
    c1 = (A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0] + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
          + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
    c0 = -(A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
           - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
           + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]))
    return complex(c2), complex(c1), complex(c0)


def characteristic_residual(M, lam: complex) -> complex:
    c2, c1, c0 = characteristic_polynomial(M)
    return ((lam + c2) * lam + c1) * lam + c0


@dataclass(frozen=True, eq=False)
class EigenSystem:
    values: np.ndarray
    right: np.ndarray  # columns
    left: np.ndarray  # rows, normalized so left[k] @ right[:, k] = 1


def _secular_refine(A: np.ndarray, lam: complex, p: int, iters: int = 8):
    """Refine lam on lam = A_pp + A_pr (lam - A_rr)^-1 A_rp by Newton."""
    rest = [k for k in range(3) if k != p]
    Arr = A[np.ix_(rest, rest)]
    Apr = A[p, rest]
    Arp = A[rest, p]
    eye = np.eye(2)
    for _ in range(iters):
        R = np.linalg.solve(lam * eye - Arr, eye)
        x = R @ Arp
        g = A[p, p] + Apr @ x - lam
        dg = -(Apr @ (R @ x)) - 1.0
        step = g / dg
        lam = lam - step
        if abs(step) <= 4e-16 * max(abs(lam), 1e-300):
            break
    R = np.linalg.solve(lam * eye - Arr, eye)
    v = np.empty(3, dtype=complex)
    w = np.empty(3, dtype=complex)
    v[p] = 1.0
    v[rest] = R @ Arp
    w[p] = 1.0
    w[rest] = Apr @ R
    return lam, v, w


def eigensystem(M) -> EigenSystem:
    """Eigenvalues with right/left eigenvectors, each refined on its secular equation.

    Raises
    ------
    np.linalg.LinAlgError
        If the matrix is (nearly) defective.
    """
    A = _matrix_of(M)
    vals, vecs = np.linalg.eig(A)
    scale = max(np.max(np.abs(A)), 1e-300)
    lams, rights, lefts = [], [], []
    for k in range(3):
        p = int(np.argmax(np.abs(vecs[:, k])))
        lam, v, w = _secular_refine(A, complex(vals[k]), p)
        lams.append(lam)
        rights.append(v)
        lefts.append(w)
    lams = np.array(lams)
    for i in range(3):
        for j in range(i + 1, 3):
            if abs(lams[i] - lams[j]) < 1e-9 * scale:
                raise np.linalg.LinAlgError("near-degenerate eigenvalues")
    V = np.array(rights).T
    W = np.array(lefts)
    norms = np.einsum("ki,ik->k", W, V)
    if np.any(np.abs(norms) < 1e-12) or not np.all(np.isfinite(V)):
        raise np.linalg.LinAlgError("eigenvector normalization failed")
    W = W / norms[:, None]
    # the projectors must resolve the identity
    if np.max(np.abs(V @ W - np.eye(3))) > 1e-8:
        raise np.linalg.LinAlgError("eigenvectors do not span the space")
    return EigenSystem(lams, V, W)


def eigenvalues(M) -> np.ndarray:
    return eigensystem(M).values


def evolve(M, s0: TransverseState, t: float) -> TransverseState:
    """s(t) = exp(M t) s0 from the eigen-decomposition (expm fallback)."""
    if not t >= 0:
        raise ValueError(f"evolution time must be non-negative, got {t}")
    if t == 0:
        return s0
    A = _matrix_of(M)
    x0 = s0.as_array()
    try:
        es = eigensystem(A)
        coeff = es.left @ x0
        x = es.right @ (np.exp(es.values * t) * coeff)
    except np.linalg.LinAlgError:
        x = _expm_propagate(A, x0, t)
    if not np.all(np.isfinite(x)):
        x = _expm_propagate(A, x0, t)
    return TransverseState.from_array(x)


def _expm_propagate(A: np.ndarray, x0: np.ndarray, t: float) -> np.ndarray:
    try:
        x = linalg.expm(A * t) @ x0
    except Exception as exc:  # pragma: no cover - scipy failure
        raise PropagationError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise PropagationError("matrix exponential produced non-finite values")
    return x


def evolve_many(M, s0: TransverseState, times) -> np.ndarray:
    """Rows of (I_+, F_3/2,+, F_1/2,+) at each time."""
    A = _matrix_of(M)
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("evolution times must be non-negative")
    x0 = s0.as_array()
    try:
        es = eigensystem(A)
        coeff = es.left @ x0
        out = (np.exp(np.outer(times, es.values)) * coeff) @ es.right.T
        out[times == 0] = x0
        return out
    except np.linalg.LinAlgError:
        return np.array([_expm_propagate(A, x0, t) if t > 0 else x0 for t in times])


def slow_mode(M) -> complex:
    """Eigenvalue whose eigenvector carries the largest ground-state weight.

    Eigenvectors are unit-normalized and ranked by |I_+|; ties go to the
    smallest |Im|.  Warns if the top two weights are within a factor 1.1.
    """
    es = eigensystem(M)
    V = es.right / np.linalg.norm(es.right, axis=0)
    weight = np.abs(V[0])
    order = sorted(range(3), key=lambda k: (-round(weight[k], 14), abs(es.values[k].imag)))
    best, second = order[0], order[1]
    if weight[second] > 0 and weight[best] / weight[second] < 1.1:
        warnings.warn(f"slow mode ambiguous: ground-state weights {weight[best]:.3g} vs "
                      f"{weight[second]:.3g}", ModeAmbiguityWarning, stacklevel=2)
    return complex(es.values[best])


# ---------------------------------------------------------------------------
# adiabatic elimination


@dataclass(frozen=True)
class EliminationResult:
    """beta with the ground-state observables it implies.

    ``frequency_shift`` [Hz] is -Im(beta)/(2 pi T); ``gamma2`` [1/s] is
    1/T_r + (1 + Re beta)/T.
    """

    beta: complex
    frequency_shift: float
    gamma2: float
    t_ground: float
    t_relax: float

    @property
    def anti_relaxation(self) -> bool:
        floor = 0.0 if math.isinf(self.t_relax) else 1.0 / self.t_relax
        return self.gamma2 < floor - 1e-12

    def slow_eigenvalue(self, B0: float, atomic: AtomicConfig) -> complex:
        """i gamma_g B0 + 2 pi i frequency_shift - gamma2."""
        return complex(-self.gamma2, atomic.gamma_ground * B0 + TWO_PI * self.frequency_shift)


def _result(beta: complex, exch: ExchangeConfig) -> EliminationResult:
    g = exch.rate_ground
    shift = -beta.imag * g / TWO_PI
    gamma2 = exch.rate_relax + (1.0 + beta.real) * g
    return EliminationResult(complex(beta), shift + 0.0, gamma2, exch.t_ground, exch.t_relax)


def beta_closed_form(B0: float, fields: LightShiftFields, atomic: AtomicConfig,
                     exch: ExchangeConfig) -> EliminationResult:
    """beta from the closed rational expression in the fields and the Larmor rate.

    The metastable Larmor rate is taken as omega_m = gamma_m B0.
    """
    if exch.rate_metastable == 0.0:
        return _result(0j, exch)
    tau = exch.tau_metastable
    gm = atomic.gamma_metastable
    wt = gm * B0 * tau
    b1 = gm * fields.deltaB_half * tau
    b3 = gm * fields.deltaB_threehalf * tau
    num = -1j * (20 * b1 + b3) - 21j * wt + 9
    den = (12 * b1 * (3 * wt + 3 * b3 + 2j) + 3 * b3 * (7j + 12 * wt)
           - 9 * (1 - 1j * wt) * (1 - 4j * wt))
    if den == 0:
        raise ZeroDivisionError("vanishing denominator in beta")
    return _result(num / den, exch)


def beta_quasistatic(B0: float, fields: LightShiftFields, atomic: AtomicConfig,
                     exch: ExchangeConfig) -> EliminationResult:
    """beta from the quasi-static metastable amplitudes.

    Solves dF_3/2/dt = dF_1/2/dt = 0 for a unit I_+ and returns
    beta = -(F_3/2 - F_1/2)/3.
    """
    if exch.rate_metastable == 0.0:
        return _result(0j, exch)
    # work in units of 1/tau to keep the 2x2 system well scaled
    tau = exch.tau_metastable
    gm = atomic.gamma_metastable
    a3 = 1j * (2.0 / 3.0) * gm * (B0 + fields.deltaB_threehalf) * tau - 4.0 / 9.0
    a1 = 1j * (4.0 / 3.0) * gm * (B0 + fields.deltaB_half) * tau - 7.0 / 9.0
    A = np.array([[a3, 10.0 / 9.0], [1.0 / 9.0, a1]], dtype=complex)
    rhs = -np.array([10.0 / 9.0, -1.0 / 9.0], dtype=complex)
    try:
        f3, f1 = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise ZeroDivisionError("singular quasi-static system") from exc
    return _result(-(f3 - f1) / 3.0, exch)


def gamma2_dark(B0: float, exch: ExchangeConfig, atomic: AtomicConfig) -> float:
    """Dark transverse rate 1/T_r + (1/T)[1 - (4/9)/(1+x^2) - (5/9)/(1+16x^2)], x = gamma_m B0 tau."""
    if exch.rate_metastable == 0.0:
        return exch.rate_relax + exch.rate_ground
    x = atomic.gamma_metastable * B0 * exch.tau_metastable
    bracket = 1.0 - (4.0 / 9.0) / (1.0 + x * x) - (5.0 / 9.0) / (1.0 + 16.0 * x * x)
    return exch.rate_relax + exch.rate_ground * bracket


def dark_bracket(B0: float, exch: ExchangeConfig, atomic: AtomicConfig) -> float:
    """(gamma2_dark - 1/T_r) T, the exchange contribution in units of 1/T."""
    return 1.0 + dark_bracket_offset(B0, exch, atomic)


def dark_bracket_offset(B0: float, exch: ExchangeConfig, atomic: AtomicConfig) -> float:
    """dark_bracket - 1, evaluated without cancellation at high field."""
    x = atomic.gamma_metastable * B0 * exch.tau_metastable
    return -(4.0 / 9.0) / (1.0 + x * x) - (5.0 / 9.0) / (1.0 + 16.0 * x * x)


# ---------------------------------------------------------------------------
# exchange conservation and steady state


def conservation_functional(exch: ExchangeConfig, state: TransverseState) -> complex:
    """N I_+ + n (F_3/2 + F_1/2), normalized by N."""
    r = exch.density_ratio
    return state.I_plus + r * (state.F32_plus + state.F12_plus)


def conservation_defect(M: SystemMatrix, s0: TransverseState, t: float) -> float:
    """Relative change of the conserved functional after evolving for t."""
    before = conservation_functional(M.exchange, s0)
    after = conservation_functional(M.exchange, evolve(M, s0, t))
    return abs(after - before) / abs(before)


def mec_steady_state(exch: ExchangeConfig, atomic: AtomicConfig | None = None,
                     rtol: float = 1e-10) -> TransverseState:
    """Null direction of the pure-exchange generator, scaled to I_+ = 1.

    Raises
    ------
    ArithmeticError
        If the null space is not one-dimensional or the steady-state relation
        I_+ = (F_3/2 - F_1/2)/3 fails.
    """
    M = pure_exchange_matrix(exch, atomic).matrix
    # equilibrate rows so 1/T and 1/tau rows weigh equally
    scaled = M / np.max(np.abs(M), axis=1, keepdims=True)
    _, sv, vh = np.linalg.svd(scaled)
    null_dim = int(np.sum(sv < rtol * sv[0]))
    if null_dim != 1:
        raise ArithmeticError(f"null space has dimension {null_dim}")
    v = vh[-1].conj()
    v = v / v[0]
    state = TransverseState.from_array(v)
    if abs(state.I_plus - state.metastable_nuclear) > 1e-12 * abs(state.I_plus):
        raise ArithmeticError("steady state violates I_+ = (F_3/2 - F_1/2)/3")
    return state
