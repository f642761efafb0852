"""Angular-momentum algebra and the light-induced effective Hamiltonian.

Wigner symbols are evaluated exactly (Racah sums over ``Fraction``) and
carried as ``SqrtRational`` values, sign * sqrt(rational), until they are
needed as floats.

The metastable 2^3S_1 level of helium-3 (J = 1, I = 1/2) is represented in
the coupled basis ordered as F = 1/2 (m = -1/2, +1/2) followed by F = 3/2
(m = -3/2 ... +3/2).  The only excited level is 2^3P_0 (J = 0, F = 1/2).
Coherences between the two metastable hyperfine levels are dropped.

Three independent constructions of the effective Hamiltonian are provided:

``effective_hamiltonian_brute``
    second-order operator built from explicit dipole matrices;
``closed_form_parts``
    scalar, vector and tensor closed forms;
``derivation_chain``
    the 6j-symbol expansion over irreducible rank-K components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .lineshape import plasma_dispersion_value
from .quantities import CONSTANTS, AtomicConfig, LaserConfig, PhysicalConstants


class DomainError(ValueError):
    """Invalid angular-momentum quantum numbers."""


class DecompositionError(ArithmeticError):
    """Operator is not spanned by rank K <= 2 operators on each hyperfine block."""


# ---------------------------------------------------------------------------
# exact arithmetic


@dataclass(frozen=True)
class SqrtRational:
    """Exact real number sign * sqrt(|square|), stored as the signed square."""

    signed_square: Fraction

    @classmethod
    def from_parts(cls, sign: int, radicand: Fraction, factor: Fraction = Fraction(1)):
        """sign * factor * sqrt(radicand)."""
        sq = Fraction(radicand) * Fraction(factor) ** 2
        s = sign * (1 if factor >= 0 else -1)
        return cls(sq if s >= 0 else -sq)

    @property
    def sign(self) -> int:
        return (self.signed_square > 0) - (self.signed_square < 0)

    @property
    def square(self) -> Fraction:
        return abs(self.signed_square)

    def __float__(self) -> float:
        sq = self.square
        return self.sign * math.sqrt(sq.numerator / sq.denominator) if sq else 0.0

    def __bool__(self) -> bool:
        return self.signed_square != 0

    def __neg__(self) -> "SqrtRational":
        return SqrtRational(-self.signed_square)

    def __mul__(self, other):
        if isinstance(other, SqrtRational):
            return SqrtRational(self.signed_square * abs(other.signed_square)
                                * (1 if other.signed_square >= 0 else -1))
        if isinstance(other, (int, Fraction)):
            return SqrtRational.from_parts(self.sign, self.square, Fraction(other))
        return float(self) * other

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, SqrtRational):
            return self.signed_square == other.signed_square
        if isinstance(other, (int, Fraction)):
            return self.signed_square == (1 if other >= 0 else -1) * Fraction(other) ** 2
        return NotImplemented

    def __hash__(self):
        return hash(self.signed_square)

    def __repr__(self) -> str:
        return f"SqrtRational({'-' if self.sign < 0 else ''}sqrt({self.square}))"


ZERO = SqrtRational(Fraction(0))


def _twice(x) -> int:
    """2x as an int; rejects values that are not integer or half-integer."""
    if isinstance(x, float):
        if not math.isfinite(x):
            raise DomainError(f"quantum number must be finite, got {x}")
        x = Fraction(x)
    t = Fraction(x) * 2
    if t.denominator != 1:
        raise DomainError(f"{x} is not an integer or half-integer")
    return int(t)


def _fact(twice_n: int) -> int:
    return math.factorial(twice_n // 2)


def _triangle_ok(a: int, b: int, c: int) -> bool:
    # arguments are doubled
    return (a + b + c) % 2 == 0 and abs(a - b) <= c <= a + b


def _delta(a: int, b: int, c: int) -> Fraction:
    return Fraction(_fact(a + b - c) * _fact(a - b + c) * _fact(-a + b + c), _fact(a + b + c + 2))


def _check_jm(tj: int, tm: int) -> None:
    if tj < 0:
        raise DomainError("angular momentum must be non-negative")
    if (tj - tm) % 2:
        raise DomainError("j and m must both be integer or both half-integer")


@lru_cache(maxsize=None)
def _wigner3j_doubled(tj1, tj2, tj3, tm1, tm2, tm3) -> SqrtRational:
    for tj, tm in ((tj1, tm1), (tj2, tm2), (tj3, tm3)):
        _check_jm(tj, tm)
    if tm1 + tm2 + tm3 != 0 or not _triangle_ok(tj1, tj2, tj3):
        return ZERO
    if abs(tm1) > tj1 or abs(tm2) > tj2 or abs(tm3) > tj3:
        return ZERO
    pre = _delta(tj1, tj2, tj3) * (
        _fact(tj1 + tm1) * _fact(tj1 - tm1) * _fact(tj2 + tm2) * _fact(tj2 - tm2)
        * _fact(tj3 + tm3) * _fact(tj3 - tm3))
    # summation index k (doubled) over non-negative factorial arguments
    kmin = max(0, tj2 - tj3 - tm1, tj1 - tj3 + tm2)
    kmax = min(tj1 + tj2 - tj3, tj1 - tm1, tj2 + tm2)
    total = Fraction(0)
    for k in range(kmin, kmax + 1, 2):
        den = (_fact(k) * _fact(tj3 - tj2 + k + tm1) * _fact(tj3 - tj1 + k - tm2)
               * _fact(tj1 + tj2 - tj3 - k) * _fact(tj1 - k - tm1) * _fact(tj2 - k + tm2))
        total += Fraction((-1) ** (k // 2), den)
    phase = (-1) ** ((tj1 - tj2 - tm3) // 2)
    return SqrtRational.from_parts(phase, pre, total)


def wigner3j(j1, j2, j3, m1, m2, m3) -> SqrtRational:
    """Wigner 3j symbol (j1 j2 j3; m1 m2 m3), exact.

    Returns zero when a selection or triangle rule fails.

    Raises
    ------
    DomainError
        For non-half-integer arguments, negative j, or j - m not integral.
    """
    return _wigner3j_doubled(_twice(j1), _twice(j2), _twice(j3),
                             _twice(m1), _twice(m2), _twice(m3))


@lru_cache(maxsize=None)
def _wigner6j_doubled(a, b, c, d, e, f) -> SqrtRational:
    for j in (a, b, c, d, e, f):
        if j < 0:
            raise DomainError("angular momentum must be non-negative")
    triads = ((a, b, c), (a, e, f), (d, b, f), (d, e, c))
    if not all(_triangle_ok(*t) for t in triads):
        return ZERO
    pre = Fraction(1)
    for t in triads:
        pre *= _delta(*t)
    s1, s2, s3, s4 = (sum(t) for t in triads)
    p1, p2, p3 = a + b + d + e, b + c + e + f, c + a + f + d
    total = Fraction(0)
    for t in range(max(s1, s2, s3, s4), min(p1, p2, p3) + 1, 2):
        num = (-1) ** (t // 2) * _fact(t + 2)
        den = (_fact(t - s1) * _fact(t - s2) * _fact(t - s3) * _fact(t - s4)
               * _fact(p1 - t) * _fact(p2 - t) * _fact(p3 - t))
        total += Fraction(num, den)
    return SqrtRational.from_parts(1, pre, total)


def wigner6j(j1, j2, j3, j4, j5, j6) -> SqrtRational:
    """Wigner 6j symbol {j1 j2 j3; j4 j5 j6}, exact (zero if a triad fails)."""
    return _wigner6j_doubled(*(_twice(j) for j in (j1, j2, j3, j4, j5, j6)))


def clebsch_gordan(j1, m1, j2, m2, j, m) -> SqrtRational:
    """<j1 m1; j2 m2 | j m> with the Condon-Shortley phase convention."""
    tj1, tj2, tj = _twice(j1), _twice(j2), _twice(j)
    tm1, tm2, tm = _twice(m1), _twice(m2), _twice(m)
    three = _wigner3j_doubled(tj1, tj2, tj, tm1, tm2, -tm)
    if not three:
        return ZERO
    phase = (-1) ** ((tj1 - tj2 + tm) // 2)
    return SqrtRational.from_parts(phase, Fraction(tj + 1), 1) * three


# ---------------------------------------------------------------------------
# bases and operators


def _m_values(F: Fraction) -> list[Fraction]:
    tf = _twice(F)
    return [Fraction(tm, 2) for tm in range(-tf, tf + 1, 2)]


@dataclass(frozen=True)
class HyperfineBasis:
    """Ordered |F, m_F> states of one fine-structure level with nuclear spin I."""

    J: Fraction
    I_nuc: Fraction
    levels: tuple = field(init=False)

    def __post_init__(self):
        tj, ti = _twice(self.J), _twice(self.I_nuc)
        Fs = [Fraction(tf, 2) for tf in range(abs(tj - ti), tj + ti + 1, 2)]
        levels = tuple((F, m) for F in Fs for m in _m_values(F))
        object.__setattr__(self, "levels", levels)

    @property
    def dim(self) -> int:
        return len(self.levels)

    @property
    def F_values(self) -> list[Fraction]:
        return sorted({F for F, _ in self.levels})

    def indices(self, F) -> list[int]:
        F = Fraction(F)
        return [k for k, (G, _) in enumerate(self.levels) if G == F]

    def projector(self, F) -> np.ndarray:
        P = np.zeros((self.dim, self.dim))
        for k in self.indices(F):
            P[k, k] = 1.0
        return P

    def uncoupled_levels(self) -> list[tuple[Fraction, Fraction]]:
        """(m_J, m_I) product states, m_J slow index."""
        return [(mj, mi) for mj in _m_values(self.J) for mi in _m_values(self.I_nuc)]

    def coupling_matrix(self) -> np.ndarray:
        """U[c, u] = <J mJ; I mI | F m>, rows coupled, columns uncoupled."""
        unc = self.uncoupled_levels()
        U = np.zeros((self.dim, len(unc)))
        for c, (F, m) in enumerate(self.levels):
            for u, (mj, mi) in enumerate(unc):
                U[c, u] = float(clebsch_gordan(self.J, mj, self.I_nuc, mi, F, m))
        return U

    def spin_matrices(self, F) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cartesian F_x, F_y, F_z (units of hbar) embedded on the F block."""
        return tuple(_embed(self, F, op) for op in spin_operators(F))


def spin_operators(F) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standard spin-F matrices over m = -F ... F."""
    ms = [float(m) for m in _m_values(Fraction(F))]
    Fv = float(F)
    n = len(ms)
    raise_op = np.zeros((n, n))
    for k in range(n - 1):
        m = ms[k]
        raise_op[k + 1, k] = math.sqrt(Fv * (Fv + 1) - m * (m + 1))
    lower = raise_op.T
    fx = (raise_op + lower) / 2
    fy = (raise_op - lower) / 2j
    fz = np.diag(ms)
    return fx.astype(complex), fy, fz.astype(complex)


def _embed(basis: HyperfineBasis, F, block: np.ndarray) -> np.ndarray:
    idx = basis.indices(F)
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    out[np.ix_(idx, idx)] = block
    return out


METASTABLE = HyperfineBasis(Fraction(1), Fraction(1, 2))
EXCITED = HyperfineBasis(Fraction(0), Fraction(1, 2))

F_HALF = Fraction(1, 2)
F_THREEHALF = Fraction(3, 2)


# ---------------------------------------------------------------------------
# photon spin


def _as_unit_vector(epsilon) -> np.ndarray:
    eps = np.asarray(epsilon, dtype=complex).reshape(3)
    norm = np.linalg.norm(eps)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"polarization must have unit norm, got {norm!r}")
    return eps


def photon_spin(epsilon) -> np.ndarray:
    """Mean photon spin s = (conj(eps) x eps) / i, a real 3-vector."""
    eps = _as_unit_vector(epsilon)
    s = np.cross(eps.conj(), eps) / 1j
    if np.max(np.abs(s.imag)) > 1e-12:
        raise ArithmeticError("photon spin has an imaginary residue")
    return s.real.copy()


@dataclass(frozen=True)
class PolarizationSpin:
    epsilon: tuple
    photon_spin: tuple

    @classmethod
    def of(cls, epsilon) -> "PolarizationSpin":
        eps = _as_unit_vector(epsilon)
        return cls(tuple(complex(c) for c in eps), tuple(float(c) for c in photon_spin(eps)))


def spherical_components(vec) -> dict[int, complex]:
    """Spherical components v_{+1} = -(vx + i vy)/sqrt2, v_0 = vz, v_{-1} = (vx - i vy)/sqrt2."""
    vx, vy, vz = np.asarray(vec, dtype=complex)
    r2 = math.sqrt(2.0)
    return {1: -(vx + 1j * vy) / r2, 0: vz, -1: (vx - 1j * vy) / r2}


# ---------------------------------------------------------------------------
# effective Hamiltonian


@dataclass(frozen=True, eq=False)
class EffectiveHamiltonian:
    """Light-induced operator on the 6 metastable states [J].

    ``matrix`` is generally non-Hermitian; the light-shift part is its
    Hermitian half and the absorption operator is i (H - H^dagger).
    """

    matrix: np.ndarray
    atomic: AtomicConfig
    laser: LaserConfig
    constants: PhysicalConstants = CONSTANTS
    scalar: np.ndarray | None = None
    vector: np.ndarray | None = None
    tensor: np.ndarray | None = None

    @property
    def light_shift(self) -> np.ndarray:
        return (self.matrix + self.matrix.conj().T) / 2

    @property
    def absorption(self) -> np.ndarray:
        return 1j * (self.matrix - self.matrix.conj().T)

    @property
    def parts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.scalar is None:
            raise AttributeError("decomposition not attached; call decompose_irreducible")
        return self.scalar, self.vector, self.tensor


def light_prefactor(atomic: AtomicConfig, laser: LaserConfig,
                    constants: PhysicalConstants = CONSTANTS) -> float:
    """I e^2 f / (4 m_e c eps0) [J rad/s]."""
    c = constants
    return (laser.intensity * c.elementary_charge ** 2 * atomic.oscillator_strength
            / (4.0 * c.electron_mass * c.speed_of_light * c.vacuum_permittivity))


def _line_for(atomic: AtomicConfig, F: Fraction) -> float:
    return atomic.omega8 if F == F_HALF else atomic.omega9


def lineshape_factors(atomic: AtomicConfig, laser: LaserConfig) -> dict[Fraction, complex]:
    """Z(omega; omega_F) / omega_F for each metastable hyperfine level."""
    out = {}
    for F in METASTABLE.F_values:
        w0 = _line_for(atomic, F)
        out[F] = plasma_dispersion_value(laser.angular_frequency, w0, atomic.doppler_width,
                                         atomic.excited_decay) / w0
    return out


def dipole_matrices(ground: HyperfineBasis = METASTABLE,
                    excited: HyperfineBasis = EXCITED) -> dict[int, np.ndarray]:
    """Spherical components <e| r_q |g> for a unit J-level reduced element.

    Built in the product basis with the Wigner-Eckart theorem,
    <Je me| r_q |Jg mg> = <Je||r||Jg> <Jg mg; 1 q | Je me>, then rotated into
    the coupled bases.
    """
    ue, ug = excited.uncoupled_levels(), ground.uncoupled_levels()
    Ce, Cg = excited.coupling_matrix(), ground.coupling_matrix()
    out = {}
    for q in (-1, 0, 1):
        R = np.zeros((len(ue), len(ug)))
        for a, (me, mie) in enumerate(ue):
            for b, (mg, mig) in enumerate(ug):
                if mie != mig:
                    continue
                R[a, b] = float(clebsch_gordan(ground.J, mg, 1, q, excited.J, me))
        out[q] = Ce @ R @ Cg.T
    return out


def cartesian_dipoles(ground: HyperfineBasis = METASTABLE,
                      excited: HyperfineBasis = EXCITED) -> tuple[np.ndarray, ...]:
    Rq = dipole_matrices(ground, excited)
    r2 = math.sqrt(2.0)
    rx = (Rq[-1] - Rq[1]) / r2
    ry = 1j * (Rq[-1] + Rq[1]) / r2
    rz = Rq[0].astype(complex)
    return rx.astype(complex), ry, rz


def effective_hamiltonian_brute(atomic: AtomicConfig, laser: LaserConfig,
                                constants: PhysicalConstants = CONSTANTS) -> EffectiveHamiltonian:
    """Second-order light-induced operator from explicit dipole matrices.

    For each ground hyperfine level F the block is
    -(I e^2 / (2 c eps0 hbar)) Z(omega; omega_F) |<Je||r||Jg>|^2 P_F A P_F
    with A = (eps . r)^dagger (eps . r) evaluated for a unit reduced element,
    and |<Je||r||Jg>|^2 fixed by the oscillator strength.
    """
    c = constants
    eps = laser.epsilon
    rx, ry, rz = cartesian_dipoles()
    V = eps[0] * rx + eps[1] * ry + eps[2] * rz
    A = V.conj().T @ V
    Je, Jg = float(EXCITED.J), float(METASTABLE.J)
    zw = lineshape_factors(atomic, laser)
    H = np.zeros((METASTABLE.dim, METASTABLE.dim), dtype=complex)
    for F in METASTABLE.F_values:
        w0 = _line_for(atomic, F)
        # |<Jg||r||Je>|^2 from f, then swap to <Je||r||Jg> for the convention above
        red_g_e = (atomic.oscillator_strength * c.reduced_planck * (2 * Je + 1) * (2 * Jg + 1)
                   / (2 * c.electron_mass * w0))
        red_e_g = red_g_e * (2 * Jg + 1) / (2 * Je + 1)
        P = METASTABLE.projector(F)
        pref = -(laser.intensity * c.elementary_charge ** 2
                 / (2 * c.speed_of_light * c.vacuum_permittivity * c.reduced_planck))
        H += pref * (zw[F] * w0) * red_e_g * (P @ A @ P)
    return EffectiveHamiltonian(H, atomic, laser, constants)


def closed_form_parts(atomic: AtomicConfig, laser: LaserConfig,
                      constants: PhysicalConstants = CONSTANTS) -> EffectiveHamiltonian:
    """Scalar, vector and tensor closed forms and their sum.

    With P = I e^2 f / (4 m_e c eps0) and z_F = Z(omega; omega_F)/omega_F:

    scalar  = -P (z_1/2 P_1/2 + z_3/2 P_3/2)
    vector  =  P (2 z_1/2 s.F_1/2 + z_3/2 s.F_3/2)
    tensor  = (P/3) z_3/2 [ (3/2) {eps.F, eps*.F} - F^2 ]   on F = 3/2

    The tensor uses the symmetrized product; the plain product
    (eps.F)(eps*.F) differs from it by (1/2) s.F, which is rank 1.
    """
    pref = light_prefactor(atomic, laser, constants)
    zw = lineshape_factors(atomic, laser)
    eps = laser.epsilon
    s = photon_spin(eps)
    zh, zt = zw[F_HALF], zw[F_THREEHALF]

    scalar = -pref * (zh * METASTABLE.projector(F_HALF) + zt * METASTABLE.projector(F_THREEHALF))

    Fh = METASTABLE.spin_matrices(F_HALF)
    Ft = METASTABLE.spin_matrices(F_THREEHALF)
    s_dot = lambda Fs: sum(si * Fi for si, Fi in zip(s, Fs))  # noqa: E731
    vector = pref * (2 * zh * s_dot(Fh) + zt * s_dot(Ft))

    eF = sum(e * Fi for e, Fi in zip(eps, Ft))
    ecF = sum(e.conjugate() * Fi for e, Fi in zip(eps, Ft))
    F2 = sum(Fi @ Fi for Fi in Ft)
    tensor = (pref / 3) * zt * (1.5 * (eF @ ecF + ecF @ eF) - F2)

    total = scalar + vector + tensor
    return EffectiveHamiltonian(total, atomic, laser, constants, scalar, vector, tensor)


def literal_tensor_part(atomic: AtomicConfig, laser: LaserConfig,
                        constants: PhysicalConstants = CONSTANTS) -> np.ndarray:
    """(P/3) z_3/2 [3 (eps.F)(eps*.F) - F^2] with the unsymmetrized product."""
    pref = light_prefactor(atomic, laser, constants)
    zt = lineshape_factors(atomic, laser)[F_THREEHALF]
    eps = laser.epsilon
    Ft = METASTABLE.spin_matrices(F_THREEHALF)
    eF = sum(e * Fi for e, Fi in zip(eps, Ft))
    ecF = sum(e.conjugate() * Fi for e, Fi in zip(eps, Ft))
    F2 = sum(Fi @ Fi for Fi in Ft)
    return (pref / 3) * zt * (3 * eF @ ecF - F2)


def rank_coupled_polarization(epsilon, K: int, q: int) -> complex:
    """{eps* (x) eps}^K_q = sum CG(1 q1; 1 q2 | K q) (eps*)_{q1} eps_{q2}."""
    a = spherical_components(np.conj(epsilon))
    b = spherical_components(epsilon)
    total = 0j
    for q1 in (-1, 0, 1):
        q2 = q - q1
        if abs(q2) > 1:
            continue
        cg = float(clebsch_gordan(1, q1, 1, q2, K, q))
        total += cg * a[q1] * b[q2]
    return total


def derivation_chain(atomic: AtomicConfig, laser: LaserConfig,
                     constants: PhysicalConstants = CONSTANTS) -> EffectiveHamiltonian:
    """Effective Hamiltonian from the rank-K expansion with 6j recoupling.

    Each hyperfine block is
    -(I e^2 f / (4 m_e omega_F c eps0)) Z  sum_{K,q} (-1)^q {eps* (x) eps}^K_q
    sqrt((2Fe+1)(2K+1)) {1 1 K; F F Fe} (-1)^(Fe+F) sqrt((2F+1)/(2Fe+1))
    (2Je+1)(2Jg+1) [(-1)^(Fe+Jg+1+I) sqrt((2Fe+1)(2Jg+1)) {Jg Je 1; Fe F I}]^2
    <F m'; K -q | F m> |m><m'|.
    """
    c = constants
    Jg, Je, I_nuc = METASTABLE.J, EXCITED.J, METASTABLE.I_nuc
    eps = laser.epsilon
    zw = lineshape_factors(atomic, laser)
    base = (laser.intensity * c.elementary_charge ** 2 * atomic.oscillator_strength
            / (4 * c.electron_mass * c.speed_of_light * c.vacuum_permittivity))
    H = np.zeros((METASTABLE.dim, METASTABLE.dim), dtype=complex)
    for Fg in METASTABLE.F_values:
        idx = METASTABLE.indices(Fg)
        ms = _m_values(Fg)
        block = np.zeros((len(ms), len(ms)), dtype=complex)
        for Fe in EXCITED.F_values:
            hf = float(wigner6j(Jg, Je, 1, Fe, Fg, I_nuc))
            hf_phase = (-1) ** int(Fe + Jg + 1 + I_nuc)
            hf_factor = (hf_phase * math.sqrt((2 * Fe + 1) * (2 * Jg + 1)) * hf) ** 2
            outer = ((-1) ** int(Fe + Fg) * math.sqrt((2 * Fg + 1) / (2 * Fe + 1))
                     * (2 * Je + 1) * (2 * Jg + 1) * hf_factor)
            for K in (0, 1, 2):
                sixj = float(wigner6j(1, 1, K, Fg, Fg, Fe))
                if sixj == 0.0:
                    continue
                kfac = math.sqrt((2 * Fe + 1) * (2 * K + 1)) * sixj * outer
                for q in range(-K, K + 1):
                    pol = rank_coupled_polarization(eps, K, q)
                    if pol == 0:
                        continue
                    for a, m in enumerate(ms):
                        for b, mp in enumerate(ms):
                            cg = float(clebsch_gordan(Fg, mp, K, -q, Fg, m))
                            if cg:
                                block[a, b] += (-1) ** q * pol * kfac * cg
        block *= -base * zw[Fg]
        H[np.ix_(idx, idx)] = block
    return EffectiveHamiltonian(H, atomic, laser, constants)


# ---------------------------------------------------------------------------
# irreducible decomposition


def _rank_operators(F) -> list[tuple[int, int, np.ndarray]]:
    """Spherical operator basis (K, q, T^K_q) on a spin-F space, K <= 2."""
    fx, fy, fz = spin_operators(F)
    dim = fx.shape[0]
    r2 = math.sqrt(2.0)
    T1 = {1: -(fx + 1j * fy) / r2, 0: fz, -1: (fx - 1j * fy) / r2}
    ops = [(0, 0, np.eye(dim, dtype=complex))]
    ops += [(1, q, T1[q]) for q in (-1, 0, 1)]
    for q in range(-2, 3):
        T2 = np.zeros((dim, dim), dtype=complex)
        for q1 in (-1, 0, 1):
            q2 = q - q1
            if abs(q2) <= 1:
                T2 += float(clebsch_gordan(1, q1, 1, q2, 2, q)) * (T1[q1] @ T1[q2])
        ops.append((2, q, T2))
    return ops


@dataclass(frozen=True, eq=False)
class IrreducibleParts:
    scalar: np.ndarray
    vector: np.ndarray
    tensor: np.ndarray
    # Cartesian vector coefficients a_F with vector block = a_F . F
    vector_coefficients: dict
    residual: float

    @property
    def total(self) -> np.ndarray:
        return self.scalar + self.vector + self.tensor


def decompose_irreducible(H, basis: HyperfineBasis = METASTABLE,
                          tol: float = 1e-12) -> IrreducibleParts:
    """Project each hyperfine block of H onto rank 0, 1 and 2 operators.

    Raises
    ------
    DecompositionError
        If H couples different F levels or has a rank-3 remainder larger
        than ``tol`` times its Frobenius norm.
    """
    M = np.asarray(H.matrix if isinstance(H, EffectiveHamiltonian) else H, dtype=complex)
    norm = np.linalg.norm(M)
    parts = [np.zeros_like(M) for _ in range(3)]
    coeffs = {}
    block_mask = np.zeros(M.shape, dtype=bool)
    for F in basis.F_values:
        idx = basis.indices(F)
        block_mask[np.ix_(idx, idx)] = True
        B = M[np.ix_(idx, idx)]
        for K, _, T in _rank_operators(F):
            tt = np.vdot(T, T).real
            if tt < 1e-30:
                continue
            piece = (np.vdot(T, B) / tt) * T
            parts[K][np.ix_(idx, idx)] += piece
        fx, fy, fz = spin_operators(F)
        coeffs[F] = np.array([np.vdot(Fi, B) / np.vdot(Fi, Fi).real for Fi in (fx, fy, fz)])
    off = np.linalg.norm(M[~block_mask])
    if off > tol * max(norm, 1e-300):
        raise DecompositionError(f"coherence between hyperfine levels: norm {off:.3e}")
    residual = np.linalg.norm(M - sum(parts))
    if residual > tol * max(norm, 1e-300):
        raise DecompositionError(f"rank > 2 remainder {residual:.3e} of norm {norm:.3e}")
    rel = residual / norm if norm > 0 else 0.0
    return IrreducibleParts(parts[0], parts[1], parts[2], coeffs, rel)


def with_decomposition(H: EffectiveHamiltonian) -> EffectiveHamiltonian:
    p = decompose_irreducible(H)
    return EffectiveHamiltonian(H.matrix, H.atomic, H.laser, H.constants,
                                p.scalar, p.vector, p.tensor)


def relative_frobenius(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return float(np.linalg.norm(a - b) / scale) if scale > 0 else 0.0
