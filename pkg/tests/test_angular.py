import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sympy import Rational, sqrt as ssqrt
from sympy.physics.wigner import clebsch_gordan as sym_cg
from sympy.physics.wigner import wigner_3j as sym_3j
from sympy.physics.wigner import wigner_6j as sym_6j

from meclight.angular import (EXCITED, F_HALF, F_THREEHALF, METASTABLE, DecompositionError,
                              DomainError, SqrtRational, clebsch_gordan, closed_form_parts,
                              decompose_irreducible, derivation_chain,
                              effective_hamiltonian_brute, literal_tensor_part, photon_spin,
                              PolarizationSpin, relative_frobenius, spin_operators, wigner3j,
                              wigner6j)
from meclight.quantities import (LINEAR_X, LINEAR_Z, SIGMA_PLUS, TWO_PI, AtomicConfig,
                                 LaserConfig, mw_cm2_to_w_m2)

ATOM = AtomicConfig()
HALF = Fraction(1, 2)


def half_integers(max_twice=8):
    return [Fraction(k, 2) for k in range(0, max_twice + 1)]


def exact(value):
    """sympy expression -> signed square as Fraction."""
    v = Rational(value ** 2) if value.is_rational is False else Rational(value) ** 2
    sign = 1 if value >= 0 else -1
    return sign * Fraction(int(v.p), int(v.q))


def random_laser(rng):
    eps = rng.normal(size=3) + 1j * rng.normal(size=3)
    eps /= np.linalg.norm(eps)
    return LaserConfig(intensity=rng.uniform(1.0, 4000.0),
                       angular_frequency=ATOM.omega8 + TWO_PI * rng.uniform(-10e9, 17e9),
                       polarization=tuple(eps))


# exact symbols

def test_3j_triangle_violation_is_zero():
    assert wigner3j(0, 0, 1, 0, 0, 0) == 0


def test_3j_known_value():
    v = wigner3j(1, 1, 0, 0, 0, 0)
    assert v.signed_square == Fraction(-1, 3)
    assert float(v) == pytest.approx(-1 / math.sqrt(3), rel=1e-15)


def test_3j_inconsistent_half_integers():
    with pytest.raises(DomainError):
        wigner3j(HALF, 1, 1, 0, 0, 0)
    with pytest.raises(DomainError):
        wigner3j(0.3, 1, 1, 0, 0, 0)
    assert wigner3j(1, 1, 1, 2, -2, 0) == 0  # |m| > j is outside the selection rules


def test_3j_against_sympy_exhaustive():
    js = half_integers(4)
    count = 0
    for j1, j2, j3 in itertools.product(js, repeat=3):
        for m1 in [j1 - k for k in range(int(2 * j1) + 1)]:
            for m2 in [j2 - k for k in range(int(2 * j2) + 1)]:
                m3 = -m1 - m2
                if abs(m3) > j3 or (j3 - m3).denominator != 1:
                    continue
                if (j1 + j2 + j3).denominator != 1:
                    continue
                ours = wigner3j(j1, j2, j3, m1, m2, m3)
                ref = sym_3j(*(Rational(x.numerator, x.denominator)
                               for x in (j1, j2, j3, m1, m2, m3)))
                assert ours.signed_square == exact(ref)
                count += 1
    assert count > 300


@pytest.mark.parametrize("j1,j2", [(HALF, HALF), (1, HALF), (1, 1), (Fraction(3, 2), 1),
                                   (2, Fraction(3, 2)), (3, 2), (4, 4)])
def test_3j_orthogonality(j1, j2):
    j1, j2 = Fraction(j1), Fraction(j2)
    for j3 in [abs(j1 - j2) + k for k in range(int(j1 + j2 - abs(j1 - j2)) + 1)]:
        for m3 in [j3 - k for k in range(int(2 * j3) + 1)]:
            total = Fraction(0)
            for m1 in [j1 - k for k in range(int(2 * j1) + 1)]:
                m2 = -m3 - m1
                if abs(m2) <= j2:
                    total += wigner3j(j1, j2, j3, m1, m2, m3).square
            assert (2 * j3 + 1) * total == 1


def test_6j_triad_violation_is_zero():
    assert wigner6j(1, 1, 3, HALF, HALF, HALF) == 0
    assert wigner6j(1, 1, 0, HALF, Fraction(5, 2), HALF) == 0


def test_6j_known_value():
    # {1 1 0; 1/2 1/2 1/2} = (-1)^(1+1/2+1/2) / sqrt(3 * 2) = 1/sqrt6
    v = wigner6j(1, 1, 0, HALF, HALF, HALF)
    assert v.signed_square == Fraction(1, 6)


def test_6j_against_sympy_exhaustive():
    js = half_integers(4)
    count = 0
    for args in itertools.product(js, repeat=6):
        ours = wigner6j(*args)
        try:
            ref = sym_6j(*(Rational(x.numerator, x.denominator) for x in args))
        except ValueError:
            assert ours == 0
            continue
        assert ours.signed_square == exact(ref)
        count += ref != 0
    assert count > 300


def test_biedenharn_elliott_on_random_inputs():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 25:
        a, b, c, d, e, f, g, h, j = (Fraction(int(x), 2) for x in rng.integers(0, 6, 9))
        # sum_x (-1)^S (2x+1) {a b x; c d g}{c d x; e f h}{e f x; b a j}
        #   = {g h j; e a d}{g h j; f b c}
        S0 = a + b + c + d + e + f + g + h + j
        lhs = 0.0
        for tx in range(0, 20):
            x = Fraction(tx, 2)
            phase_exp = S0 + x
            if phase_exp.denominator != 1:
                continue
            term = (float(wigner6j(a, b, x, c, d, g)) * float(wigner6j(c, d, x, e, f, h))
                    * float(wigner6j(e, f, x, b, a, j)))
            lhs += (-1) ** int(phase_exp) * (2 * x + 1) * term
        rhs = float(wigner6j(g, h, j, e, a, d)) * float(wigner6j(g, h, j, f, b, c))
        if rhs == 0 and lhs == 0:
            continue
        assert lhs == pytest.approx(rhs, abs=1e-13)
        checked += 1


def test_cg_singlet():
    assert clebsch_gordan(HALF, HALF, HALF, -HALF, 0, 0).signed_square == Fraction(1, 2)
    assert clebsch_gordan(HALF, -HALF, HALF, HALF, 0, 0).signed_square == Fraction(-1, 2)


def test_cg_selection_rule():
    assert clebsch_gordan(1, 1, 1, 0, 2, 0) == 0


def test_cg_against_sympy():
    js = half_integers(4)
    for j1, j2 in itertools.product(js, repeat=2):
        for J in [abs(j1 - j2) + k for k in range(int(j1 + j2 - abs(j1 - j2)) + 1)]:
            for m1 in [j1 - k for k in range(int(2 * j1) + 1)]:
                for m2 in [j2 - k for k in range(int(2 * j2) + 1)]:
                    M = m1 + m2
                    if abs(M) > J:
                        continue
                    ref = sym_cg(*(Rational(x.numerator, x.denominator)
                                   for x in (j1, j2, J, m1, m2, M)))
                    assert clebsch_gordan(j1, m1, j2, m2, J, M).signed_square == exact(ref)


@pytest.mark.parametrize("j1,j2", [(HALF, HALF), (1, HALF), (1, 1), (Fraction(3, 2), 1),
                                   (2, 2), (Fraction(5, 2), Fraction(3, 2))])
def test_cg_blocks_unitary(j1, j2):
    j1, j2 = Fraction(j1), Fraction(j2)
    Js = [abs(j1 - j2) + k for k in range(int(j1 + j2 - abs(j1 - j2)) + 1)]
    for M in [j1 + j2 - k for k in range(int(2 * (j1 + j2)) + 1)]:
        pairs = [(m1, M - m1) for m1 in [j1 - k for k in range(int(2 * j1) + 1)]
                 if abs(M - m1) <= j2]
        cols = [J for J in Js if abs(M) <= J]
        U = np.array([[float(clebsch_gordan(j1, m1, j2, m2, J, M)) for J in cols]
                      for m1, m2 in pairs])
        assert U.shape[0] == U.shape[1]
        assert np.allclose(U.T @ U, np.eye(len(cols)), atol=1e-14)


def test_sqrt_rational_arithmetic():
    a = SqrtRational.from_parts(-1, Fraction(2), Fraction(3))  # -3 sqrt2
    assert a.signed_square == -18
    assert float(a) == pytest.approx(-3 * math.sqrt(2))
    assert (a * a).signed_square == 18 * 18
    assert -a == SqrtRational(Fraction(18))


# bases and photon spin

def test_basis_dimensions():
    assert METASTABLE.dim == 6
    assert EXCITED.dim == 2
    assert [len(METASTABLE.indices(F)) for F in METASTABLE.F_values] == [2, 4]
    assert [m for _, m in METASTABLE.levels][:2] == [-HALF, HALF]


def test_spin_operator_algebra():
    for F in (HALF, 1, F_THREEHALF, 2):
        fx, fy, fz = spin_operators(F)
        assert np.allclose(fx @ fy - fy @ fx, 1j * fz)
        F2 = fx @ fx + fy @ fy + fz @ fz
        assert np.allclose(F2, float(F * (F + 1)) * np.eye(int(2 * F + 1)))


def test_photon_spin_examples():
    assert np.allclose(photon_spin(SIGMA_PLUS), [0, 0, 1])
    assert np.allclose(photon_spin(LINEAR_X), [0, 0, 0])
    eps = np.array([1, 2j, 0]) / math.sqrt(5)
    assert np.allclose(photon_spin(eps), [0, 0, 0.8], atol=1e-15)


def test_photon_spin_rejects_non_unit():
    with pytest.raises(ValueError):
        photon_spin([1, 1, 0])


unit_vectors = st.lists(st.floats(-1, 1), min_size=6, max_size=6).filter(
    lambda v: np.linalg.norm(v) > 0.1)


@settings(max_examples=200, deadline=None)
@given(v=unit_vectors, phi=st.floats(-math.pi, math.pi))
def test_photon_spin_phase_and_conjugation(v, phi):
    eps = np.array(v[:3]) + 1j * np.array(v[3:])
    eps /= np.linalg.norm(eps)
    s = photon_spin(eps)
    assert np.linalg.norm(s) <= 1 + 1e-12
    assert np.allclose(photon_spin(np.exp(1j * phi) * eps), s, atol=1e-14)
    assert np.allclose(photon_spin(eps.conj()), -s, atol=1e-14)
    ps = PolarizationSpin.of(eps)
    assert np.allclose(ps.photon_spin, s)


# effective Hamiltonian

def test_zero_intensity_gives_zero():
    H = effective_hamiltonian_brute(ATOM, LaserConfig(intensity=0.0))
    assert not np.any(H.matrix)


def test_linear_z_has_no_vector_part():
    H = effective_hamiltonian_brute(ATOM, LaserConfig(polarization=LINEAR_Z))
    parts = decompose_irreducible(H)
    assert np.linalg.norm(parts.vector) <= 1e-14 * np.linalg.norm(H.matrix)
    # m = +1/2 and -1/2 in F = 1/2 stay degenerate
    assert H.matrix[0, 0] == pytest.approx(H.matrix[1, 1], rel=1e-14)


def test_brute_matches_closed_form_sigma_plus():
    laser = LaserConfig(intensity=mw_cm2_to_w_m2(100.0),
                        angular_frequency=ATOM.omega8 - TWO_PI * 1e9, polarization=SIGMA_PLUS)
    brute = effective_hamiltonian_brute(ATOM, laser)
    closed = closed_form_parts(ATOM, laser)
    assert relative_frobenius(brute.matrix, closed.matrix) < 1e-12
    parts = decompose_irreducible(brute)
    for ours, ref in zip((parts.scalar, parts.vector, parts.tensor), closed.parts):
        assert np.linalg.norm(ours - ref) <= 1e-12 * np.linalg.norm(brute.matrix)


def test_closed_form_structure():
    rng = np.random.default_rng(11)
    for _ in range(10):
        laser = random_laser(rng)
        scalar, vector, tensor = closed_form_parts(ATOM, laser).parts
        norm = np.linalg.norm(scalar + vector + tensor)
        assert abs(np.trace(vector)) <= 1e-14 * norm
        half = METASTABLE.indices(F_HALF)
        assert not np.any(tensor[np.ix_(half, half)])


def test_all_routes_agree_on_random_suite():
    rng = np.random.default_rng(5)
    for _ in range(50):
        laser = random_laser(rng)
        brute = effective_hamiltonian_brute(ATOM, laser).matrix
        assert relative_frobenius(brute, closed_form_parts(ATOM, laser).matrix) < 1e-12
        assert relative_frobenius(brute, derivation_chain(ATOM, laser).matrix) < 1e-12


def test_literal_tensor_product_leaves_rank_one_residue():
    laser = LaserConfig(polarization=SIGMA_PLUS)
    closed = closed_form_parts(ATOM, laser)
    literal = literal_tensor_part(ATOM, laser)
    residue = literal - closed.tensor
    parts = decompose_irreducible(residue)
    assert np.linalg.norm(residue) > 1e-3 * np.linalg.norm(closed.matrix)
    assert np.linalg.norm(parts.vector - residue) <= 1e-12 * np.linalg.norm(residue)


def test_absorption_operator_positive():
    rng = np.random.default_rng(9)
    for _ in range(20):
        H = effective_hamiltonian_brute(ATOM, random_laser(rng))
        G = H.absorption
        assert np.allclose(G, G.conj().T)
        ev = np.linalg.eigvalsh(G)
        assert ev.min() >= -1e-12 * np.abs(ev).max()
        assert np.allclose(H.light_shift + (-0.5j) * G, H.matrix)


def test_decomposition_basis_elements():
    eye = np.eye(6, dtype=complex)
    p = decompose_irreducible(eye)
    assert np.allclose(p.scalar, eye)
    assert not np.any(np.abs(p.vector) > 1e-15)

    fz = np.zeros((6, 6), dtype=complex)
    idx = METASTABLE.indices(F_THREEHALF)
    fz[np.ix_(idx, idx)] = spin_operators(F_THREEHALF)[2]
    p = decompose_irreducible(fz)
    assert np.allclose(p.vector, fz)
    assert np.allclose(p.vector_coefficients[F_THREEHALF], [0, 0, 1])


def test_decomposition_rejects_hyperfine_coherence():
    M = np.zeros((6, 6), dtype=complex)
    M[0, 3] = 1.0
    with pytest.raises(DecompositionError, match="coherence"):
        decompose_irreducible(M)


def test_decomposition_rejects_rank_three():
    fz = spin_operators(F_THREEHALF)[2]
    M = np.zeros((6, 6), dtype=complex)
    idx = METASTABLE.indices(F_THREEHALF)
    M[np.ix_(idx, idx)] = fz @ fz @ fz
    with pytest.raises(DecompositionError, match="rank"):
        decompose_irreducible(M)


def test_runtime_of_identity_suite():
    rng = np.random.default_rng(1)
    lasers = [random_laser(rng) for _ in range(100)]
    t0 = time.perf_counter()
    for laser in lasers:
        relative_frobenius(effective_hamiltonian_brute(ATOM, laser).matrix,
                           closed_form_parts(ATOM, laser).matrix)
    assert time.perf_counter() - t0 < 5.0
