import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavekin.lattice import (BetaVector, LatticePoint, UsageError, beta_inner, beta_norm_sq, epsilon_coeff,
                             generic_beta_audit, kinetic_parameters, resonance_factor,
                             resonance_factor_conserving, small_inner_count)

reals = st.floats(-5, 5, allow_nan=False)
betas = st.lists(st.floats(0.5, 3.0), min_size=1, max_size=4)


def scalar_product(k, l, beta):
    """Independent oracle: explicit loop in pure Python."""
    s = 0.0
    for i in range(len(beta)):
        s += beta[i] * k[i] * l[i]
    return s


# --- BetaVector / LatticePoint ---------------------------------------------------------------

def test_beta_rejects_nonpositive():
    with pytest.raises(UsageError):
        BetaVector((1.0, 0.0))
    with pytest.raises(UsageError):
        BetaVector(())


def test_generic_beta_is_seeded_uniform_on_1_2():
    a = BetaVector.generic(3, 4).array()
    assert np.array_equal(a, BetaVector.generic(3, 4).array())
    assert np.all((a >= 1) & (a <= 2))


def test_lattice_point_exact_numerators():
    p = LatticePoint((3, -2), 7.0)
    assert p.numerator == (3, -2)
    assert np.array_equal(p.vector() * 7.0, [3.0, -2.0])
    with pytest.raises(UsageError):
        LatticePoint((1.5,), 2.0)
    with pytest.raises(UsageError):
        LatticePoint((1,), 2.0) + LatticePoint((1,), 3.0)


# --- beta_inner ------------------------------------------------------------------------------

def test_beta_inner_euclidean():
    assert beta_inner((1, 2, 2), (1, 2, 2), (1, 1, 1)) == 9          # [TRIVIAL]


def test_beta_inner_orthogonal_axes():
    assert beta_inner((1, 0), (0, 1), (1, 2)) == 0                   # [TRIVIAL]


def test_beta_inner_derived_value():
    # [DERIVED] the oracle loop gives 2*1.3 - 1.7 = 0.9
    want = scalar_product((2, -1), (1, 1), (1.3, 1.7))
    assert want == pytest.approx(0.9, abs=1e-15)
    assert beta_inner((2, -1), (1, 1), (1.3, 1.7)) == pytest.approx(want, rel=1e-15)


def test_beta_inner_dimension_mismatch():
    with pytest.raises(UsageError):
        beta_inner((1, 2), (1, 2, 3), (1, 1))


@given(betas, st.data())
def test_beta_inner_symmetric_bilinear(beta, data):
    d = len(beta)
    vec = st.lists(reals, min_size=d, max_size=d)
    k, l, m = (np.array(data.draw(vec)) for _ in range(3))
    a, b = data.draw(reals), data.draw(reals)
    assert beta_inner(k, l, beta) == pytest.approx(beta_inner(l, k, beta), rel=1e-12, abs=1e-12)
    lhs = beta_inner(a * k + b * m, l, beta)
    rhs = a * beta_inner(k, l, beta) + b * beta_inner(m, l, beta)
    scale = 1 + abs(a) * abs(beta_inner(abs(k), abs(l), beta)) + abs(b) * abs(beta_inner(abs(m), abs(l), beta))
    assert abs(lhs - rhs) <= 1e-12 * scale
    assert beta_inner(k, l, beta) == pytest.approx(scalar_product(k, l, beta), rel=1e-12, abs=1e-12)


# --- resonance factor ------------------------------------------------------------------------

def test_resonance_degenerate_quadruple():
    k, j = (0.3, -1.2), (2.0, 0.5)
    assert resonance_factor(k, j, j, k, (1.0, 1.4)) == 0.0           # [TRIVIAL]


def test_resonance_exactly_resonant_quadruple():
    # [DERIVED] hand evaluation 1 + 0 + 1 - 2
    assert resonance_factor((1, 0), (0, 0), (0, 1), (1, 1), (1, 1)) == 0.0


def test_resonance_factored_form_on_random_conserving_quadruples():
    rng = np.random.default_rng(0)
    beta = rng.uniform(1, 2, 3)
    k1, k3, k = rng.normal(size=(3, 10_000, 3))
    k2 = k1 + k3 - k
    a = resonance_factor(k1, k2, k3, k, beta)
    b = resonance_factor_conserving(k1, k3, k, beta)
    scale = beta_norm_sq(k1, beta) + beta_norm_sq(k2, beta) + beta_norm_sq(k3, beta) + beta_norm_sq(k, beta)
    assert np.max(np.abs(a - b) / scale) < 1e-12


# --- interaction coefficient -----------------------------------------------------------------

def test_epsilon_branches():
    assert epsilon_coeff((1,), (2,), (3,)) == 1
    assert epsilon_coeff((5,), (5,), (5,)) == -1
    assert epsilon_coeff((1,), (1,), (2,)) == 0


def test_epsilon_support_on_small_box():
    pts = [(a, b) for a in range(-3, 4) for b in range(-3, 4)][::3]
    for k1, k2, k3 in itertools.product(pts, repeat=3):
        e = epsilon_coeff(k1, k2, k3)
        in_set = (k2 != k1 and k2 != k3) or (k1 == k2 == k3)
        assert (e != 0) == in_set


def test_epsilon_rejects_float_points():
    with pytest.raises(UsageError):
        epsilon_coeff((0.5,), (1,), (2,))


def test_epsilon_on_lattice_points():
    a, b = LatticePoint((1, 2), 4.0), LatticePoint((0, 2), 4.0)
    assert epsilon_coeff(a, a, b) == 0
    assert epsilon_coeff(a, b, a) == 1
    assert epsilon_coeff(a, a, a) == -1


# --- genericity ------------------------------------------------------------------------------

def test_rational_beta_violates():
    rep = generic_beta_audit((1.0, 1.0), 5, 1e-3, radii=(1, 2))
    assert (1, -1, 0.0, rep.violations[0][3]) in rep.violations
    assert not rep.ok


def test_random_beta_has_no_violations():
    clean = sum(generic_beta_audit(BetaVector.generic(2, s), 100, 1e-3, radii=(1, 2)).ok for s in range(10))
    assert clean >= 9


def _brute_small_inner(beta, R):
    d = len(beta)
    box = list(itertools.product(range(-R, R + 1), repeat=d))
    n = 0
    for X in box:
        if not any(X):
            continue
        for Y in box:
            if abs(scalar_product(X, Y, beta)) > 1 + 1e-12:
                continue
            for Z in box:
                if abs(scalar_product(X, Z, beta)) <= 1 + 1e-12:
                    n += 1
    return n


@pytest.mark.parametrize("beta,R", [((1.0, 1.0), 2), ((1.3, 1.7), 2), ((1.0, 1.0, 1.0), 1)])
def test_small_inner_count_matches_triple_loop(beta, R):
    assert small_inner_count(beta, R) == _brute_small_inner(beta, R)


def test_isotropic_count_exceeds_generic_growth():
    # [DERIVED] the count at R=10 (verified formula above) beats R^(3d-4+1/6)
    assert small_inner_count((1.0, 1.0, 1.0), 10) > 10 ** (3 * 3 - 4 + 1 / 6)


# --- kinetic scaling -------------------------------------------------------------------------

def test_kinetic_parameters_d3_L10():
    sc = kinetic_parameters(10, 3, 1.0)
    assert sc.lam == pytest.approx(10.0, rel=1e-14)
    assert sc.alpha == pytest.approx(0.1, rel=1e-14)
    assert sc.t_kin == pytest.approx(50.0, rel=1e-13)
    assert sc.t_kin == pytest.approx(10 ** 2 / 2, rel=1e-13)


@given(st.floats(1.5, 100), st.integers(1, 3), st.floats(0.1, 3))
def test_kinetic_scaling_invariants_exact(L, d, gamma):
    sc = kinetic_parameters(L, d, gamma)
    assert sc.alpha == sc.lam * sc.lam * L ** (-d)
    assert sc.t_kin == 1.0 / (2.0 * sc.alpha * sc.alpha)
    assert sc.alpha == pytest.approx(L ** (-gamma), rel=1e-12)


def test_gamma_zero_flagged():
    assert kinetic_parameters(10, 3, 0.0).iterated_limit
    assert not kinetic_parameters(10, 3, 1.0).iterated_limit


def test_scaling_rejects_small_box():
    with pytest.raises(UsageError):
        kinetic_parameters(1.0, 3, 1.0)
