import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from wavekin.cumulants import unit_modulus_moments
from wavekin.diagrams import LEAF, Garden, enumerate_trees, is_leaf, trivial_couple
from wavekin.ensemble import RandomLaw
from wavekin.expressions import (TinyLattice, chain_shape, evaluate_garden_expression, evaluate_tree_iterate,
                                 gaussian_pairing_sum, over_pairing_sum, picard_terms, product_expectation_mc,
                                 simplex_time_integral, tree_sum_by_scale, tree_time_integral)
from wavekin.lattice import UsageError

T1 = ((), (), ())
X, W = leggauss(24)


def nested_quadrature(shape, omegas, upper, path=()):
    """Tensor Gauss-Legendre evaluation of the nested integral below each entry of `upper`."""
    upper = np.asarray(upper, dtype=float)
    s = 0.5 * upper[..., None] * (X + 1.0)
    w = 0.5 * upper[..., None] * W
    f = np.exp(1j * omegas[path] * s)
    for c, sub in enumerate(shape):
        if not is_leaf(sub):
            f = f * nested_quadrature(sub, omegas, s, path + (c,))
    return np.sum(w * f, axis=-1)


def branch_paths(shape, path=()):
    if is_leaf(shape):
        return []
    out = [path]
    for c, sub in enumerate(shape):
        out += branch_paths(sub, path + (c,))
    return out


# --- time integrals ----------------------------------------------------------------------------

@pytest.mark.parametrize("n", range(1, 7))
def test_zero_frequency_chain_is_simplex_volume(n):
    sh = chain_shape(n)
    om = {p: 0.0 for p in branch_paths(sh)}
    assert tree_time_integral(sh, om, 1.7) == pytest.approx(1.7 ** n / math.factorial(n), rel=1e-13)


@pytest.mark.parametrize("w", [5.0, -3.0, 0.7, 1e-9, 0.0])
def test_single_node(w):
    t = 1.3
    if abs(w) * t < 1e-6:
        want = t + 0.5j * w * t ** 2          # (e^{iwt} - 1)/(iw) loses every digit here
    else:
        want = (np.exp(1j * w * t) - 1) / (1j * w)
    assert abs(tree_time_integral(T1, {(): w}, t) - want) < 1e-13 * max(1, abs(want))


def test_trivial_tree_factor_one():
    assert tree_time_integral(LEAF, {}, 2.0) == 1.0


@pytest.mark.parametrize("spread", [6.0, 1.0, 1e-3])
def test_random_frequencies_match_quadrature(spread):
    rng = np.random.default_rng(0)
    for n in range(1, 5):
        for sh in enumerate_trees(n):
            om = {p: float(rng.uniform(-spread, spread)) for p in branch_paths(sh)}
            want = complex(nested_quadrature(sh, om, 1.0))
            assert abs(tree_time_integral(sh, om, 1.0) - want) < 1e-8


def test_garden_factor_is_product():
    om1, om2 = {(): 2.0}, {(): -1.0, (0,): 0.5}
    a = tree_time_integral(T1, om1, 0.8)
    b = tree_time_integral((T1, (), ()), om2, 0.8)
    assert simplex_time_integral([T1, (T1, (), ())], [om1, om2], 0.8) == pytest.approx(a * b, rel=1e-14)


def test_node_cap():
    sh = chain_shape(13)
    with pytest.raises(UsageError):
        tree_time_integral(sh, {p: 0.0 for p in branch_paths(sh)}, 1.0)


# --- tree iterates -----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def lat():
    return TinyLattice()


def test_trivial_tree_iterate(lat):
    nin = lat.profile(lambda k: np.exp(-k @ k))
    eta = RandomLaw("gaussian").sample(np.random.default_rng(1), (3, lat.size))
    for m, k in enumerate(lat.modes):
        got = evaluate_tree_iterate(lat, LEAF, 1, k, 1.0, nin, eta)
        assert np.allclose(got, np.sqrt(nin[m]) * eta[:, m], rtol=1e-14, atol=0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_tree_sum_equals_picard_iterate(lat, n):
    rng = np.random.default_rng(n)
    nin = lat.profile(lambda k: np.exp(-k @ k))
    a_in = np.sqrt(nin) * RandomLaw("gaussian").sample(rng, (lat.size,))
    want = picard_terms(lat, a_in, 1.0, n)[n]
    got = tree_sum_by_scale(lat, a_in, 1.0, n)
    assert np.max(np.abs(got - want)) < 1e-6 * max(1.0, np.max(np.abs(want)))


def test_resonant_scale_one_factor_is_t():
    # Omega vanishes when k1 = k (k2 = k3), which makes the exponent zero
    assert tree_time_integral(T1, {(): 0.0}, 0.37) == pytest.approx(0.37, rel=1e-15)


# --- garden expressions ------------------------------------------------------------------------

def test_trivial_couple_expression(lat):
    nin = lat.profile(lambda k: np.exp(-k @ k))
    for m, k in enumerate(lat.modes):
        assert evaluate_garden_expression(lat, trivial_couple(), 1.0, [k, k], nin) == pytest.approx(nin[m])
        other = lat.modes[(m + 1) % lat.size]
        assert evaluate_garden_expression(lat, trivial_couple(), 1.0, [k, other], nin) == 0


def test_gaussian_and_unit_phase_monte_carlo(lat):
    nin = lat.profile(lambda k: np.exp(-k @ k))
    trees, signs, ks = (T1, LEAF), (1, -1), ((1,), (1,))
    n = 40_000
    for law, exact in (("gaussian", gaussian_pairing_sum(lat, trees, signs, ks, 1.0, nin)),
                       ("uniform_phase", over_pairing_sum(lat, trees, signs, ks, 1.0, nin, unit_modulus_moments(4)))):
        rl = RandomLaw(law)
        mc, se = product_expectation_mc(lat, trees, signs, ks, 1.0, nin, lambda r, m: rl.sample(r, (m, lat.size)), n, 3)
        assert abs(mc - exact) < 5 * se


def test_pairing_sum_for_width_two_trivial(lat):
    nin = lat.profile(lambda k: np.exp(-k @ k))
    assert gaussian_pairing_sum(lat, (LEAF, LEAF), (1, -1), ((0,), (0,)), 1.0, nin) == pytest.approx(nin[lat.K])
