import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavekin.density import (DriftDiffusionPath, RadialDensity, characteristic_flow, density_moments,
                             evolve_density, flow_moments, gamma2_moments, gamma2_s_density, gaussian_s_density,
                             gaussian_variance_path, initial_density, l1_distance, series_transform)
from wavekin.kinetic import moment_mu_q
from wavekin.lattice import UsageError


def const_path(sigma, gamma, T=1.0, n=9):
    t = np.linspace(0.0, T, n)
    return DriftDiffusionPath(t, np.full(n, sigma), np.full(n, gamma))


def closed_n(n0, sigma, gamma, t):
    """n' = sigma + gamma n with constant coefficients."""
    if gamma == 0:
        return n0 + sigma * t
    return math.exp(gamma * t) * n0 + sigma * math.expm1(gamma * t) / gamma


def closed_split(n_in, sigma, gamma, t):
    """n0 = n_in exp(gamma t) and n_plus = n - n0."""
    n0 = n_in * math.exp(gamma * t)
    return n0, closed_n(n_in, sigma, gamma, t) - n0


def exp_density(s):
    return np.exp(-s)


# --- initial data ----------------------------------------------------------------------------

def test_unit_rescale_is_identity():
    a = initial_density(gamma2_s_density, 1.0, cells=512, s_max=40.0)
    b = RadialDensity.from_s_density(gamma2_s_density, 40.0, 512)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.edges, b.edges)


@given(st.floats(0.05, 5.0))
def test_rescaled_normalization_and_second_moment(n):
    base = RadialDensity.from_s_density(gamma2_s_density, 40.0, 2048)
    base = RadialDensity(base.edges, base.P / base.mass())
    rho = initial_density(base, n)
    assert rho.mass() == pytest.approx(1.0, abs=1e-12)
    assert density_moments(rho, 1) == pytest.approx(n * density_moments(base, 1), rel=1e-12)


def test_callable_initial_density_second_moment():
    rho = initial_density(exp_density, 1.7, cells=4096)
    assert abs(rho.mass() - 1) < 1e-6
    assert density_moments(rho, 1) == pytest.approx(1.7, rel=1e-4)


def test_nonpositive_n_rejected():
    with pytest.raises(UsageError):
        initial_density(exp_density, 0.0)


def test_density_validation():
    with pytest.raises(UsageError):
        RadialDensity(np.array([0.1, 1.0]), np.array([1.0]))
    with pytest.raises(UsageError):
        RadialDensity(np.array([0.0, 1.0]), np.array([1.0, 2.0]))


# --- moments ---------------------------------------------------------------------------------

@pytest.mark.parametrize("n", [0.5, 1.0, 2.0])
def test_gaussian_moments_factorial(n):
    rho = RadialDensity.from_s_density(gaussian_s_density(n), 60 * n, 8192)
    assert density_moments(rho, 0) == pytest.approx(1.0, abs=1e-12)
    for r in range(1, 5):
        assert density_moments(rho, r) == pytest.approx(math.factorial(r) * n ** r, rel=1e-5)


def test_csv_header():
    rho = initial_density(exp_density, 1.0, cells=16)
    lines = rho.to_csv("t=0 k=0").splitlines()
    assert lines[0] == "# t=0 k=0" and lines[1] == "r,rho" and len(lines) == 18


# --- path ------------------------------------------------------------------------------------

def test_path_integrals_closed_form():
    p = const_path(0.3, -0.7)
    G, S = p.integrals([0.0, 0.5, 1.0])
    assert G == pytest.approx([0.0, -0.35, -0.7], abs=1e-12)
    want = [0.3 * (math.exp(0.7 * t) - 1) / 0.7 for t in (0.0, 0.5, 1.0)]
    assert S == pytest.approx(want, rel=1e-9, abs=1e-14)


def test_negative_sigma_rejected():
    p = const_path(-0.1, 0.0)
    assert p.negative_sigma() < 0
    with pytest.raises(UsageError):
        evolve_density(initial_density(exp_density, 1.0, cells=64), p, 0.1)


def test_path_must_cover_horizon():
    with pytest.raises(UsageError):
        evolve_density(initial_density(exp_density, 1.0, cells=64), const_path(0.1, 0.1), 0.1, t_end=2.0)


# --- evolution -------------------------------------------------------------------------------

def test_zero_coefficients_stationary():
    rho0 = initial_density(gamma2_s_density, 1.0, cells=512)
    tr = evolve_density(rho0, const_path(0.0, 0.0), 0.05)
    assert np.array_equal(tr.states[-1].P, rho0.P)


def test_gaussian_family_closed():
    sigma, gamma, n0 = 0.4, -0.5, 1.2
    p = const_path(sigma, gamma)
    tr = evolve_density(initial_density(exp_density, n0, cells=4096), p, 1 / 256)
    nt = closed_n(n0, sigma, gamma, 1.0)
    assert float(gaussian_variance_path(n0, p, [1.0])[0]) == pytest.approx(nt, rel=1e-10)
    assert l1_distance(tr.states[-1], gaussian_s_density(nt)) < 1e-3


def test_second_moment_law_by_finite_differences():
    sigma, gamma = 0.5, 0.8
    p = const_path(sigma, gamma)
    tr = evolve_density(initial_density(gamma2_s_density, 1.0, cells=4096), p, 1 / 512, save_every=1)
    m = np.array([density_moments(s, 1) for s in tr.states])
    t = tr.times
    dm = (m[2:] - m[:-2]) / (t[2:] - t[:-2])
    rhs = sigma + gamma * m[1:-1]
    assert np.max(np.abs(dm - rhs) / np.abs(rhs)) < 1e-4


@given(st.floats(0.0, 2.0), st.floats(-1.5, 1.5))
def test_mass_and_positivity(sigma, gamma):
    tr = evolve_density(initial_density(gamma2_s_density, 1.0, cells=512), const_path(sigma, gamma), 1 / 32)
    assert tr.mass_drift() < 1e-6
    assert tr.min_value() > -1e-8


@pytest.mark.parametrize("sigma,gamma", [(0.5, 0.8), (0.3, -0.6), (1.0, 0.0)])
def test_evolved_moments_match_kinetic_formula(sigma, gamma):
    n_in = 0.9
    tr = evolve_density(initial_density(gamma2_s_density, n_in, cells=4096), const_path(sigma, gamma), 1 / 256)
    n0, npl = closed_split(n_in, sigma, gamma, 1.0)
    mu = gamma2_moments(3)
    for r in range(4):
        want = moment_mu_q(n0, npl, mu, r)
        assert density_moments(tr.states[-1], r) == pytest.approx(want, rel=1e-3)


# --- characteristic flow ---------------------------------------------------------------------

def test_gaussian_characteristic_function():
    sigma, gamma, n_in = 0.4, 0.6, 1.1
    p = const_path(sigma, gamma)
    xi = np.linspace(-2, 2, 9)
    L = characteristic_flow(lambda z: 1.0 / (1.0 - 1j * z), n_in, p, [0.0, 0.5, 1.0], xi)
    for j, t in enumerate((0.0, 0.5, 1.0)):
        want = 1.0 / (1.0 - 1j * xi * closed_n(n_in, sigma, gamma, t))
        assert np.max(np.abs(L[j] - want)) < 1e-9


def test_flow_constant_without_coefficients():
    xi = np.linspace(-1, 1, 7)
    L = characteristic_flow(gamma2_moments(6), 1.3, const_path(0.0, 0.0), [0.0, 1.0], xi)
    assert np.max(np.abs(L[1] - L[0])) < 1e-14


@pytest.mark.parametrize("sigma,gamma", [(0.5, 0.8), (0.2, -0.4)])
def test_taylor_coefficients_match_mu_formula(sigma, gamma):
    n_in = 0.8
    mu = gamma2_moments(8)
    p = const_path(sigma, gamma)
    got = flow_moments(mu, n_in, p, 1.0, 4)
    n0, npl = closed_split(n_in, sigma, gamma, 1.0)
    for r in range(5):
        assert got[r] == pytest.approx(moment_mu_q(n0, npl, mu, r), rel=1e-6)


def test_series_transform_exponential_law():
    phi = series_transform([math.factorial(r) for r in range(30)])
    z = np.array([0.1, -0.2j, 0.15 + 0.1j])
    assert np.max(np.abs(phi(z) - 1.0 / (1.0 - 1j * z))) < 1e-12
