import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavekin.density import RadialDensity, density_moments, gamma2_moments, gamma2_s_density
from wavekin.ensemble import (InstabilityError, MomentSpec, RandomLaw, SpectralEnsemble, SpectralTorus,
                              batch_means, estimate_moments, evolve_nls, gauge_transform, moments_csv,
                              read_realization, realization_rng, sample_initial_data, write_realization,
                              z_norm_mass_diag)
from wavekin.lattice import UsageError, kinetic_parameters


def gauss_bump(width=0.5, amp=1.0):
    return lambda k: amp * np.exp(-np.sum(k ** 2, axis=-1) / (2 * width ** 2))


def gamma2_law():
    return RandomLaw("radial_tabulated", RadialDensity.from_s_density(gamma2_s_density, 40.0, 4096))


TORUS1 = SpectralTorus(1, 4.0, 4)
TORUS2 = SpectralTorus(2, 4.0, 3, (1.0, 1.3))


# --- laws ------------------------------------------------------------------------------------

def test_tabulated_law_normalized():
    law = gamma2_law()
    assert law.radial.mass() == pytest.approx(1.0, abs=1e-12)
    assert density_moments(law.radial, 1) == pytest.approx(1.0, abs=1e-10)
    mu = law.moments(4)
    assert mu[:2] == pytest.approx([1.0, 1.0], abs=1e-10)
    # cell averages of the analytic density: second-order discretization error in the cell width
    assert mu[2:] == pytest.approx(gamma2_moments(4)[2:], rel=1e-4)
    assert mu[3] == pytest.approx(density_moments(law.radial, 3), rel=1e-12)


@pytest.mark.parametrize("law", [RandomLaw("gaussian"), RandomLaw("uniform_phase"), gamma2_law()],
                         ids=["gaussian", "unit", "gamma2"])
def test_law_sample_moments(law):
    z = law.sample(np.random.default_rng(0), 200_000)
    mu = law.moments(2)
    for r in (1, 2):
        x = np.abs(z) ** (2 * r)
        assert abs(x.mean() - mu[r]) < 5 * x.std() / math.sqrt(len(x)) + 1e-12
    for m in (z, z * z):
        assert abs(m.mean()) < 5 * m.std() / math.sqrt(len(z))


def test_unknown_law():
    with pytest.raises(UsageError):
        RandomLaw("cauchy")
    with pytest.raises(UsageError):
        RandomLaw("radial_tabulated")


# --- sampling --------------------------------------------------------------------------------

def test_gaussian_second_moment_matches_profile():
    nin = gauss_bump(0.6)
    ens = sample_initial_data(nin, RandomLaw("gaussian"), TORUS1, 20_000, seed=1)
    x = np.abs(ens.coeffs) ** 2
    want = nin(TORUS1.modes())
    se = x.std(axis=0) / math.sqrt(ens.M)
    assert np.all(np.abs(x.mean(axis=0) - want) < 5 * se)
    u2 = ens.coeffs ** 2
    assert np.all(np.abs(u2.mean(axis=0)) < 5 * np.abs(u2).std(axis=0) / math.sqrt(ens.M))


def test_unit_phase_modulus_exact():
    nin = gauss_bump(0.6)
    ens = sample_initial_data(nin, RandomLaw("uniform_phase"), TORUS2, 50, seed=2)
    assert np.allclose(np.abs(ens.coeffs) ** 2, nin(TORUS2.modes())[None, :], rtol=1e-14, atol=0)


def test_realizations_depend_only_on_seed_and_index():
    nin = gauss_bump()
    full = sample_initial_data(nin, RandomLaw("gaussian"), TORUS2, 6, seed=9)
    tail = sample_initial_data(nin, RandomLaw("gaussian"), TORUS2, 3, seed=9, first=3)
    assert np.array_equal(full.coeffs[3:], tail.coeffs)
    a = realization_rng(9, 4).standard_normal(3)
    assert np.array_equal(a, realization_rng(9, 4).standard_normal(3))


def test_negative_profile_rejected():
    with pytest.raises(UsageError):
        sample_initial_data(lambda k: -np.ones(len(k)), RandomLaw("gaussian"), TORUS1, 2, seed=0)
    with pytest.raises(UsageError):
        sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS1, 0, seed=0)


# --- evolution -------------------------------------------------------------------------------

def test_linear_flow_preserves_moduli():
    ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS2, 8, seed=3)
    before = np.abs(ens.coeffs).copy()
    evolve_nls(ens, 2.0, 0.05, kinetic_parameters(4.0, 2), coupling=0.0)
    assert np.allclose(np.abs(ens.coeffs), before, rtol=1e-13, atol=0)


def test_single_mode_keeps_modulus():
    tor = SpectralTorus(2, 4.0, 3)
    c = np.zeros((1, tor.n_modes), dtype=complex)
    c[0, tor.index((1, -2))] = 3.0 + 1.0j
    ens = SpectralEnsemble(tor, c, 0.0, 0, RandomLaw())
    evolve_nls(ens, 1.0, 0.01, kinetic_parameters(4.0, 2))
    mod = np.abs(ens.coeffs[0])
    assert abs(mod[tor.index((1, -2))] - abs(3 + 1j)) < 1e-10
    mod[tor.index((1, -2))] = 0
    assert mod.max() < 1e-10


def test_single_mode_phase_matches_closed_form():
    # [DERIVED] |u|^2 is constant in x, so u_hat(k0, t) = c exp(i(2 pi |k0|^2 + lam^2 |c|^2 L^-2d) t)
    tor = SpectralTorus(1, 4.0, 3)
    sc = kinetic_parameters(4.0, 1)
    c = np.zeros((1, tor.n_modes), dtype=complex)
    k0 = 2
    c[0, tor.index((k0,))] = 2.0
    ens = SpectralEnsemble(tor, c, 0.0, 0, RandomLaw())
    evolve_nls(ens, 1.0, 0.01, sc)
    w = 2 * math.pi * (k0 / 4.0) ** 2 + sc.lam ** 2 * 4.0 / 4.0 ** 2
    assert abs(ens.coeffs[0, tor.index((k0,))] - 2.0 * np.exp(1j * w)) < 1e-12


def test_mass_conserved_over_1000_steps():
    ens = sample_initial_data(gauss_bump(0.8, 2.0), RandomLaw("gaussian"), TORUS2, 16, seed=4)
    info = evolve_nls(ens, 10.0, 0.01, kinetic_parameters(4.0, 2))
    assert info["steps"] == 1000
    assert info["max_mass_drift"] < 1e-8


def test_results_independent_of_worker_count():
    outs = []
    for workers in (1, 3):
        ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS2, 40, seed=5)
        evolve_nls(ens, 1.0, 0.02, kinetic_parameters(4.0, 2), workers=workers, batch=7)
        outs.append(ens.coeffs)
    assert np.array_equal(outs[0], outs[1])


def test_time_must_not_go_back():
    ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS1, 2, seed=0)
    evolve_nls(ens, 0.5, 0.1, kinetic_parameters(4.0, 1))
    with pytest.raises(UsageError):
        evolve_nls(ens, 0.2, 0.1, kinetic_parameters(4.0, 1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_instability_reported():
    c = np.zeros((2, TORUS1.n_modes), dtype=complex)
    c[1, 0] = 1e200                 # |u|^2 overflows on the first nonlinear substep
    ens = SpectralEnsemble(TORUS1, c, 0.0, 0, RandomLaw())
    with pytest.raises(InstabilityError):
        evolve_nls(ens, 0.5, 0.1, kinetic_parameters(4.0, 1))


def galerkin_rk4(c0, tor, lam2, t, steps):
    """Independent oracle: RK4 on the truncated cubic ODE written with explicit convolution sums."""
    num = tor.numerators()[:, 0]
    L = tor.L
    lin = 2j * math.pi * (num / L) ** 2
    idx = {int(k): i for i, k in enumerate(num)}
    triples = [(idx[a], idx[b], idx[c], idx[a - b + c]) for a in num for b in num for c in num
               if (a - b + c) in idx]
    t1, t2, t3, tk = (np.array(x) for x in zip(*triples))

    def rhs(c):
        out = lin * c
        np.add.at(out, tk, 1j * lam2 * L ** -2 * c[t1] * np.conj(c[t2]) * c[t3])
        return out
    c = c0.astype(complex).copy()
    h = t / steps
    for _ in range(steps):
        k1 = rhs(c)
        k2 = rhs(c + h / 2 * k1)
        k3 = rhs(c + h / 2 * k2)
        k4 = rhs(c + h * k3)
        c = c + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return c


def test_dealiased_split_step_second_order_against_galerkin_oracle():
    tor = SpectralTorus(1, 4.0, 4)
    sc = kinetic_parameters(4.0, 1)
    ens0 = sample_initial_data(gauss_bump(0.6, 4.0), RandomLaw("gaussian"), tor, 1, seed=6)
    ref = galerkin_rk4(ens0.coeffs[0], tor, sc.lam ** 2, 1.0, 4000)
    errs = []
    for dt in (0.1, 0.05, 0.025):
        ens = SpectralEnsemble(tor, ens0.coeffs.copy(), 0.0, 6, ens0.law)
        evolve_nls(ens, 1.0, dt, sc, dealias=True)
        errs.append(np.max(np.abs(ens.coeffs[0] - ref)))
    assert 3.0 < errs[0] / errs[1] < 5.0
    assert 3.0 < errs[1] / errs[2] < 5.0


def test_snapshots_recorded():
    ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS1, 3, seed=0)
    evolve_nls(ens, 1.0, 0.1, kinetic_parameters(4.0, 1), snapshot_every=5)
    assert [round(t, 12) for t, _ in ens.snapshots] == [0.5, 1.0]


def test_single_precision_close_to_double():
    outs = []
    for prec in ("double", "single"):
        ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS2, 4, seed=7)
        evolve_nls(ens, 1.0, 0.02, kinetic_parameters(4.0, 2), precision=prec)
        outs.append(ens.coeffs)
    assert np.max(np.abs(outs[0] - outs[1])) < 1e-4


# --- gauge -----------------------------------------------------------------------------------

@given(st.floats(0, 2), st.floats(0.01, 1))
def test_gauge_unit_modulus_and_round_trip(t, delta):
    sc = kinetic_parameters(4.0, 2)
    ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS2, 3, seed=8)
    a = gauge_transform(ens.coeffs, t, sc, ens.mass(), TORUS2.beta_sq(), delta, +1)
    assert np.allclose(np.abs(a), np.abs(ens.coeffs), rtol=1e-14, atol=0)
    back = gauge_transform(a, t, sc, ens.mass(), TORUS2.beta_sq(), delta, -1)
    assert np.max(np.abs(back - ens.coeffs)) < 1e-14 * max(1.0, np.abs(ens.coeffs).max())


def test_gauge_identity_at_zero():
    sc = kinetic_parameters(4.0, 2)
    ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS2, 2, seed=8)
    assert np.array_equal(gauge_transform(ens.coeffs, 0.0, sc, ens.mass(), TORUS2.beta_sq(), 0.3), ens.coeffs)


def test_gauge_removes_linear_flow():
    sc = kinetic_parameters(4.0, 2)
    delta = 0.01
    ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS2, 2, seed=8)
    start = ens.coeffs.copy()
    t = 1.0
    evolve_nls(ens, delta * sc.t_kin * t, 0.01, sc, coupling=0.0)
    a = gauge_transform(ens.coeffs, t, sc, np.zeros(2), TORUS2.beta_sq(), delta)
    assert np.max(np.abs(a - start)) < 1e-12


def test_gauge_bad_direction():
    with pytest.raises(UsageError):
        gauge_transform(np.ones((1, 3)), 0.0, kinetic_parameters(4.0, 1), [1.0], np.ones(3), 0.1, 0)


# --- moments ---------------------------------------------------------------------------------

def test_duplicate_modes_rejected():
    with pytest.raises(UsageError):
        MomentSpec((((1,), 1, 1), ((1,), 1, 0)))


@pytest.mark.parametrize("law,mu2", [(RandomLaw("gaussian"), 2.0), (RandomLaw("uniform_phase"), 1.0)])
def test_fourth_moment_at_t0(law, mu2):
    nin = gauss_bump(0.6)
    ens = sample_initial_data(nin, law, TORUS1, 20_000, seed=10)
    k = (1,)
    (est,) = estimate_moments(ens, [MomentSpec(((k, 2, 2),))])
    want = mu2 * float(nin(np.array([[0.25]]))[0]) ** 2
    if law.kind == "uniform_phase":
        assert est.value == pytest.approx(want, rel=1e-12)
    else:
        assert abs(est.value - want) < 5 * est.stderr


def test_unbalanced_moments_vanish_after_evolution():
    ens = sample_initial_data(gauss_bump(0.6, 2.0), RandomLaw("gaussian"), TORUS1, 4000, seed=11)
    evolve_nls(ens, 1.0, 0.05, kinetic_parameters(4.0, 1))
    specs = [MomentSpec((((0,), 2, 1),)), MomentSpec((((1,), 1, 0), ((0,), 0, 0)))]
    for e in estimate_moments(ens, specs):
        assert abs(e.value) < 5 * e.stderr


def test_common_phase_leaves_balanced_moments_unchanged():
    ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS1, 500, seed=12)
    rot = SpectralEnsemble(TORUS1, ens.coeffs * np.exp(0.7j), 0.0, 12, ens.law)
    spec = [MomentSpec((((0,), 1, 1), ((1,), 2, 2)))]
    a, b = estimate_moments(ens, spec)[0], estimate_moments(rot, spec)[0]
    assert abs(a.value - b.value) < 1e-12 * abs(a.value)


def test_moments_deterministic_across_workers():
    vals = []
    for w in (1, 2):
        ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS2, 60, seed=13)
        evolve_nls(ens, 0.5, 0.05, kinetic_parameters(4.0, 2), workers=w, batch=16)
        vals.append(estimate_moments(ens, [MomentSpec((((0, 0), 1, 1),))])[0].value)
    assert vals[0] == vals[1]


def test_batch_means_oracle():
    x = np.arange(40, dtype=float)
    m, se = batch_means(x, 4)
    bm = np.array([x[i * 10:(i + 1) * 10].mean() for i in range(4)])
    assert m == 19.5
    assert se == pytest.approx(bm.std(ddof=1) / 2.0, rel=1e-14)


def test_moments_csv_header():
    ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS1, 10, seed=0)
    spec = [MomentSpec((((0,), 1, 1),))]
    text = moments_csv(spec, estimate_moments(ens, spec))
    assert text.splitlines()[0] == "k,p,q,re,im,stderr,n_realizations"


# --- Z norm and persistence ------------------------------------------------------------------

def test_z_norm_single_mode():
    tor = SpectralTorus(1, 2.0, 2)
    c = np.zeros((1, tor.n_modes), dtype=complex)
    c[0, tor.index((0,))] = 1.0
    z, m = z_norm_mass_diag(SpectralEnsemble(tor, c, 0.0, 0, RandomLaw()))
    assert z[0] ** 2 == pytest.approx(0.5, rel=1e-15)
    assert m[0] == pytest.approx(0.5, rel=1e-15)


def test_z_norm_zero_and_homogeneity():
    ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS2, 3, seed=0)
    z0, _ = z_norm_mass_diag(SpectralEnsemble(TORUS2, np.zeros_like(ens.coeffs), 0.0, 0, ens.law))
    assert np.all(z0 == 0)
    z1, _ = z_norm_mass_diag(ens)
    z2, _ = z_norm_mass_diag(SpectralEnsemble(TORUS2, 2 * ens.coeffs, 0.0, 0, ens.law))
    assert np.allclose(z2 ** 2, 4 * z1 ** 2, rtol=1e-14)


def test_realization_round_trip(tmp_path):
    ens = sample_initial_data(gauss_bump(), RandomLaw("gaussian"), TORUS2, 1, seed=3)
    p = tmp_path / "r.bin"
    write_realization(p, TORUS2, 3, 0, 0.25, ens.coeffs[0], tag="h1")
    meta, data = read_realization(p)
    assert meta == {"d": 2, "L": 4.0, "K": 3, "seed": 3, "r": 0, "t": 0.25, "config": "h1"}
    assert np.array_equal(data, ens.coeffs[0])
