"""Named verification checks, one per acceptance criterion.

Every check returns a CheckResult with its sub-measurements, so the CLI,
the pipelines and the test suite report the same numbers.  Default
parameters are the ones used for acceptance; smaller settings are accepted
for smoke runs.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from . import cumulants as cu
from . import diagrams as dg
from . import molecules as mo
from .density import (DriftDiffusionPath, density_moments, evolve_density, flow_moments,
                      gamma2_moments, gamma2_s_density, gaussian_s_density, gaussian_variance_path,
                      initial_density, l1_distance)
from .ensemble import RandomLaw, SpectralTorus, evolve_nls, sample_initial_data
from .expressions import TinyLattice, gaussian_pairing_sum, over_pairing_sum, product_expectation_mc
from .hierarchy import Mixture, check_admissible, evolve_mixture, wke_residual, wkh_residual
from .kinetic import (ExactDeltaRule, KineticGrid, ResonantQuadrature, collision_exact_delta,
                      collision_field, moment_mu_q, sigma_gamma_field, solve_wke, solve_wke0)
from .lattice import BetaVector, UsageError, kinetic_parameters
from .profiles import Profile


@dataclass
class CheckResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} ({self.elapsed:.1f}s)"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "elapsed": round(self.elapsed, 3),
                "metrics": _plain(self.metrics)}


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    return x


def _timed(name: str, fn: Callable[[], tuple[bool, dict]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, metrics = fn()
    return CheckResult(name, bool(ok), metrics, time.perf_counter() - t0)


# --- 1. equilibria ---------------------------------------------------------------------------

def boundary_fraction(grid: KineticGrid, beta, eps: float, i: int) -> float:
    """Share of mollifier weight, over grid pairs (k1, k3), whose k2 leaves the grid."""
    idx = grid.indices()
    ki = idx[i]
    p = idx - ki
    b = np.asarray(beta, dtype=float)
    half = eps / (2 * grid.h ** 2)
    tot = out = 0.0
    for j1 in range(grid.size):
        ip = np.abs(p @ (b * p[j1]))
        w = np.maximum(0.0, 1.0 - ip / half)
        k2 = idx[j1] + p
        inside = np.all((k2 >= 0) & (k2 < grid.n), axis=1)
        tot += w.sum()
        out += w[~inside].sum()
    return out / tot if tot else 0.0


def check_equilibria(n_const: int = 17, levels=(9, 13, 17), k_max_rj: float = 3.0, mu: float = 1.0,
                     n_points: int = 5, seed: int = 0) -> CheckResult:
    """Constants are exact zeros of K; Rayleigh-Jeans residual shrinks under refinement.

    The Rayleigh-Jeans residual is the largest |K(n)| / max|n1 n2 n3 term| over
    the physical points shared by all levels inside |k|_inf <= k_max/2, with
    epsilon proportional to h.
    """
    def run():
        beta = (1.0, 1.2, 0.9)
        c = 1.5
        g = KineticGrid(3, 2.0, n_const)
        eps = 2.0 * g.h * 2 * max(beta) * 0.5
        rng = np.random.default_rng(seed)
        inner = g.interior(g.n // 4)
        pts = rng.choice(inner, size=n_points, replace=False)
        const = np.full(g.size, c)
        kc = collision_field(g, const, const, const, beta, ResonantQuadrature(epsilon=eps), where=pts)
        fracs = [boundary_fraction(g, beta, eps, int(i)) for i in pts[:2]]
        bound = 1e-3 * c ** 3 * min(fracs)
        const_ok = float(np.max(np.abs(kc))) < bound

        resid = []
        axis = None
        for n in levels:
            h = 2 * k_max_rj / (n - 1)
            vals = {round(-k_max_rj + j * h, 9) for j in range(n) if abs(-k_max_rj + j * h) <= k_max_rj / 2 + 1e-9}
            axis = vals if axis is None else axis & vals
        ax = np.array(sorted(axis))
        shared = np.stack([a.ravel() for a in np.meshgrid(ax, ax, ax, indexing="ij")], axis=1)
        for n in levels:
            gr = KineticGrid(3, k_max_rj, n)
            P = gr.points()
            rj = 1.0 / (np.sum(np.asarray(beta) * P ** 2, axis=1) + mu)
            where = gr.flat(gr.index_of(shared))
            q = ResonantQuadrature(epsilon=2.0 * gr.h)
            K = collision_field(gr, rj, rj, rj, beta, q, where=where)
            s, _ = sigma_gamma_field(gr, rj, beta, q, where=where)
            resid.append(float(np.max(np.abs(K)) / np.max(np.abs(s))))
        mono = all(b < a for a, b in zip(resid, resid[1:]))
        return const_ok and mono, {"max_abs_K_const": float(np.max(np.abs(kc))), "bound": bound,
                                   "boundary_fraction": fracs, "rj_residuals": resid,
                                   "rj_levels": list(levels), "monotone": mono}
    return _timed("equilibria", run)


# --- 2. conservation -------------------------------------------------------------------------

def check_conservation(n: int = 25, k_max: float = 3.0, eps: float = 0.04, delta: float = 0.1,
                       steps: int = 8) -> CheckResult:
    """Mass is exact for the symmetric weights; the energy flux is bounded by eps
    times the mass flux, so its relative size falls like eps^2 on smooth data."""
    def run():
        beta = (1.0, 1.3)
        g = KineticGrid(2, k_max, n)
        P = g.points()
        n_in = 1.5 * np.exp(-np.sum((P - [0.3, -0.2]) ** 2, axis=1) / 1.2)
        q = ResonantQuadrature(epsilon=eps)
        K = collision_field(g, n_in, n_in, n_in, beta, q)
        mass_ratio = abs(g.integrate(K)) / g.integrate(np.abs(K))
        w = np.sum(np.asarray(beta) * P ** 2, axis=1)
        energy_ratio = abs(g.integrate(w * K)) / g.integrate(w * np.abs(K))
        tr = solve_wke(g, n_in, delta, beta, q, dt=delta / steps)
        m = tr.mass()
        drift = float(np.max(np.abs(m - m[0])) / m[0])
        ok = mass_ratio < 1e-10 and energy_ratio < 1e-3 and drift < 1e-3
        return ok, {"mass_ratio": mass_ratio, "energy_ratio": energy_ratio, "wke_mass_drift": drift}
    return _timed("conservation", run)


# --- 3. structure identities -----------------------------------------------------------------

def vandermonde_gap(n0: float, n_plus: float, q: int) -> float:
    """|q! n^q - sum_p C(q,p)^2 (q-p)! p! n0^p n_plus^(q-p)| relative to q! n^q."""
    lhs = math.factorial(q) * (n0 + n_plus) ** q
    rhs = sum(math.comb(q, p) ** 2 * math.factorial(q - p) * math.factorial(p) * n0 ** p * n_plus ** (q - p)
              for p in range(q + 1))
    return abs(lhs - rhs) / max(abs(lhs), 1e-300)


def check_structure(n: int = 17, k_max: float = 3.0, delta: float = 0.1, steps: int = 16) -> CheckResult:
    def run():
        beta = (1.0, 1.3)
        g = KineticGrid(2, k_max, n)
        P = g.points()
        n_in = np.exp(-np.sum(P ** 2, axis=1) / 1.5)
        q = ResonantQuadrature(epsilon=0.5)
        K = collision_field(g, n_in, n_in, n_in, beta, q)
        s, gm = sigma_gamma_field(g, n_in, beta, q)
        ident = float(np.max(np.abs(K - (s + n_in * gm))) / np.max(np.abs(K)))
        tr = solve_wke(g, n_in, delta, beta, q, dt=delta / steps)
        w0 = solve_wke0(tr)
        dev = w0.max_rel_deviation()
        rng = np.random.default_rng(1)
        gaps = []
        for _ in range(20):
            a, b = rng.uniform(0.05, 3.0, 2)
            gaps += [vandermonde_gap(a, b, qq) for qq in range(7)]
            gaps += [abs(moment_mu_q(a, b, [math.factorial(p) for p in range(qq + 1)], qq)
                         - math.factorial(qq) * (a + b) ** qq) / (math.factorial(qq) * (a + b) ** qq)
                     for qq in range(7)]
        vg = max(gaps)
        ok = ident < 1e-12 and dev < 1e-6 and vg < 1e-10
        return ok, {"sigma_gamma_identity": ident, "n0_ode_vs_exp": dev, "vandermonde_max_rel": vg}
    return _timed("structure", run)


# --- 4. density / moment consistency ---------------------------------------------------------

def check_density(n: int = 15, k_max: float = 3.0, delta: float = 0.2, steps: int = 16,
                  cells: int = 4096, dt_density: Optional[float] = None, n_samples: int = 5,
                  seed: int = 3) -> CheckResult:
    """Three routes to E|v|^(2r) along sigma/gamma paths taken from a kinetic run."""
    def run():
        beta = (1.0, 1.3)
        g = KineticGrid(2, k_max, n)
        P = g.points()
        n_in = 1.2 * np.exp(-np.sum(P ** 2, axis=1) / 2.0)
        q = ResonantQuadrature(epsilon=0.6)
        tr = solve_wke(g, n_in, delta, beta, q, dt=delta / steps)
        w0 = solve_wke0(tr)
        rng = np.random.default_rng(seed)
        inner = g.interior(2)
        ks = rng.choice(inner, size=n_samples, replace=False)
        ts = rng.uniform(0.3 * delta, delta, size=n_samples)
        mu = gamma2_moments(12)
        worst, l1s, rows = 0.0, [], []
        for i, t in zip(ks, ts):
            path = DriftDiffusionPath(w0.times, w0.sigma[:, i], w0.gamma[:, i])
            nk = float(n_in[i])
            G, S = path.integrals([t])
            n0, npl = nk * math.exp(G[0]), math.exp(G[0]) * S[0]
            dtd = dt_density or t / 256
            rho = evolve_density(initial_density(gamma2_s_density, nk, cells=cells), path, dtd, t_end=t).states[-1]
            fm = flow_moments(mu, nk, path, t, 3)
            for r in range(4):
                a = density_moments(rho, r)
                b = moment_mu_q(n0, npl, mu, r)
                c = float(np.real(fm[r]))
                rel = max(abs(a - b), abs(a - c), abs(b - c)) / abs(b)
                worst = max(worst, rel)
            rg = evolve_density(initial_density(lambda s: np.exp(-s), nk, cells=cells), path, dtd, t_end=t)
            nt = float(gaussian_variance_path(nk, path, [t])[0])
            l1s.append(l1_distance(rg.states[-1], gaussian_s_density(nt)))
            rows.append({"k_index": int(i), "t": float(t), "n0": n0, "n_plus": npl})
        ok = worst < 1e-3 and max(l1s) < 1e-3
        return ok, {"moment_worst_rel": worst, "gaussian_l1": l1s, "samples": rows}
    return _timed("density", run)


# --- 5. hierarchy ----------------------------------------------------------------------------

def check_hierarchy(n: int = 15, k_max: float = 3.0, delta: float = 0.2, levels=(8, 16, 32),
                    n_tuples: int = 20, seed: int = 0) -> CheckResult:
    def run():
        g = KineticGrid(2, k_max, n)
        P = g.points()
        beta = (1.0, 1.3)
        q = ResonantQuadrature(epsilon=0.6)
        m1 = 2 * np.exp(-np.sum((P - [0.3, 0.0]) ** 2, axis=1) / 1.0)
        m2 = np.exp(-np.sum((P + [0.2, 0.4]) ** 2, axis=1) / 2.0)
        m2 *= m1.sum() / m2.sum()
        mix = Mixture(g, [0.4, 0.6], [m1, m2])
        rng = np.random.default_rng(seed)
        tup = rng.integers(0, g.size, (n_tuples, 2))
        resid, adm, drift = [], [], []
        for steps in levels:
            tr = evolve_mixture(mix, delta, beta, q, dt=delta / steps)
            resid.append(float(wkh_residual(tr, 2, tup, beta, q).max_resid.max()))
            d = tr.mass_drift()
            drift.append(d)
            last = tr.at(len(tr.times) - 1)
            X = float(last.atom_masses.mean())
            rep = check_admissible([last.tensor(r) for r in (1, 2, 3)], X, g, seed=seed)
            adm.append(rep.worst)
        decreasing = all(b < a for a, b in zip(resid, resid[1:]))
        adm_ok = all(a <= 2 * d + 1e-12 for a, d in zip(adm, drift))
        single = evolve_mixture(Mixture(g, [1.0], [m1]), delta, beta, q, dt=delta / levels[0])
        pts = np.arange(0, g.size, 5)
        a = wkh_residual(single, 1, pts[:, None], beta, q).max_resid
        c = wke_residual(single.trajectories[0], pts).max(axis=1)
        r1 = float(np.max(np.abs(a - c)))
        ok = decreasing and adm_ok and r1 < 1e-12
        return ok, {"wkh_residuals": resid, "levels": list(levels), "admissibility": adm,
                    "atom_mass_drift": drift, "r1_vs_wke": r1}
    return _timed("hierarchy", run)


# --- 6. diagrams -----------------------------------------------------------------------------

def check_diagrams(n_confluence: int = 1000, n_roundtrip: int = 500, seed: int = 0) -> CheckResult:
    def run():
        counts = [len(dg.enumerate_trees(n)) for n in range(7)]
        counts_ok = counts == [1, 1, 3, 12, 55, 273, 1428]
        lemma_bad = 0
        for n in range(6):
            for sh in dg.enumerate_trees(n):
                if not dg.second_max_product(sh)[2]:
                    lemma_bad += 1
        rng = np.random.default_rng(seed)
        conf_bad = 0
        for i in range(n_confluence):
            g = dg.random_structured_garden(rng, int(rng.choice([2, 4, 6])), base_scale=2,
                                            insertions=int(rng.integers(0, 5)))
            a, _ = dg.skeleton(g, np.random.default_rng([seed, i, 0]))
            b, _ = dg.skeleton(g, np.random.default_rng([seed, i, 1]))
            conf_bad += a != b or not dg.is_prime(a)
        rt_bad = 0
        for _ in range(n_roundtrip):
            g = dg.random_structured_garden(rng, int(rng.choice([2, 4])), base_scale=2,
                                            insertions=int(rng.integers(0, 4)))
            sk, trees, couples = dg.decompose(g)
            back = dg.expand_skeleton(sk, trees, couples)
            rt_bad += back != g or dg.skeleton(back)[0] != sk
        ok = counts_ok and lemma_bad == 0 and conf_bad == 0 and rt_bad == 0
        return ok, {"tree_counts": counts, "lemma_violations": lemma_bad,
                    "confluence_failures": conf_bad, "roundtrip_failures": rt_bad}
    return _timed("diagrams", run)


# --- 7. molecules ----------------------------------------------------------------------------

def check_molecules(n_random: int = 500, n_counting: int = 50, seed: int = 3) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        vm_bad = rec_bad = built = 0
        multi_bad = 0
        while built < n_random:
            w = int(rng.choice([2, 4, 6]))
            g = dg.random_structured_garden(rng, w, base_scale=1, insertions=int(rng.integers(0, 3)))
            if g.scale > 5:
                continue
            built += 1
            st = mo.chi_stats(g)
            vm_bad += not st.ok
            if st.multi_couple and st.chi != st.m:
                multi_bad += 1
            gm = mo.garden_to_molecule(g)
            if g not in mo.reconstruct_gardens(gm.molecule, g.R, signature=g.signs):
                rec_bad += 1
        exh = exh_bad = 0
        for scales in itertools.product(range(5), repeat=4):
            if sum(scales) > 4:
                continue
            for sig in ((1, 1, -1, -1), (1, -1, 1, -1), (1, -1, -1, 1)):
                for g in dg.enumerate_gardens(scales, sig):
                    st = mo.chi_stats(g)
                    exh += 1
                    exh_bad += not st.ok
        crng = np.random.default_rng(seed + 1)
        done = cnt_bad = positive = tries = 0
        while done < n_counting and tries < 5000:
            tries += 1
            w = int(crng.choice([2, 4]))
            try:
                g = dg.random_garden(crng, w, scales=[int(crng.integers(1, 3)) for _ in range(w)])
            except UsageError:
                continue
            if any(dg.is_leaf(x) for x in g.trees):
                continue
            prob = mo.random_counting_instance(g, crng)
            mp = mo.molecule_problem_from_garden(prob)
            try:
                b = mo.brute_count_decorations(mp, max_assignments=2_000_000)
            except UsageError:
                continue
            a = mo.garden_decoration_count(prob)
            done += 1
            positive += a > 0
            cnt_bad += a != b
        ok = (vm_bad == 0 and multi_bad == 0 and rec_bad == 0 and exh_bad == 0 and cnt_bad == 0
              and done >= n_counting)
        return ok, {"random_gardens": built, "chi_or_vertex_failures": vm_bad, "multi_chi_failures": multi_bad,
                    "reconstruction_failures": rec_bad, "exhaustive_gardens": exh,
                    "exhaustive_failures": exh_bad, "counting_instances": done,
                    "counting_positive": positive, "counting_failures": cnt_bad}
    return _timed("molecules", run)


# --- 8. cumulants ----------------------------------------------------------------------------

def check_cumulants(n_max: int = 12, n_random: int = 1000, seed: int = 5) -> CheckResult:
    def run():
        gauss = cu.gaussian_moments(n_max // 2)
        pair_ok = gauss_ok = xi_ok = True
        for n in range(2, n_max + 1, 2):
            lam = cu.lambda_coefficients(n, gauss)
            pairs = (2,) * (n // 2)
            pair_ok &= cu.lambda_coefficients(n, cu.unit_modulus_moments(n // 2))[pairs] == 1 and lam[pairs] == 1
            gauss_ok &= all(v == 0 for O, v in lam.items() if O != pairs)
            for O in cu.even_partitions(n):
                want = math.prod(math.factorial(b // 2) for b in O)
                xi_ok &= cu.xi_coefficient(O, pairs) == want
        rng = np.random.default_rng(seed)
        laws = {"gaussian": gauss, "unit": cu.unit_modulus_moments(4),
                "gamma2": [Fraction(math.factorial(b + 1), 2 ** b) for b in range(1, 5)]}
        iss_bad = 0
        for i in range(n_random):
            half = int(rng.integers(1, 5))
            signs = [1] * half + [-1] * half
            rng.shuffle(signs)
            labels = [int(x) for x in rng.integers(0, 3, 2 * half)]
            name = list(laws)[i % len(laws)]
            lhs, rhs = cu.moment_bruteforce(labels, signs, laws[name])
            iss_bad += lhs != rhs
        ok = pair_ok and gauss_ok and xi_ok and iss_bad == 0
        return ok, {"pairing_lambda_is_one": pair_ok, "gaussian_lambda_vanish": gauss_ok,
                    "xi_pairing_formula": xi_ok, "isserlis_failures": iss_bad, "isserlis_cases": n_random}
    return _timed("cumulants", run)


# --- 9. micro vs diagrams --------------------------------------------------------------------

MICRO_DIAGRAM_CASES = (
    # (trees, signs, boundary numerators)
    ((((), (), ()), ()), (1, -1), ((1,), (1,))),
    ((((), (), ()), ((), (), ())), (1, -1), ((0,), (0,))),
    (((((), (), ()), (), ()), ()), (1, -1), ((1,), (1,))),
    ((((), (), ()), (), (), ()), (1, -1, 1, -1), ((0,), (0,), (1,), (1,))),
    ((((), (), ()), (), (), ()), (1, 1, -1, -1), ((0,), (1,), (0,), (1,))),
    ((((), (), ()), ((), (), ()), (), ()), (1, -1, 1, -1), ((1,), (1,), (0,), (0,))),
    (((((), (), ()), (), ()), (), (), ()), (1, 1, -1, -1), ((0,), (1,), (0,), (1,))),
    (((), ((), ((), (), ()), ()), (), ()), (-1, 1, 1, -1), ((1,), (1,), (0,), (0,))),
    (((((), (), ()), (), ()), ((), (), ())), (1, -1), ((0,), (0,))),
)


def check_micro_diagram(n_real: int = 100_000, t: float = 1.0, seed: int = 7, cases=MICRO_DIAGRAM_CASES
                        ) -> CheckResult:
    """Monte-Carlo products of tree iterates against exact garden sums on a 5-mode lattice."""
    def run():
        lat = TinyLattice()
        nin = lat.profile(lambda k: np.exp(-k @ k))
        gauss = RandomLaw("gaussian")
        unit = RandomLaw("uniform_phase")
        rows, worst = [], 0.0
        for c, (trees, signs, ks) in enumerate(cases):
            ex_g = gaussian_pairing_sum(lat, trees, signs, ks, t, nin)
            mc_g, se_g = product_expectation_mc(lat, trees, signs, ks, t, nin,
                                                lambda r, m: gauss.sample(r, (m, lat.size)), n_real, seed + 2 * c)
            ex_u = over_pairing_sum(lat, trees, signs, ks, t, nin, cu.unit_modulus_moments(8))
            mc_u, se_u = product_expectation_mc(lat, trees, signs, ks, t, nin,
                                                lambda r, m: unit.sample(r, (m, lat.size)), n_real, seed + 2 * c + 1)
            zg = abs(ex_g - mc_g) / se_g if se_g > 0 else (0.0 if abs(ex_g - mc_g) < 1e-12 else math.inf)
            zu = abs(ex_u - mc_u) / se_u if se_u > 0 else (0.0 if abs(ex_u - mc_u) < 1e-12 else math.inf)
            worst = max(worst, zg, zu)
            rows.append({"case": c, "gaussian_exact": [ex_g.real, ex_g.imag], "gaussian_z": zg,
                         "unit_exact": [ex_u.real, ex_u.imag], "unit_z": zu})
        return worst < 5.0, {"worst_z": worst, "cases": rows, "realizations": n_real}
    return _timed("micro-diagram", run)


# --- 10. kinetic trend -----------------------------------------------------------------------

def reflection_average(field_: np.ndarray, side: int, d: int) -> np.ndarray:
    """Average over the 2^d coordinate reflections of a centered mode box."""
    f = field_.reshape((side,) * d)
    acc = np.zeros_like(f)
    for flips in itertools.product((0, 1), repeat=d):
        axes = tuple(m for m in range(d) if flips[m])
        acc += np.flip(f, axis=axes) if axes else f
    return (acc / 2 ** d).ravel()


@dataclass
class TrendCase:
    L: int
    K: int
    t_end: float = 4.0
    dt: float = 1.0 / 24


def kinetic_trend_case(case: TrendCase, M: int, profile: Profile, beta, seed: int,
                       rule: ExactDeltaRule, n_threshold: float, max_modes: int, batch: int = 250
                       ) -> dict:
    """Sign agreement between the ensemble's early growth rate and K(n_in) at lattice modes."""
    torus = SpectralTorus(3, float(case.L), case.K, tuple(beta))
    sc = kinetic_parameters(case.L, 3, 1.0)
    acc = np.zeros(torus.n_modes)
    acc2 = np.zeros(torus.n_modes)
    done = 0
    t0 = time.perf_counter()
    while done < M:
        m = min(batch, M - done)
        ens = sample_initial_data(profile, RandomLaw("gaussian"), torus, m, seed, first=done)
        before = np.abs(ens.coeffs) ** 2
        evolve_nls(ens, case.t_end, case.dt, sc, batch=50, precision="single")
        x = (np.abs(ens.coeffs) ** 2 - before) / case.t_end
        acc += x.sum(axis=0)
        acc2 += (x * x).sum(axis=0)
        done += m
    t_ens = time.perf_counter() - t0
    mean = acc / M
    se = np.sqrt(np.maximum(acc2 / M - mean ** 2, 0.0) / M)
    est = reflection_average(mean, torus.side, 3)
    num = torus.numerators()
    amp = float(profile.params.get("amplitude", 1.0))
    modes = torus.modes()
    cand = np.nonzero(np.all(num >= 0, axis=1) & (profile(modes) >= n_threshold * amp))[0]
    if len(cand) > max_modes:
        cand = np.sort(np.random.default_rng([seed, case.L]).choice(cand, max_modes, replace=False))
    t0 = time.perf_counter()
    fine = rule.refined()
    ref = np.array([collision_exact_delta(profile, modes[i], beta, fine) for i in cand])
    err = np.abs(ref - np.array([collision_exact_delta(profile, modes[i], beta, rule) for i in cand]))
    t_ref = time.perf_counter() - t0
    valid = np.abs(ref) > 3 * err
    agree = np.sign(est[cand]) == np.sign(ref)
    frac = float(agree[valid].mean()) if valid.any() else 0.0
    rate = 2.0 / case.L ** 2 * ref          # predicted d/dt E|u|^2 in microscopic time
    sel = valid & (np.abs(rate) > 0)
    ratio = float(np.median(est[cand][sel] / rate[sel])) if sel.any() else float("nan")
    return {"L": case.L, "K": case.K, "t_end": case.t_end, "dt": case.dt, "realizations": M,
            "modes": int(len(cand)), "valid_modes": int(valid.sum()), "agreement": frac,
            "median_rate_ratio": ratio, "mean_stderr": float(np.mean(se[cand])),
            "ensemble_seconds": t_ens, "reference_seconds": t_ref}


def check_kinetic_trend(M: int = 10_000, cases=(TrendCase(8, 10), TrendCase(12, 13)), width: float = 0.4,
                        amplitude: float = 2.0, beta_seed: int = 1, seed: int = 11,
                        rule: ExactDeltaRule = ExactDeltaRule(2.8, 12, 12, 12, 16),
                        n_threshold: float = 0.05, max_modes: int = 300, threshold: float = 0.8) -> CheckResult:
    def run():
        beta = BetaVector.generic(3, beta_seed).array()
        prof = Profile("gaussian", {"amplitude": amplitude, "width": width})
        res = [kinetic_trend_case(c, M, prof, beta, seed, rule, n_threshold, max_modes) for c in cases]
        ok = all(r["agreement"] >= threshold for r in res)
        return ok, {"beta": list(beta), "cases": res, "threshold": threshold}
    return _timed("kinetic-trend", run)


CHECKS: dict[str, Callable[..., CheckResult]] = {
    "equilibria": check_equilibria,
    "conservation": check_conservation,
    "structure": check_structure,
    "density": check_density,
    "hierarchy": check_hierarchy,
    "diagrams": check_diagrams,
    "molecules": check_molecules,
    "cumulants": check_cumulants,
    "micro-diagram": check_micro_diagram,
    "kinetic-trend": check_kinetic_trend,
}

# Reduced settings for smoke runs (`verify --quick`); the pass thresholds are unchanged.
QUICK: dict[str, dict] = {
    "equilibria": {"n_const": 9, "levels": (9, 13)},
    "conservation": {"n": 13, "eps": 0.3, "steps": 4},
    "structure": {"n": 11, "steps": 8},
    "density": {"n": 11, "cells": 1024, "n_samples": 2},
    "hierarchy": {"n": 11, "levels": (8, 16), "n_tuples": 8},
    "diagrams": {"n_confluence": 100, "n_roundtrip": 50},
    "molecules": {"n_random": 50, "n_counting": 5},
    "cumulants": {"n_max": 8, "n_random": 100},
    "micro-diagram": {"n_real": 20_000},
    "kinetic-trend": {"M": 1000, "cases": (TrendCase(8, 10),), "max_modes": 60},
}
