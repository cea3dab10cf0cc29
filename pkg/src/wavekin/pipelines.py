"""Named experiment pipelines, result manifests and plot-data export.

Every pipeline writes its outputs under the configured directory; each file
carries the config hash in its first line (``# config_hash=...`` for text,
``config=...`` in binary headers).  ``run`` finishes by writing
``manifest.json``.
"""
from __future__ import annotations

import math
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import yaml

from . import checks as ck
from . import cumulants as cu
from . import diagrams as dg
from .config import ExperimentConfig
from .density import (DriftDiffusionPath, RadialDensity, density_moments, evolve_density, gamma2_moments,
                      gamma2_s_density, initial_density)
from .ensemble import (MomentSpec, RandomLaw, SpectralTorus, _product, batch_means, default_dt, evolve_nls,
                       sample_initial_data, write_realization)
from .hierarchy import Mixture, check_admissible, evolve_mixture, wkh_residual
from .kinetic import (BlowUpError, KineticGrid, ResonantQuadrature, moment_mu_q, read_snapshot, solve_wke,
                      solve_wke0, write_snapshot)
from .lattice import UsageError
from .manifest import OutputFile, ResultManifest, code_version, file_sha256, relpath, strip_timing
from .profiles import Profile

MASS_TOL = {"double": 1e-8, "single": 1e-4}
Z_TOL = 5.0


class _Run:
    """Collects outputs, checks and metrics of one pipeline invocation."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.tag = cfg.hash()
        self.files: list[OutputFile] = []
        self.checks: dict[str, bool] = {}
        self.metrics: dict = {}
        self.seeds = {"master": cfg.seed, "streams": "SeedSequence([master, index])"}

    def path(self, rel: str) -> Path:
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def register(self, rel: str, kind: str, **meta) -> None:
        p = self.out / rel
        self.files.append(OutputFile(relpath(p, self.out), kind, file_sha256(p), meta))

    def text(self, rel: str, body: str, kind: str, **meta) -> None:
        with open(self.path(rel), "w") as fh:
            fh.write(f"# config_hash={self.tag}\n")
            fh.write(body)
        self.register(rel, kind, **meta)

    def check(self, name: str, ok: bool) -> None:
        self.checks[name] = bool(ok)


# --- shared setup ----------------------------------------------------------------------------

def _kinetic_setup(cfg: ExperimentConfig):
    k = cfg.sections["kinetic"]
    grid = KineticGrid(int(k["d"]), float(k["k_max"]), int(k["n"]))
    quad = ResonantQuadrature(k["quadrature"], k["epsilon"], float(k["c_eps"]), int(k["n_samples"]), cfg.seed)
    return grid, cfg.kinetic_beta(), quad, cfg.kinetic_time(k["delta"])


def _law(cfg: ExperimentConfig) -> RandomLaw:
    s = cfg.sections["law"]
    if s["kind"] != "radial_tabulated":
        return RandomLaw(s["kind"])
    return RandomLaw("radial_tabulated", RadialDensity.from_s_density(_s_density(s["radial"]), 40.0, int(s["cells"])))


def _s_density(family: str) -> Callable:
    return gamma2_s_density if family == "gamma2" else (lambda s: np.exp(-s))


def _law_moments(cfg: ExperimentConfig, rmax: int) -> list[float]:
    """mu_0..mu_rmax from the analytic family (not from the tabulated cells)."""
    s = cfg.sections["law"]
    if s["kind"] == "uniform_phase":
        return [1.0] * (rmax + 1)
    if s["kind"] == "radial_tabulated" and s["radial"] == "gamma2":
        return gamma2_moments(rmax)
    return [float(math.factorial(r)) for r in range(rmax + 1)]


def _grid_index(grid: KineticGrid, k) -> int:
    return int(grid.flat(grid.index_of(k))[0])


def _write_kinetic(run: _Run, grid, beta, times, fields, steps: Sequence[int], prefix: str = "wke") -> None:
    for j in steps:
        rel = f"{prefix}/n_{j:05d}.bin"
        write_snapshot(run.path(rel), grid, beta, float(times[j]), fields[j], tag=run.tag)
        run.register(rel, "kinetic-snapshot", t=float(times[j]), step=int(j))


# --- wke -------------------------------------------------------------------------------------

def pipeline_wke(run: _Run) -> None:
    cfg = run.cfg
    grid, beta, quad, delta = _kinetic_setup(cfg)
    k = cfg.sections["kinetic"]
    steps = int(k["steps"])
    every = int(k["snapshot_every"]) or steps
    n_in = cfg.profile()(grid.points())
    try:
        tr = solve_wke(grid, n_in, delta, beta, quad, dt=delta / steps)
    except BlowUpError as e:
        run.check("wke-no-blowup", False)
        run.metrics["blowup"] = str(e)
        return
    run.check("wke-no-blowup", True)
    _write_kinetic(run, grid, beta, tr.times, tr.n, sorted(set(range(0, steps + 1, every)) | {steps}))
    run.text("wke/summary.csv", tr.summary_csv(), "wke-summary")
    m, e = tr.mass(), tr.energy()
    drift = float(np.max(np.abs(m - m[0])) / abs(m[0]))
    run.metrics.update(delta=delta, steps=steps, epsilon=quad.eps(grid, beta), beta=list(beta),
                       mass_drift=drift, energy_drift=float(np.max(np.abs(e - e[0])) / abs(e[0])))
    run.check("wke-mass", drift < 1e-8)


# --- ensembles -------------------------------------------------------------------------------

def _torus(cfg: ExperimentConfig) -> SpectralTorus:
    t = cfg.sections["torus"]
    return SpectralTorus(int(t["d"]), float(t["L"]), int(t["K"]), cfg.beta())


def default_moment_specs(torus: SpectralTorus) -> list[MomentSpec]:
    """Second and fourth single-mode moments at a few low modes, a product and two unbalanced specs."""
    d = torus.d
    z = (0,) * d
    e1 = (1,) + (0,) * (d - 1)
    e12 = (1, 1) + (0,) * (d - 2) if d >= 2 else (2,)
    modes = [m for m in (z, e1, e12) if max(abs(x) for x in m) <= torus.K]
    specs = [MomentSpec(((m, p, p),)) for p in (1, 2) for m in modes]
    if len(modes) > 1:
        specs.append(MomentSpec(((z, 1, 1), (e1, 1, 1))))
        specs.append(MomentSpec(((z, 1, 0), (e1, 0, 1))))
    specs.append(MomentSpec(((z, 2, 1),)))
    return specs


def _moment_specs(cfg: ExperimentConfig, torus: SpectralTorus) -> list[MomentSpec]:
    raw = cfg.sections["ensemble"]["moments"]
    if not raw:
        return default_moment_specs(torus)
    specs = []
    for s in raw:
        try:
            specs.append(MomentSpec(tuple((tuple(e[0]), int(e[1]), int(e[2])) for e in s)))
        except (TypeError, IndexError, ValueError):
            raise UsageError(f"moment spec {s!r} must be a list of [mode, p, q] entries")
    for s in specs:
        for k, _, _ in s.entries:
            torus.index(k)
    return specs


def _spec_labels(spec: MomentSpec) -> tuple[str, str]:
    ks = ";".join(" ".join(str(x) for x in k) for k, _, _ in spec.entries)
    ps = ";".join(str(p) if p == q else f"{p}:{q}" for _, p, q in spec.entries)
    return ks, ps


def _run_ensemble(run: _Run, torus: SpectralTorus, specs: list[MomentSpec]) -> tuple[np.ndarray, np.ndarray]:
    """Evolve the ensemble batch by batch; returns station times and samples (stations, specs, M).

    Each finished batch is checkpointed, so an interrupted run picks up where
    it stopped when rerun with the same config.
    """
    cfg = run.cfg
    e = cfg.sections["ensemble"]
    law = _law(cfg)
    sc = cfg.scaling()
    coupling = None if e["nonlinear"] else 0.0
    t_end = cfg.microscopic_time(e["t_end"])
    n_st = int(e["n_times"])
    stations = np.array([t_end * s / n_st for s in range(n_st + 1)]) if t_end > 0 else np.array([0.0])
    dt = cfg.microscopic_time(e["dt"]) or default_dt(torus)
    M, B = int(e["M"]), int(e["batch"])
    if M < 1 or B < 1:
        raise UsageError("ensemble.M and ensemble.batch must be positive")
    keep = int(e["store_realizations"])
    profile = cfg.profile()
    samples = np.empty((len(stations), len(specs), M), dtype=complex)
    drift, resumed = 0.0, 0
    for b, lo in enumerate(range(0, M, B)):
        m = min(B, M - lo)
        stored = [(r, s) for r in range(lo, min(lo + m, keep)) for s in range(len(stations))]
        rels = [f"ensemble/realization_{r:06d}_t{s:03d}.bin" for r, s in stored]
        cpath = run.path(f"checkpoints/batch_{b:05d}.npz")
        if cpath.exists() and all((run.out / r).exists() for r in rels):
            z = np.load(cpath)
            if str(z["tag"]) == run.tag and z["samples"].shape == (len(stations), len(specs), m):
                samples[:, :, lo:lo + m] = z["samples"]
                drift = max(drift, float(z["drift"]))
                resumed += 1
                continue
        ens = sample_initial_data(profile, law, torus, m, cfg.seed, first=lo)
        m0 = ens.mass()
        blk = np.empty((len(stations), len(specs), m), dtype=complex)
        bd = 0.0
        for s, t in enumerate(stations):
            evolve_nls(ens, float(t), dt, sc, dealias=bool(e["dealias"]), batch=min(m, 64),
                       precision=e["precision"], coupling=coupling)
            bd = max(bd, float(np.max(np.abs(ens.mass() - m0) / np.maximum(m0, 1e-300))))
            for i, spec in enumerate(specs):
                blk[s, i] = _product(ens.coeffs, torus, spec)
            for r in range(lo, min(lo + m, keep)):
                write_realization(run.path(f"ensemble/realization_{r:06d}_t{s:03d}.bin"), torus, cfg.seed, r,
                                  float(t), ens.coeffs[r - lo], tag=run.tag)
        samples[:, :, lo:lo + m] = blk
        drift = max(drift, bd)
        tmp = cpath.with_suffix(".tmp.npz")
        np.savez(tmp, samples=blk, drift=bd, tag=run.tag)
        tmp.replace(cpath)
    for (r, s), rel in zip([(r, s) for r in range(min(M, keep)) for s in range(len(stations))],
                           [f"ensemble/realization_{r:06d}_t{s:03d}.bin" for r in range(min(M, keep))
                            for s in range(len(stations))]):
        run.register(rel, "realization", r=r, t=float(stations[s]))
    run.metrics.update(realizations=M, mass_drift=drift, dt=dt, stations=stations.tolist(),
                       resumed_batches=resumed, lambda_sq=sc.lam ** 2 if coupling is None else 0.0, t_kin=cfg.scaling().t_kin)
    run.check("nls-mass", drift < MASS_TOL[e["precision"]])
    return stations, samples


def pipeline_nls_ensemble(run: _Run) -> None:
    torus = _torus(run.cfg)
    specs = _moment_specs(run.cfg, torus)
    stations, samples = _run_ensemble(run, torus, specs)
    nb = int(run.cfg.sections["ensemble"]["n_batches"])
    t_kin = run.cfg.scaling().t_kin
    rows = ["t_micro,t_kinetic,k,p,re,im,stderr,n_realizations"]
    for s, t in enumerate(stations):
        for i, spec in enumerate(specs):
            v, se = batch_means(samples[s, i], nb)
            ks, ps = _spec_labels(spec)
            rows.append(f"{t:.12g},{t / t_kin:.12g},{ks},{ps},{v.real:.12g},{v.imag:.12g},{se:.6g},"
                        f"{samples.shape[2]}")
    run.text("ensemble/moments.csv", "\n".join(rows) + "\n", "ensemble-moments")


# --- compare-moments -------------------------------------------------------------------------

def predicted_moment(spec: MomentSpec, mu: Sequence[float], n0_of: Callable, n_plus_of: Callable) -> float:
    """Product over modes of mu_p(n0, n_plus); zero when some p_j != q_j."""
    if any(p != q for _, p, q in spec.entries):
        return 0.0
    out = 1.0
    for k, p, _ in spec.entries:
        out *= float(moment_mu_q(n0_of(k), n_plus_of(k), mu, p))
    return out


def compare_moments_report(stations: np.ndarray, samples: np.ndarray, specs: Sequence[MomentSpec],
                           predictions: np.ndarray, n_batches: int = 20) -> tuple[str, list[dict]]:
    """Rows t,k,p,estimate,stderr,prediction,|diff|,diff_in_stderr.

    ``p`` lists the exponent per mode, written ``p:q`` where the two differ.
    ``estimate`` is the real part of the sample mean and ``|diff|`` uses the
    complex mean.
    """
    if predictions.shape != (len(stations), len(specs)) or samples.shape[:2] != predictions.shape:
        raise UsageError("ensemble results and predictions are not aligned")
    rows = ["t,k,p,estimate,stderr,prediction,|diff|,diff_in_stderr"]
    recs = []
    for s, t in enumerate(stations):
        for i, spec in enumerate(specs):
            v, se = batch_means(samples[s, i], n_batches)
            pred = float(predictions[s, i])
            diff = abs(v - pred)
            if se > 0:
                z = diff / se
            else:
                z = 0.0 if diff <= 1e-12 * max(1.0, abs(pred)) else math.inf
            ks, ps = _spec_labels(spec)
            rows.append(f"{t:.12g},{ks},{ps},{v.real:.12g},{se:.6g},{pred:.12g},{diff:.6g},{z:.4g}")
            recs.append({"t": float(t), "station": s, "spec": i, "balanced": all(p == q for _, p, q in spec.entries),
                         "z": z})
    return "\n".join(rows) + "\n", recs


def pipeline_compare_moments(run: _Run) -> None:
    cfg = run.cfg
    torus = _torus(cfg)
    specs = _moment_specs(cfg, torus)
    e = cfg.sections["ensemble"]
    stations, samples = _run_ensemble(run, torus, specs)
    t_kin = cfg.scaling().t_kin
    grid = KineticGrid(torus.d, torus.K / torus.L, 2 * torus.K + 1)
    if abs(grid.h - 1.0 / torus.L) > 1e-12:
        raise UsageError("kinetic grid does not match the lattice spacing")
    n_in = cfg.profile()(grid.points())
    kin_times = stations / t_kin
    if e["nonlinear"] and stations[-1] > 0:
        _, _, quad, _ = _kinetic_setup(cfg)
        n_st = len(stations) - 1
        steps = n_st * max(1, math.ceil(int(cfg.sections["kinetic"]["steps"]) / n_st))
        tr = solve_wke(grid, n_in, float(kin_times[-1]), torus.beta, quad, dt=kin_times[-1] / steps)
        w0 = solve_wke0(tr)
        idx = [s * steps // n_st for s in range(n_st + 1)]
        if np.max(np.abs(tr.times[idx] - kin_times)) > 1e-9 * max(1.0, kin_times[-1]):
            raise UsageError("kinetic and microscopic times are misaligned")
        n0 = w0.n0[idx]
        npl = w0.n_plus[idx]
        _write_kinetic(run, grid, torus.beta, tr.times, tr.n, idx)
    else:
        # linear flow: moduli are exactly preserved, so n0 = n_in and n_plus = 0
        n0 = np.repeat(n_in[None, :], len(stations), axis=0)
        npl = np.zeros_like(n0)
        _write_kinetic(run, grid, torus.beta, kin_times, n0, range(len(stations)))
    rmax = max(p for s in specs for _, p, _ in s.entries)
    mu = _law_moments(cfg, rmax)
    pred = np.zeros((len(stations), len(specs)))
    for s in range(len(stations)):
        def f0(k, s=s):
            return n0[s, _grid_index(grid, np.asarray(k) / torus.L)]

        def fp(k, s=s):
            return npl[s, _grid_index(grid, np.asarray(k) / torus.L)]
        for i, spec in enumerate(specs):
            pred[s, i] = predicted_moment(spec, mu, f0, fp)
    table, recs = compare_moments_report(stations, samples, specs, pred, int(e["n_batches"]))
    run.text("compare/moments.csv", table, "moment-table", t_unit="microscopic", t_kin=t_kin)
    z0 = max((r["z"] for r in recs if r["station"] == 0), default=0.0)
    zu = max((r["z"] for r in recs if not r["balanced"]), default=0.0)
    zall = max((r["z"] for r in recs), default=0.0)
    run.metrics.update(max_z_initial=z0, max_z_unbalanced=zu, max_z_all=zall)
    run.check("t0-within-5-stderr", z0 < Z_TOL)
    run.check("unbalanced-within-5-stderr", zu < Z_TOL)
    if not e["nonlinear"]:
        run.check("linear-within-5-stderr", zall < Z_TOL)


# --- density ---------------------------------------------------------------------------------

def pipeline_density(run: _Run) -> None:
    cfg = run.cfg
    s = cfg.sections["density"]
    law = cfg.sections["law"]
    if law["kind"] == "uniform_phase":
        raise UsageError("the density pipeline needs an absolutely continuous law")
    f_s = _s_density("exponential" if law["kind"] == "gaussian" else law["radial"])
    grid, beta, quad, delta = _kinetic_setup(cfg)
    n_st = int(s["n_times"])
    steps = n_st * max(1, math.ceil(int(cfg.sections["kinetic"]["steps"]) / n_st))
    n_in = cfg.profile()(grid.points())
    tr = solve_wke(grid, n_in, delta, beta, quad, dt=delta / steps)
    w0 = solve_wke0(tr)
    rmax = int(s["rmax"])
    mu = _law_moments(cfg, rmax)
    sub = n_st * max(1, math.ceil(int(s["dt_steps"]) / n_st))
    worst = drift = 0.0
    for p, k in enumerate(s["points"]):
        i = _grid_index(grid, k)
        nk = float(n_in[i])
        if not nk > 0:
            raise UsageError(f"n_in vanishes at {k}")
        path = DriftDiffusionPath(w0.times, w0.sigma[:, i], w0.gamma[:, i])
        traj = evolve_density(initial_density(f_s, nk, cells=int(s["cells"])), path, delta / sub,
                              save_every=sub // n_st)
        drift = max(drift, traj.mass_drift())
        for j, (t, rho) in enumerate(zip(traj.times, traj.states)):
            step = j * steps // n_st
            for r in range(1, rmax + 1):
                want = float(moment_mu_q(w0.n0[step, i], w0.n_plus[step, i], mu, r))
                worst = max(worst, abs(density_moments(rho, r) - want) / abs(want))
            kk = " ".join(f"{x:g}" for x in np.atleast_1d(k))
            hdr = f"t={t:.12g} k={kk} sigma={w0.sigma[step, i]:.12g} gamma={w0.gamma[step, i]:.12g}"
            run.text(f"density/rho_p{p:02d}_t{j:03d}.csv", rho.to_csv(hdr), "density",
                     t=float(t), k=[float(x) for x in np.atleast_1d(k)])
    run.metrics.update(moment_worst_rel=worst, mass_drift=drift, delta=delta)
    run.check("density-moments", worst < 1e-3)
    run.check("density-mass", drift < 1e-10)


# --- hierarchy -------------------------------------------------------------------------------

DEFAULT_ATOMS = [
    {"weight": 0.4, "profile": {"kind": "gaussian", "amplitude": 2.0, "width": 0.7071, "center": [0.3, 0.0]}},
    {"weight": 0.6, "profile": {"kind": "gaussian", "amplitude": 1.0, "width": 1.0, "center": [-0.2, -0.4]}},
]


def pipeline_hierarchy(run: _Run) -> None:
    cfg = run.cfg
    s = cfg.sections["hierarchy"]
    grid, beta, quad, delta = _kinetic_setup(cfg)
    atoms = s["atoms"] or DEFAULT_ATOMS
    try:
        w = [float(a["weight"]) for a in atoms]
        prof = [Profile.from_dict(a["profile"])(grid.points()) for a in atoms]
    except (KeyError, TypeError):
        raise UsageError("hierarchy.atoms entries need 'weight' and 'profile'")
    vol = grid.h ** grid.d
    X = prof[0].sum() * vol
    prof = [p * (X / (p.sum() * vol)) for p in prof]     # atoms share the mass of the first one
    mix = Mixture(grid, np.array(w) / sum(w), np.stack(prof))
    rng = np.random.default_rng(cfg.seed)
    orders = [int(r) for r in s["orders"]]
    tuples = {r: rng.integers(0, grid.size, (int(s["n_tuples"]), r)) for r in orders}
    levels = [int(x) for x in s["levels"]]
    resid = {r: [] for r in orders}
    last = None
    for steps in levels:
        tr = evolve_mixture(mix, delta, beta, quad, dt=delta / steps)
        for r in orders:
            st = wkh_residual(tr, r, tuples[r], beta, quad)
            resid[r].append(float(st.max_resid.max()))
            run.text(f"hierarchy/residual_r{r}_steps{steps:05d}.csv", st.to_csv(), "wkh-residual", r=r, steps=steps)
        last = tr
    final = last.at(len(last.times) - 1)
    drift = last.mass_drift()
    rep = check_admissible([final.tensor(r) for r in (1, 2, 3)], float(final.atom_masses.mean()), grid,
                           seed=cfg.seed)
    for a, p in enumerate(final.profiles):
        rel = f"hierarchy/atom_{a:02d}.bin"
        write_snapshot(run.path(rel), grid, beta, float(last.times[-1]), p, tag=run.tag)
        run.register(rel, "kinetic-snapshot", t=float(last.times[-1]), atom=a)
    lines = [f"grid d={grid.d} k_max={grid.k_max!r} n={grid.n}"]
    lines += [f"atom {float(wt)!r} atom_{a:02d}.bin" for a, wt in enumerate(mix.weights)]
    run.text("hierarchy/mixture.txt", "\n".join(lines) + "\n", "mixture")
    run.metrics.update(residuals={str(r): v for r, v in resid.items()}, levels=levels,
                       admissibility=rep.worst, mass_drift=drift)
    if len(levels) > 1:
        run.check("wkh-residual-decreasing",
                  all(all(b < a for a, b in zip(v, v[1:])) for v in resid.values()))
    run.check("wkh-admissible", rep.worst <= 2 * drift + 1e-12)


# --- verification suites ---------------------------------------------------------------------

def _record(run: _Run, res: ck.CheckResult) -> None:
    run.check(res.name, res.passed)
    run.metrics[res.name] = strip_timing(ck._plain(res.metrics))
    body = yaml.safe_dump({"name": res.name, "passed": res.passed, "metrics": run.metrics[res.name]},
                          sort_keys=True)
    run.text(f"checks/{res.name}.yaml", body, "check")


def pipeline_diagrams(run: _Run) -> None:
    s = run.cfg.sections["diagrams"]
    top = min(int(s["max_scale"]), dg.TREE_CAP)
    counts = [(n, len(dg.enumerate_trees(n)), dg.ternary_catalan(n)) for n in range(top + 1)]
    run.text("diagrams/tree_counts.csv",
             "n,enumerated,closed_form\n" + "".join(f"{n},{a},{b}\n" for n, a, b in counts), "tree-counts")
    run.metrics["tree_counts"] = [a for _, a, _ in counts]
    run.check("tree-counts", all(a == b for _, a, b in counts))
    _record(run, ck.check_diagrams(int(s["n_confluence"]), int(s["n_roundtrip"]), seed=run.cfg.seed))
    if s["molecules"]:
        _record(run, ck.check_molecules(int(s["n_molecule_random"]), int(s["n_counting"]), seed=run.cfg.seed + 3))


def pipeline_cumulants(run: _Run) -> None:
    s = run.cfg.sections["cumulants"]
    n = int(s["table_n"])
    laws = {"gaussian": cu.gaussian_moments(n // 2), "unit": cu.unit_modulus_moments(n // 2),
            "gamma2": [g for g in gamma2_moments(n // 2)[1:]]}
    for name, mu in laws.items():
        run.text(f"cumulants/lambda_n{n}_{name}.csv", cu.lambda_table_csv(cu.lambda_coefficients(n, mu)),
                 "lambda-table", law=name, n=n)
    _record(run, ck.check_cumulants(int(s["n_max"]), int(s["n_random"]), seed=run.cfg.seed + 5))


def _check_kwargs(name: str, params: dict) -> dict:
    out = {}
    for k, v in (params or {}).items():
        if name == "kinetic-trend" and k == "cases":
            v = tuple(ck.TrendCase(**c) for c in v)
        elif name == "kinetic-trend" and k == "rule":
            v = ck.ExactDeltaRule(*v)
        elif isinstance(v, list):
            v = tuple(v)
        out[k] = v
    return out


def pipeline_acceptance(run: _Run) -> None:
    s = run.cfg.sections["checks"]
    names = s["names"] or list(ck.CHECKS)
    unknown = sorted(set(names) - set(ck.CHECKS)) + sorted(set(s["params"]) - set(ck.CHECKS))
    if unknown:
        raise UsageError(f"unknown checks: {unknown}")
    for name in names:
        try:
            res = ck.CHECKS[name](**_check_kwargs(name, s["params"].get(name)))
        except TypeError as e:
            raise UsageError(f"bad parameters for check {name!r}: {e}")
        _record(run, res)


PIPELINES: dict[str, Callable[[_Run], None]] = {
    "wke": pipeline_wke,
    "nls-ensemble": pipeline_nls_ensemble,
    "compare-moments": pipeline_compare_moments,
    "density": pipeline_density,
    "hierarchy": pipeline_hierarchy,
    "diagrams-verify": pipeline_diagrams,
    "cumulants-verify": pipeline_cumulants,
    "acceptance": pipeline_acceptance,
}


def run(config, base: Optional[Path] = None) -> ResultManifest:
    """Run the pipeline named by a config (path, YAML text object or ExperimentConfig).

    Relative output directories are resolved against ``base`` (default: the
    working directory).
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.load(config)
    out = Path(cfg.output)
    if not out.is_absolute():
        out = (base or Path.cwd()) / out
    out.mkdir(parents=True, exist_ok=True)
    r = _Run(cfg, out)
    t0 = time.perf_counter()
    r.text("config.yaml", cfg.dump(), "config")
    PIPELINES[cfg.experiment](r)
    man = ResultManifest(cfg.experiment, r.tag, code_version(), r.seeds, r.files, r.checks,
                         ck._plain(r.metrics), wall_clock=time.perf_counter() - t0, directory=str(out))
    man.write(out)
    return man


# --- export ----------------------------------------------------------------------------------

SELECTORS = ("n(t,k)", "moments", "density", "residuals", "summary")


def _strip_comments(path: Path) -> list[str]:
    with open(path) as fh:
        return [ln for ln in fh.read().splitlines() if not ln.startswith("#")]


def export_plot_data(manifest, selector: str, dest: Optional[Path] = None) -> list[Path]:
    """Long-format CSV series for external plotting; returns the written paths."""
    man = manifest if isinstance(manifest, ResultManifest) else ResultManifest.load(manifest)
    bad = man.validate()
    if bad:
        raise UsageError("manifest is not valid: " + "; ".join(bad))
    if selector not in SELECTORS:
        raise UsageError(f"unknown selector {selector!r}; choose from {SELECTORS}")
    kind = {"n(t,k)": "kinetic-snapshot", "moments": "moment-table", "density": "density",
            "residuals": "wkh-residual", "summary": "wke-summary"}[selector]
    files = man.select(kind)
    if selector == "n(t,k)":
        files = [f for f in files if "atom" not in f.meta]
    if not files:
        raise UsageError(f"selector {selector!r} matches nothing in {man.directory}")
    base = Path(man.directory)
    dest = Path(dest) if dest is not None else base / "export"
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    if selector == "n(t,k)":
        for j, f in enumerate(files):
            meta, data = read_snapshot(base / f.path)
            d = int(meta["d"])
            n = int(round(2 * meta["k_max"] / meta["h"])) + 1
            arr = data.reshape((n,) * d)
            line = arr[(slice(None),) + (n // 2,) * (d - 1)]
            ks = (np.arange(n) - n // 2) * meta["h"]
            out = dest / f"n_t{j:03d}.csv"
            out.write_text("t,k,n\n" + "".join(f"{meta['t']:.12g},{k:.12g},{v:.12g}\n"
                                               for k, v in zip(ks, line) if k >= -1e-12))
            written.append(out)
    elif selector == "density":
        for f in files:
            rows = _strip_comments(base / f.path)[1:]
            kk = " ".join(f"{x:g}" for x in f.meta["k"])
            out = dest / Path(f.path).name
            out.write_text("t,k,r,rho\n" + "".join(f"{f.meta['t']:.12g},{kk},{r}\n" for r in rows))
            written.append(out)
    else:
        out = dest / f"{selector}.csv"
        header, body = None, []
        for f in files:
            rows = _strip_comments(base / f.path)
            extra_h = ",steps" if selector == "residuals" else ""
            extra = f",{f.meta['steps']}" if selector == "residuals" else ""
            header = rows[0] + extra_h
            body += [r + extra for r in rows[1:]]
        out.write_text(header + "\n" + "\n".join(body) + "\n")
        written.append(out)
    return written
