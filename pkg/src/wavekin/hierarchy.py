"""Correlation tensors built as finite mixtures of factorized kinetic states.

n_r(k_1, ..., k_r) = sum_i w_i prod_j m_i(k_j) is evaluated lazily at index
tuples; evolving every atom by the kinetic equation gives a solution of the
linear hierarchy because each atom's tensor power does.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .kinetic import (KineticGrid, ResonantQuadrature, Trajectory, _beta, collision_field,
                      solve_wke)
from .lattice import UsageError


@dataclass
class Mixture:
    grid: KineticGrid
    weights: np.ndarray
    profiles: np.ndarray          # (atoms, G)
    mass_tol: float = 1e-6

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        self.profiles = np.atleast_2d(np.asarray(self.profiles, dtype=float))
        if self.profiles.shape != (len(self.weights), self.grid.size):
            raise UsageError(f"profiles must have shape ({len(self.weights)}, {self.grid.size})")
        if np.any(self.weights <= 0):
            raise UsageError("mixture weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise UsageError(f"weights sum to {self.weights.sum()!r}, not 1")
        if np.any(self.profiles < 0):
            raise UsageError("mixture profiles must be nonnegative")

    @property
    def atom_masses(self) -> np.ndarray:
        return self.profiles.sum(axis=1) * self.grid.h ** self.grid.d

    def common_mass(self) -> Optional[float]:
        """The shared mass X when all atoms agree within mass_tol (relative), else None."""
        m = self.atom_masses
        if np.max(np.abs(m - m[0])) <= self.mass_tol * max(1.0, abs(m[0])):
            return float(m[0])
        return None

    def tensor(self, r: int) -> "CorrelationTensor":
        return CorrelationTensor(self, r)


@dataclass
class CorrelationTensor:
    mixture: Mixture
    r: int

    def __post_init__(self):
        if self.r < 0:
            raise UsageError("order must be nonnegative")

    def __call__(self, idx) -> np.ndarray:
        """Values at flat-index tuples; idx has shape (..., r)."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.shape[-1] != self.r:
            raise UsageError(f"expected tuples of length {self.r}")
        prof = self.mixture.profiles            # (A, G)
        vals = np.ones((len(prof),) + idx.shape[:-1])
        for j in range(self.r):
            vals = vals * prof[:, idx[..., j]]
        return np.tensordot(self.mixture.weights, vals, axes=1)


def assemble_correlations(mix: Mixture, r: int, points) -> np.ndarray:
    """n_r at a list of flat-index tuples."""
    if r < 1:
        raise UsageError("r must be >= 1")
    return mix.tensor(r)(np.asarray(points, dtype=np.int64).reshape(-1, r))


@dataclass
class AdmissibilityReport:
    X: float
    deviations: dict            # order -> worst relative deviation
    worst: float

    def ok(self, tol: float) -> bool:
        return self.worst <= tol


def check_admissible(tensors: Sequence[CorrelationTensor], X: float, grid: KineticGrid,
                     n_base: int = 32, seed: int = 0) -> AdmissibilityReport:
    """Check int n_r dk_r = X n_(r-1) at random base tuples, and int n_1 = X.

    Deviations are relative to X * max |n_(r-1)| over the sampled tuples.
    ``tensors`` lists n_1, n_2, ... in order.
    """
    rng = np.random.default_rng(seed)
    vol = grid.h ** grid.d
    devs = {}
    allk = np.arange(grid.size)
    n1 = tensors[0]
    devs[1] = abs(float(n1(allk[:, None]).sum() * vol) - X) / max(abs(X), 1e-300)
    for t_prev, t_r in zip(tensors, tensors[1:]):
        r = t_r.r
        base = rng.integers(0, grid.size, size=(n_base, r - 1))
        full = np.concatenate([np.repeat(base[:, None, :], grid.size, axis=1),
                               np.broadcast_to(allk[None, :, None], (n_base, grid.size, 1))], axis=2)
        marg = t_r(full).sum(axis=1) * vol
        lower = t_prev(base)
        scale = max(abs(X) * float(np.max(np.abs(lower))), 1e-300)
        devs[r] = float(np.max(np.abs(marg - X * lower))) / scale
    return AdmissibilityReport(X, devs, max(devs.values()))


@dataclass
class MixtureTrajectory:
    mixture: Mixture
    trajectories: list[Trajectory]

    @property
    def times(self) -> np.ndarray:
        return self.trajectories[0].times

    def at(self, j: int) -> Mixture:
        prof = np.stack([tr.n[j] for tr in self.trajectories])
        return Mixture(self.mixture.grid, self.mixture.weights, np.maximum(prof, 0.0),
                       mass_tol=np.inf)

    def mass_drift(self) -> float:
        """Worst relative mass drift over atoms and stored times."""
        out = 0.0
        for tr in self.trajectories:
            m = tr.mass()
            out = max(out, float(np.max(np.abs(m - m[0])) / abs(m[0])))
        return out


def evolve_mixture(mix: Mixture, delta: float, beta, quad: ResonantQuadrature = ResonantQuadrature(),
                   dt: Optional[float] = None) -> MixtureTrajectory:
    """Evolve every atom by the kinetic equation; weights stay fixed."""
    trajs = [solve_wke(mix.grid, p, delta, beta, quad, dt) for p in mix.profiles]
    return MixtureTrajectory(mix, trajs)


@dataclass
class ResidualStats:
    r: int
    times: np.ndarray
    max_resid: np.ndarray
    mean_resid: np.ndarray

    def to_csv(self) -> str:
        rows = ["t,r,max_resid,mean_resid"]
        rows += [f"{t:.12g},{self.r},{a:.6e},{b:.6e}" for t, a, b in zip(self.times, self.max_resid, self.mean_resid)]
        return "\n".join(rows) + "\n"


def hierarchy_rhs(mix: Mixture, r: int, tuples: np.ndarray, beta, quad: ResonantQuadrature) -> np.ndarray:
    """Right side of the hierarchy at order r for a mixture-backed n_(r+2).

    For each slot j the four substituted n_(r+2) terms of one atom equal
    prod_(l != j) m(k_l) times the kinetic bracket of m at k_j, so the resonant
    integral is the atom's collision operator at k_j.
    """
    tuples = np.asarray(tuples, dtype=np.int64).reshape(-1, r)
    out = np.zeros(len(tuples))
    uniq = np.unique(tuples)
    for w, m in zip(mix.weights, mix.profiles):
        K = np.zeros(mix.grid.size)
        K[uniq] = collision_field(mix.grid, m, m, m, beta, quad, where=uniq)
        for j in range(r):
            others = np.ones(len(tuples))
            for l in range(r):
                if l != j:
                    others = others * m[tuples[:, l]]
            out += w * others * K[tuples[:, j]]
    return out


def wkh_residual(traj: MixtureTrajectory, r: int, tuples, beta, quad: ResonantQuadrature,
                 stride: int = 1) -> ResidualStats:
    """Centered time difference of n_r minus the hierarchy right side, at interior stored times.

    ``stride`` selects the time step of the difference (dt_fd = stride * dt).
    """
    times = traj.times
    if len(times) < 2 * stride + 1:
        raise UsageError("not enough snapshots for a centered difference")
    tuples = np.asarray(tuples, dtype=np.int64).reshape(-1, r)
    ts, mx, mn = [], [], []
    for j in range(stride, len(times) - stride, stride):
        dtfd = times[j + stride] - times[j - stride]
        lhs = (traj.at(j + stride).tensor(r)(tuples) - traj.at(j - stride).tensor(r)(tuples)) / dtfd
        rhs = hierarchy_rhs(traj.at(j), r, tuples, beta, quad)
        res = np.abs(lhs - rhs)
        ts.append(times[j])
        mx.append(float(res.max()))
        mn.append(float(res.mean()))
    return ResidualStats(r, np.array(ts), np.array(mx), np.array(mn))


def wke_residual(traj: Trajectory, points, stride: int = 1) -> np.ndarray:
    """Centered-difference residual of dn/dt = K(n) at interior stored times, (T, len(points))."""
    points = np.asarray(points, dtype=np.int64)
    out = []
    for j in range(stride, len(traj.times) - stride, stride):
        dtfd = traj.times[j + stride] - traj.times[j - stride]
        lhs = (traj.n[j + stride, points] - traj.n[j - stride, points]) / dtfd
        rhs = collision_field(traj.grid, traj.n[j], traj.n[j], traj.n[j], traj.beta, traj.quad, where=points)
        out.append(np.abs(lhs - rhs))
    return np.array(out)


def write_manifest(path, mix: Mixture, profile_files: Sequence[str]) -> None:
    """Structured text: one 'atom <weight> <file>' line per atom."""
    lines = [f"grid d={mix.grid.d} k_max={mix.grid.k_max!r} n={mix.grid.n}"]
    lines += [f"atom {float(w)!r} {f}" for w, f in zip(mix.weights, profile_files)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
