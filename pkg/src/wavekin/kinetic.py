"""Collision operator, kinetic equation and its companion fields on Cartesian grids.

The momentum delta is used to eliminate k2 = k1 + k3 - k.  The frequency
delta is replaced by a triangular mollifier of width ``epsilon``.  Writing
p = k1 - k and q = k3 - k in grid units, the resonance factor is
Omega = -2 h^2 sum_m beta_m p_m q_m; the integer products p_m q_m make the
weight bit-for-bit symmetric under the relabelings that exchange the four
momenta, so the discrete mass is conserved to roundoff.  Quadruples with a
momentum outside the grid carry weight 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numba as nb
import numpy as np

from .lattice import BetaVector, UsageError


class BlowUpError(RuntimeError):
    """The kinetic solution left its admissible range."""


@dataclass(frozen=True)
class KineticGrid:
    """Cartesian grid over [-k_max, k_max]^d with an odd number of points per axis."""

    d: int
    k_max: float
    n: int

    def __post_init__(self):
        if self.d < 1:
            raise UsageError("d must be >= 1")
        if self.n < 3 or self.n % 2 == 0:
            raise UsageError(f"points per axis must be odd and >= 3, got {self.n}")
        if not self.k_max > 0:
            raise UsageError("k_max must be positive")

    @property
    def h(self) -> float:
        return 2 * self.k_max / (self.n - 1)

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def center(self) -> int:
        return self.n // 2

    def indices(self) -> np.ndarray:
        """(G, d) integer grid indices in lexicographic order."""
        axes = np.meshgrid(*([np.arange(self.n)] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=1).astype(np.int64)

    def points(self) -> np.ndarray:
        return (self.indices() - self.center) * self.h

    def flat(self, idx: np.ndarray) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
        out = np.zeros(len(idx), dtype=np.int64)
        for m in range(self.d):
            out = out * self.n + idx[:, m]
        return out

    def index_of(self, k) -> np.ndarray:
        """Grid index of a physical point lying on the grid."""
        k = np.atleast_2d(np.asarray(k, dtype=float))
        idx = np.rint(k / self.h).astype(np.int64) + self.center
        if np.any(idx < 0) or np.any(idx >= self.n) or np.any(np.abs((idx - self.center) * self.h - k) > 1e-9 * max(1.0, self.h)):
            raise UsageError(f"point(s) {k.tolist()} are not grid points")
        return idx

    def interior(self, margin: int) -> np.ndarray:
        """Flat indices of points at least ``margin`` cells away from the boundary."""
        idx = self.indices()
        ok = np.all((idx >= margin) & (idx < self.n - margin), axis=1)
        return np.nonzero(ok)[0]

    def integrate(self, field_: np.ndarray) -> float:
        return float(np.sum(field_) * self.h ** self.d)


@dataclass(frozen=True)
class ResonantQuadrature:
    """Treatment of the frequency delta.

    ``deterministic_mollified`` sums over all grid pairs (k1, k3) with weight
    max(0, 1 - |Omega|/eps)/eps.  ``monte_carlo`` estimates the same sum from
    ``n_samples`` uniformly drawn pairs and returns a standard error.  When
    ``epsilon`` is None it defaults to c_eps * h * 2 max(beta) k_max.
    """

    mode: str = "deterministic_mollified"
    epsilon: Optional[float] = None
    c_eps: float = 2.0
    n_samples: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("deterministic_mollified", "monte_carlo"):
            raise UsageError(f"unknown quadrature mode {self.mode!r}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise UsageError("epsilon must be positive")

    def eps(self, grid: KineticGrid, beta) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        b = np.asarray(_beta(beta, grid.d))
        return self.c_eps * grid.h * 2 * float(b.max()) * grid.k_max


def mollifier(omega, eps: float):
    """Triangular kernel; integrates to one."""
    return np.maximum(0.0, 1.0 - np.abs(omega) / eps) / eps


def _beta(beta, d: int) -> np.ndarray:
    if isinstance(beta, BetaVector):
        b = beta.array()
    else:
        b = np.asarray(beta, dtype=float).ravel()
    if len(b) != d:
        raise UsageError(f"beta has {len(b)} entries, grid has d={d}")
    if np.any(b <= 0):
        raise UsageError("beta entries must be positive")
    return b


# --- compiled kernels ---------------------------------------------------------------------

@nb.njit(cache=True)
def _unflat(j, n, d, out):
    for m in range(d - 1, -1, -1):
        out[m] = j % n
        j //= n


@nb.njit(cache=True)
def _flat(idx, n, d):
    j = 0
    for m in range(d):
        j = j * n + idx[m]
    return j


@nb.njit(cache=True)
def _band_kernel(out_flat, n, d, beta, h, eps, F1, F2, F3, mode):
    """Mollified resonant sums at the requested output points.

    mode 0: collision bracket for (F1, F2, F3);
    mode 1: returns (sigma, gamma) for n = F1, stacked in columns 0 and 1.
    """
    G = n ** d
    M = out_flat.shape[0]
    res = np.zeros((M, 2))
    ki = np.empty(d, np.int64)
    k1 = np.empty(d, np.int64)
    qpre = np.empty(d, np.int64)
    k3 = np.empty(d, np.int64)
    k2 = np.empty(d, np.int64)
    half = eps / (2.0 * h * h)   # |sum beta p q| must be < half
    w0 = h ** (2 * d) / eps
    last = d - 1
    bl = beta[last]
    n_pre = n ** (d - 1)
    for a in range(M):
        i = out_flat[a]
        _unflat(i, n, d, ki)
        acc0 = 0.0
        acc1 = 0.0
        for j1 in range(G):
            _unflat(j1, n, d, k1)
            # k3 ranges over the grid; q = k3 - k.  Enumerate the first d-1 components.
            for jp in range(n_pre):
                # decode prefix of k3
                t = jp
                for m in range(d - 2, -1, -1):
                    qpre[m] = t % n
                    t //= n
                c = 0.0
                ok = True
                for m in range(d - 1):
                    k3[m] = qpre[m]
                    k2[m] = k1[m] + k3[m] - ki[m]
                    if k2[m] < 0 or k2[m] >= n:
                        ok = False
                        break
                    c += beta[m] * ((k1[m] - ki[m]) * (k3[m] - ki[m]))
                if not ok:
                    continue
                pl = k1[last] - ki[last]
                # admissible k3[last] from the grid and from k2[last] in range
                lo = 0
                hi = n - 1
                lo2 = ki[last] - k1[last]
                hi2 = n - 1 + ki[last] - k1[last]
                if lo2 > lo:
                    lo = lo2
                if hi2 < hi:
                    hi = hi2
                if pl != 0:
                    # |c + bl * pl * (x - ki_last)| < half
                    s = bl * pl
                    x1 = (-half - c) / s
                    x2 = (half - c) / s
                    if x1 > x2:
                        x1, x2 = x2, x1
                    a1 = int(math.floor(x1)) + ki[last] - 1
                    a2 = int(math.ceil(x2)) + ki[last] + 1
                    if a1 > lo:
                        lo = a1
                    if a2 < hi:
                        hi = a2
                else:
                    if abs(c) >= half:
                        continue
                for x in range(lo, hi + 1):
                    ip = c + bl * (pl * (x - ki[last]))
                    omega_scaled = abs(ip)
                    if omega_scaled >= half:
                        continue
                    w = w0 * (1.0 - omega_scaled / half)
                    k3[last] = x
                    k2[last] = k1[last] + x - ki[last]
                    j3 = _flat(k3, n, d)
                    j2 = _flat(k2, n, d)
                    if mode == 0:
                        a1v = F1[j1]
                        a2v = F2[j2]
                        a3v = F3[j3]
                        acc0 += w * (a1v * a2v * a3v - F1[i] * a2v * a3v
                                     + a1v * F2[i] * a3v - a1v * a2v * F3[i])
                    else:
                        n1 = F1[j1]
                        n2 = F1[j2]
                        n3 = F1[j3]
                        acc0 += w * n1 * n2 * n3
                        acc1 += w * (n1 * n3 - n2 * n3 - n1 * n2)
        res[a, 0] = acc0
        res[a, 1] = acc1
    return res


@nb.njit(cache=True)
def _mc_kernel(i, n, d, beta, h, eps, F1, F2, F3, j1s, j3s):
    """Per-sample contributions G^2 * w * bracket for uniformly drawn (k1, k3)."""
    G = n ** d
    S = j1s.shape[0]
    out = np.zeros(S)
    ki = np.empty(d, np.int64)
    k1 = np.empty(d, np.int64)
    k3 = np.empty(d, np.int64)
    k2 = np.empty(d, np.int64)
    _unflat(i, n, d, ki)
    half = eps / (2.0 * h * h)
    w0 = h ** (2 * d) / eps * float(G) * float(G)
    for s in range(S):
        _unflat(j1s[s], n, d, k1)
        _unflat(j3s[s], n, d, k3)
        ok = True
        ip = 0.0
        for m in range(d):
            k2[m] = k1[m] + k3[m] - ki[m]
            if k2[m] < 0 or k2[m] >= n:
                ok = False
                break
            ip += beta[m] * ((k1[m] - ki[m]) * (k3[m] - ki[m]))
        if not ok or abs(ip) >= half:
            continue
        w = w0 * (1.0 - abs(ip) / half)
        j1 = j1s[s]
        j3 = j3s[s]
        j2 = _flat(k2, n, d)
        out[s] = w * (F1[j1] * F2[j2] * F3[j3] - F1[i] * F2[j2] * F3[j3]
                      + F1[j1] * F2[i] * F3[j3] - F1[j1] * F2[j2] * F3[i])
    return out


# --- public operator interface -------------------------------------------------------------

def _prep(grid: KineticGrid, fields: Sequence[np.ndarray]) -> list[np.ndarray]:
    out = []
    for f in fields:
        f = np.ascontiguousarray(np.asarray(f, dtype=float).ravel())
        if f.size != grid.size:
            raise UsageError(f"field has {f.size} values, grid has {grid.size}")
        out.append(f)
    return out


def _out_index(grid: KineticGrid, where) -> np.ndarray:
    if where is None:
        return np.arange(grid.size, dtype=np.int64)
    w = np.atleast_1d(np.asarray(where, dtype=np.int64))
    if np.any(w < 0) or np.any(w >= grid.size):
        raise UsageError("output point outside the grid")
    return w


def collision_field(grid: KineticGrid, phi1, phi2, phi3, beta, quad: ResonantQuadrature = ResonantQuadrature(),
                    where=None) -> np.ndarray:
    """Deterministic K(phi1, phi2, phi3) at flat grid indices ``where`` (all points if None)."""
    F1, F2, F3 = _prep(grid, (phi1, phi2, phi3))
    b = _beta(beta, grid.d)
    idx = _out_index(grid, where)
    res = _band_kernel(idx, grid.n, grid.d, b, grid.h, quad.eps(grid, b), F1, F2, F3, 0)
    return res[:, 0]


def collision_operator(grid: KineticGrid, phi1, phi2, phi3, k, beta,
                       quad: ResonantQuadrature = ResonantQuadrature()) -> tuple[float, float]:
    """K(phi1, phi2, phi3)(k) at a physical grid point; returns (value, stderr).

    The standard error is 0 for the deterministic mode.
    """
    i = int(grid.flat(grid.index_of(k))[0])
    if quad.mode == "deterministic_mollified":
        return float(collision_field(grid, phi1, phi2, phi3, beta, quad, [i])[0]), 0.0
    F1, F2, F3 = _prep(grid, (phi1, phi2, phi3))
    b = _beta(beta, grid.d)
    rng = np.random.default_rng(np.random.SeedSequence([quad.seed, i]))
    j1 = rng.integers(0, grid.size, quad.n_samples)
    j3 = rng.integers(0, grid.size, quad.n_samples)
    vals = _mc_kernel(i, grid.n, grid.d, b, grid.h, quad.eps(grid, b), F1, F2, F3, j1, j3)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))


def sigma_gamma_field(grid: KineticGrid, n_field, beta, quad: ResonantQuadrature = ResonantQuadrature(),
                      where=None) -> tuple[np.ndarray, np.ndarray]:
    (F,) = _prep(grid, (n_field,))
    b = _beta(beta, grid.d)
    idx = _out_index(grid, where)
    res = _band_kernel(idx, grid.n, grid.d, b, grid.h, quad.eps(grid, b), F, F, F, 1)
    return res[:, 0], res[:, 1]


def sigma_gamma(grid: KineticGrid, n_field, k, beta, quad: ResonantQuadrature = ResonantQuadrature()
                ) -> tuple[float, float]:
    i = int(grid.flat(grid.index_of(k))[0])
    s, g = sigma_gamma_field(grid, n_field, beta, quad, [i])
    return float(s[0]), float(g[0])


def bruteforce_collision(grid: KineticGrid, phi1, phi2, phi3, beta, eps: float, i: int) -> float:
    """Plain double loop over all (k1, k3) grid pairs; oracle for the banded kernel."""
    F1, F2, F3 = _prep(grid, (phi1, phi2, phi3))
    b = _beta(beta, grid.d)
    idx = grid.indices()
    ki = idx[i]
    p = idx - ki
    total = 0.0
    for j1 in range(grid.size):
        k2 = idx[j1] + idx - ki
        ok = np.all((k2 >= 0) & (k2 < grid.n), axis=1)
        omega = -2 * grid.h ** 2 * np.sum(b * (p[j1] * p), axis=1)
        w = mollifier(omega, eps) * grid.h ** (2 * grid.d)
        j2 = grid.flat(np.where(ok[:, None], k2, 0))
        br = (F1[j1] * F2[j2] * F3 - F1[i] * F2[j2] * F3 + F1[j1] * F2[i] * F3 - F1[j1] * F2[j2] * F3[i])
        total += float(np.sum(np.where(ok, w * br, 0.0)))
    return total


# --- kinetic equation -----------------------------------------------------------------------

@dataclass
class KineticState:
    t: float
    n: np.ndarray
    n0: Optional[np.ndarray] = None
    n_plus: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n0 is not None and self.n_plus is not None:
            dev = float(np.max(np.abs(self.n - self.n0 - self.n_plus), initial=0.0))
            if dev >= 1e-10 * max(1.0, float(np.max(np.abs(self.n), initial=0.0))):
                raise UsageError(f"n != n0 + n_plus (deviation {dev:.3e})")


@dataclass
class Trajectory:
    """RK4 trajectory: states at every step plus the collision field at every step."""

    grid: KineticGrid
    beta: np.ndarray
    quad: ResonantQuadrature
    times: np.ndarray
    n: np.ndarray          # (steps + 1, G)
    dndt: np.ndarray       # (steps + 1, G), K(n, n, n) at each stored time

    def state(self, j: int) -> KineticState:
        return KineticState(float(self.times[j]), self.n[j])

    def mass(self) -> np.ndarray:
        return self.n.sum(axis=1) * self.grid.h ** self.grid.d

    def energy(self) -> np.ndarray:
        sq = np.sum(self.beta * self.grid.points() ** 2, axis=1)
        return self.n @ sq * self.grid.h ** self.grid.d

    def summary_csv(self) -> str:
        m, e = self.mass(), self.energy()
        rows = ["t,mass,energy,max_n,min_n"]
        for j, t in enumerate(self.times):
            rows.append(f"{t:.12g},{m[j]:.12g},{e[j]:.12g},{self.n[j].max():.12g},{self.n[j].min():.12g}")
        return "\n".join(rows) + "\n"

    def hermite(self, j: int, theta: float) -> np.ndarray:
        """Cubic Hermite value between stored times j and j+1."""
        dt = self.times[j + 1] - self.times[j]
        y0, y1 = self.n[j], self.n[j + 1]
        f0, f1 = self.dndt[j], self.dndt[j + 1]
        h00 = 2 * theta ** 3 - 3 * theta ** 2 + 1
        h10 = theta ** 3 - 2 * theta ** 2 + theta
        h01 = -2 * theta ** 3 + 3 * theta ** 2
        h11 = theta ** 3 - theta ** 2
        return h00 * y0 + h10 * dt * f0 + h01 * y1 + h11 * dt * f1


def _collide_all(grid, b, quad, eps, n_field):
    F = np.ascontiguousarray(n_field)
    idx = np.arange(grid.size, dtype=np.int64)
    return _band_kernel(idx, grid.n, grid.d, b, grid.h, eps, F, F, F, 0)[:, 0]


def solve_wke(grid: KineticGrid, n_in, delta: float, beta, quad: ResonantQuadrature = ResonantQuadrature(),
              dt: Optional[float] = None, bound: float = 1e6, neg_tol: float = 1e-8) -> Trajectory:
    """RK4 for dn/dt = K(n, n, n) on [0, delta]; every step is stored."""
    if quad.mode != "deterministic_mollified":
        raise UsageError("time stepping requires the deterministic quadrature")
    if not delta > 0:
        raise UsageError("delta must be positive")
    b = _beta(beta, grid.d)
    eps = quad.eps(grid, b)
    (n,) = _prep(grid, (n_in,))
    if np.any(n < 0):
        raise UsageError("n_in must be nonnegative")
    dt = dt if dt is not None else delta / 256
    steps = max(1, int(round(delta / dt)))
    dt = delta / steps
    scale = max(1.0, float(n.max()))
    times = np.linspace(0.0, delta, steps + 1)
    ns = np.empty((steps + 1, grid.size))
    ks = np.empty((steps + 1, grid.size))
    ns[0] = n
    f = _collide_all(grid, b, quad, eps, n)
    ks[0] = f
    for s in range(steps):
        k1 = f
        k2 = _collide_all(grid, b, quad, eps, n + 0.5 * dt * k1)
        k3 = _collide_all(grid, b, quad, eps, n + 0.5 * dt * k2)
        k4 = _collide_all(grid, b, quad, eps, n + dt * k3)
        n = n + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(n)) or n.max() > bound:
            raise BlowUpError(f"n exceeded the bound {bound} at t={times[s + 1]:.6g}")
        if n.min() < -neg_tol * scale:
            raise BlowUpError(f"n became negative ({n.min():.3e}) at t={times[s + 1]:.6g}")
        f = _collide_all(grid, b, quad, eps, n)
        ns[s + 1] = n
        ks[s + 1] = f
    return Trajectory(grid, b, quad, times, ns, ks)


@dataclass
class Wke0Result:
    times: np.ndarray
    n0: np.ndarray             # (steps + 1, G), RK4 integration
    n_plus: np.ndarray
    n0_exp: np.ndarray         # n_in * exp(Simpson integral of gamma)
    gamma: np.ndarray          # gamma at step times
    sigma: np.ndarray          # sigma at step times

    def state(self, j: int, n: np.ndarray) -> KineticState:
        return KineticState(float(self.times[j]), n, self.n0[j], self.n_plus[j])

    def max_rel_deviation(self) -> float:
        den = np.maximum(np.abs(self.n0_exp), 1e-300)
        return float(np.max(np.abs(self.n0 - self.n0_exp) / den))


def solve_wke0(traj: Trajectory, n_in=None) -> Wke0Result:
    """Integrate dn0/dt = n0 * gamma_k(t) along a stored trajectory.

    gamma is evaluated at step ends and at Hermite midpoints so the RK4
    stages see the same trajectory that produced ``traj``.
    """
    grid = traj.grid
    n_in = traj.n[0] if n_in is None else np.asarray(n_in, dtype=float).ravel()
    if n_in.size != grid.size:
        raise UsageError("n_in does not match the trajectory grid")
    if np.max(np.abs(n_in - traj.n[0])) > 1e-12 * max(1.0, float(np.abs(n_in).max())):
        raise UsageError("n_in does not match the trajectory's initial state")
    eps = traj.quad.eps(grid, traj.beta)
    idx = np.arange(grid.size, dtype=np.int64)

    def sg(field_):
        F = np.ascontiguousarray(field_)
        r = _band_kernel(idx, grid.n, grid.d, traj.beta, grid.h, eps, F, F, F, 1)
        return r[:, 0], r[:, 1]

    steps = len(traj.times) - 1
    sig = np.empty((steps + 1, grid.size))
    gam = np.empty((steps + 1, grid.size))
    for j in range(steps + 1):
        sig[j], gam[j] = sg(traj.n[j])
    n0 = np.empty_like(traj.n)
    n0[0] = n_in
    log_int = np.zeros(grid.size)
    n0e = np.empty_like(traj.n)
    n0e[0] = n_in
    for j in range(steps):
        dt = traj.times[j + 1] - traj.times[j]
        _, gm = sg(traj.hermite(j, 0.5))
        g0, g1 = gam[j], gam[j + 1]
        y = n0[j]
        a1 = g0 * y
        a2 = gm * (y + 0.5 * dt * a1)
        a3 = gm * (y + 0.5 * dt * a2)
        a4 = g1 * (y + dt * a3)
        n0[j + 1] = y + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        log_int += dt / 6 * (g0 + 4 * gm + g1)
        n0e[j + 1] = n_in * np.exp(log_int)
    return Wke0Result(traj.times.copy(), n0, traj.n - n0, n0e, gam, sig)


def moment_mu_q(n0, n_plus, mu_list: Sequence[float], q: int):
    """sum_p C(q,p)^2 (q-p)! mu_p n0^p n_plus^(q-p)."""
    if q < 0:
        raise UsageError("q must be nonnegative")
    if len(mu_list) < q + 1:
        raise UsageError(f"need mu_0..mu_{q}, got {len(mu_list)} values")
    total = 0.0
    for p in range(q + 1):
        total = total + math.comb(q, p) ** 2 * math.factorial(q - p) * mu_list[p] * \
            np.power(n0, p) * np.power(n_plus, q - p)
    return total


def m_kin(n_traj) -> float:
    """1 + sup |n| over the stored snapshots."""
    arr = n_traj.n if isinstance(n_traj, Trajectory) else np.asarray(n_traj)
    if arr.size == 0:
        raise UsageError("empty trajectory")
    return 1.0 + float(np.max(np.abs(arr)))


def write_snapshot(path, grid: KineticGrid, beta, t: float, field_: np.ndarray, tag: str = "") -> None:
    """Header line (d, k_max, h, t, beta, optional config tag) then little-endian doubles."""
    header = (f"d={grid.d} k_max={grid.k_max!r} h={grid.h!r} t={t!r} "
              f"beta={','.join(repr(float(x)) for x in np.asarray(beta).ravel())}"
              + (f" config={tag}" if tag else "") + "\n")
    with open(path, "wb") as fh:
        fh.write(header.encode())
        fh.write(np.asarray(field_, dtype="<f8").ravel().tobytes())


def read_snapshot(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        data = np.frombuffer(fh.read(), dtype="<f8")
    meta = {}
    for tok in header:
        key, val = tok.split("=", 1)
        if key == "config":
            meta[key] = val
        else:
            meta[key] = [float(x) for x in val.split(",")] if key == "beta" else float(val)
    return meta, data.copy()


# --- exact-delta quadrature for analytic profiles -------------------------------------------

@dataclass(frozen=True)
class ExactDeltaRule:
    """Node counts for the exact-delta collision quadrature.

    p = k1 - k runs over a ball of radius ``radius`` in polar (d=2) or
    spherical (d=3) coordinates; for each p, q = k3 - k runs over the square
    [-radius, radius]^(d-1) in the hyperplane orthogonal to beta*p, where the
    frequency delta is supported.
    """

    radius: float
    n_radial: int = 16
    n_polar: int = 16
    n_azimuth: int = 16
    n_plane: int = 24

    def refined(self, factor: float = 1.5) -> "ExactDeltaRule":
        def up(x):
            return int(math.ceil(x * factor))
        return ExactDeltaRule(self.radius, up(self.n_radial), up(self.n_polar), up(self.n_azimuth),
                              up(self.n_plane))


def _gl(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _p_nodes(d: int, rule: ExactDeltaRule) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions u and weights including the Jacobian r^(d-1) dr dS (radius handled later)."""
    phi = 2 * math.pi * np.arange(rule.n_azimuth) / rule.n_azimuth
    wphi = np.full(rule.n_azimuth, 2 * math.pi / rule.n_azimuth)
    if d == 2:
        return np.stack([np.cos(phi), np.sin(phi)], axis=1), wphi
    c, wc = _gl(rule.n_polar, -1.0, 1.0)
    s = np.sqrt(1.0 - c * c)
    u = np.stack([np.outer(s, np.cos(phi)), np.outer(s, np.sin(phi)), np.outer(c, np.ones_like(phi))], axis=2)
    return u.reshape(-1, 3), np.outer(wc, wphi).ravel()


def _plane_basis(b: np.ndarray) -> np.ndarray:
    """(d-1, d) orthonormal basis of the hyperplane orthogonal to b."""
    d = len(b)
    bn = b / np.linalg.norm(b)
    if d == 2:
        return np.array([[-bn[1], bn[0]]])
    trial = np.eye(3)[int(np.argmin(np.abs(bn)))]
    e1 = np.cross(bn, trial)
    e1 /= np.linalg.norm(e1)
    return np.stack([e1, np.cross(bn, e1)])


def collision_exact_delta(profile: Callable[[np.ndarray], np.ndarray], k, beta,
                          rule: ExactDeltaRule) -> float:
    """K(n, n, n)(k) for an analytic profile, with both deltas resolved exactly.

    Omega = -2 <p, q>_beta vanishes on the hyperplane q . (beta p) = 0, and
    delta(-2 b.q) contributes the surface measure divided by 2|b|.  With
    p = r u the Jacobian r^(d-1) combines with 1/(2 r |beta u|) into a
    smooth integrand.
    """
    k = np.asarray(k, dtype=float).ravel()
    d = len(k)
    if d not in (2, 3):
        raise UsageError("exact-delta quadrature supports d = 2 and d = 3")
    b = _beta(beta, d)
    r, wr = _gl(rule.n_radial, 0.0, rule.radius)
    dirs, wdir = _p_nodes(d, rule)
    s, ws = _gl(rule.n_plane, -rule.radius, rule.radius)
    grids = np.meshgrid(*([s] * (d - 1)), indexing="ij")
    S = np.stack([g.ravel() for g in grids], axis=1)                 # (Q, d-1)
    WS = np.prod(np.meshgrid(*([ws] * (d - 1)), indexing="ij"), axis=0).ravel()
    n_k = float(profile(k[None, :])[0])
    total = 0.0
    for u, wu in zip(dirs, wdir):
        bu = b * u
        E = _plane_basis(bu)
        q = k + S @ E                                                 # k3 = k + q, (Q, d)
        n3 = profile(q)
        p = r[:, None] * u[None, :]                                   # (R, d)
        n1 = profile(k + p)                                           # (R,)
        k2 = p[:, None, :] + q[None, :, :]                            # (R, Q, d)
        n2 = profile(k2)
        br = (n1[:, None] * n2 * n3[None, :] - n_k * n2 * n3[None, :]
              + n1[:, None] * n_k * n3[None, :] - n1[:, None] * n2 * n_k)
        jac = wr * r ** (d - 2) / (2.0 * np.linalg.norm(bu))
        total += wu * float(jac @ (br @ WS))
    return total


def collision_reference(profile: Callable[[np.ndarray], np.ndarray], ks, beta, rule: ExactDeltaRule
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Exact-delta values at points ks and an error estimate |K(rule) - K(refined rule)|.

    The refined value is returned, with the difference as its error bar.
    """
    ks = np.atleast_2d(np.asarray(ks, dtype=float))
    fine = rule.refined()
    lo = np.array([collision_exact_delta(profile, k, beta, rule) for k in ks])
    hi = np.array([collision_exact_delta(profile, k, beta, fine) for k in ks])
    return hi, np.abs(hi - lo)
