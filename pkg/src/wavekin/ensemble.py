"""Random initial data, split-step evolution of cubic NLS, and Monte-Carlo moments.

Conventions.  The torus is [0, L]^d with the twisted Laplacian
(2 pi)^-1 sum_i beta_i d_i^2, so e^{2 pi i k.x} has eigenvalue -2 pi |k|_beta^2.
Fourier coefficients follow u(x) = L^-d sum_k u_hat(k) e^{2 pi i k.x} over
k in (Z/L)^d with integer numerators |i|_inf <= K.  NLS reads
i u_t - Lap u + lambda^2 |u|^2 u = 0; its linear flow multiplies u_hat(k) by
e^{2 pi i |k|^2 t} and its nonlinear flow multiplies u(x) by e^{i lambda^2 |u|^2 t}.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .density import RadialDensity, density_moments
from .lattice import BetaVector, KineticScaling, UsageError

WORKERS_ENV = "WAVEKIN_WORKERS"


class InstabilityError(RuntimeError):
    """A realization produced NaN or overflow."""


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer")


# --- laws --------------------------------------------------------------------------------

@dataclass
class RandomLaw:
    """Rotation-symmetric law of eta: only the law of |eta|^2 is specified.

    ``radial`` (for kind radial_tabulated) is the law of s = |eta|^2 as a
    RadialDensity; it is rescaled on construction so that mass and mu_1 are
    exactly one.
    """

    kind: str = "gaussian"
    radial: Optional[RadialDensity] = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform_phase", "radial_tabulated"):
            raise UsageError(f"unknown law {self.kind!r}")
        if self.kind == "radial_tabulated":
            if self.radial is None:
                raise UsageError("radial_tabulated needs a radial density")
            r = self.radial
            P = r.P / r.mass()
            tmp = RadialDensity(r.edges, P)
            m1 = density_moments(tmp, 1)
            self.radial = RadialDensity(r.edges / m1, P * m1)
            self._cdf = np.concatenate([[0.0], np.cumsum(self.radial.P * self.radial.widths)])
            self._cdf /= self._cdf[-1]

    def moments(self, rmax: int) -> list[float]:
        """mu_r = E|eta|^(2r), r = 0..rmax."""
        if self.kind == "gaussian":
            return [float(math.factorial(r)) for r in range(rmax + 1)]
        if self.kind == "uniform_phase":
            return [1.0] * (rmax + 1)
        return [density_moments(self.radial, r) for r in range(rmax + 1)]

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            z = rng.standard_normal(size=tuple(np.atleast_1d(size)) + (2,))
            return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)
        theta = rng.uniform(0.0, 2 * math.pi, size=size)
        if self.kind == "uniform_phase":
            return np.exp(1j * theta)
        u = rng.uniform(0.0, 1.0, size=size)
        s = np.interp(u, self._cdf, self.radial.edges)     # inverse of the piecewise-linear CDF
        return np.sqrt(s) * np.exp(1j * theta)


# --- torus and ensembles ---------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralTorus:
    """Modes k = i / L with integer numerators |i|_inf <= K on a torus of size L."""

    d: int
    L: float
    K: int
    beta: tuple = ()

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta) or (1.0,) * self.d
        BetaVector(beta)
        if len(beta) != self.d:
            raise UsageError("beta must have d entries")
        if self.K < 0:
            raise UsageError("K must be nonnegative")
        object.__setattr__(self, "beta", beta)

    @property
    def side(self) -> int:
        return 2 * self.K + 1

    @property
    def n_modes(self) -> int:
        return self.side ** self.d

    def numerators(self) -> np.ndarray:
        """(n_modes, d) numerators in lexicographic order."""
        ax = np.arange(-self.K, self.K + 1)
        g = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    def modes(self) -> np.ndarray:
        return self.numerators() / self.L

    def beta_sq(self) -> np.ndarray:
        return np.sum(np.asarray(self.beta) * self.modes() ** 2, axis=1)

    def index(self, numer) -> int:
        v = np.asarray(numer, dtype=np.int64).ravel()
        if len(v) != self.d or np.any(np.abs(v) > self.K):
            raise UsageError(f"mode {v.tolist()} outside the cutoff K={self.K}")
        j = 0
        for x in v:
            j = j * self.side + int(x + self.K)
        return j


@dataclass
class SpectralEnsemble:
    torus: SpectralTorus
    coeffs: np.ndarray              # (M, n_modes) complex, u_hat(t, k)
    t: float
    master_seed: int
    law: RandomLaw
    snapshots: list = field(default_factory=list)   # (t, coeffs copy)

    @property
    def M(self) -> int:
        return self.coeffs.shape[0]

    def mass(self) -> np.ndarray:
        """Per-realization mass L^-d sum_k |u_hat(k)|^2."""
        return np.sum(np.abs(self.coeffs) ** 2, axis=1) / self.torus.L ** self.torus.d

    def snapshot(self) -> None:
        self.snapshots.append((self.t, self.coeffs.copy()))


def realization_rng(master_seed: int, r: int) -> np.random.Generator:
    """Independent stream for realization r, a pure function of (master_seed, r)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(r)])))


def sample_initial_data(n_in: Callable[[np.ndarray], np.ndarray], law: RandomLaw, torus: SpectralTorus,
                        M: int, seed: int, first: int = 0) -> SpectralEnsemble:
    """u_hat_in(k) = sqrt(n_in(k)) eta_k with eta drawn per (realization, mode).

    Realizations first..first+M-1 are produced, so large ensembles can be
    generated in batches with identical results.
    """
    if M < 1:
        raise UsageError("M must be >= 1")
    vals = np.asarray(n_in(torus.modes()), dtype=float).ravel()
    if np.any(vals < 0):
        raise UsageError("n_in is negative at some lattice point")
    amp = np.sqrt(vals)
    coeffs = np.empty((M, torus.n_modes), dtype=complex)
    for r in range(M):
        coeffs[r] = amp * law.sample(realization_rng(seed, first + r), torus.n_modes)
    return SpectralEnsemble(torus, coeffs, 0.0, seed, law)


# --- evolution -------------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitStep:
    """FFT grid layout: ``n_grid`` points per axis; the mode box sits inside it.

    With ``dealias`` the grid has 4K+1 points, enough for the cubic product of
    box modes to be computed without aliasing, and the nonlinear substep is an
    implicit midpoint step of the truncated (Galerkin) cubic flow.  Without it the grid
    is the mode box itself (2K+1 points) and the substeps are exactly
    mass-preserving.
    """

    torus: SpectralTorus
    dealias: bool = False

    @property
    def n_grid(self) -> int:
        return 4 * self.torus.K + 1 if self.dealias else self.torus.side

    def fft_index(self) -> tuple:
        """Positions of the mode box on the FFT grid (numerator i maps to i mod N)."""
        num = self.torus.numerators() % self.n_grid
        return tuple(num[:, m] for m in range(self.torus.d))


def default_dt(torus: SpectralTorus) -> float:
    """Fastest linear phase advances pi/8 per step: 2 pi max|k|^2 dt = pi/8."""
    mx = float(torus.beta_sq().max())
    return 1.0 / (16.0 * mx) if mx > 0 else 1.0


def _evolve_batch(coeffs: np.ndarray, torus: SpectralTorus, lam2: float, dt: float, steps: int,
                  dealias: bool, record: Optional[Callable] = None, first: int = 0,
                  tol: float = 1e-14, max_iter: int = 60, precision: str = "double") -> np.ndarray:
    """Strang splitting N(dt/2) L(dt) N(dt/2) for a batch (B, n_modes).

    ``precision="single"`` runs the undealiased loop in complex64; the
    returned coefficients are always complex128."""
    ss = SplitStep(torus, dealias)
    N, d, L = ss.n_grid, torus.d, torus.L
    pos = ss.fft_index()
    B = coeffs.shape[0]
    shape = (B,) + (N,) * d
    lin = np.exp(2j * math.pi * torus.beta_sq() * dt)
    fwd = (L / N) ** d            # u_hat = fwd * fftn(u)
    inv = (N / L) ** d            # u = inv * ifftn(u_hat)
    axes = tuple(range(1, d + 1))
    a = coeffs.copy()

    def to_grid(c):
        g = np.zeros(shape, dtype=complex)
        g[(slice(None),) + pos] = c
        return inv * sfft.ifftn(g, axes=axes)

    def to_modes(u):
        return fwd * sfft.fftn(u, axes=axes)[(slice(None),) + pos]

    half = 0.5 * dt * lam2

    def check(a, s):
        if not np.all(np.isfinite(a)):
            bad = int(np.nonzero(~np.all(np.isfinite(a), axis=1))[0][0])
            raise InstabilityError(f"realization {first + bad} became non-finite at step {s + 1}")

    if dealias:
        def galerkin(c):
            u = to_grid(c)
            return 1j * to_modes((u.real ** 2 + u.imag ** 2) * u)

        def midpoint(c, s):
            # implicit midpoint on the truncated cubic flow: symmetric and mass-exact
            v = c + half * galerkin(c)
            for _ in range(max_iter):
                nxt = c + half * galerkin(0.5 * (c + v))
                done = np.max(np.abs(nxt - v)) <= tol * max(1.0, float(np.max(np.abs(nxt))))
                v = nxt
                if done:
                    return v
            check(v, s)
            raise InstabilityError(f"midpoint iteration did not converge at step {s + 1}; reduce dt")

        for s in range(steps):
            a = midpoint(lin * midpoint(a, s), s)
            check(a, s)
            if record is not None:
                record(s + 1, a)
        return a

    # the mode box is the whole FFT grid: stay in physical space and merge
    # adjacent nonlinear half steps, which commute because |u| is invariant
    cdt = np.complex64 if precision == "single" else np.complex128
    lin_grid = np.zeros((N,) * d, dtype=cdt)
    lin_grid[pos] = lin
    u = to_grid(a).astype(cdt)

    def rotate(u, c):
        ph = c * (u.real ** 2 + u.imag ** 2)
        return u * (np.cos(ph) + 1j * np.sin(ph)).astype(cdt, copy=False)

    u = rotate(u, half)
    for s in range(steps):
        u = sfft.ifftn(sfft.fftn(u, axes=axes) * lin_grid, axes=axes)
        last = s == steps - 1
        if record is not None or last:
            v = rotate(u, half)
            a = to_modes(v.astype(complex))
            check(a, s)
            if record is not None:
                record(s + 1, a)
            if last:
                return a
        u = rotate(u, 2 * half)
    return a


def evolve_nls(ens: SpectralEnsemble, t_end: float, dt: Optional[float], scaling: KineticScaling,
               dealias: bool = False, snapshot_every: int = 0, workers: Optional[int] = None,
               batch: int = 256, precision: str = "double", coupling: Optional[float] = None) -> dict:
    """Advance every realization to microscopic time t_end; returns diagnostics.

    ``coupling`` overrides the scaling's lambda (0 gives the linear flow).

    The ensemble is updated in place.  Batches are processed independently and
    written back by realization index, so results do not depend on ``workers``.
    """
    if t_end < ens.t - 1e-15:
        raise UsageError(f"t_end={t_end} is before the current time {ens.t}")
    if t_end == ens.t:
        return {"steps": 0, "dt": 0.0, "max_mass_drift": 0.0}
    dt = dt if dt is not None else default_dt(ens.torus)
    if not dt > 0:
        raise UsageError("dt must be positive")
    if precision not in ("double", "single"):
        raise UsageError("precision must be 'double' or 'single'")
    steps = max(1, int(math.ceil((t_end - ens.t) / dt - 1e-9)))
    dt = (t_end - ens.t) / steps
    lam2 = (scaling.lam if coupling is None else float(coupling)) ** 2
    m0 = ens.mass()
    workers = workers or default_workers()
    t0 = ens.t
    snaps: dict[int, np.ndarray] = {}

    def run(lo):
        hi = min(ens.M, lo + batch)
        rec = None
        if snapshot_every:
            def rec(s, a, lo=lo, hi=hi):
                if s % snapshot_every == 0:
                    snaps.setdefault(s, np.empty_like(ens.coeffs))[lo:hi] = a
        ens.coeffs[lo:hi] = _evolve_batch(ens.coeffs[lo:hi], ens.torus, lam2, dt, steps, dealias, rec, lo,
                                          precision=precision)

    starts = list(range(0, ens.M, batch))
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, starts))
    else:
        for lo in starts:
            run(lo)
    for s in sorted(snaps):
        ens.snapshots.append((t0 + s * dt, snaps[s]))
    ens.t = t_end
    drift = float(np.max(np.abs(ens.mass() - m0) / np.maximum(m0, 1e-300)))
    return {"steps": steps, "dt": dt, "max_mass_drift": drift}


def gauge_transform(u_hat: np.ndarray, t: float, scaling: KineticScaling, mass, beta_sq: np.ndarray,
                    delta: float, direction: int = 1) -> np.ndarray:
    """Pass between u_hat(delta T_kin t, k) and the interaction variable a_k(t).

    a_k(t) = exp(-2 pi i |k|^2 delta T_kin t) exp(-2 i lambda^2 L^-d mass delta T_kin t) u_hat.
    ``mass`` is L^-d sum |u_hat|^2 (one value per realization); its volume
    average L^-d mass is what the resonant self-interaction rotates by.
    direction=+1 maps u_hat to a, -1 maps a back.  For gamma = 1 the first phase
    is exp(-delta pi i L^2 |k|^2 t).
    """
    if direction not in (1, -1):
        raise UsageError("direction must be +1 or -1")
    tau = delta * scaling.t_kin * t
    mass = np.asarray(mass, dtype=float)
    dens = mass / scaling.L ** scaling.d
    ph = -2 * math.pi * np.asarray(beta_sq)[None, :] * tau - 2 * scaling.lam ** 2 * dens[..., None] * tau
    out = np.asarray(u_hat) * np.exp(1j * direction * ph)
    return out.reshape(np.shape(u_hat))


# --- moments ---------------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentSpec:
    """Entries (numerator k_j, p_j, q_j) for E prod u_hat(k_j)^p_j conj(u_hat(k_j))^q_j."""

    entries: tuple

    def __post_init__(self):
        ents = tuple((tuple(int(x) for x in np.atleast_1d(k)), int(p), int(q)) for k, p, q in self.entries)
        keys = [k for k, _, _ in ents]
        if len(set(keys)) != len(keys):
            raise UsageError("moment spec has duplicate modes")
        if any(p < 0 or q < 0 for _, p, q in ents):
            raise UsageError("exponents must be nonnegative")
        object.__setattr__(self, "entries", ents)

    @property
    def balanced(self) -> bool:
        return sum(p for _, p, _ in self.entries) == sum(q for _, _, q in self.entries)


@dataclass
class MomentEstimate:
    value: complex
    stderr: float
    n: int


def _product(coeffs: np.ndarray, torus: SpectralTorus, spec: MomentSpec) -> np.ndarray:
    out = np.ones(coeffs.shape[0], dtype=complex)
    for k, p, q in spec.entries:
        c = coeffs[:, torus.index(k)]
        out = out * c ** p * np.conj(c) ** q
    return out


def batch_means(samples: np.ndarray, n_batches: int = 20) -> tuple[complex, float]:
    """Mean and batch-means standard error (contiguous batches in realization order)."""
    x = np.asarray(samples)
    n = len(x)
    mean = x.mean()
    nb = min(n_batches, n)
    if nb < 2:
        return complex(mean), float("nan")
    edges = np.linspace(0, n, nb + 1).astype(int)
    bm = np.array([x[edges[i]:edges[i + 1]].mean() for i in range(nb)])
    dev = np.abs(bm - mean) ** 2
    return complex(mean), float(math.sqrt(np.sum(dev) / (nb * (nb - 1))))


def estimate_moments(ens: SpectralEnsemble, specs: Sequence[MomentSpec], n_batches: int = 20
                     ) -> list[MomentEstimate]:
    out = []
    for spec in specs:
        if not isinstance(spec, MomentSpec):
            spec = MomentSpec(spec)
        v, se = batch_means(_product(ens.coeffs, ens.torus, spec), n_batches)
        out.append(MomentEstimate(v, se, ens.M))
    return out


def moments_csv(specs: Sequence[MomentSpec], ests: Sequence[MomentEstimate]) -> str:
    rows = ["k,p,q,re,im,stderr,n_realizations"]
    for spec, e in zip(specs, ests):
        ks = ";".join(" ".join(str(x) for x in k) for k, _, _ in spec.entries)
        ps = ";".join(str(p) for _, p, _ in spec.entries)
        qs = ";".join(str(q) for _, _, q in spec.entries)
        rows.append(f"{ks},{ps},{qs},{e.value.real:.12g},{e.value.imag:.12g},{e.stderr:.6g},{e.n}")
    return "\n".join(rows) + "\n"


def z_norm_mass_diag(ens: SpectralEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Z = sup over stored snapshots (and the current state) of
    (L^-d sum <k>^(10d) |a_k|^2)^(1/2), with <k> = (1 + |k|^2)^(1/2); plus the mass."""
    tor = ens.torus
    wgt = (1.0 + np.sum(tor.modes() ** 2, axis=1)) ** (5 * tor.d)
    states = [c for _, c in ens.snapshots] + [ens.coeffs]
    z2 = np.zeros(ens.M)
    for c in states:
        z2 = np.maximum(z2, (np.abs(c) ** 2 @ wgt) / tor.L ** tor.d)
    return np.sqrt(z2), ens.mass()


# --- persistence -----------------------------------------------------------------------------

def write_realization(path, torus: SpectralTorus, seed: int, r: int, t: float, coeffs: np.ndarray,
                      tag: str = "") -> None:
    """Header line (d, L, K, seed, realization, t, optional config tag) then little-endian complex doubles."""
    header = f"d={torus.d} L={torus.L!r} K={torus.K} seed={seed} r={r} t={t!r}" + (f" config={tag}" if tag else "") + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode())
        fh.write(np.asarray(coeffs, dtype="<c16").ravel().tobytes())


def read_realization(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        data = np.frombuffer(fh.read(), dtype="<c16")
    meta = {}
    for tok in header:
        k, v = tok.split("=", 1)
        meta[k] = v if k == "config" else float(v) if k in ("L", "t") else int(v)
    return meta, data.copy()
