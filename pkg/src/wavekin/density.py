"""Single-mode density evolution and its moment shadows.

A radial density rho(v) on C = R^2 is stored through the law of s = |v|^2:
P(s) = pi * rho(sqrt(s)), so that int P ds = 1.  In this variable the
drift-diffusion law  d_t rho = (sigma/4) Lap rho - (gamma/2) div(v rho)  becomes

    d_t P = d_s [ sigma s d_s P - gamma s P ],

which is discretized by finite volumes with Scharfetter-Gummel fluxes and
Crank-Nicolson in time.  The flux vanishes at s = 0 by construction and is set
to zero at s_max, so the scheme conserves mass to roundoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .lattice import UsageError

GAUSS_NODES = 8


@dataclass
class RadialDensity:
    """Cell averages P_i of the law of |v|^2 on cells [edges[i], edges[i+1]]."""

    edges: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        if self.edges[0] != 0.0 or np.any(np.diff(self.edges) <= 0):
            raise UsageError("edges must start at 0 and increase")
        if len(self.P) != len(self.edges) - 1:
            raise UsageError("one value per cell required")

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def radii(self) -> np.ndarray:
        return np.sqrt(self.centers)

    @property
    def rho(self) -> np.ndarray:
        """Density on C at the cell-center radii."""
        return self.P / math.pi

    def mass(self) -> float:
        return float(np.sum(self.P * self.widths))

    def copy(self) -> "RadialDensity":
        return RadialDensity(self.edges.copy(), self.P.copy())

    @classmethod
    def from_s_density(cls, f: Callable[[np.ndarray], np.ndarray], s_max: float, cells: int) -> "RadialDensity":
        """Exact (Gauss-Legendre) cell averages of a density f of s on a uniform grid."""
        edges = np.linspace(0.0, s_max, cells + 1)
        return cls(edges, _cell_avgs(f, edges))

    @classmethod
    def from_rho(cls, rho: Callable[[np.ndarray], np.ndarray], r_max: float, cells: int) -> "RadialDensity":
        """From a radial density rho(|v|) on C."""
        return cls.from_s_density(lambda s: math.pi * rho(np.sqrt(s)), r_max ** 2, cells)

    def to_csv(self, header: str = "") -> str:
        rows = [f"# {header}" if header else "# radial density", "r,rho"]
        rows += [f"{r:.12g},{v:.12g}" for r, v in zip(self.radii, self.rho)]
        return "\n".join(rows) + "\n"


def gaussian_s_density(n: float) -> Callable:
    """|v|^2 law of a complex Gaussian with variance n (exponential)."""
    return lambda s: np.exp(-s / n) / n


def gamma2_s_density(s):
    """Law of |eta|^2 ~ Gamma(2, 1/2): unit mean, mu_r = (r+1)!/2^r."""
    return 4.0 * s * np.exp(-2.0 * s)


def gamma2_moments(rmax: int) -> list[float]:
    return [math.factorial(r + 1) / 2 ** r for r in range(rmax + 1)]


def initial_density(rho_star: RadialDensity | Callable, n_in_k: float, cells: int = 4096,
                    s_max: Optional[float] = None) -> RadialDensity:
    """rho_k(0, v) = rho_*(v / sqrt(n_in)) / n_in.

    ``rho_star`` is either a RadialDensity (cell values are reused on the
    rescaled grid, which keeps the normalization exact) or a density of s
    (callable), in which case exact cell averages of P_*(s/n)/n are taken.
    """
    if not n_in_k > 0:
        raise UsageError("initial_density needs n_in(k) > 0")
    if isinstance(rho_star, RadialDensity):
        return RadialDensity(rho_star.edges * n_in_k, rho_star.P / n_in_k)
    s_max = s_max if s_max is not None else 64.0 * n_in_k
    return RadialDensity.from_s_density(lambda s: rho_star(s / n_in_k) / n_in_k, s_max, cells)


def density_moments(rho: RadialDensity, r: int) -> float:
    """int |v|^(2r) rho dv = int s^r P ds with the piecewise-constant reconstruction."""
    if r < 0:
        raise UsageError("r must be nonnegative")
    e = rho.edges
    return float(np.sum(rho.P * (e[1:] ** (r + 1) - e[:-1] ** (r + 1)) / (r + 1)))


@dataclass
class DriftDiffusionPath:
    """sigma_k(t), gamma_k(t) sampled on a time grid; evaluated by cubic splines."""

    times: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if not (len(self.times) == len(self.sigma) == len(self.gamma)) or len(self.times) < 2:
            raise UsageError("path arrays must share a time grid with at least two points")
        if np.any(np.diff(self.times) <= 0):
            raise UsageError("path times must increase")
        self._s = CubicSpline(self.times, self.sigma) if len(self.times) > 2 else None
        self._g = CubicSpline(self.times, self.gamma) if len(self.times) > 2 else None

    def negative_sigma(self) -> float:
        """Most negative sigma sample (0 if none); sigma < 0 is a diagnostic."""
        return float(min(0.0, self.sigma.min()))

    def at(self, t: float) -> tuple[float, float]:
        if t < self.times[0] - 1e-14 or t > self.times[-1] + 1e-12:
            raise UsageError(f"time {t} outside the path")
        if self._s is None:
            return (float(np.interp(t, self.times, self.sigma)), float(np.interp(t, self.times, self.gamma)))
        return float(self._s(t)), float(self._g(t))

    def integrals(self, t: np.ndarray, sub: int = 64) -> tuple[np.ndarray, np.ndarray]:
        """G(t) = int_0^t gamma and S(t) = int_0^t sigma exp(-G), by composite Simpson."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        fine = np.linspace(self.times[0], self.times[-1], sub * (len(self.times) - 1) + 1)
        if self._g is None:
            g = np.interp(fine, self.times, self.gamma)
            s = np.interp(fine, self.times, self.sigma)
        else:
            g, s = self._g(fine), self._s(fine)
        G = _cumsimpson(fine, g)
        S = _cumsimpson(fine, s * np.exp(-G))
        return np.interp(t, fine, G), np.interp(t, fine, S)


def _cumsimpson(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cumulative integral on a uniform grid: Simpson at even nodes, the quadratic
    interpolant's partial integral at odd nodes."""
    out = np.zeros_like(y)
    n = len(x)
    if n == 2:
        out[1] = 0.5 * (x[1] - x[0]) * (y[0] + y[1])
        return out
    acc = 0.0
    for i in range(0, n - 2, 2):
        acc += (x[i + 2] - x[i]) / 6 * (y[i] + 4 * y[i + 1] + y[i + 2])
        out[i + 2] = acc
        # odd node: Simpson to i plus a quadratic-interpolant piece on [x_i, x_{i+1}]
        hh = x[i + 1] - x[i]
        out[i + 1] = out[i] + hh / 12 * (5 * y[i] + 8 * y[i + 1] - y[i + 2])
    if n % 2 == 0 and n > 2:
        i = n - 3
        hh = x[n - 1] - x[n - 2]
        out[n - 1] = out[n - 2] + hh / 12 * (-y[i] + 8 * y[i + 1] + 5 * y[i + 2])
    return out


def _bern(x: np.ndarray) -> np.ndarray:
    """B(x) = x / (exp(x) - 1) with B(0) = 1."""
    out = np.ones_like(x)
    nz = np.abs(x) > 1e-12
    out[nz] = x[nz] / np.expm1(x[nz])
    return out


def _operator(rho: RadialDensity, sigma: float, gamma: float) -> np.ndarray:
    """Banded (3, N) matrix A with dP/dt = A P."""
    c = rho.centers
    wdt = rho.widths
    N = len(c)
    sf = rho.edges[1:-1]                 # interior faces
    dl = c[1:] - c[:-1]
    if sigma > 0:
        pe = gamma * dl / sigma
        D = sigma * sf / dl
        cl = D * _bern(-pe)              # J = cl P_i - cr P_{i+1}
        cr = D * _bern(pe)
    else:
        cl = sf * max(gamma, 0.0)
        cr = sf * max(-gamma, 0.0)
    ab = np.zeros((3, N))
    # dP_i/dt = -(J_{i+1/2} - J_{i-1/2}) / w_i
    ab[1, :-1] -= cl / wdt[:-1]
    ab[0, 1:] += cr / wdt[:-1]           # coefficient of P_{i+1} in row i
    ab[1, 1:] -= cr / wdt[1:]
    ab[2, :-1] += cl / wdt[1:]           # coefficient of P_i in row i+1
    return ab


def _banded_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = ab[1] * x
    y[:-1] += ab[0, 1:] * x[1:]
    y[1:] += ab[2, :-1] * x[:-1]
    return y


@dataclass
class DensityTrajectory:
    times: np.ndarray
    states: list

    def mass_drift(self) -> float:
        return max(abs(s.mass() - 1.0) for s in self.states)

    def min_value(self) -> float:
        return min(float(s.P.min()) for s in self.states)


def evolve_density(rho0: RadialDensity, path: DriftDiffusionPath, dt: float,
                   t_end: Optional[float] = None, save_every: int = 1) -> DensityTrajectory:
    """Crank-Nicolson with Scharfetter-Gummel fluxes; sigma, gamma from the path."""
    if not dt > 0:
        raise UsageError("dt must be positive")
    t0 = float(path.times[0])
    t_end = float(path.times[-1]) if t_end is None else float(t_end)
    if t_end > path.times[-1] + 1e-12:
        raise UsageError("the path does not cover t_end")
    if path.negative_sigma() < 0:
        raise UsageError(f"sigma must be nonnegative (min {path.negative_sigma():.3e})")
    steps = max(1, int(math.ceil((t_end - t0) / dt - 1e-9)))
    dt = (t_end - t0) / steps
    rho = rho0.copy()
    times, states = [t0], [rho0.copy()]
    A_old = _operator(rho, *path.at(t0))
    for k in range(steps):
        t1 = t0 + (k + 1) * dt
        A_new = _operator(rho, *path.at(t1))
        rhs = rho.P + 0.5 * dt * _banded_matvec(A_old, rho.P)
        lhs = -0.5 * dt * A_new
        lhs[1] += 1.0
        rho = RadialDensity(rho.edges, solve_banded((1, 1), lhs, rhs))
        A_old = A_new
        if (k + 1) % save_every == 0 or k == steps - 1:
            times.append(t1)
            states.append(rho.copy())
    return DensityTrajectory(np.array(times), states)


def gaussian_variance_path(n0: float, path: DriftDiffusionPath, t) -> np.ndarray:
    """Solution of n' = sigma + gamma n, n(0) = n0, via the integrals G and S."""
    G, S = path.integrals(t)
    return np.exp(G) * (n0 + S)


def l1_distance(rho: RadialDensity, f_s: Callable[[np.ndarray], np.ndarray]) -> float:
    """int |P - f| ds with Gauss-Legendre cell quadrature of the exact density."""
    ref = _cell_avgs(f_s, rho.edges)
    return float(np.sum(np.abs(rho.P - ref) * rho.widths))


def _cell_avgs(f, edges):
    x, w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    lo, hi = edges[:-1, None], edges[1:, None]
    s = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
    return 0.5 * np.sum(w[None, :] * f(s), axis=1)


# --- characteristic functions ---------------------------------------------------------------

def series_transform(mu_list: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """Phi(z) = sum_r (i z)^r mu_r / r! truncated at len(mu_list)."""
    mu = [float(m) for m in mu_list]

    def phi(z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        term = np.ones_like(z)
        for r, m in enumerate(mu):
            if r:
                term = term * (1j * z) / r
            out = out + m * term
        return out

    return phi


def characteristic_flow(phi0: Callable | Sequence[float], n_in_k: float, path: DriftDiffusionPath,
                        t, xi) -> np.ndarray:
    """L(t, xi) = E exp(i xi |v|^2) along d_t L = gamma xi L_xi + sigma (i xi + i xi^2 L_xi) L.

    On characteristics w = 1/xi obeys w' = gamma w + i sigma, so with
    G = int gamma and S = int sigma exp(-G):  1/xi_0 = exp(-G)/xi - i S and
    L(t, xi) = L(0, xi_0) xi_0 / (xi exp(G)).  L(0, .) = Phi(n_in .), where Phi is
    the transform of |eta|^2, given as a callable or through mu_0..mu_R.
    Returns an array of shape (len(t), len(xi)).
    """
    phi = phi0 if callable(phi0) else series_transform(phi0)
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    G, S = path.integrals(t)
    out = np.empty((len(t), len(xi)), dtype=complex)
    for j in range(len(t)):
        eG = math.exp(G[j])
        with np.errstate(divide="ignore", invalid="ignore"):
            inv0 = 1.0 / (eG * xi) - 1j * S[j]
            xi0 = 1.0 / inv0
            val = phi(n_in_k * xi0) * xi0 / (xi * eG)
        small = np.abs(xi) == 0
        val[small] = 1.0
        out[j] = val
    return out


def taylor_coefficients(f: Callable[[np.ndarray], np.ndarray], radius: float, n_coef: int,
                        n_points: int = 64) -> np.ndarray:
    """c_r of f(xi) = sum c_r xi^r by the trapezoidal Cauchy integral on |xi| = radius."""
    theta = 2 * np.pi * np.arange(n_points) / n_points
    z = radius * np.exp(1j * theta)
    c = np.fft.fft(f(z)) / n_points
    return c[:n_coef] / radius ** np.arange(n_coef)


def flow_moments(phi0, n_in_k: float, path: DriftDiffusionPath, t: float, rmax: int,
                 radius: Optional[float] = None, n_points: int = 64) -> np.ndarray:
    """mu_r(t) = r! [xi^r] L(t, xi) / i^r for r = 0..rmax."""
    if radius is None:
        G, S = path.integrals([t])
        scale = math.exp(G[0]) * (n_in_k + S[0])
        radius = 0.1 / max(scale, 1e-12)
    c = taylor_coefficients(lambda z: characteristic_flow(phi0, n_in_k, path, [t], z)[0],
                            radius, rmax + 1, n_points)
    r = np.arange(rmax + 1)
    fact = np.array([math.factorial(int(k)) for k in r], dtype=float)
    return np.real(c * fact / (1j) ** r)
