"""Anisotropic lattice geometry.

The torus has aspect ratios ``beta``; Fourier modes live on the rescaled
lattice ``(Z / L)^d``.  Lattice points keep their integer numerators so that
equality tests (interaction coefficients, leaf pairing) never touch floats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np


class UsageError(ValueError):
    """Raised for malformed arguments (maps to CLI exit code 2)."""


@dataclass(frozen=True)
class BetaVector:
    entries: tuple[float, ...]

    def __post_init__(self):
        ent = tuple(float(b) for b in self.entries)
        if len(ent) < 1:
            raise UsageError("beta needs at least one entry")
        if any(not (b > 0) for b in ent):
            raise UsageError(f"beta entries must be positive, got {ent}")
        object.__setattr__(self, "entries", ent)

    @property
    def d(self) -> int:
        return len(self.entries)

    def array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=float)

    @classmethod
    def isotropic(cls, d: int) -> "BetaVector":
        return cls((1.0,) * d)

    @classmethod
    def generic(cls, d: int, seed: int) -> "BetaVector":
        """Seeded draw from the uniform law on [1, 2]^d."""
        rng = np.random.default_rng(seed)
        return cls(tuple(rng.uniform(1.0, 2.0, size=d)))


@dataclass(frozen=True)
class LatticePoint:
    """The point ``numerator / L`` of ``(Z/L)^d``."""

    numerator: tuple[int, ...]
    L: float = 1.0

    def __post_init__(self):
        num = tuple(int(x) for x in self.numerator)
        if any(n != x for n, x in zip(num, self.numerator)):
            raise UsageError("lattice numerators must be integers")
        object.__setattr__(self, "numerator", num)

    @property
    def d(self) -> int:
        return len(self.numerator)

    def vector(self) -> np.ndarray:
        return np.asarray(self.numerator, dtype=float) / self.L

    def __add__(self, other: "LatticePoint") -> "LatticePoint":
        _same_scale(self, other)
        return LatticePoint(tuple(a + b for a, b in zip(self.numerator, other.numerator)), self.L)

    def __sub__(self, other: "LatticePoint") -> "LatticePoint":
        _same_scale(self, other)
        return LatticePoint(tuple(a - b for a, b in zip(self.numerator, other.numerator)), self.L)


def _same_scale(a: LatticePoint, b: LatticePoint) -> None:
    if a.L != b.L or a.d != b.d:
        raise UsageError("lattice points live on different lattices")


Vec = Union[LatticePoint, Sequence[float], np.ndarray]


def _vec(k: Vec) -> np.ndarray:
    if isinstance(k, LatticePoint):
        return k.vector()
    return np.asarray(k, dtype=float)


def _beta(beta: Union[BetaVector, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(beta, BetaVector):
        return beta.array()
    return np.asarray(beta, dtype=float)


def beta_inner(k: Vec, l: Vec, beta) -> float | np.ndarray:
    """Weighted inner product sum_i beta_i k_i l_i (broadcasts over leading axes)."""
    kv, lv, b = _vec(k), _vec(l), _beta(beta)
    if kv.shape[-1] != b.shape[0] or lv.shape[-1] != b.shape[0]:
        raise UsageError(f"dimension mismatch: {kv.shape}, {lv.shape} vs beta of length {b.shape[0]}")
    out = np.sum(b * kv * lv, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def beta_norm_sq(k: Vec, beta) -> float | np.ndarray:
    return beta_inner(k, k, beta)


def resonance_factor(k1: Vec, k2: Vec, k3: Vec, k: Vec, beta) -> float | np.ndarray:
    """|k1|^2 - |k2|^2 + |k3|^2 - |k|^2 in the beta metric."""
    return (beta_norm_sq(k1, beta) - beta_norm_sq(k2, beta)
            + beta_norm_sq(k3, beta) - beta_norm_sq(k, beta))


def resonance_factor_conserving(k1: Vec, k3: Vec, k: Vec, beta) -> float | np.ndarray:
    """Factored form 2<k1 - k, k - k3>, valid when k2 = k1 + k3 - k."""
    return 2.0 * beta_inner(_vec(k1) - _vec(k), _vec(k) - _vec(k3), beta)


def epsilon_coeff(k1, k2, k3) -> int:
    """Interaction coefficient: 1 off the degenerate set, -1 when all equal, else 0.

    Inputs are LatticePoints or integer tuples; comparison is exact.
    """
    a, b, c = (_exact(x) for x in (k1, k2, k3))
    if b != a and b != c:
        return 1
    if a == b == c:
        return -1
    return 0


def _exact(x) -> tuple:
    if isinstance(x, LatticePoint):
        return (x.L,) + x.numerator
    arr = np.asarray(x)
    if arr.dtype.kind not in "iu" and not all(float(v).is_integer() for v in arr.ravel()):
        raise UsageError("epsilon_coeff needs exact lattice points (integer numerators)")
    return tuple(int(v) for v in arr.ravel())


# --- kinetic scaling -------------------------------------------------------

@dataclass(frozen=True)
class KineticScaling:
    L: float
    d: int
    gamma: float
    alpha: float = field(init=False)
    lam: float = field(init=False)
    t_kin: float = field(init=False)
    iterated_limit: bool = field(init=False)

    def __post_init__(self):
        if not self.L > 1:
            raise UsageError("box size L must exceed 1")
        if self.gamma < 0:
            raise UsageError("scaling exponent must be nonnegative")
        alpha = self.L ** (-self.gamma)
        lam = math.sqrt(alpha * self.L ** self.d)
        # recompute alpha from lambda so the defining relation holds exactly
        alpha = lam * lam * self.L ** (-self.d)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "t_kin", 1.0 / (2.0 * alpha * alpha))
        object.__setattr__(self, "iterated_limit", self.gamma == 0)


def kinetic_parameters(L: float, d: int, gamma: float = 1.0) -> KineticScaling:
    """Coupling, nonlinearity strength and kinetic time for the law alpha = L^-gamma.

    ``gamma == 0`` is accepted but flagged: alpha then does not shrink with L and
    the kinetic limit has to be read as an iterated limit.
    """
    return KineticScaling(float(L), int(d), float(gamma))


# --- genericity audit ------------------------------------------------------

@dataclass
class GenericityReport:
    violations: list[tuple[int, int, float, float]]
    counts: dict[int, int]
    fitted_exponent: float | None
    generic_exponent: float

    @property
    def ok(self) -> bool:
        return not self.violations


def _diophantine_lower(K1: np.ndarray, K2: np.ndarray, c0: float) -> np.ndarray:
    s = 1.0 + np.abs(K1) + np.abs(K2)
    return c0 / s / np.log(1.0 + s) ** 4


def small_inner_count(beta, R: int) -> int:
    """#{(X,Y,Z) in box^3 : X != 0, |<X,Y>|, |<X,Z>| <= 1}, box = {|.|_inf <= R}.

    For each X the Y- and Z-conditions are independent, so the triple count is
    sum_X c(X)^2 with c(X) = #{Y : |<X,Y>| <= 1}.
    """
    b = _beta(beta)
    d = b.shape[0]
    axis = np.arange(-R, R + 1)
    pts = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d).astype(float)
    xs = pts[np.any(pts != 0, axis=1)]
    bw = pts * b
    total = 0
    for start in range(0, len(xs), 256):
        ip = xs[start:start + 256] @ bw.T
        c = np.count_nonzero(np.abs(ip) <= 1.0 + 1e-12, axis=1).astype(np.int64)
        total += int(np.sum(c * c))
    return total


def generic_beta_audit(beta, k_max: int, c0: float, radii: Sequence[int] = (2, 3, 4)) -> GenericityReport:
    """Scan for small linear forms in (beta_1, beta_2) and count near-orthogonal triples.

    A violation is data, not an error: the report lists every integer pair
    (K1, K2) with 0 < |K1| + |K2| <= k_max whose form falls below the
    Diophantine lower bound with constant ``c0``.
    """
    b = _beta(beta)
    if b.shape[0] < 2:
        raise UsageError("genericity audit needs d >= 2")
    if k_max < 1:
        raise UsageError("k_max must be >= 1")
    ax = np.arange(-k_max, k_max + 1)
    K1, K2 = np.meshgrid(ax, ax, indexing="ij")
    mask = (np.abs(K1) + np.abs(K2) <= k_max) & ((K1 != 0) | (K2 != 0))
    # (K1, K2) and (-K1, -K2) give the same value; keep one representative
    mask &= (K1 > 0) | ((K1 == 0) & (K2 > 0))
    val = np.abs(b[0] * K1 + b[1] * K2)
    low = _diophantine_lower(K1, K2, c0)
    bad = mask & (val < low)
    violations = [(int(a), int(c), float(v), float(w))
                  for a, c, v, w in zip(K1[bad], K2[bad], val[bad], low[bad])]
    counts = {int(R): small_inner_count(b, int(R)) for R in radii}
    fitted = None
    if len(counts) >= 2:
        rs = np.array(sorted(counts))
        cs = np.array([counts[r] for r in rs], dtype=float)
        fitted = float(np.polyfit(np.log(rs), np.log(cs), 1)[0])
    d = b.shape[0]
    return GenericityReport(violations, counts, fitted, 3 * d - 4 + 1 / 6)
