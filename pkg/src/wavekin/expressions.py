"""Exact evaluation of tree and garden expressions on a tiny truncated lattice.

The time factor of a tree is an iterated integral over the domain where each
branching node's time lies below its parent's time (and below t at the root).
It is computed in closed form: every partial antiderivative is a finite sum of
terms ``c * s**p * exp(1j * w * s)``.

Decorations are enumerated exhaustively over a window ``|k|_inf <= K`` of the
lattice: every node value (leaves and branching nodes) must lie in the window.
The same truncation is used by the Picard oracle, so both sides describe the
same finite-dimensional system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C

from .cumulants import block_type, lambda_coefficients
from .diagrams import (CHILD_SIGN, Garden, OverGarden, Shape, enumerate_trees, is_leaf,
                       leaf_paths, node_sign, nodes)
from .lattice import UsageError

SERIES_TERMS = 200
MAX_NODES = 12


# --- iterated time integrals ----------------------------------------------------

Terms = dict  # (power p, frequency w) -> complex coefficient


def _mul(a: Terms, b: Terms) -> Terms:
    out: Terms = {}
    for (p, w), c in a.items():
        for (q, v), d in b.items():
            key = (p + q, w + v)
            out[key] = out.get(key, 0) + c * d
    return out


def _integrate(f: Terms, T: float) -> Terms:
    """Antiderivative from 0: s -> int_0^s f(r) dr, as a term dict.

    A term c r^p e^{iwr} with |w| T > (p + 2) / 2 uses the finite closed form,
    whose coefficients are then bounded.  Otherwise it uses
    e^{iws} sum_j (-iw)^j p!/(p+1+j)! s^(p+1+j), whose terms shrink at least
    geometrically with ratio 1/2 on [0, T]; w = 0 reduces to a single power.
    """
    out: Terms = {}

    def add(key, val):
        out[key] = out.get(key, 0) + val

    for (p, w), c in f.items():
        if w == 0.0:
            add((p + 1, 0.0), c / (p + 1))
            continue
        if abs(w) * T <= 0.5 * (p + 2):
            term = c / (p + 1)
            head = abs(term) * T ** (p + 1)
            for j in range(SERIES_TERMS):
                add((p + 1 + j, w), term)
                term = term * (-1j * w) / (p + 2 + j)
                if abs(term) * T ** (p + 2 + j) < 1e-18 * head:
                    break
            continue
        # int_0^s r^p e^{iwr} dr = sum_j (-1)^j p!/(p-j)! s^(p-j) e^{iws}/(iw)^(j+1) - (-1)^p p!/(iw)^(p+1)
        iw = 1j * w
        fall = 1.0
        for j in range(p + 1):
            add((p - j, w), c * (-1) ** j * fall / iw ** (j + 1))
            fall *= p - j
        add((0, 0.0), -c * (-1) ** p * math.factorial(p) / iw ** (p + 1))
    return out


def _evaluate(f: Terms, s: float) -> complex:
    return complex(sum(c * s ** p * np.exp(1j * w * s) for (p, w), c in f.items()))


def _tree_terms(shape: Shape, omegas: dict, path: tuple, T: float) -> Terms:
    """Antiderivative structure of the node at `path` as a function of its upper limit."""
    integrand: Terms = {(0, omegas[path]): 1.0}
    for c, sub in enumerate(shape):
        if not is_leaf(sub):
            integrand = _mul(integrand, _tree_terms(sub, omegas, path + (c,), T))
    return _integrate(integrand, T)


def tree_time_integral(shape: Shape, omegas: dict, t: float) -> complex:
    """Integral of prod_n exp(i*omegas[n]*t_n) over the nested domain below t.

    ``omegas`` maps branching-node paths to angular frequencies.  The trivial
    tree gives 1.
    """
    if is_leaf(shape):
        return 1.0 + 0j
    if sum(1 for _, s in nodes(shape) if not is_leaf(s)) > MAX_NODES:
        raise UsageError(f"more than {MAX_NODES} branching nodes")
    return _evaluate(_tree_terms(shape, omegas, (), t), t)


def simplex_time_integral(shapes: Sequence[Shape], omegas: Sequence[dict], t: float) -> complex:
    """Time factor of a garden: the domain splits into one nested domain per tree."""
    if sum(sum(1 for _, s in nodes(sh) if not is_leaf(s)) for sh in shapes) > MAX_NODES:
        raise UsageError(f"more than {MAX_NODES} branching nodes")
    out = 1.0 + 0j
    for sh, om in zip(shapes, omegas):
        out *= tree_time_integral(sh, om, t)
    return out


def chain_shape(n: int) -> Shape:
    """Tree whose branching nodes form a single descending chain of length n."""
    s: Shape = ()
    for _ in range(n):
        s = (s, (), ())
    return s


# --- tiny lattice --------------------------------------------------------------------

@dataclass(frozen=True)
class TinyLattice:
    """Window |k|_inf <= K of (Z/L)^d with the parameters entering the expansion."""

    d: int = 1
    K: int = 2
    L: float = 2.0
    delta: float = 0.25
    beta: tuple = (1.0,)
    modes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        if len(beta) != self.d:
            raise UsageError("beta must have d entries")
        object.__setattr__(self, "beta", beta)
        ax = np.arange(-self.K, self.K + 1)
        grid = np.stack(np.meshgrid(*([ax] * self.d), indexing="ij"), axis=-1).reshape(-1, self.d)
        object.__setattr__(self, "modes", grid)

    @property
    def size(self) -> int:
        return (2 * self.K + 1) ** self.d

    @property
    def coupling(self) -> float:
        return self.delta / (2.0 * self.L ** (self.d - 1))

    def index(self, v: np.ndarray) -> np.ndarray:
        """Mode index of integer numerators (..., d); meaningless outside the window."""
        base = 2 * self.K + 1
        idx = np.zeros(v.shape[:-1], dtype=np.int64)
        for i in range(self.d):
            idx = idx * base + (v[..., i] + self.K)
        return idx

    def inside(self, v: np.ndarray) -> np.ndarray:
        return np.all(np.abs(v) <= self.K, axis=-1)

    def omega_int(self, k1, k2, k3, k) -> np.ndarray:
        """delta * L^2 * Omega, with Omega evaluated at numerators / L."""
        b = np.asarray(self.beta)
        q = lambda v: np.sum(b * v.astype(float) ** 2, axis=-1)
        return self.delta * (q(k1) - q(k2) + q(k3) - q(k))

    def profile(self, n_in: Callable) -> np.ndarray:
        """n_in evaluated at every window mode (physical momenta numerators / L)."""
        vals = np.asarray([n_in(m / self.L) for m in self.modes], dtype=float)
        if np.any(vals < 0):
            raise UsageError("n_in must be nonnegative")
        return vals


def _eps(k1, k2, k3) -> np.ndarray:
    e12 = np.all(k1 == k2, axis=-1)
    e23 = np.all(k2 == k3, axis=-1)
    out = np.where(~e12 & ~e23, 1, 0)
    return np.where(e12 & e23, -1, out)


@dataclass
class TreeDecorations:
    """Vectorized decorations of one signed tree (rows = decorations)."""

    shape: Shape
    sign: int
    leaves: np.ndarray     # (A, n_leaves, d) numerators in leaf preorder
    root: np.ndarray       # (A, d)
    eps: np.ndarray        # (A,)
    omega: np.ndarray      # (A, n_branch) signed angular frequencies
    branch_paths: list
    ok: np.ndarray         # (A,) all node values inside the window


def decorate(lat: TinyLattice, shape: Shape, sign: int, leaves: np.ndarray) -> TreeDecorations:
    """Propagate given leaf values bottom-up (values k = k1 - k2 + k3)."""
    A = leaves.shape[0]
    lp = leaf_paths(shape)
    col = {p: i for i, p in enumerate(lp)}
    bpaths = [p for p, s in nodes(shape) if not is_leaf(s)]
    omega = np.zeros((A, len(bpaths)))
    eps = np.ones(A, dtype=np.int64)
    ok = np.all(lat.inside(leaves), axis=1) if lp else np.ones(A, bool)
    bidx = {p: i for i, p in enumerate(bpaths)}

    def value(sub, path):
        nonlocal eps, ok
        if is_leaf(sub):
            return leaves[:, col[path], :]
        k1, k2, k3 = (value(c, path + (i,)) for i, c in enumerate(sub))
        k = k1 - k2 + k3
        eps = eps * _eps(k1, k2, k3)
        ok = ok & lat.inside(k)
        omega[:, bidx[path]] = math.pi * node_sign(sign, path) * lat.omega_int(k1, k2, k3, k)
        return k

    root = value(shape, ())
    return TreeDecorations(shape, sign, leaves, root, eps, omega, bpaths, ok)


def _time_factors(decs: Sequence[TreeDecorations], rows: np.ndarray, t: float) -> np.ndarray:
    """Garden time factor for the selected rows, cached over repeated frequency tuples."""
    if not len(rows):
        return np.zeros(0, dtype=complex)
    omega = np.concatenate([dc.omega[rows] for dc in decs], axis=1)
    if omega.shape[1] == 0:
        return np.ones(len(rows), dtype=complex)
    uniq, inv = np.unique(omega, axis=0, return_inverse=True)
    vals = np.empty(len(uniq), dtype=complex)
    for u, row in enumerate(uniq):
        oms, pos = [], 0
        for dc in decs:
            nb = len(dc.branch_paths)
            oms.append({p: float(row[pos + i]) for i, p in enumerate(dc.branch_paths)})
            pos += nb
        vals[u] = simplex_time_integral([dc.shape for dc in decs], oms, t)
    return vals[np.ravel(inv)]


def _node_phase(shapes: Sequence[Shape], signs: Sequence[int]) -> complex:
    out = 1 + 0j
    for sh, s in zip(shapes, signs):
        for p, sub in nodes(sh):
            if not is_leaf(sub):
                out *= 1j * node_sign(s, p)
    return out


def _n_branch(shapes) -> int:
    return sum(1 for sh in shapes for _, s in nodes(sh) if not is_leaf(s))


# --- single-tree expressions -------------------------------------------------------------

@dataclass
class TreePolynomial:
    """J_T(t)_k as a polynomial in the leaf variables: sum_rows coef * prod_l x_l[idx[row, l]].

    x_l is sqrt(n_in) * eta for + leaves and its conjugate for - leaves.
    """

    coef: np.ndarray       # (rows,)
    idx: np.ndarray        # (rows, n_leaves) mode indices
    leaf_signs: np.ndarray  # (n_leaves,)

    def evaluate(self, a_in: np.ndarray) -> np.ndarray:
        """Values for a batch of initial coefficient vectors a_in (M, modes) -> (M,)."""
        a_in = np.atleast_2d(a_in)
        x = [a_in if s == 1 else np.conj(a_in) for s in self.leaf_signs]
        out = np.zeros(a_in.shape[0], dtype=complex)
        if not len(self.coef):
            return out
        for start in range(0, len(self.coef), 4096):
            sl = slice(start, start + 4096)
            prod = np.broadcast_to(self.coef[sl], (a_in.shape[0], len(self.coef[sl]))).copy()
            for l, xl in enumerate(x):
                prod *= xl[:, self.idx[sl, l]]
            out += prod.sum(axis=1)
        return out

    def tensor(self, n_modes: int) -> np.ndarray:
        T = np.zeros((n_modes,) * len(self.leaf_signs), dtype=complex)
        np.add.at(T, tuple(self.idx.T), self.coef)
        return T


def tree_polynomials(lat: TinyLattice, shape: Shape, sign: int, t: float,
                     max_rows: int = 2_000_000) -> list[TreePolynomial]:
    """Enumerate every decoration of the signed tree once; one polynomial per root mode."""
    nl = len(leaf_paths(shape))
    if lat.size ** nl > max_rows:
        raise UsageError(f"{lat.size ** nl} leaf assignments exceed the cap {max_rows}")
    choice = np.array(list(product(range(lat.size), repeat=nl)), dtype=np.int64).reshape(-1, nl)
    dec = decorate(lat, shape, sign, lat.modes[choice])
    rows = np.nonzero(dec.ok & (dec.eps != 0))[0]
    pref = lat.coupling ** _n_branch([shape]) * _node_phase([shape], [sign])
    coef = pref * dec.eps[rows] * _time_factors([dec], rows, t)
    root = lat.index(dec.root[rows])
    lsigns = np.array([node_sign(sign, p) for p in leaf_paths(shape)])
    return [TreePolynomial(coef[root == m], choice[rows[root == m]], lsigns) for m in range(lat.size)]


def tree_polynomial(lat: TinyLattice, shape: Shape, sign: int, k: Sequence[int], t: float,
                    max_rows: int = 2_000_000) -> TreePolynomial:
    """Every k-decoration of the signed tree with its coefficient."""
    k = np.asarray(k, dtype=np.int64).reshape(lat.d)
    if not lat.inside(k):
        raise UsageError("k lies outside the window")
    return tree_polynomials(lat, shape, sign, t, max_rows)[int(lat.index(k))]


def evaluate_tree_iterate(lat: TinyLattice, shape: Shape, sign: int, k, t: float,
                          n_in_vals: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """The tree expression J_T(t)_k for realizations eta (M, modes) -> (M,)."""
    a_in = np.sqrt(n_in_vals) * np.atleast_2d(eta)
    return tree_polynomial(lat, shape, sign, k, t).evaluate(a_in)


# --- garden expressions -----------------------------------------------------------------

def _garden_sum(lat: TinyLattice, trees, signs, groups: Sequence[Sequence[tuple]],
                ks: Sequence, t: float, n_in_vals: np.ndarray) -> complex:
    """Sum over decorations where each leaf group carries one common window value."""
    leaf_lists = [leaf_paths(sh) for sh in trees]
    where = {}
    for gi, grp in enumerate(groups):
        for j, p in grp:
            where[(j, p)] = gi
    G = len(groups)
    assign = np.array(list(product(range(lat.size), repeat=G)), dtype=np.int64).reshape(-1, G)
    decs, ok = [], np.ones(len(assign), bool)
    eps = np.ones(len(assign), dtype=np.int64)
    for j, (sh, s) in enumerate(zip(trees, signs)):
        cols = [where[(j, p)] for p in leaf_lists[j]]
        leaves = lat.modes[assign[:, cols]] if cols else np.zeros((len(assign), 0, lat.d), np.int64)
        dc = decorate(lat, sh, s, leaves)
        ok &= dc.ok & np.all(dc.root == np.asarray(ks[j]).reshape(lat.d), axis=1)
        eps = eps * dc.eps
        decs.append(dc)
    rows = np.nonzero(ok & (eps != 0))[0]
    if not len(rows):
        return 0j
    weight = np.ones(len(rows))
    for grp in groups:
        gi = where[grp[0]]
        npos = sum(1 for j, p in grp if node_sign(signs[j], p) == 1)
        weight *= n_in_vals[assign[rows, gi]] ** npos
    tf = _time_factors(decs, rows, t)
    m = _n_branch(trees)
    pref = lat.coupling ** m * _node_phase(trees, signs)
    return complex(pref * np.sum(eps[rows] * tf * weight))


def evaluate_garden_expression(lat: TinyLattice, g: Garden, t: float, ks: Sequence,
                               n_in_vals: np.ndarray) -> complex:
    """The garden expression M_G(t, k_1..k_2R), boundary values given as numerators."""
    return _garden_sum(lat, g.trees, g.signs, [list(pr) for pr in g.pairs], ks, t, n_in_vals)


def evaluate_over_garden_expression(lat: TinyLattice, og: OverGarden, t: float, ks: Sequence,
                                    n_in_vals: np.ndarray) -> complex:
    return _garden_sum(lat, og.trees, og.signs, [list(b) for b in og.blocks], ks, t, n_in_vals)


def gaussian_pairing_sum(lat, trees, signs, ks, t, n_in_vals) -> complex:
    """sum over all pairings of M_G: the Gaussian expectation of prod_j J_{T_j}."""
    from .diagrams import perfect_matchings
    leaves = [(j, p) for j, sh in enumerate(trees) for p in leaf_paths(sh)]
    plus = [x for x in leaves if node_sign(signs[x[0]], x[1]) == 1]
    minus = [x for x in leaves if node_sign(signs[x[0]], x[1]) == -1]
    total = 0j
    for match in perfect_matchings(plus, minus):
        total += _garden_sum(lat, trees, signs, [list(pr) for pr in match], ks, t, n_in_vals)
    return total


def over_pairing_sum(lat, trees, signs, ks, t, n_in_vals, mu: Sequence) -> complex:
    """sum over over-pairings O of lambda(type of O) * M_{OG}."""
    from .diagrams import enumerate_over_gardens
    n = sum(len(leaf_paths(sh)) for sh in trees)
    lam = lambda_coefficients(n, list(mu)[: n // 2])
    total = 0j
    for og in enumerate_over_gardens(tuple(trees), tuple(signs)):
        w = lam[og.block_type()]
        if w != 0:
            total += float(w) * evaluate_over_garden_expression(lat, og, t, ks, n_in_vals)
    return total


def product_expectation_mc(lat: TinyLattice, trees, signs, ks, t: float, n_in_vals: np.ndarray,
                           eta_sampler: Callable[[np.random.Generator, int], np.ndarray],
                           n_real: int, seed: int, chunk: int = 5000) -> tuple[complex, float]:
    """Monte-Carlo mean and standard error of prod_j J_{T_j}(t)_{k_j}."""
    polys = [tree_polynomial(lat, sh, s, k, t) for sh, s, k in zip(trees, signs, ks)]
    rng = np.random.default_rng(seed)
    vals = []
    done = 0
    while done < n_real:
        m = min(chunk, n_real - done)
        eta = eta_sampler(rng, m)
        a_in = np.sqrt(n_in_vals) * eta
        prod = np.ones(m, dtype=complex)
        for P in polys:
            prod *= P.evaluate(a_in)
        vals.append(prod)
        done += m
    v = np.concatenate(vals)
    mean = v.mean()
    se = math.sqrt((np.var(v.real) + np.var(v.imag)) / len(v))
    return complex(mean), se


# --- Picard oracle ---------------------------------------------------------------------------

def _triples(lat: TinyLattice):
    """All (k1, k2, k3) in the window with k = k1 - k2 + k3 also in the window."""
    M = lat.size
    i1, i2, i3 = np.meshgrid(np.arange(M), np.arange(M), np.arange(M), indexing="ij")
    i1, i2, i3 = i1.ravel(), i2.ravel(), i3.ravel()
    k1, k2, k3 = lat.modes[i1], lat.modes[i2], lat.modes[i3]
    k = k1 - k2 + k3
    keep = lat.inside(k) & (_eps(k1, k2, k3) != 0)
    i1, i2, i3, k1, k2, k3, k = i1[keep], i2[keep], i3[keep], k1[keep], k2[keep], k3[keep], k[keep]
    return i1, i2, i3, lat.index(k), _eps(k1, k2, k3).astype(float), math.pi * lat.omega_int(k1, k2, k3, k)


def picard_terms(lat: TinyLattice, a_in: np.ndarray, t: float, order: int, n_nodes: int = 160
                 ) -> list[np.ndarray]:
    """Homogeneous terms J_0..J_order of the truncated equation for a_k at time t.

    J_n = sum over n1+n2+n3 = n-1 of the Duhamel integral of C_+(J_n1, conj J_n2, J_n3),
    integrated in time by Chebyshev interpolation on [0, t].
    """
    a_in = np.asarray(a_in, dtype=complex)
    x = -np.cos(np.pi * np.arange(n_nodes + 1) / n_nodes)   # Lobatto nodes on [-1, 1]
    s = 0.5 * t * (x + 1.0)
    i1, i2, i3, ik, eps, om = _triples(lat)
    phase = np.exp(1j * np.outer(s, om)) * eps               # (nodes, triples)
    M = lat.size
    J = [np.broadcast_to(a_in, (len(s), M)).astype(complex)]
    for n in range(1, order + 1):
        F = np.zeros((len(s), M), dtype=complex)
        for n1 in range(n):
            for n2 in range(n - n1):
                n3 = n - 1 - n1 - n2
                prod = J[n1][:, i1] * np.conj(J[n2][:, i2]) * J[n3][:, i3] * phase
                for j in range(len(s)):
                    F[j] += np.bincount(ik, weights=prod[j].real, minlength=M) \
                        + 1j * np.bincount(ik, weights=prod[j].imag, minlength=M)
        F *= 1j * lat.coupling
        Jn = np.empty_like(F)
        for part, dst in ((F.real, 0), (F.imag, 1)):
            coef = C.chebfit(x, part, n_nodes)
            integ = C.chebint(coef, lbnd=-1, scl=0.5 * t)
            vals = C.chebval(x, integ).T
            if dst == 0:
                Jn.real = vals
            else:
                Jn.imag = vals
        J.append(Jn)
    return [Jm[-1].copy() for Jm in J]


def tree_sum_by_scale(lat: TinyLattice, a_in: np.ndarray, t: float, n: int) -> np.ndarray:
    """sum over + trees of scale n of J_T(t)_k, for every window mode k."""
    out = np.zeros(lat.size, dtype=complex)
    for shape in enumerate_trees(n):
        for m, P in enumerate(tree_polynomials(lat, shape, 1, t)):
            out[m] += P.evaluate(a_in[None, :])[0]
    return out
