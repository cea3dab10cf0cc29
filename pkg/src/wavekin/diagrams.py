"""Signed ternary trees, gardens, skeleton reduction and chain detection.

Shapes are nested tuples: ``()`` is a leaf, ``(a, b, c)`` a branching node
with ordered children.  A node is addressed by its path, the tuple of child
positions from the root.  A node of sign s has children of signs (s, -s, s).

A garden is an ordered tuple of signed trees whose leaves are paired off in
opposite-sign pairs.  Leaves are addressed as ``(tree_index, path)``.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, permutations, product
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .lattice import UsageError

Shape = tuple
Path = tuple[int, ...]
LeafId = tuple[int, Path]
LEAF: Shape = ()
CHILD_SIGN = (1, -1, 1)
TREE_CAP = 7


# --- shapes ----------------------------------------------------------------

def is_leaf(shape: Shape) -> bool:
    return len(shape) == 0


def scale(shape: Shape) -> int:
    return 0 if is_leaf(shape) else 1 + sum(scale(c) for c in shape)


def n_leaves(shape: Shape) -> int:
    return 1 if is_leaf(shape) else sum(n_leaves(c) for c in shape)


def nodes(shape: Shape, prefix: Path = ()) -> Iterator[tuple[Path, Shape]]:
    """Preorder walk yielding (path, subtree)."""
    yield prefix, shape
    if not is_leaf(shape):
        for i, c in enumerate(shape):
            yield from nodes(c, prefix + (i,))


def leaf_paths(shape: Shape) -> list[Path]:
    return [p for p, s in nodes(shape) if is_leaf(s)]


def branch_paths(shape: Shape) -> list[Path]:
    return [p for p, s in nodes(shape) if not is_leaf(s)]


def subtree(shape: Shape, path: Path) -> Shape:
    for i in path:
        shape = shape[i]
    return shape


def replace(shape: Shape, path: Path, new: Shape) -> Shape:
    if not path:
        return new
    i = path[0]
    kids = list(shape)
    kids[i] = replace(shape[i], path[1:], new)
    return tuple(kids)


def node_sign(root_sign: int, path: Path) -> int:
    s = root_sign
    for i in path:
        s *= CHILD_SIGN[i]
    return s


@lru_cache(maxsize=None)
def _trees_of_scale(n: int) -> tuple[Shape, ...]:
    if n == 0:
        return (LEAF,)
    out = []
    for a in range(n):
        for b in range(n - a):
            c = n - 1 - a - b
            for ta in _trees_of_scale(a):
                for tb in _trees_of_scale(b):
                    for tc in _trees_of_scale(c):
                        out.append((ta, tb, tc))
    return tuple(out)


def enumerate_trees(n: int, cap: int = TREE_CAP) -> list[Shape]:
    """All ordered ternary trees with n branching nodes (signs are carried separately)."""
    if n < 0:
        raise UsageError("scale must be nonnegative")
    if n > cap:
        raise UsageError(f"scale {n} exceeds the cap {cap}")
    return list(_trees_of_scale(n))


def ternary_catalan(n: int) -> int:
    return math.comb(3 * n, n) // (2 * n + 1)


def second_max_product(shape: Shape) -> tuple[int, float, bool]:
    """Product over branching nodes of the second largest child leaf count.

    Returns (product, bound 3^n/(2n+1) as a float, product <= bound).
    """
    prod = 1
    for _, s in nodes(shape):
        if not is_leaf(s):
            counts = sorted((n_leaves(c) for c in s), reverse=True)
            prod *= counts[1]
    n = scale(shape)
    bound = 3 ** n / (2 * n + 1)
    return prod, bound, prod <= bound + 1e-12


def random_shape(rng: np.random.Generator, n: int) -> Shape:
    """Uniform random ordered ternary tree of scale n (by recursive counting)."""
    if n == 0:
        return LEAF
    weights = []
    splits = []
    for a in range(n):
        for b in range(n - a):
            c = n - 1 - a - b
            splits.append((a, b, c))
            weights.append(ternary_catalan(a) * ternary_catalan(b) * ternary_catalan(c))
    w = np.asarray(weights, dtype=float)
    a, b, c = splits[rng.choice(len(splits), p=w / w.sum())]
    return (random_shape(rng, a), random_shape(rng, b), random_shape(rng, c))


# --- gardens ---------------------------------------------------------------

@dataclass(frozen=True)
class Garden:
    trees: tuple[Shape, ...]
    signs: tuple[int, ...]
    pairs: tuple[tuple[LeafId, LeafId], ...]
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        trees = tuple(self.trees)
        signs = tuple(int(s) for s in self.signs)
        norm = []
        for a, b in self.pairs:
            a = (int(a[0]), tuple(a[1]))
            b = (int(b[0]), tuple(b[1]))
            norm.append((a, b) if a <= b else (b, a))
        object.__setattr__(self, "trees", trees)
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "pairs", tuple(sorted(norm)))
        if self.check:
            self.validate()

    # basic data
    @property
    def width(self) -> int:
        return len(self.trees)

    @property
    def R(self) -> int:
        return len(self.trees) // 2

    @property
    def scale(self) -> int:
        return sum(scale(t) for t in self.trees)

    def leaves(self) -> list[LeafId]:
        return [(j, p) for j, t in enumerate(self.trees) for p in leaf_paths(t)]

    def sign_of(self, node: LeafId) -> int:
        return node_sign(self.signs[node[0]], node[1])

    def partner_map(self) -> dict[LeafId, LeafId]:
        out = {}
        for a, b in self.pairs:
            out[a] = b
            out[b] = a
        return out

    def validate(self) -> None:
        if len(self.trees) != len(self.signs):
            raise UsageError("one sign per tree required")
        if len(self.trees) % 2:
            raise UsageError("garden width must be even")
        if sum(1 for s in self.signs if s == 1) != len(self.signs) // 2 or any(s not in (1, -1) for s in self.signs):
            raise UsageError(f"signature must have exactly half + entries: {self.signs}")
        leaves = set(self.leaves())
        seen = set()
        for a, b in self.pairs:
            for x in (a, b):
                if x not in leaves:
                    raise UsageError(f"{x} is not a leaf")
                if x in seen:
                    raise UsageError(f"leaf {x} paired twice")
                seen.add(x)
            if self.sign_of(a) != -self.sign_of(b):
                raise UsageError(f"pair {a}-{b} does not have opposite signs")
        if seen != leaves:
            raise UsageError("some leaves are unpaired")

    def __str__(self) -> str:
        return serialize_garden(self)


def trivial_garden(signs: Sequence[int]) -> Garden:
    """Width-2R garden of trivial trees; + roots paired with - roots in order."""
    plus = [j for j, s in enumerate(signs) if s == 1]
    minus = [j for j, s in enumerate(signs) if s == -1]
    return Garden(tuple(LEAF for _ in signs), tuple(signs),
                  tuple(((a, ()), (b, ())) for a, b in zip(plus, minus)))


def trivial_couple() -> Garden:
    return Garden((LEAF, LEAF), (1, -1), (((0, ()), (1, ())),))


def perfect_matchings(plus: Sequence, minus: Sequence) -> Iterator[list[tuple]]:
    if len(plus) != len(minus):
        return
    for perm in permutations(range(len(minus))):
        yield [(plus[i], minus[perm[i]]) for i in range(len(plus))]


def enumerate_gardens(scales: Sequence[int], signature: Sequence[int]) -> Iterator[Garden]:
    """Every (tree tuple, pairing) with the given tree scales and signature."""
    signature = tuple(int(s) for s in signature)
    if len(scales) != len(signature) or sum(1 for s in signature if s == 1) * 2 != len(signature):
        return
    for trees in product(*(enumerate_trees(m) for m in scales)):
        leaves = [(j, p) for j, t in enumerate(trees) for p in leaf_paths(t)]
        plus = [x for x in leaves if node_sign(signature[x[0]], x[1]) == 1]
        minus = [x for x in leaves if node_sign(signature[x[0]], x[1]) == -1]
        for match in perfect_matchings(plus, minus):
            yield Garden(tuple(trees), signature, tuple(match), check=False)


def random_garden(rng: np.random.Generator, width: int, scales: Sequence[int] | None = None,
                  max_scale: int = 3) -> Garden:
    """Random trees, random signature with width/2 plus signs, uniform random pairing."""
    if scales is None:
        scales = [int(rng.integers(0, max_scale + 1)) for _ in range(width)]
    signs = [1] * (width // 2) + [-1] * (width // 2)
    rng.shuffle(signs)
    trees = tuple(random_shape(rng, int(m)) for m in scales)
    leaves = [(j, p) for j, t in enumerate(trees) for p in leaf_paths(t)]
    plus = [x for x in leaves if node_sign(signs[x[0]], x[1]) == 1]
    minus = [x for x in leaves if node_sign(signs[x[0]], x[1]) == -1]
    perm = rng.permutation(len(minus))
    return Garden(trees, tuple(signs), tuple((plus[i], minus[perm[i]]) for i in range(len(plus))))


# --- serialization -------------------------------------------------------------

def _shape_str(shape: Shape) -> str:
    return "o" if is_leaf(shape) else "(" + "".join(_shape_str(c) for c in shape) + ")"


def serialize_garden(g: Garden) -> str:
    """``+(ooo) -o / 0-2 1-3``: signed trees, then pairs of global leaf indices."""
    leaves = g.leaves()
    index = {x: i for i, x in enumerate(leaves)}
    trees = " ".join(("+" if s == 1 else "-") + _shape_str(t) for t, s in zip(g.trees, g.signs))
    pairs = " ".join(f"{index[a]}-{index[b]}" for a, b in sorted(
        (tuple(sorted((a, b), key=index.get)) for a, b in g.pairs), key=lambda ab: index[ab[0]]))
    return f"{trees} / {pairs}".rstrip()


def _parse_shape(s: str, pos: int) -> tuple[Shape, int]:
    if s[pos] == "o":
        return LEAF, pos + 1
    if s[pos] != "(":
        raise UsageError(f"bad tree string at {pos}: {s!r}")
    kids = []
    pos += 1
    for _ in range(3):
        k, pos = _parse_shape(s, pos)
        kids.append(k)
    if s[pos] != ")":
        raise UsageError(f"expected ')' at {pos}: {s!r}")
    return tuple(kids), pos + 1


def parse_garden(text: str) -> Garden:
    head, _, tail = text.strip().partition("/")
    trees, signs = [], []
    for tok in head.split():
        if tok[0] not in "+-":
            raise UsageError(f"tree token needs a sign: {tok!r}")
        shape, end = _parse_shape(tok, 1)
        if end != len(tok):
            raise UsageError(f"trailing characters in {tok!r}")
        trees.append(shape)
        signs.append(1 if tok[0] == "+" else -1)
    leaves = [(j, p) for j, t in enumerate(trees) for p in leaf_paths(t)]
    pairs = []
    for tok in tail.split():
        a, b = tok.split("-")
        pairs.append((leaves[int(a)], leaves[int(b)]))
    return Garden(tuple(trees), tuple(signs), tuple(pairs))


# --- mutable forest used by the reductions ------------------------------------

class Forest:
    """Pointer representation of a garden with stable integer node ids."""

    def __init__(self):
        self.kids: dict[int, Optional[list[int]]] = {}
        self.parent: dict[int, Optional[tuple[int, int]]] = {}
        self.sign: dict[int, int] = {}
        self.partner: dict[int, int] = {}
        self.roots: list[int] = []
        self._next = 0

    def new(self, sign: int) -> int:
        i = self._next
        self._next += 1
        self.kids[i] = None
        self.parent[i] = None
        self.sign[i] = sign
        return i

    @classmethod
    def from_garden(cls, g: Garden) -> tuple["Forest", dict[LeafId, int]]:
        f = cls()
        ids: dict[LeafId, int] = {}
        for j, (t, s) in enumerate(zip(g.trees, g.signs)):
            def build(shape, path, sign):
                i = f.new(sign)
                ids[(j, path)] = i
                if not is_leaf(shape):
                    f.kids[i] = []
                    for c, sub in enumerate(shape):
                        ci = build(sub, path + (c,), sign * CHILD_SIGN[c])
                        f.kids[i].append(ci)
                        f.parent[ci] = (i, c)
                return i
            f.roots.append(build(t, (), s))
        for a, b in g.pairs:
            f.partner[ids[a]] = ids[b]
            f.partner[ids[b]] = ids[a]
        return f, ids

    def copy(self) -> "Forest":
        f = Forest()
        f.kids = {k: (None if v is None else list(v)) for k, v in self.kids.items()}
        f.parent = dict(self.parent)
        f.sign = dict(self.sign)
        f.partner = dict(self.partner)
        f.roots = list(self.roots)
        f._next = self._next
        return f

    def is_leaf(self, i: int) -> bool:
        return self.kids[i] is None

    def shape_of(self, i: int, stop: Optional[int] = None) -> Shape:
        if self.kids[i] is None or i == stop:
            return LEAF
        return tuple(self.shape_of(c, stop) for c in self.kids[i])

    def paths(self, i: int, prefix: Path = (), stop: Optional[int] = None) -> dict[int, Path]:
        out = {i: prefix}
        if self.kids[i] is not None and i != stop:
            for c, ci in enumerate(self.kids[i]):
                out.update(self.paths(ci, prefix + (c,), stop))
        return out

    def to_garden(self) -> tuple[Garden, dict[int, LeafId]]:
        trees, loc = [], {}
        for j, r in enumerate(self.roots):
            trees.append(self.shape_of(r))
            for i, p in self.paths(r).items():
                loc[i] = (j, p)
        pairs = {tuple(sorted((loc[a], loc[b]))) for a, b in self.partner.items()}
        signs = tuple(self.sign[r] for r in self.roots)
        return Garden(tuple(trees), signs, tuple(pairs)), loc

    def delete(self, i: int) -> None:
        for d in (self.kids, self.parent, self.sign):
            d.pop(i, None)
        self.partner.pop(i, None)

    def place(self, new: int, old: int) -> None:
        """Put node `new` where `old` currently hangs."""
        par = self.parent[old]
        self.parent[new] = par
        if par is None:
            self.roots[self.roots.index(old)] = new
        else:
            self.kids[par[0]][par[1]] = new

    # inverse steps ---------------------------------------------------------
    def mini_couple_candidates(self) -> list[tuple[int, int]]:
        out = []
        for n, ks in self.kids.items():
            if ks is None or any(self.kids[c] is not None for c in ks):
                continue
            partners = [self.partner[c] for c in ks]
            owners = {self.parent[p][0] if self.parent[p] is not None else None for p in partners}
            if len(owners) != 1:
                continue
            m = owners.pop()
            if m is None or m == n or any(self.kids[c] is not None for c in self.kids[m]):
                continue
            if n < m:
                out.append((n, m))
        return out

    def mini_tree_candidates(self) -> list[int]:
        out = []
        for r, ks in self.kids.items():
            if ks is None:
                continue
            branching = [c for c in ks if self.kids[c] is not None]
            if len(branching) != 1:
                continue
            c = branching[0]
            xs = [x for x in ks if x != c]
            ys = [self.partner[x] for x in xs]
            if any(self.parent[y] is None or self.parent[y][0] != c for y in ys):
                continue
            lone = [z for z in self.kids[c] if z not in ys]
            if len(lone) != 1:
                continue
            out.append(r)
        return out

    def collapse_mini_couple(self, n: int, m: int) -> None:
        for c in self.kids[n] + self.kids[m]:
            self.delete(c)
        self.kids[n] = None
        self.kids[m] = None
        self.partner[n] = m
        self.partner[m] = n

    def collapse_mini_tree(self, r: int) -> int:
        ks = self.kids[r]
        c = next(x for x in ks if self.kids[x] is not None)
        xs = [x for x in ks if x != c]
        ys = [self.partner[x] for x in xs]
        lone = next(z for z in self.kids[c] if z not in ys)
        assert self.sign[lone] == self.sign[r]
        self.place(lone, r)
        for z in xs + ys + [c, r]:
            self.delete(z)
        return lone

    # forward steps ---------------------------------------------------------
    def insert_mini_couple(self, x: int, code: int) -> None:
        """Replace the leaf pair {x, partner(x)} by a (1,1)-mini couple."""
        y = self.partner[x]
        new = {}
        for v in (x, y):
            self.kids[v] = []
            for c in range(3):
                ci = self.new(self.sign[v] * CHILD_SIGN[c])
                self.kids[v].append(ci)
                self.parent[ci] = (v, c)
            self.partner.pop(v, None)
            new[v] = self.kids[v]
        match = MINI_COUPLE_CODES[code]
        for a, b in match:
            self._pair(new[x][a], new[y][b])

    def insert_mini_tree(self, v: int, code: int) -> None:
        """Put a mini tree in the place of node v; v becomes its lone leaf."""
        p, lone, match = MINI_TREE_CODES[code]
        s = self.sign[v]
        r = self.new(s)
        self.place(r, v)
        self.kids[r] = []
        for i in range(3):
            if i == p:
                ci = self.new(s * CHILD_SIGN[i])
            else:
                ci = self.new(s * CHILD_SIGN[i])
            self.kids[r].append(ci)
            self.parent[ci] = (r, i)
        c = self.kids[r][p]
        self.kids[c] = []
        for i in range(3):
            if i == lone:
                zi = v
            else:
                zi = self.new(self.sign[c] * CHILD_SIGN[i])
            self.kids[c].append(zi)
            self.parent[zi] = (c, i)
        for a, b in match:
            self._pair(self.kids[r][a], self.kids[c][b])

    def _pair(self, a: int, b: int) -> None:
        assert self.sign[a] == -self.sign[b]
        self.partner[a] = b
        self.partner[b] = a


def _mini_couple_codes() -> list[tuple[tuple[int, int], ...]]:
    """Cross pairings of the children of two opposite-sign scale-1 roots."""
    codes = []
    for perm in permutations(range(3)):
        if all(CHILD_SIGN[a] == CHILD_SIGN[b] for a, b in zip(range(3), perm)):
            # child a of x (sign s*c_a) pairs with child perm[a] of y (sign -s*c_b)
            codes.append(tuple(zip(range(3), perm)))
    return codes


def _mini_tree_codes() -> list[tuple[int, int, tuple[tuple[int, int], ...]]]:
    """(branching position, lone position, pairing of root leaves to inner leaves)."""
    codes = []
    for p in range(3):
        inner_sign = CHILD_SIGN[p]
        outer = [i for i in range(3) if i != p]
        for lone in range(3):
            if inner_sign * CHILD_SIGN[lone] != 1:
                continue
            inner = [i for i in range(3) if i != lone]
            for perm in permutations(inner):
                if all(CHILD_SIGN[a] == -inner_sign * CHILD_SIGN[b] for a, b in zip(outer, perm)):
                    codes.append((p, lone, tuple(zip(outer, perm))))
    return codes


MINI_COUPLE_CODES = _mini_couple_codes()
MINI_TREE_CODES = _mini_tree_codes()


# --- skeleton ------------------------------------------------------------------

@dataclass
class Reduction:
    kind: str  # "A" (mini couple) or "B" (mini tree)
    nodes: tuple[int, ...]


def _reduce(f: Forest, rng: Optional[np.random.Generator]) -> list[Reduction]:
    log = []
    while True:
        cands = [("A", c) for c in f.mini_couple_candidates()] + [("B", (r,)) for r in f.mini_tree_candidates()]
        if not cands:
            return log
        kind, c = cands[0] if rng is None else cands[int(rng.integers(len(cands)))]
        if kind == "A":
            f.collapse_mini_couple(*c)
        else:
            f.collapse_mini_tree(c[0])
        log.append(Reduction(kind, tuple(c)))


def skeleton(g: Garden, rng: Optional[np.random.Generator] = None) -> tuple[Garden, list[Reduction]]:
    """Collapse mini couples and mini trees until the garden is prime.

    ``rng`` picks a random available collapse at each step (used to test that
    the result does not depend on the order); by default the first is taken.
    """
    f, _ = Forest.from_garden(g)
    log = _reduce(f, rng)
    sk, _ = f.to_garden()
    return sk, log


def is_prime(g: Garden) -> bool:
    f, _ = Forest.from_garden(g)
    return not f.mini_couple_candidates() and not f.mini_tree_candidates()


def is_trivial(g: Garden) -> bool:
    return all(is_leaf(t) for t in g.trees)


def fully_paired_partners(g: Garden) -> dict[int, int]:
    """Map tree j -> tree i when all leaves of j and of i are paired with each other."""
    partner = g.partner_map()
    target: dict[int, set[int]] = defaultdict(set)
    for x, y in partner.items():
        if x[0] != y[0]:
            target[x[0]].add(y[0])
    out = {}
    for j, ts in target.items():
        if len(ts) == 1:
            (i,) = ts
            if i != j and target[i] == {j}:
                out[j] = i
    return out


def sub_garden(g: Garden, tree_ids: Sequence[int]) -> Garden:
    remap = {j: i for i, j in enumerate(tree_ids)}
    pairs = [((remap[a[0]], a[1]), (remap[b[0]], b[1])) for a, b in g.pairs if a[0] in remap]
    return Garden(tuple(g.trees[j] for j in tree_ids), tuple(g.signs[j] for j in tree_ids), tuple(pairs))


def is_regular_couple(g: Garden) -> bool:
    return g.width == 2 and is_trivial(skeleton(g)[0])


@dataclass(frozen=True)
class Classification:
    regular_couple: bool
    regular_multi_couple: bool
    multi_couple: bool
    mixed: bool
    prime: bool


def classify(g: Garden) -> Classification:
    fp = fully_paired_partners(g)
    multi = len(fp) == g.width
    mixed = not fp
    reg_multi = multi and all(is_regular_couple(sub_garden(g, sorted((j, i))))
                              for j, i in fp.items() if j < i)
    return Classification(
        regular_couple=g.width == 2 and reg_multi,
        regular_multi_couple=reg_multi,
        multi_couple=multi,
        mixed=mixed,
        prime=is_prime(g),
    )


# --- regular trees, decomposition and expansion ---------------------------------

@dataclass(frozen=True)
class RegularTree:
    """A paired tree with exactly one unpaired (lone) leaf."""

    shape: Shape
    sign: int
    pairs: tuple[tuple[Path, Path], ...]
    lone: Path

    def as_couple(self) -> Garden:
        pairs = [((0, a), (0, b)) for a, b in self.pairs] + [((0, self.lone), (1, ()))]
        return Garden((self.shape, LEAF), (self.sign, -self.sign), tuple(pairs))

    def is_regular(self) -> bool:
        try:
            return is_regular_couple(self.as_couple())
        except UsageError:
            return False


def trivial_regular_tree(sign: int) -> RegularTree:
    return RegularTree(LEAF, sign, (), ())


def _slot_origin(f0: Forest, fs: Forest, s: int) -> int:
    par = fs.parent[s]
    if par is None:
        return f0.roots[fs.roots.index(s)]
    return f0.kids[par[0]][par[1]]


def decompose(g: Garden) -> tuple[Garden, dict[LeafId, RegularTree], dict[tuple[LeafId, LeafId], Garden]]:
    """Split g into its skeleton plus regular attachments.

    Returns the skeleton, a regular tree for every skeleton branching node and
    a regular couple (signature (+, -)) for every skeleton leaf pair, keyed by
    skeleton node addresses.  ``expand_skeleton`` inverts this.
    """
    f0, _ = Forest.from_garden(g)
    fs = f0.copy()
    _reduce(fs, None)
    sk, loc = fs.to_garden()
    trees: dict[LeafId, RegularTree] = {}
    couples: dict[tuple[LeafId, LeafId], Garden] = {}
    for s in fs.kids:
        a = _slot_origin(f0, fs, s)
        if fs.kids[s] is not None:
            paths = f0.paths(a, stop=s)
            shape = f0.shape_of(a, stop=s)
            pairs = []
            for i, p in paths.items():
                if i != s and f0.kids[i] is None and i < f0.partner[i]:
                    q = f0.partner[i]
                    if q not in paths:
                        raise AssertionError("regular tree slice leaks pairs")
                    pairs.append((p, paths[q]))
            trees[loc[s]] = RegularTree(shape, f0.sign[a], tuple(sorted(pairs)), paths[s])
        elif fs.sign[s] == 1:
            t = fs.partner[s]
            ends = [a, _slot_origin(f0, fs, t)]
            paths = [f0.paths(e) for e in ends]
            pairs = []
            for j, pm in enumerate(paths):
                for i, p in pm.items():
                    if f0.kids[i] is None and i < f0.partner[i]:
                        q = f0.partner[i]
                        jq = 0 if q in paths[0] else 1
                        if q not in paths[jq]:
                            raise AssertionError("regular couple slice leaks pairs")
                        pairs.append(((j, p), (jq, paths[jq][q])))
            couples[(loc[s], loc[t])] = Garden((f0.shape_of(ends[0]), f0.shape_of(ends[1])), (1, -1), tuple(pairs))
    return sk, trees, couples


def expand_skeleton(sk: Garden, trees: Optional[dict[LeafId, RegularTree]] = None,
                    couples: Optional[dict[tuple[LeafId, LeafId], Garden]] = None,
                    validate: bool = True) -> Garden:
    """Rebuild the garden with skeleton `sk` and the given regular attachments.

    Missing entries mean trivial attachments.  Couples are keyed by
    (+ leaf, - leaf) and stored with signature (+, -).
    """
    trees = dict(trees or {})
    couples = dict(couples or {})
    partner = sk.partner_map()
    if validate:
        for key, rt in trees.items():
            if not rt.is_regular():
                raise UsageError(f"attachment at {key} is not a regular tree")
            if rt.sign != sk.sign_of(key):
                raise UsageError(f"attachment at {key} has the wrong sign")
        for key, q in couples.items():
            if q.signs != (1, -1) or not is_regular_couple(q):
                raise UsageError(f"attachment at {key} is not a regular couple")
    f = Forest()
    pending_pairs: list[tuple[int, int]] = []
    couple_roots: dict[LeafId, tuple[Garden, int]] = {}
    for (a, b), q in couples.items():
        if partner.get(a) != b:
            raise UsageError(f"{a}, {b} is not a skeleton leaf pair")
        couple_roots[a] = (q, 0)
        couple_roots[b] = (q, 1)
    built_couples: dict[int, dict[LeafId, int]] = {}

    def graft(shape: Shape, sign: int, path: Path = ()) -> dict[Path, int]:
        ids = {}

        def rec(s, p, sg):
            i = f.new(sg)
            ids[p] = i
            if not is_leaf(s):
                f.kids[i] = []
                for c, sub in enumerate(s):
                    ci = rec(sub, p + (c,), sg * CHILD_SIGN[c])
                    f.kids[i].append(ci)
                    f.parent[ci] = (i, c)
            return i

        rec(shape, path, sign)
        return ids

    leaf_ids: dict[LeafId, int] = {}

    def build(j: int, path: Path, sign: int) -> int:
        sub = subtree(sk.trees[j], path)
        key = (j, path)
        if is_leaf(sub):
            if key in couple_roots:
                q, side = couple_roots[key]
                ids = graft(q.trees[side], sign)
                leaf_ids[key] = -1
                store = built_couples.setdefault(id(q), {})
                for p, i in ids.items():
                    store[(side, p)] = i
                return ids[()]
            i = f.new(sign)
            leaf_ids[key] = i
            return i
        rt = trees.get(key, trivial_regular_tree(sign))
        ids = graft(rt.shape, sign)
        for a, b in rt.pairs:
            pending_pairs.append((ids[a], ids[b]))
        lone = ids[rt.lone]
        f.kids[lone] = []
        for c in range(3):
            ci = build(j, path + (c,), sign * CHILD_SIGN[c])
            f.kids[lone].append(ci)
            f.parent[ci] = (lone, c)
        return ids[()]

    for j in range(sk.width):
        f.roots.append(build(j, (), sk.signs[j]))
    for a, b in sk.pairs:
        if a in couple_roots:
            continue
        pending_pairs.append((leaf_ids[a], leaf_ids[b]))
    for q in {id(q): q for q, _ in couple_roots.values()}.values():
        store = built_couples[id(q)]
        for x, y in q.pairs:
            pending_pairs.append((store[x], store[y]))
    for a, b in pending_pairs:
        f._pair(a, b)
    g, _ = f.to_garden()
    return g


def random_regular_couple(rng: np.random.Generator, steps: int) -> Garden:
    """Trivial couple followed by `steps` random insertions of mini couples / mini trees."""
    f, _ = Forest.from_garden(trivial_couple())
    for _ in range(steps):
        random_insertion(f, rng)
    return f.to_garden()[0]


def random_insertion(f: Forest, rng: np.random.Generator) -> None:
    if rng.random() < 0.5:
        leaves = sorted(i for i, k in f.kids.items() if k is None)
        x = leaves[int(rng.integers(len(leaves)))]
        f.insert_mini_couple(x, int(rng.integers(len(MINI_COUPLE_CODES))))
    else:
        ids = sorted(f.kids)
        v = ids[int(rng.integers(len(ids)))]
        f.insert_mini_tree(v, int(rng.integers(len(MINI_TREE_CODES))))


def random_structured_garden(rng: np.random.Generator, width: int, base_scale: int = 2,
                             insertions: int = 3) -> Garden:
    """Random garden decorated with random regular insertions (so reductions occur)."""
    g = random_garden(rng, width, max_scale=base_scale)
    f, _ = Forest.from_garden(g)
    for _ in range(insertions):
        random_insertion(f, rng)
    return f.to_garden()[0]


def regular_couple_count(m: int) -> int:
    """Number of regular couples of scale m (brute force over all couples)."""
    total = 0
    for a in range(m + 1):
        for g in enumerate_gardens((a, m - a), (1, -1)):
            if is_regular_couple(g):
                total += 1
    return total


# --- irregular chains ------------------------------------------------------------

def _parent_index(g: Garden) -> dict[LeafId, Optional[LeafId]]:
    out = {}
    for j, t in enumerate(g.trees):
        for p, _ in nodes(t):
            out[(j, p)] = (j, p[:-1]) if p else None
    return out


def _valid_link(g: Garden, partner: dict[LeafId, LeafId], n: LeafId, c: int) -> bool:
    """Link n -> child c: other two children leaves, and a child of n with sign
    opposite to the next node is paired with a child of the next node."""
    j, p = n
    shape = subtree(g.trees[j], p)
    if is_leaf(shape) or is_leaf(shape[c]):
        return False
    if any(not is_leaf(shape[i]) for i in range(3) if i != c):
        return False
    nxt = (j, p + (c,))
    s_next = g.sign_of(nxt)
    for i in range(3):
        if i == c:
            continue
        m = (j, p + (i,))
        if g.sign_of(m) != -s_next:
            continue
        q = partner[m]
        if q[0] == j and len(q[1]) == len(p) + 2 and q[1][:-1] == p + (c,):
            return True
    return False


def find_irregular_chains(g: Garden) -> list[tuple[LeafId, ...]]:
    """Maximal descending chains built from valid links (length >= 2 nodes)."""
    partner = g.partner_map()
    links: dict[LeafId, LeafId] = {}
    for j, t in enumerate(g.trees):
        for p, s in nodes(t):
            if is_leaf(s):
                continue
            for c in range(3):
                if _valid_link(g, partner, (j, p), c):
                    links[(j, p)] = (j, p + (c,))
    targets = set(links.values())
    chains = []
    for start in links:
        if start in targets:
            continue
        chain = [start]
        while chain[-1] in links:
            chain.append(links[chain[-1]])
        chains.append(tuple(chain))
    return sorted(chains)


def irregular_chains_bruteforce(g: Garden) -> list[tuple[LeafId, ...]]:
    """Scan every descending node sequence against the definition; keep maximal ones."""
    partner = g.partner_map()
    valid = []
    for j, t in enumerate(g.trees):
        for p, _ in nodes(t):
            for q, _ in nodes(t):
                if len(q) <= len(p) or q[:len(p)] != p:
                    continue
                seq = [(j, q[:k]) for k in range(len(p), len(q) + 1)]
                if _check_chain(g, partner, seq):
                    valid.append(tuple(seq))
    vs = set(valid)
    maximal = []
    for c in valid:
        contained = any(len(o) > len(c) and any(o[i:i + len(c)] == c for i in range(len(o) - len(c) + 1))
                        for o in vs)
        if not contained:
            maximal.append(c)
    return sorted(maximal)


def _check_chain(g: Garden, partner, seq) -> bool:
    for a, b in zip(seq, seq[1:]):
        j, p = a
        shape = subtree(g.trees[j], p)
        c = b[1][-1]
        # (i) b is a child of a, the other two children of a are leaves
        if any(not is_leaf(shape[i]) for i in range(3) if i != c):
            return False
        # (ii) some child of a with sign opposite to b is paired with a child of b
        ok = False
        for i in range(3):
            if i == c:
                continue
            m = (j, p + (i,))
            if g.sign_of(m) == -g.sign_of(b):
                q = partner[m]
                if q[0] == j and q[1][:-1] == b[1]:
                    ok = True
        if not ok:
            return False
    return True


# --- over-gardens ------------------------------------------------------------------

@dataclass(frozen=True)
class OverGarden:
    trees: tuple[Shape, ...]
    signs: tuple[int, ...]
    blocks: tuple[tuple[LeafId, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted(tuple(sorted((int(j), tuple(p)) for j, p in b)) for b in self.blocks))
        object.__setattr__(self, "blocks", blocks)
        leaves = {(j, p) for j, t in enumerate(self.trees) for p in leaf_paths(t)}
        seen = [x for b in blocks for x in b]
        if sorted(seen) != sorted(leaves):
            raise UsageError("blocks must partition the leaves")
        for b in blocks:
            if sum(node_sign(self.signs[j], p) for j, p in b) != 0:
                raise UsageError(f"block {b} is not sign-balanced")

    def block_type(self) -> tuple[int, ...]:
        return tuple(sorted(len(b) for b in self.blocks))


def _block_pairings(block: Sequence[LeafId], signs) -> Iterator[list[tuple[LeafId, LeafId]]]:
    plus = [x for x in block if node_sign(signs[x[0]], x[1]) == 1]
    minus = [x for x in block if node_sign(signs[x[0]], x[1]) == -1]
    yield from perfect_matchings(plus, minus)


def refinements(og: OverGarden) -> Iterator[Garden]:
    for choice in product(*(list(_block_pairings(b, og.signs)) for b in og.blocks)):
        pairs = [pr for c in choice for pr in c]
        yield Garden(og.trees, og.signs, tuple(pairs), check=False)


def _lone_leaf_condition(g: Garden, big: set[LeafId]) -> bool:
    partner = g.partner_map()
    for leaf in big:
        j, lone = leaf
        pairs = []
        for p in leaf_paths(g.trees[j]):
            if p == lone:
                continue
            q = partner[(j, p)]
            if q[0] != j:
                return False
            if p < q[1]:
                pairs.append((p, q[1]))
        if not RegularTree(g.trees[j], g.signs[j], tuple(pairs), lone).is_regular():
            return False
    return True


def classify_over_garden(og: OverGarden) -> bool:
    """Regular iff the big-block leaves are lone leaves of regular trees and some
    refinement is a regular multi-couple.

    Leaves of a tree that carries a big-block lone leaf are in two-element
    blocks inside that tree, so only the pairing inside big blocks is free;
    any refinement of those couples regular trees into regular couples, so it
    suffices to test one refinement.
    """
    big = {x for b in og.blocks if len(b) >= 4 for x in b}
    first = next(refinements(og))
    if not _lone_leaf_condition(first, big):
        return False
    return classify(first).regular_multi_couple


def classify_over_garden_bruteforce(og: OverGarden) -> bool:
    big = {x for b in og.blocks if len(b) >= 4 for x in b}
    for g in refinements(og):
        if classify(g).regular_multi_couple and _lone_leaf_condition(g, big):
            return True
    return False


def enumerate_over_gardens(trees: Sequence[Shape], signs: Sequence[int]) -> Iterator[OverGarden]:
    from .cumulants import balanced_set_partitions
    leaves = [(j, p) for j, t in enumerate(trees) for p in leaf_paths(t)]
    lsigns = [node_sign(signs[j], p) for j, p in leaves]
    for blocks in balanced_set_partitions(lsigns):
        yield OverGarden(tuple(trees), tuple(signs), tuple(tuple(leaves[i] for i in b) for b in blocks))
