"""Molecules of gardens: construction, Euler statistics, chains, reconstruction, counting.

Atoms are the branching nodes of a garden.  A bond records either a
parent-child relation between two branching nodes (``PC``) or a pair of
leaves (``LP``).  Each bond end carries a role code: 0 when the bond's node is
the atom's own branching node, ``i + 1`` when it is the atom's i-th child.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import permutations, product
from typing import Iterable, Optional, Sequence

import numpy as np

from .diagrams import (CHILD_SIGN, LEAF, Garden, LeafId, fully_paired_partners, is_leaf,
                       leaf_paths, node_sign, nodes, subtree)
from .lattice import UsageError

MAX_RECONSTRUCT_ATOMS = 8


@dataclass(frozen=True)
class Bond:
    tail: int
    tail_role: int
    head: int
    head_role: int
    label: str  # "PC" or "LP"


@dataclass
class Molecule:
    n_atoms: int
    bonds: list[Bond] = field(default_factory=list)

    def __post_init__(self):
        for b in self.bonds:
            if b.label not in ("PC", "LP"):
                raise UsageError(f"unknown bond label {b.label!r}")
            for a in (b.tail, b.head):
                if not 0 <= a < self.n_atoms:
                    raise UsageError(f"bond endpoint {a} is not an atom")
        out_deg, in_deg = self.out_degree(), self.in_degree()
        for v in range(self.n_atoms):
            if out_deg[v] > 2 or in_deg[v] > 2:
                raise UsageError(f"atom {v} has {out_deg[v]} outgoing and {in_deg[v]} incoming bonds")
        for comp in self.components():
            if all(out_deg[v] + in_deg[v] == 4 for v in comp):
                raise UsageError(f"saturated component {sorted(comp)}")

    @property
    def V(self) -> int:
        return self.n_atoms

    @property
    def E(self) -> int:
        return len(self.bonds)

    def out_degree(self) -> list[int]:
        d = [0] * self.n_atoms
        for b in self.bonds:
            d[b.tail] += 1
        return d

    def in_degree(self) -> list[int]:
        d = [0] * self.n_atoms
        for b in self.bonds:
            d[b.head] += 1
        return d

    def degree(self, v: int) -> int:
        return self.out_degree()[v] + self.in_degree()[v]

    def components(self) -> list[set[int]]:
        parent = list(range(self.n_atoms))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for b in self.bonds:
            parent[find(b.tail)] = find(b.head)
        comps: dict[int, set[int]] = defaultdict(set)
        for v in range(self.n_atoms):
            comps[find(v)].add(v)
        return list(comps.values())

    @property
    def F(self) -> int:
        return len(self.components())

    @property
    def chi(self) -> int:
        return self.E - self.V + self.F

    def incidences(self, v: int) -> list[tuple[int, int]]:
        """(bond index, +1 outgoing / -1 incoming) for every bond end at v."""
        out = []
        for i, b in enumerate(self.bonds):
            if b.tail == v:
                out.append((i, 1))
            if b.head == v:
                out.append((i, -1))
        return out

    def serialize(self) -> str:
        lines = [f"atoms {self.n_atoms}"]
        for b in self.bonds:
            lines.append(f"{b.tail} {b.tail_role} -> {b.head} {b.head_role} {b.label}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "Molecule":
        lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or lines[0][0] != "atoms":
            raise UsageError("molecule text must start with 'atoms N'")
        bonds = []
        for tok in lines[1:]:
            if len(tok) != 6 or tok[2] != "->":
                raise UsageError(f"bad bond line {' '.join(tok)!r}")
            bonds.append(Bond(int(tok[0]), int(tok[1]), int(tok[3]), int(tok[4]), tok[5]))
        return cls(int(lines[0][1]), bonds)


@dataclass
class GardenMolecule:
    """A molecule together with its dictionary back to garden nodes."""

    molecule: Molecule
    atom_of: dict[LeafId, int]            # branching node -> atom
    bond_of: dict[LeafId, int]            # non-root branching node or + leaf of a pair -> bond
    trivial_pairs: int                    # pairs of two trivial trees


def garden_to_molecule(g: Garden) -> GardenMolecule:
    atom_of: dict[LeafId, int] = {}
    for j, t in enumerate(g.trees):
        for p, s in nodes(t):
            if not is_leaf(s):
                atom_of[(j, p)] = len(atom_of)
    bonds: list[Bond] = []
    bond_of: dict[LeafId, int] = {}
    for (j, p), a in atom_of.items():
        if not p:
            continue
        parent = atom_of[(j, p[:-1])]
        role = p[-1] + 1
        if g.sign_of((j, p)) == 1:
            bonds.append(Bond(a, 0, parent, role, "PC"))
        else:
            bonds.append(Bond(parent, role, a, 0, "PC"))
        bond_of[(j, p)] = len(bonds) - 1
    trivial = 0
    for x, y in g.pairs:
        plus, minus = (x, y) if g.sign_of(x) == 1 else (y, x)
        if not plus[1] or not minus[1]:
            if not plus[1] and not minus[1]:
                trivial += 1
            continue
        tail = atom_of[(minus[0], minus[1][:-1])]
        head = atom_of[(plus[0], plus[1][:-1])]
        bonds.append(Bond(tail, minus[1][-1] + 1, head, plus[1][-1] + 1, "LP"))
        bond_of[plus] = len(bonds) - 1
    return GardenMolecule(Molecule(len(atom_of), bonds), atom_of, bond_of, trivial)


@dataclass
class ChiStats:
    V: int
    E: int
    F: int
    chi: int
    m: int
    R: int
    trivial_pairs: int
    mixed: bool
    multi_couple: bool
    ok: bool
    message: str = ""


def chi_stats(g: Garden, gm: Optional[GardenMolecule] = None) -> ChiStats:
    """Euler statistics with the identities V = m, E = 2m - R + t, and the chi bounds.

    t counts pairs formed by two trivial trees (neither contributes a bond).
    """
    gm = gm or garden_to_molecule(g)
    mol = gm.molecule
    m, R, t = g.scale, g.R, gm.trivial_pairs
    fp = fully_paired_partners(g)
    mixed, multi = not fp, len(fp) == g.width
    F = mol.F
    chi = mol.E - mol.V + F
    msgs = []
    if mol.V != m:
        msgs.append(f"V={mol.V} != m={m}")
    if mol.E != 2 * m - R + t:
        msgs.append(f"E={mol.E} != 2m-R+t={2 * m - R + t}")
    if mixed and 2 * chi > 2 * m - R:
        msgs.append(f"mixed garden with chi={chi} > m-R/2")
    if mixed and 2 * F > R:
        msgs.append(f"mixed garden with F={F} > R/2")
    if multi and chi != m:
        msgs.append(f"multi-couple with chi={chi} != m={m}")
    if max(mol.out_degree() + mol.in_degree() + [0]) > 2:
        msgs.append("degree cap violated")
    msg = "; ".join(msgs)
    if msg:
        msg += f" [{g}]"
    return ChiStats(mol.V, mol.E, F, chi, m, R, t, mixed, multi, not msgs, msg)


# --- molecular chains ------------------------------------------------------------------

def _bond_groups(mol: Molecule) -> dict[frozenset, list[int]]:
    groups: dict[frozenset, list[int]] = defaultdict(list)
    for i, b in enumerate(mol.bonds):
        if b.tail != b.head:
            groups[frozenset((b.tail, b.head))].append(i)
    return groups


def _is_double(mol, groups, u, v, opposite: bool) -> bool:
    bs = groups.get(frozenset((u, v)), [])
    if len(bs) != 2:
        return False
    if not opposite:
        return True
    return mol.bonds[bs[0]].tail != mol.bonds[bs[1]].tail


def _single(mol, groups, u, v) -> Optional[int]:
    bs = groups.get(frozenset((u, v)), [])
    return bs[0] if len(bs) == 1 else None


def _rails_ok(mol, groups, u0, u1, w0, w1) -> bool:
    a, b = _single(mol, groups, u0, u1), _single(mol, groups, w0, w1)
    if a is None or b is None:
        return False
    fwd_a = mol.bonds[a].tail == u0
    fwd_b = mol.bonds[b].tail == w0
    return fwd_a != fwd_b


def _canon_seq(seq: Sequence[int]) -> tuple[int, ...]:
    s = tuple(seq)
    return min(s, s[::-1])


def _canon_ladder(rungs: Sequence[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    r = [tuple(x) for x in rungs]
    opts = [tuple(r), tuple(r[::-1]), tuple((b, a) for a, b in r), tuple((b, a) for a, b in r[::-1])]
    return min(opts)


def find_type1_chains(mol: Molecule) -> list[tuple[int, ...]]:
    """Maximal paths of atoms joined by opposite-direction double bonds."""
    groups = _bond_groups(mol)
    adj: dict[int, list[int]] = defaultdict(list)
    for key in groups:
        u, v = tuple(key)
        if _is_double(mol, groups, u, v, True):
            adj[u].append(v)
            adj[v].append(u)
    seen_edges = set()
    chains = []
    for start in sorted(adj):
        if len(adj[start]) != 1:
            continue
        path = [start]
        prev, cur = None, start
        while True:
            nxt = [x for x in adj[cur] if x != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            path.append(cur)
        key = _canon_seq(path)
        if key not in seen_edges:
            seen_edges.add(key)
            chains.append(key)
    return sorted(chains)


def find_type2_chains(mol: Molecule) -> list[tuple[tuple[int, int], ...]]:
    """Maximal ladders: double-bond rungs (u_j, w_j) joined by single-bond rails
    u_j - u_(j+1) and w_j - w_(j+1) of opposite directions along the ladder."""
    groups = _bond_groups(mol)
    rungs = [tuple(sorted(k)) for k in groups if _is_double(mol, groups, *tuple(k), False)]
    found = set()

    def step(u, w, used):
        out = []
        for (a, b) in rungs:
            for x, y in ((a, b), (b, a)):
                if x in used or y in used:
                    continue
                if _rails_ok(mol, groups, u, x, w, y):
                    out.append((x, y))
        return out

    for a, b in rungs:
        for u0, w0 in ((a, b), (b, a)):
            ladder = [(u0, w0)]
            used = {u0, w0}
            while True:
                nxt = step(*ladder[-1], used)
                if len(nxt) != 1:
                    break
                ladder.append(nxt[0])
                used.update(nxt[0])
            if len(ladder) >= 2:
                found.add(_canon_ladder(ladder))
    # drop ladders that sit inside a longer one
    out = []
    for lad in found:
        if not any(len(o) > len(lad) and _contains_ladder(o, lad) for o in found):
            out.append(lad)
    return sorted(out)


def _contains_ladder(big, small) -> bool:
    variants = {_canon_ladder(big[i:i + len(small)]) for i in range(len(big) - len(small) + 1)}
    return _canon_ladder(small) in variants


def find_molecular_chains(mol: Molecule):
    return find_type1_chains(mol), find_type2_chains(mol)


def type1_chains_bruteforce(mol: Molecule) -> list[tuple[int, ...]]:
    groups = _bond_groups(mol)
    valid = set()
    for n in range(2, mol.n_atoms + 1):
        for seq in permutations(range(mol.n_atoms), n):
            if all(_is_double(mol, groups, a, b, True) for a, b in zip(seq, seq[1:])):
                valid.add(_canon_seq(seq))
    out = []
    for c in valid:
        bigger = any(len(o) > len(c) and any(_canon_seq(o[i:i + len(c)]) == c
                                             for i in range(len(o) - len(c) + 1)) for o in valid)
        if not bigger:
            out.append(c)
    return sorted(out)


def type2_chains_bruteforce(mol: Molecule) -> list[tuple[tuple[int, int], ...]]:
    groups = _bond_groups(mol)
    valid = set()
    for n in range(2, mol.n_atoms // 2 + 1):
        for seq in permutations(range(mol.n_atoms), 2 * n):
            rungs = [(seq[2 * i], seq[2 * i + 1]) for i in range(n)]
            if not all(_is_double(mol, groups, u, w, False) for u, w in rungs):
                continue
            if all(_rails_ok(mol, groups, u0, u1, w0, w1)
                   for (u0, w0), (u1, w1) in zip(rungs, rungs[1:])):
                valid.add(_canon_ladder(rungs))
    return sorted(c for c in valid
                  if not any(len(o) > len(c) and _contains_ladder(o, c) for o in valid))


# --- reconstruction -------------------------------------------------------------------

def _atom_options(mol: Molecule, v: int) -> list[tuple[int, dict[tuple[int, int], int]]]:
    """(sign, {(bond, end): code}) choices consistent with the direction rules at atom v.

    end is 0 for the tail and 1 for the head.  Code 0 on a PC bond needs the
    bond to leave v exactly when v's node is +; a child code a needs the child
    sign (sign(v) * CHILD_SIGN[a-1]) to be + exactly when the bond enters v.
    """
    inc = []
    for i, b in enumerate(mol.bonds):
        if b.tail == v:
            inc.append((i, 0, 1))
        if b.head == v:
            inc.append((i, 1, -1))
    if len(inc) > 4:
        return []
    out = []
    for sign in (1, -1):
        allowed = []
        for i, end, zeta in inc:
            codes = []
            if mol.bonds[i].label == "PC" and zeta == sign:
                codes.append(0)
            for a in (1, 2, 3):
                if sign * CHILD_SIGN[a - 1] == -zeta:
                    codes.append(a)
            allowed.append(codes)
        for choice in product(*allowed):
            if len(set(choice)) == len(choice):
                out.append((sign, {(i, end): c for (i, end, _), c in zip(inc, choice)}))
    return out


def reconstruct_gardens(mol: Molecule, R: int, signature: Optional[Sequence[int]] = None,
                        max_atoms: int = MAX_RECONSTRUCT_ATOMS) -> list[Garden]:
    """All gardens of width 2R whose molecule is `mol` (bond order ignored)."""
    if mol.n_atoms > max_atoms:
        raise UsageError(f"{mol.n_atoms} atoms exceed the reconstruction cap {max_atoms}")
    if signature is not None and len(signature) != 2 * R:
        raise UsageError("signature length must be 2R")
    opts = [_atom_options(mol, v) for v in range(mol.n_atoms)]
    results: set[Garden] = set()
    chosen: list = [None] * mol.n_atoms

    def compatible(v: int) -> bool:
        codes = chosen[v][1]
        for (i, end), c in codes.items():
            b = mol.bonds[i]
            other = b.head if end == 0 else b.tail
            if chosen[other] is None or other > v:
                continue
            oc = chosen[other][1][(i, 1 - end)]
            if b.label == "PC" and (c == 0) == (oc == 0):
                return False
        return True

    def rec(v: int):
        if v == mol.n_atoms:
            _emit(mol, chosen, R, signature, results)
            return
        for opt in opts[v]:
            chosen[v] = opt
            if compatible(v):
                rec(v + 1)
        chosen[v] = None

    rec(0)
    return sorted(results, key=str)


def _emit(mol: Molecule, chosen, R: int, signature, results: set) -> None:
    n = mol.n_atoms
    parent: dict[int, tuple[int, int]] = {}
    leaf_pair: list[tuple[tuple[int, int], tuple[int, int]]] = []
    for i, b in enumerate(mol.bonds):
        ct, ch = chosen[b.tail][1][(i, 0)], chosen[b.head][1][(i, 1)]
        if b.label == "PC":
            child, par, slot = (b.tail, b.head, ch) if ct == 0 else (b.head, b.tail, ct)
            if child in parent:
                return
            parent[child] = (par, slot - 1)
        else:
            leaf_pair.append(((b.tail, ct - 1), (b.head, ch - 1)))
    # acyclic
    for v in range(n):
        seen, x = set(), v
        while x in parent:
            if x in seen:
                return
            seen.add(x)
            x = parent[x][0]
    kids: dict[int, dict[int, int]] = defaultdict(dict)
    for c, (p, s) in parent.items():
        kids[p][s] = c
    roots = [v for v in range(n) if v not in parent]

    def shape(v):
        return tuple(shape(kids[v][s]) if s in kids[v] else LEAF for s in range(3))

    pos: dict[int, tuple[int, tuple]] = {}

    def walk(v, j, path):
        pos[v] = (j, path)
        for s, c in kids[v].items():
            walk(c, j, path + (s,))

    root_trees = []
    for j, r in enumerate(roots):
        walk(r, j, ())
        root_trees.append((shape(r), chosen[r][0]))
    bonded = set()
    pairs = []
    for (a, sa), (b, sb) in leaf_pair:
        la = (pos[a][0], pos[a][1] + (sa,))
        lb = (pos[b][0], pos[b][1] + (sb,))
        pairs.append((la, lb))
        bonded.update((la, lb))
    free = []
    for j, (sh, sg) in enumerate(root_trees):
        for p in leaf_paths(sh):
            if (j, p) not in bonded:
                free.append(((j, p), node_sign(sg, p)))
    n_triv = 2 * R - len(roots)
    extra = n_triv - len(free)
    if extra < 0 or extra % 2:
        return
    # trivial trees: one per free leaf (opposite sign), then extra // 2 trivial couples
    base_trees = [t for t in root_trees]
    triv_signs = [-s for _, s in free] + [1, -1] * (extra // 2)
    objects = base_trees + [(LEAF, s) for s in triv_signs]
    if sum(1 for _, s in objects if s == 1) != R:
        return
    k0 = len(root_trees)
    triv_pairs = [(free[i][0], (k0 + i, ())) for i in range(len(free))]
    for c in range(extra // 2):
        a = k0 + len(free) + 2 * c
        triv_pairs.append(((a, ()), (a + 1, ())))
    all_pairs = pairs + triv_pairs
    for perm in set(permutations(range(len(objects)))):
        signs = tuple(objects[perm[i]][1] for i in range(len(objects)))
        if signature is not None and signs != tuple(signature):
            continue
        where = {perm[i]: i for i in range(len(objects))}
        trees = tuple(objects[perm[i]][0] for i in range(len(objects)))
        pr = tuple(((where[a[0]], a[1]), (where[b[0]], b[1])) for a, b in all_pairs)
        try:
            results.add(Garden(trees, signs, pr))
        except UsageError:
            continue


# --- decoration counting ------------------------------------------------------------------

@dataclass
class MoleculeCounting:
    """Parameters of the decoration-counting problem on a molecule.

    Vectors are integer numerators on (Z/L)^d.  ``radius`` is the box half
    width in numerator units for |k_l - a_l|_inf; ``width`` is the tolerance on
    the quadratic atom condition (physical units).  ``ext`` entries are
    ("eq", l1, l2), ("ne", l1, l2) or ("diff_in", l1, l2, set_of_tuples).
    """

    molecule: Molecule
    a: np.ndarray
    c: np.ndarray
    Gamma: np.ndarray
    L: float
    width: float
    beta: tuple = (1.0,)
    radius: int = 1
    S: frozenset = frozenset()
    f: dict = field(default_factory=dict)
    ext: list = field(default_factory=list)

    def __post_init__(self):
        mol = self.molecule
        d = len(self.beta)
        self.a = np.asarray(self.a, dtype=np.int64).reshape(mol.E, d)
        self.c = np.asarray(self.c, dtype=np.int64).reshape(mol.V, d)
        self.Gamma = np.asarray(self.Gamma, dtype=float).reshape(mol.V)
        for v in range(mol.V):
            if mol.degree(v) == 4 and np.any(self.c[v] != 0):
                raise UsageError(f"atom {v} has degree 4 but c_v != 0")


def brute_count_decorations(prob: MoleculeCounting, max_assignments: int = 5_000_000) -> int:
    mol = prob.molecule
    d = len(prob.beta)
    E = mol.E
    if E == 0:
        return 1
    side = 2 * prob.radius + 1
    total_assign = side ** (d * E)
    if total_assign > max_assignments:
        raise UsageError(f"{total_assign} assignments exceed the cap {max_assignments}")
    offs = np.array(list(product(range(-prob.radius, prob.radius + 1), repeat=d)), dtype=np.int64)
    beta = np.asarray(prob.beta)
    inc = [mol.incidences(v) for v in range(mol.V)]
    count = 0
    n_off = len(offs)
    for chunk in _index_chunks(n_off, E, 200_000):
        k = prob.a[None, :, :] + offs[chunk]          # (A, E, d)
        ok = np.ones(len(chunk), bool)
        sq = np.sum(beta * k.astype(float) ** 2, axis=-1) / prob.L ** 2
        for v in range(mol.V):
            if not inc[v]:
                continue
            lin = np.zeros((len(chunk), d), dtype=np.int64)
            quad = np.zeros(len(chunk))
            for i, z in inc[v]:
                lin += z * k[:, i, :]
                quad += z * sq[:, i]
            ok &= np.all(lin == prob.c[v], axis=1)
            ok &= np.abs(quad - prob.Gamma[v]) <= prob.width
            bonds_v = [i for i, _ in inc[v]]
            if v in prob.S:
                first = k[:, bonds_v[0], :]
                for i in bonds_v[1:]:
                    ok &= np.all(k[:, i, :] == first, axis=1)
                if mol.degree(v) < 4:
                    ok &= np.all(first == np.asarray(prob.f[v]).reshape(d), axis=1)
            else:
                for (i1, z1), (i2, z2) in _pairs(inc[v]):
                    if z1 != z2:
                        ok &= np.any(k[:, i1, :] != k[:, i2, :], axis=1)
        for cond in prob.ext:
            kind, l1, l2 = cond[0], cond[1], cond[2]
            diff = k[:, l1, :] - k[:, l2, :]
            if kind == "eq":
                ok &= np.all(diff == 0, axis=1)
            elif kind == "ne":
                ok &= np.any(diff != 0, axis=1)
            elif kind == "diff_in":
                allowed = {tuple(x) for x in cond[3]}
                ok &= np.array([tuple(r) in allowed for r in diff])
            else:
                raise UsageError(f"unknown extra condition {kind!r}")
        count += int(ok.sum())
    return count


def _pairs(items):
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            yield items[i], items[j]


def _index_chunks(base: int, digits: int, size: int):
    total = base ** digits
    for start in range(0, total, size):
        idx = np.arange(start, min(total, start + size), dtype=np.int64)
        out = np.empty((len(idx), digits), dtype=np.int64)
        for p in range(digits - 1, -1, -1):
            out[:, p] = idx % base
            idx //= base
        yield out


# --- garden-side counting used by the correspondence check --------------------------------

@dataclass
class GardenCountingProblem:
    """Decorations of a garden with fixed roots, node boxes, resonance windows and a degenerate set."""

    garden: Garden
    ks: np.ndarray          # (2R, d) root numerators
    boxes: dict             # node -> center numerator (every bonded node)
    gamma0: dict            # branching node -> target for zeta_n * Omega_n
    degenerate: frozenset   # branching nodes required to have all children equal
    L: float
    width: float
    beta: tuple = (1.0,)
    radius: int = 1


def garden_decoration_count(prob: GardenCountingProblem) -> int:
    """Enumerate leaf-pair values in their boxes and propagate values upward."""
    g = prob.garden
    d = len(prob.beta)
    beta = np.asarray(prob.beta)
    if any(is_leaf(t) for t in g.trees):
        raise UsageError("the correspondence check needs gardens without trivial trees")
    plus_leaves = [a if g.sign_of(a) == 1 else b for a, b in g.pairs]
    partner = g.partner_map()
    offs = np.array(list(product(range(-prob.radius, prob.radius + 1), repeat=d)), dtype=np.int64)
    count = 0
    P = len(plus_leaves)
    for chunk in _index_chunks(len(offs), P, 200_000):
        vals = {}
        for c, x in enumerate(plus_leaves):
            v = np.asarray(prob.boxes[x]).reshape(d) + offs[chunk[:, c]]
            vals[x] = v
            vals[partner[x]] = v
        ok = np.ones(len(chunk), bool)

        def value(j, p):
            nonlocal ok
            sub = subtree(g.trees[j], p)
            if is_leaf(sub):
                return vals[(j, p)]
            k1, k2, k3 = (value(j, p + (i,)) for i in range(3))
            k = k1 - k2 + k3
            node = (j, p)
            if p:
                ok &= np.all(np.abs(k - np.asarray(prob.boxes[node]).reshape(d)) <= prob.radius, axis=1)
            e12 = np.all(k1 == k2, axis=1)
            e23 = np.all(k2 == k3, axis=1)
            if node in prob.degenerate:
                ok &= e12 & e23
            else:
                ok &= ~e12 & ~e23
            q = lambda x: np.sum(beta * x.astype(float) ** 2, axis=-1) / prob.L ** 2
            omega = q(k1) - q(k2) + q(k3) - q(k)
            ok &= np.abs(g.sign_of(node) * omega - prob.gamma0[node]) <= prob.width
            return k

        for j in range(g.width):
            root = value(j, ())
            ok &= np.all(root == prob.ks[j], axis=1)
        count += int(ok.sum())
    return count


def molecule_problem_from_garden(prob: GardenCountingProblem, gm: Optional[GardenMolecule] = None
                                 ) -> MoleculeCounting:
    """Translate the garden problem into molecule parameters (a, c, Gamma, S, f)."""
    g = prob.garden
    gm = gm or garden_to_molecule(g)
    mol = gm.molecule
    d = len(prob.beta)
    beta = np.asarray(prob.beta)
    a = np.zeros((mol.E, d), dtype=np.int64)
    for node, i in gm.bond_of.items():
        a[i] = np.asarray(prob.boxes[node]).reshape(d)
    c = np.zeros((mol.V, d), dtype=np.int64)
    Gamma = np.zeros(mol.V)
    f = {}
    S = set()
    for node, v in gm.atom_of.items():
        Gamma[v] = -prob.gamma0[node]
        if not node[1]:
            j = node[0]
            z = g.signs[j]
            kj = np.asarray(prob.ks[j]).reshape(d)
            c[v] = -z * kj
            Gamma[v] -= z * float(np.sum(beta * kj.astype(float) ** 2)) / prob.L ** 2
            f[v] = kj
        if node in prob.degenerate:
            S.add(v)
    return MoleculeCounting(mol, a, c, Gamma, prob.L, prob.width, tuple(prob.beta), prob.radius,
                            frozenset(S), f)


def random_counting_instance(g: Garden, rng: np.random.Generator, L: float = 2.0, K: int = 3,
                             radius: int = 1, width: Optional[float] = None,
                             beta: tuple = (1.0,), max_tries: int = 100) -> GardenCountingProblem:
    """Seed a counting instance from one random decoration of g so the count is positive.

    Leaf values are resampled until every branching node is either fully
    degenerate or has k2 outside {k1, k3}; after ``max_tries`` the last draw is
    kept and the count may be zero.
    """
    d = len(beta)
    bt = np.asarray(beta)
    for _ in range(max_tries):
        vals: dict = {}
        for x, y in g.pairs:
            v = rng.integers(-K, K + 1, size=d)
            vals[x] = v
            vals[y] = v
        omegas, degenerate, admissible = {}, set(), [True]

        def value(j, p):
            sub = subtree(g.trees[j], p)
            if is_leaf(sub):
                return vals[(j, p)]
            k1, k2, k3 = (value(j, p + (i,)) for i in range(3))
            k = k1 - k2 + k3
            vals[(j, p)] = k
            q = lambda x: float(np.sum(bt * x.astype(float) ** 2)) / L ** 2
            omegas[(j, p)] = g.sign_of((j, p)) * (q(k1) - q(k2) + q(k3) - q(k))
            e12, e23 = bool(np.all(k1 == k2)), bool(np.all(k2 == k3))
            if e12 and e23:
                degenerate.add((j, p))
            elif e12 or e23:
                admissible[0] = False
            return k

        ks = np.array([value(j, ()) for j in range(g.width)])
        if admissible[0]:
            break
    w = width if width is not None else 1.0 / L ** 2
    boxes = {}
    for node, v in vals.items():
        if node[1]:
            boxes[node] = v + rng.integers(-radius, radius + 1, size=d)
    gamma0 = {n: om + rng.uniform(-0.5, 0.5) * w for n, om in omegas.items()}
    return GardenCountingProblem(g, ks, boxes, gamma0, frozenset(degenerate), L, w, tuple(beta), radius)
