"""Even partitions, refinement counts and the cumulant-type coefficients lambda.

For a rotation-symmetric law with moments mu_b = E|eta|^(2b), products of
eta's and their conjugates are expanded over over-pairings (balanced set
partitions) with weights lambda(O) that depend only on the multiset O of block
sizes.  Everything here is exact: integers and ``fractions.Fraction``.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

from .lattice import UsageError

EvenPartition = tuple[int, ...]  # sorted ascending, parts even >= 2

MAX_N = 16


def canonical(parts: Iterable[int]) -> EvenPartition:
    p = tuple(sorted(int(x) for x in parts))
    if any(x < 2 or x % 2 for x in p):
        raise UsageError(f"not an even partition: {p}")
    return p


def even_partitions(n: int) -> list[EvenPartition]:
    """All partitions of n into even parts, finest first."""
    if n % 2:
        return []
    out: list[EvenPartition] = []

    def rec(rest: int, max_part: int, acc: list[int]):
        if rest == 0:
            out.append(tuple(sorted(acc)))
            return
        for p in range(min(rest, max_part), 1, -1):
            if p % 2 == 0:
                acc.append(p)
                rec(rest - p, p, acc)
                acc.pop()

    rec(n, n, [])
    out.sort(key=lambda p: (-len(p), p))
    return out


def q_weight(parts: EvenPartition) -> int:
    """Sum of the parts that are >= 4."""
    return sum(p for p in parts if p >= 4)


# --- refinement counts -------------------------------------------------------

@lru_cache(maxsize=None)
def _balanced_splits(plus: int, minus: int) -> Mapping[EvenPartition, int]:
    """Ways to split `plus` + and `minus` - labelled items into balanced blocks.

    Returns a map from the multiset of block sizes to the number of set
    partitions realizing it.  The block containing the first + item is chosen
    first, which makes every set partition appear exactly once.
    """
    if plus != minus:
        return {}
    if plus == 0:
        return {(): 1}
    out: dict[EvenPartition, int] = defaultdict(int)
    for j in range(1, plus + 1):
        ways = math.comb(plus - 1, j - 1) * math.comb(minus, j)
        for sizes, cnt in _balanced_splits(plus - j, minus - j).items():
            out[tuple(sorted(sizes + (2 * j,)))] += ways * cnt
    return dict(out)


def xi_coefficient(O: Sequence[int], O_prime: Sequence[int]) -> int:
    """Number of O'-subordinate balanced refinements of a fixed O-subordinate partition.

    Zero unless O' refines O.
    """
    O, Op = canonical(O), canonical(O_prime)
    if sum(O) != sum(Op):
        return 0
    if sum(O) > MAX_N:
        raise UsageError(f"n={sum(O)} exceeds the cap {MAX_N}")
    target = Counter(Op)
    # convolve the per-block refinement distributions, pruning anything that
    # can no longer fit inside the target multiset
    states: dict[tuple, int] = {(): 1}
    for b in O:
        nxt: dict[tuple, int] = defaultdict(int)
        for acc, c in states.items():
            for sizes, w in _balanced_splits(b // 2, b // 2).items():
                merged = tuple(sorted(acc + sizes))
                if all(v <= target[k] for k, v in Counter(merged).items()):
                    nxt[merged] += c * w
        states = nxt
    return states.get(Op, 0)


def refines(O_prime: Sequence[int], O: Sequence[int]) -> bool:
    return xi_coefficient(O, O_prime) > 0


# --- lambda ------------------------------------------------------------------

def _as_fraction(x, tol: float = 1e-12) -> Fraction:
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    f = Fraction(x).limit_denominator(10**12)
    if abs(float(f) - float(x)) > tol * max(1.0, abs(float(x))):
        raise UsageError(f"could not rationalize moment {x!r}")
    return f


def lambda_coefficients(n: int, mu: Sequence) -> dict[EvenPartition, Fraction]:
    """Solve prod_b mu_b = sum_{O' <= O} xi(O, O') lambda(O') for all even partitions of n.

    ``mu[b - 1]`` is mu_b = E|eta|^(2b); floats are rationalized.  Partitions
    with a part larger than 2*len(mu) are left out of the table.
    """
    if n % 2 or n < 0:
        raise UsageError("n must be a nonnegative even integer")
    if n and not len(mu):
        raise UsageError("need at least mu_1")
    m = [_as_fraction(x) for x in mu]
    if m and m[0] != 1:
        raise UsageError("mu_1 must equal 1")
    # lambda(O) only involves mu_b with 2b <= max part of O, so a short moment
    # list still determines the partitions with small parts
    parts = [O for O in even_partitions(n) if not O or O[-1] // 2 <= len(m)]
    lam: dict[EvenPartition, Fraction] = {}
    for O in parts:
        lhs = Fraction(1)
        for b in O:
            lhs *= m[b // 2 - 1]
        acc = Fraction(0)
        for Op in lam:
            if Op != O:
                x = xi_coefficient(O, Op)
                if x:
                    acc += x * lam[Op]
        lam[O] = lhs - acc
    return lam


def gaussian_moments(k: int) -> list[int]:
    return [math.factorial(b) for b in range(1, k + 1)]


def unit_modulus_moments(k: int) -> list[int]:
    return [1] * k


def stability_property(mu: Sequence, base: Sequence[int], pads: int = 1) -> tuple[Fraction, Fraction]:
    """Return (lambda(base), lambda(base + (2,)*pads)); they should agree."""
    base = canonical(base)
    padded = canonical(base + (2,) * pads)
    a = lambda_coefficients(sum(base), mu)[base]
    b = lambda_coefficients(sum(padded), mu)[padded]
    return a, b


@dataclass
class BoundAudit:
    worst_ratio_fine: float
    worst_partition_fine: EvenPartition | None
    fitted_C1: float
    holds: bool


def _log_abs(v: Fraction) -> float:
    """log |v| without converting to float, so huge exact values are fine."""
    return math.log(abs(v.numerator)) - math.log(v.denominator)


def lambda_bound_audit(lam: Mapping[EvenPartition, Fraction], C0: float) -> BoundAudit:
    """Compare |lambda(O)| with (n/2)!/|O|! * prod (C0 b)! and fit the coarse constant C1.

    C1 is the smallest value with |lambda| <= C1^n n^(C1 q) over the table
    (q = sum of parts >= 4), found by bisection.
    """
    worst, arg = 0.0, None
    for O, v in lam.items():
        n = sum(O)
        bound = math.lgamma(n // 2 + 1) - math.lgamma(len(O) + 1)
        bound += sum(math.lgamma(C0 * (b // 2) + 1) for b in O)
        if v != 0:
            r = math.exp(min(_log_abs(v) - bound, 700.0))
            if r > worst:
                worst, arg = r, O

    def ok(C1: float) -> bool:
        for O, v in lam.items():
            if v == 0:
                continue
            n, q = sum(O), q_weight(O)
            if _log_abs(v) > n * math.log(C1) + C1 * q * math.log(max(n, 1)) + 1e-12:
                return False
        return True

    lo, hi = 1.0, 2.0
    while not ok(hi):
        hi *= 2
    if ok(lo):
        hi = lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return BoundAudit(worst, arg, hi, worst <= 1.0)


# --- over-pairings and the moment identity -------------------------------------

def balanced_set_partitions(signs: Sequence[int], labels: Sequence[Hashable] | None = None
                            ) -> Iterator[list[tuple[int, ...]]]:
    """Balanced set partitions of range(len(signs)).

    With ``labels`` given, only partitions whose blocks are label-constant are
    produced (the others carry a zero indicator anyway).
    """
    n = len(signs)

    def rec(remaining: tuple[int, ...]):
        if not remaining:
            yield []
            return
        first, rest = remaining[0], remaining[1:]
        cand = [i for i in rest if labels is None or labels[i] == labels[first]]
        for size in range(1, len(cand) + 1):
            for extra in _combinations(cand, size):
                block = (first,) + extra
                if sum(signs[i] for i in block) != 0:
                    continue
                left = tuple(i for i in rest if i not in extra)
                for tail in rec(left):
                    yield [block] + tail

    if n == 0:
        yield []
        return
    yield from rec(tuple(range(n)))


def _combinations(items, r):
    from itertools import combinations
    return combinations(items, r)


def block_type(blocks: Sequence[Sequence[int]]) -> EvenPartition:
    return tuple(sorted(len(b) for b in blocks))


def moment_bruteforce(labels: Sequence[Hashable], signs: Sequence[int], mu: Sequence
                      ) -> tuple[Fraction, Fraction]:
    """Both sides of the cumulant expansion of E prod eta_{k_i}^{sign_i}.

    Left: product over distinct values of mu_a when each value carries a + and
    a - signs (zero otherwise).  Right: sum over label-constant balanced
    over-pairings of lambda(type).
    """
    n = len(labels)
    if len(signs) != n:
        raise UsageError("labels and signs differ in length")
    if n > 12:
        raise UsageError("n > 12 is out of range for the brute force")
    m = [_as_fraction(x) for x in mu]
    groups: dict[Hashable, list[int]] = defaultdict(lambda: [0, 0])
    for k, s in zip(labels, signs):
        groups[k][0 if s > 0 else 1] += 1
    lhs = Fraction(1)
    for a, b in groups.values():
        if a != b:
            lhs = Fraction(0)
            break
        if a > len(m):
            raise UsageError(f"need mu_{a}")
        lhs *= m[a - 1]
    if sum(signs) != 0:
        return lhs, Fraction(0)
    lam = lambda_coefficients(n, m[: n // 2]) if n else {(): Fraction(1)}
    rhs = Fraction(0)
    for blocks in balanced_set_partitions(list(signs), list(labels)):
        rhs += lam[block_type(blocks)]
    return lhs, rhs


def lambda_table_csv(lam: Mapping[EvenPartition, Fraction]) -> str:
    lines = ["partition,lambda_num,lambda_den"]
    for O, v in sorted(lam.items(), key=lambda kv: (-len(kv[0]), kv[0])):
        lines.append(f"{'-'.join(map(str, O))},{v.numerator},{v.denominator}")
    return "\n".join(lines) + "\n"
