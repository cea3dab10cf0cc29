import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sympy import partition
from sympy.utilities.iterables import multiset_partitions

from wavekin.cumulants import (balanced_set_partitions, canonical, even_partitions, gaussian_moments,
                               lambda_bound_audit, lambda_coefficients, lambda_table_csv, moment_bruteforce,
                               q_weight, refines, stability_property, unit_modulus_moments, xi_coefficient)
from wavekin.lattice import UsageError


def all_set_partitions(n):
    if n == 0:
        return [[]]
    return [[tuple(b) for b in p] for p in multiset_partitions(list(range(n)))]


def balanced(p, signs):
    return all(sum(signs[i] for i in b) == 0 for b in p)


def xi_bruteforce(O, Op):
    """Fix blocks of sizes O (half + half - each) and count balanced refinements of type O'."""
    signs, owner = [], []
    for j, b in enumerate(O):
        signs += [1] * (b // 2) + [-1] * (b // 2)
        owner += [j] * b
    count = 0
    for p in all_set_partitions(len(signs)):
        if not balanced(p, signs):
            continue
        if any(len({owner[i] for i in b}) > 1 for b in p):
            continue
        count += tuple(sorted(len(b) for b in p)) == tuple(sorted(Op))
    return count


rational_mu = st.lists(st.fractions(min_value=0, max_value=50, max_denominator=20), min_size=5, max_size=5).map(
    lambda xs: [Fraction(1)] + xs)


# --- partitions and xi -------------------------------------------------------------------------

@pytest.mark.parametrize("n", range(0, 17, 2))
def test_even_partition_count(n):
    parts = even_partitions(n)
    assert len(parts) == len(set(parts)) == partition(n // 2)
    assert all(sum(p) == n and all(x % 2 == 0 and x >= 2 for x in p) for p in parts)


def test_canonical_and_q():
    assert canonical([4, 2, 2]) == (2, 2, 4)
    assert q_weight((2, 4, 6)) == 10
    with pytest.raises(UsageError):
        canonical([3, 1])


def test_xi_examples():
    assert xi_coefficient((4,), (4,)) == 1
    assert xi_coefficient((4,), (2, 2)) == 2
    for k in range(1, 7):
        assert xi_coefficient((2,) * k, (2,) * k) == 1
    assert xi_coefficient((2, 2), (4,)) == 0 and not refines((4,), (2, 2))


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_xi_matches_bruteforce(n):
    for O in even_partitions(n):
        for Op in even_partitions(n):
            assert xi_coefficient(O, Op) == xi_bruteforce(O, Op)


def test_xi_pairing_formula():
    for n in range(2, 13, 2):
        for O in even_partitions(n):
            assert xi_coefficient(O, (2,) * (n // 2)) == math.prod(math.factorial(b // 2) for b in O)


def test_xi_cap():
    with pytest.raises(UsageError):
        xi_coefficient((18,), (18,))


# --- lambda ------------------------------------------------------------------------------------

@pytest.mark.parametrize("n", range(2, 13, 2))
def test_gaussian_lambdas_vanish(n):
    lam = lambda_coefficients(n, gaussian_moments(n // 2))
    pairs = (2,) * (n // 2)
    assert lam[pairs] == 1
    assert all(v == 0 for O, v in lam.items() if O != pairs)


@given(rational_mu)
def test_four_block_lambda(mu):
    assert lambda_coefficients(4, mu[:2])[(4,)] == mu[1] - 2


def test_uniform_phase_four_block():
    assert lambda_coefficients(4, unit_modulus_moments(2))[(4,)] == -1
    assert lambda_coefficients(8, unit_modulus_moments(4))[(2, 2, 2, 2)] == 1


@given(rational_mu)
def test_stability_under_padding(mu):
    for base in [(4,), (6,), (4, 4), (2, 4), (8,)]:
        a, b = stability_property(mu, base, pads=1)
        assert a == b
    a, b = stability_property(mu, (4,), pads=2)
    assert a == b


@given(rational_mu, st.fractions(min_value=0, max_value=100))
def test_triangularity(mu, bump):
    lam = lambda_coefficients(8, mu[:4])
    mu2 = list(mu[:4])
    mu2[3] += bump
    lam2 = lambda_coefficients(8, mu2)
    for O in lam:
        if O[-1] < 8:
            assert lam[O] == lam2[O]


def test_lambda_input_checks():
    with pytest.raises(UsageError):
        lambda_coefficients(4, [2, 1])
    with pytest.raises(UsageError):
        lambda_coefficients(3, [1])


def test_float_moments_rationalized():
    lam = lambda_coefficients(4, [1.0, 1.5])
    assert lam[(4,)] == Fraction(-1, 2)


# --- moment identity ---------------------------------------------------------------------------

def rhs_bruteforce(labels, signs, lam):
    total = Fraction(0)
    for p in all_set_partitions(len(labels)):
        if balanced(p, signs) and all(len({labels[i] for i in b}) == 1 for b in p):
            total += lam[tuple(sorted(len(b) for b in p))]
    return total


def test_distinct_pairs_give_one():
    lhs, rhs = moment_bruteforce([0, 0, 1, 1, 2, 2], [1, -1, -1, 1, 1, -1], [1, 7, 3])
    assert lhs == rhs == 1


def test_unbalanced_gives_zero():
    assert moment_bruteforce([0, 0, 1, 1], [1, 1, -1, -1], [1, 2]) == (0, 0)


@given(st.fractions(min_value=0, max_value=20))
def test_four_equal_values(mu2):
    lhs, rhs = moment_bruteforce([5, 5, 5, 5], [1, 1, -1, -1], [1, mu2])
    assert lhs == rhs == mu2


def test_random_configurations_exact():
    rng = np.random.default_rng(17)
    for _ in range(300):
        half = int(rng.integers(1, 5))
        signs = [1] * half + [-1] * half
        rng.shuffle(signs)
        labels = [int(x) for x in rng.integers(0, 3, 2 * half)]
        mu = [Fraction(1)] + [Fraction(int(rng.integers(0, 30)), int(rng.integers(1, 6))) for _ in range(3)]
        lhs, rhs = moment_bruteforce(labels, signs, mu)
        assert lhs == rhs
        lam = lambda_coefficients(2 * half, mu[:half])
        assert rhs_bruteforce(labels, signs, lam) == rhs


def test_balanced_partition_enumerator():
    signs = [1, -1, 1, -1, 1, -1]
    canon = lambda p: tuple(sorted(tuple(sorted(b)) for b in p))
    mine = {canon(p) for p in balanced_set_partitions(signs)}
    ref = {canon(p) for p in all_set_partitions(6) if balanced(p, signs)}
    assert mine == ref and len(list(balanced_set_partitions(signs))) == len(ref)


# --- bound audit and export --------------------------------------------------------------------

def test_gaussian_audit_trivial():
    audit = lambda_bound_audit(lambda_coefficients(12, gaussian_moments(6)), C0=41)
    assert audit.holds and audit.worst_ratio_fine <= 1.0


def test_uniform_phase_audit():
    audit = lambda_bound_audit(lambda_coefficients(12, unit_modulus_moments(6)), C0=41)
    assert audit.holds and audit.worst_ratio_fine < 1e-10 and audit.fitted_C1 >= 1.0


def test_adversarial_moments_audit():
    C0 = 41
    mu = [Fraction(1)] + [Fraction(math.factorial(C0 * r), 2) for r in range(2, 6)]
    audit = lambda_bound_audit(lambda_coefficients(10, mu), C0=C0)
    assert audit.holds


def test_lambda_table_csv():
    text = lambda_table_csv(lambda_coefficients(4, [1, Fraction(3, 2)]))
    assert text.splitlines() == ["partition,lambda_num,lambda_den", "2-2,1,1", "4,-1,2"]
