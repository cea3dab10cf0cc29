import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavekin import diagrams as dg
from wavekin.diagrams import (LEAF, Forest, Garden, OverGarden, classify, classify_over_garden,
                              classify_over_garden_bruteforce, decompose, enumerate_gardens,
                              enumerate_over_gardens, enumerate_trees, expand_skeleton, find_irregular_chains,
                              irregular_chains_bruteforce, is_prime, is_trivial, parse_garden, random_garden,
                              random_regular_couple, random_structured_garden, regular_couple_count,
                              second_max_product, serialize_garden, skeleton, trivial_couple, trivial_garden)
from wavekin.lattice import UsageError

T1 = ((), (), ())   # the scale-1 tree


def lukasiewicz_count(n):
    """Count words over {0, 3} of length 3n+1 that encode ternary trees in preorder."""
    count = 0
    for pos in itertools.combinations(range(3 * n + 1), n):
        need, ok = 1, True
        s = set(pos)
        for i in range(3 * n + 1):
            if need == 0:
                ok = False
                break
            need += 2 if i in s else -1
        count += ok and need == 0
    return count


def mixed_example():
    """Scale-1 + tree whose leaves pair with three trivial trees."""
    return Garden((T1, LEAF, LEAF, LEAF), (1, -1, 1, -1),
                  (((0, (0,)), (1, ())), ((0, (1,)), (2, ())), ((0, (2,)), (3, ()))))


def mini_couple():
    return Garden((T1, T1), (1, -1), (((0, (0,)), (1, (0,))), ((0, (1,)), (1, (1,))), ((0, (2,)), (1, (2,)))))


# --- trees -------------------------------------------------------------------------------------

@pytest.mark.parametrize("n", range(7))
def test_tree_counts(n):
    trees = enumerate_trees(n)
    assert len(trees) == len(set(trees)) == lukasiewicz_count(n) == dg.ternary_catalan(n)
    for t in trees:
        assert dg.scale(t) == n and dg.n_leaves(t) == 2 * n + 1
        assert sum(1 for _ in dg.nodes(t)) == 3 * n + 1


def test_tree_cap():
    with pytest.raises(UsageError):
        enumerate_trees(8)


def test_child_sign_rule():
    for t in enumerate_trees(3):
        for p in dg.branch_paths(t):
            for s in (1, -1):
                z = dg.node_sign(s, p)
                assert [dg.node_sign(s, p + (i,)) for i in range(3)] == [z, -z, z]


def test_second_max_product():
    assert second_max_product(LEAF) == (1, 1.0, True)
    assert second_max_product(T1) == (1, 1.0, True)
    for n in range(6):
        for t in enumerate_trees(n):
            prod, bound, ok = second_max_product(t)
            assert ok and bound == 3 ** n / (2 * n + 1)


# --- gardens -----------------------------------------------------------------------------------

def test_trivial_couple_enumeration():
    gs = list(enumerate_gardens((0, 0), (1, -1)))
    assert gs == [trivial_couple()]


def test_scale_one_couple_count():
    assert len(list(enumerate_gardens((1, 0), (1, -1)))) == 2


def test_unbalanced_signature_empty():
    assert list(enumerate_gardens((0, 0), (1, 1))) == []
    assert list(enumerate_gardens((1, 1, 0, 0), (1, 1, 1, -1))) == []


@pytest.mark.parametrize("scales,sig", [((1, 1), (1, -1)), ((2, 0, 0, 0), (1, -1, -1, 1)), ((1, 0, 1, 0), (1, 1, -1, -1))])
def test_garden_count_formula(scales, sig):
    # every tree tuple gives (#+ leaves)! matchings, so the count is prod catalan * p!
    gs = list(enumerate_gardens(scales, sig))
    plus = (sum(2 * m + 1 for m in scales)) // 2
    assert len(gs) == len(set(gs)) == math.prod(dg.ternary_catalan(m) for m in scales) * math.factorial(plus)
    for g in gs:
        g.validate()


def test_garden_validation():
    with pytest.raises(UsageError):
        Garden((LEAF, LEAF), (1, 1), (((0, ()), (1, ())),))
    with pytest.raises(UsageError):
        Garden((T1, LEAF), (1, -1), (((0, (0,)), (0, (2,))), ((0, (1,)), (1, ()))))
    with pytest.raises(UsageError):
        Garden((LEAF, LEAF), (1, -1), ())


def test_serialization_golden():
    g = mini_couple()
    assert serialize_garden(g) == "+(ooo) -(ooo) / 0-3 1-4 2-5"
    assert serialize_garden(trivial_couple()) == "+o -o / 0-1"
    assert serialize_garden(mixed_example()) == "+(ooo) -o +o -o / 0-3 1-4 2-5"


@settings(max_examples=100)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([2, 4, 6]))
def test_serialization_round_trip(seed, width):
    g = random_garden(np.random.default_rng(seed), width)
    assert parse_garden(serialize_garden(g)) == g


# --- classification ----------------------------------------------------------------------------

@pytest.mark.parametrize("R", [1, 2, 3])
def test_trivial_garden_is_regular_multi_couple(R):
    c = classify(trivial_garden([1, -1] * R))
    assert c.regular_multi_couple and c.multi_couple and not c.mixed and c.prime


def test_mini_couple_is_regular():
    c = classify(mini_couple())
    assert c.regular_couple and c.regular_multi_couple and not c.prime


def test_mixed_example():
    c = classify(mixed_example())
    assert c.mixed and not c.multi_couple and not c.regular_multi_couple


def forward_closure(max_scale):
    """All regular couples up to max_scale generated by forward insertions from the trivial couple."""
    seen = {trivial_couple()}
    frontier = [trivial_couple()]
    while frontier:
        nxt = []
        for g in frontier:
            if g.scale + 2 > max_scale:
                continue
            base, _ = Forest.from_garden(g)
            moves = [("A", x, c) for x in base.kids if base.kids[x] is None
                     for c in range(len(dg.MINI_COUPLE_CODES))]
            moves += [("B", v, c) for v in base.kids for c in range(len(dg.MINI_TREE_CODES))]
            for kind, x, code in moves:
                f = base.copy()
                (f.insert_mini_couple if kind == "A" else f.insert_mini_tree)(x, code)
                h = f.to_garden()[0]
                if h not in seen:
                    seen.add(h)
                    nxt.append(h)
        frontier = nxt
    return seen


def test_regular_couple_counts_match_forward_closure():
    closure = forward_closure(4)
    for m in (0, 1, 2, 3, 4):
        assert regular_couple_count(m) == sum(1 for g in closure if g.scale == m)


def test_insertion_code_tables():
    # two mini-couple codes and six mini-tree codes
    assert len(dg.MINI_COUPLE_CODES) == 2
    assert len(dg.MINI_TREE_CODES) == 6


# --- skeleton ----------------------------------------------------------------------------------

@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 5))
def test_regular_couple_reduces_to_trivial(seed, steps):
    g = random_regular_couple(np.random.default_rng(seed), steps)
    sk, log = skeleton(g)
    assert is_trivial(sk) and len(log) == steps


def test_regular_multi_couple_reduces_to_trivial():
    rng = np.random.default_rng(4)
    a, b = random_regular_couple(rng, 3), random_regular_couple(rng, 2)
    pairs = list(a.pairs) + [((x[0] + 2, x[1]), (y[0] + 2, y[1])) for x, y in b.pairs]
    g = Garden(a.trees + b.trees, a.signs + b.signs, tuple(pairs))
    assert classify(g).regular_multi_couple
    assert is_trivial(skeleton(g)[0])


def test_prime_garden_fixed():
    g = mixed_example()
    assert is_prime(g)
    sk, log = skeleton(g)
    assert sk == g and log == []


def test_skeleton_confluence():
    rng = np.random.default_rng(11)
    for i in range(200):
        g = random_structured_garden(rng, int(rng.choice([2, 4, 6])), base_scale=2, insertions=int(rng.integers(0, 5)))
        a, _ = skeleton(g, np.random.default_rng([i, 0]))
        b, _ = skeleton(g, np.random.default_rng([i, 1]))
        assert a == b and is_prime(a)


def test_expand_trivial_attachments():
    rng = np.random.default_rng(2)
    for _ in range(20):
        sk, _ = skeleton(random_garden(rng, 4))
        assert expand_skeleton(sk) == sk


def test_decompose_round_trip():
    rng = np.random.default_rng(12)
    for _ in range(100):
        g = random_structured_garden(rng, int(rng.choice([2, 4])), base_scale=2, insertions=int(rng.integers(0, 4)))
        sk, trees, couples = decompose(g)
        assert expand_skeleton(sk, trees, couples) == g
        assert skeleton(g)[0] == sk


def test_non_regular_attachment_rejected():
    sk = trivial_couple()
    key = ((0, ()), (1, ()))
    assert expand_skeleton(sk, couples={key: mini_couple()}) == mini_couple()
    bad = next(g for g in enumerate_gardens((1, 1), (1, -1)) if not classify(g).regular_couple)
    with pytest.raises(UsageError):
        expand_skeleton(sk, couples={key: bad})


def test_expansion_count_grows_exponentially():
    counts = [regular_couple_count(m) for m in range(0, 5, 2)]
    ratios = [b / a for a, b in zip(counts, counts[1:])]
    assert all(r > 0 for r in ratios) and ratios[-1] < 10 * ratios[0]


# --- irregular chains --------------------------------------------------------------------------

def test_trivial_couple_has_no_chains():
    assert find_irregular_chains(trivial_couple()) == []


def test_chains_match_bruteforce_and_are_disjoint():
    rng = np.random.default_rng(21)
    nonempty = 0
    for _ in range(300):
        g = random_structured_garden(rng, int(rng.choice([2, 4])), base_scale=2, insertions=int(rng.integers(0, 3)))
        if g.scale > 6:
            continue
        chains = find_irregular_chains(g)
        assert chains == irregular_chains_bruteforce(g)
        nodes = [n for c in chains for n in c]
        assert len(nodes) == len(set(nodes))
        nonempty += bool(chains)
    assert nonempty > 0


# --- over-gardens ------------------------------------------------------------------------------

def test_over_garden_classifier_matches_bruteforce():
    checked = 0
    for scales in itertools.product(range(3), repeat=4):
        if sum(scales) > 2:
            continue
        for sig in ((1, -1, 1, -1), (1, 1, -1, -1)):
            for shapes in itertools.product(*(enumerate_trees(m) for m in scales)):
                for og in enumerate_over_gardens(shapes, sig):
                    assert classify_over_garden(og) == classify_over_garden_bruteforce(og)
                    checked += 1
    assert checked > 100


def test_pair_blocks_regular():
    og = OverGarden((LEAF, LEAF, LEAF, LEAF), (1, -1, 1, -1), (((0, ()), (1, ())), ((2, ()), (3, ()))))
    assert classify_over_garden(og)


def test_big_block_with_non_lone_leaf():
    # the size-4 block holds two leaves of the scale-1 tree, so neither is a lone leaf
    og = OverGarden((T1, LEAF, LEAF, LEAF), (1, -1, 1, -1),
                    (((0, (0,)), (0, (1,)), (1, ()), (2, ())), ((0, (2,)), (3, ()))))
    assert not classify_over_garden(og)
    assert not classify_over_garden_bruteforce(og)
