"""Ternary trees, gardens, and the skeleton reduction.

Counts trees against the ternary Catalan numbers, prints a few gardens in
the text format, and reduces a random structured garden to its skeleton.
"""
import numpy as np

from wavekin import diagrams as dg

for n in range(6):
    print(f"scale {n}: {len(dg.enumerate_trees(n))} trees (ternary Catalan {dg.ternary_catalan(n)})")

print("\nall couples with one branching node per tree:")
for g in dg.enumerate_gardens((1, 1), (1, -1)):
    c = dg.classify(g)
    print(" ", dg.serialize_garden(g), " regular" if c.regular_couple else "", " prime" if c.prime else "")

rng = np.random.default_rng(0)
print()
for m in (2, 4):
    print(f"regular couples of total scale {m}: {dg.regular_couple_count(m)}")

g = dg.random_structured_garden(rng, 2)
sk, log = dg.skeleton(g)
print("\nrandom structured garden:", dg.serialize_garden(g))
print("skeleton after", len(log), "reductions:", dg.serialize_garden(sk), "prime:", dg.is_prime(sk))
