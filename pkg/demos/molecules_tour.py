"""From gardens to molecules: atoms, bonds, components and chains."""
import numpy as np

from wavekin import diagrams as dg
from wavekin import molecules as ml

rng = np.random.default_rng(2)
g = dg.random_regular_couple(rng, 3)
gm = ml.garden_to_molecule(g)
mol = gm.molecule
print("couple:", dg.serialize_garden(g))
print("molecule: V =", mol.V, " E =", mol.E)
print("chi statistics:", ml.chi_stats(g, gm))
print("type I chains:", ml.find_type1_chains(mol))
print("type II chains:", ml.find_type2_chains(mol))
back = ml.reconstruct_gardens(mol, len(g.signs) // 2, g.signs)
print("reconstructed gardens:", len(back),
      "(original among them)" if dg.serialize_garden(g) in {dg.serialize_garden(h) for h in back} else "")
