"""Wave kinetic theory toolkit: kinetic solvers, lattice ensembles, diagram combinatorics."""

__version__ = "0.1.0"
