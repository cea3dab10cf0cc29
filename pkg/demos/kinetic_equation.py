"""Evolve a Gaussian spectrum under the mollified kinetic equation.

Prints mass and the peak value along the trajectory, then the split of the
collision operator into its gain part sigma and its loss rate gamma.
"""
import numpy as np

from wavekin.kinetic import (KineticGrid, ResonantQuadrature, collision_field, sigma_gamma_field,
                             solve_wke, solve_wke0)

beta = (1.0, 1.3)
grid = KineticGrid(2, 3.0, 15)
P = grid.points()
n_in = np.exp(-np.sum(P ** 2, axis=1) / 1.5)
quad = ResonantQuadrature(epsilon=0.5)

print("grid:", grid.n, "points per axis, spacing", grid.h)
traj = solve_wke(grid, n_in, 0.2, beta, quad, dt=0.2 / 16)
for j in range(0, len(traj.times), 4):
    mass = traj.n[j].sum() * grid.h ** 2
    print(f"t = {traj.times[j]:.4f}  mass = {mass:.10f}  peak = {traj.n[j].max():.6f}")

K = collision_field(grid, n_in, n_in, n_in, beta, quad)
s, g = sigma_gamma_field(grid, n_in, beta, quad)
print("max |K - (sigma + n gamma)| =", np.max(np.abs(K - (s + n_in * g))))

w0 = solve_wke0(traj)
print("linear flow n0: ODE vs exponential formula, max rel deviation", w0.max_rel_deviation())
