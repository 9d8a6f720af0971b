"""
Mean population from the renewal equation
=========================================

The expected weight at time t solves a renewal equation. Compare the grid
solution with a Monte Carlo estimate at fixed time.
"""

import numpy as np

from cmjtrees import families, mean_count, simulate_fixed_time

fam = families.preset("binary-pyramid")
t = 5.0
table = mean_count(fam, 1.0, t, 1e-3)
print("renewal:", table.at(t))

rng = np.random.default_rng(7)
z = np.array([simulate_fixed_time(fam, t, 1.0, rng).z_phi for _ in range(4000)])
print(f"monte carlo: {z.mean():.3f} +- {z.std(ddof=1) / np.sqrt(len(z)):.3f}")

# halving h halves the error (first order)
exact = np.exp(t)
for h in (0.02, 0.01, 0.005):
    print(h, mean_count(families.preset("rrt"), 1.0, t, h).at(t) - exact)
