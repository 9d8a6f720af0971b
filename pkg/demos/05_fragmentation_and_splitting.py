"""
Fragmentation and splitting trees
=================================

Fragmentation trees count fragments above a size threshold. Splitting trees
can die out, in which case the simulator restarts from a fresh root.
"""

import numpy as np

from cmjtrees import analysis, families, simulate

frag = families.preset("fragmentation")
rng = np.random.default_rng(3)
out = simulate(frag, 1e5, 1.0, rng)
print(f"fragmentation: {out.z_total} nodes, weight {out.z_phi:g}, tau={out.tau:.3f}")
print("alpha", analysis.solve_malthusian(frag))

# a uniform split into three pieces: Beta(1, 2) then Beta(1, 1) breaks,
# given as quantile tables on a uniform grid
u = np.linspace(0.0, 1.0, 201)
dislocation = families.StickBreaking((tuple(1 - np.sqrt(1 - u)), tuple(u)), b=3)
stick = families.make_family("Fragmentation", dislocation=dislocation, b=3)
print(stick.label, analysis.solve_malthusian(stick))

split = families.preset("splitting", b=2.0, rho=1.0)
print("extinction probability", families.extinction_probability(split))
retries = [simulate(split, 100, 1.0, rng).retries for _ in range(2000)]
print("mean restarts per run", np.mean(retries))
