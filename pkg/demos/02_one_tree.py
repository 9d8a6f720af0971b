"""
Growing a single percolated tree
================================

Simulate one m-ary search tree until its weight reaches n, keeping every
edge with probability p, then look at the clusters.
"""

import numpy as np

from cmjtrees import SimOptions, export_tree, families, simulate

fam = families.preset("m-ary-search", m=3)
rng = np.random.default_rng(2024)

out = simulate(fam, 20_000, 0.9, rng, SimOptions("full", record_clusters=True))
print(f"stopped at tau={out.tau:.3f} with {out.z_total} nodes (weight {out.z_phi:g})")
print(f"root cluster {out.root_cluster}, {out.n_mutants} other clusters")

# largest few clusters
sizes = np.sort(out.cluster_sizes)[::-1]
print("largest clusters:", sizes[:5])

# the genealogy is available in full mode
tree = out.tree
depth = np.zeros(len(tree), dtype=int)
for i in range(1, len(tree)):
    depth[i] = depth[tree.parent[i]] + 1
print("height", depth.max(), "mean depth", depth.mean().round(2))

# edge list as CSV bytes
print(export_tree(out).decode().splitlines()[:4])
