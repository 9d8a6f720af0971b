"""
Growth rates of the built-in families
=====================================

Every family has a Malthusian parameter alpha and, once each child is kept
with probability p, a smaller clonal rate alpha_p. The gap between them,
scaled by mu_bar / (1 - p), approaches 1 as p -> 1.
"""

from cmjtrees import Subcritical, analysis, families

for name, fam in families.catalogue().items():
    alpha = analysis.solve_malthusian(fam)
    print(f"{name:22s} alpha={alpha:.6f}  mu_bar={analysis.mu_bar(fam, alpha):.6f}"
          f"  p*={analysis.subcritical_threshold(fam):.4f}")

# clonal rates close to p = 1
pyramid = families.preset("binary-pyramid")
for q in (1e-1, 1e-2, 1e-3, 1e-4):
    print(f"1-p={q:g}  ratio={analysis.lemma3_ratio(pyramid, 1 - q):.6f}")

# below p* the clonal process dies out and there is no alpha_p
try:
    analysis.solve_clonal_malthusian(families.preset("bst"), 0.4)
except Subcritical as exc:
    print("bst at p=0.4:", exc)

# families can also be built directly
pa = families.make_family("GeneralPA", weights=families.AffineWeights(1, 0.5))
print(pa.label, analysis.solve_malthusian(pa))
