"""
The effectiveness bound: a worked value, random checks and where it breaks
==========================================================================
"""
from delphi_lab import metrics

# c = 0.25, eps = 0.2, four benign clients and two attackers
print("bound(0.25, 0.2, 4, 2) =", metrics.effectiveness_bound(0.25, 0.2, 4, 2))

rep = metrics.verify_bound_derivation(1000, seed=0)
print(f"{rep.passed}/{rep.trials} equal-norm trials inside the bound, "
      f"tightest lhs/rhs {rep.max_ratio:.4f}")

# unequal perturbation sizes leave the premise; eps taken as the smallest size
bad = metrics.search_bound_counterexamples(1000, seed=0)
print(f"{bad.trials - bad.passed}/{bad.trials} unequal-norm trials violate it")
for v in bad.violations[:3]:
    print("   ", {k: round(x, 4) if isinstance(x, float) else x for k, x in v.items()})
