"""Clustering the data barely changes an affine robust program.

For constraints that are affine in the uncertainty, the worst case over a
union of per-cluster balls depends on the data only through its mean, so
every cluster count K gives the same optimum.  Fewer clusters means a smaller
conic program, which is where the speedup comes from.

Run with ``python demos/01_clustering_and_k_invariance.py``.
"""

import math

from mro.clustering import d_profile, elbow_select, kmeans
from mro.data import SupportSet, UncertaintySpec
from mro.experiments import facility_problem, gen_facility
from mro.reformulate import solve_problem

inst = gen_facility(n=5, m=25, N=50, seed=0)
print(f"facility instance: {inst.c.size} sites, {inst.data.m} customers, "
      f"{inst.data.N} demand scenarios")

# How much within-cluster spread remains as K grows, and where the elbow sits.
profile = d_profile(inst.data, [1, 2, 5, 10, 20, 50], seed=0)
for K, D, eta in profile:
    print(f"  K={K:>2}  D(K)={D:8.3f}  eta(K)={eta:8.3f}")
print(f"elbow suggests K={elbow_select(profile)}")

spec = UncertaintySpec(math.inf, 0.5, SupportSet.nonneg(inst.data.m))
print("\nsolving the robust facility problem at eps=0.5, p=inf")
for K in (1, 5, 10, 50):
    sol = solve_problem(facility_problem(inst, kmeans(inst.data, K, seed=0), spec))
    print(f"  K={K:>2}  objective={sol.objective:.6f}  backend time={sol.solve_time:.3f}s  "
          f"open sites={sol.x[:inst.c.size].round(3)}")
