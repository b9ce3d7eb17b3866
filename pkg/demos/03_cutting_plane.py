"""Solving a log-sum-exp problem that has no usable conjugate.

The cutting-plane method alternates between a master problem over a finite
scenario set and a worst-case search that adds the most violated scenarios.
The history shows the master value rising while the largest violation
found by the search falls to zero.

Run with ``python demos/03_cutting_plane.py``.
"""

from mro.clustering import kmeans
from mro.cutting_plane import cutting_plane_solve
from mro.data import UncertaintySpec
from mro.experiments import gen_logsumexp, logsumexp_problem, logsumexp_support

n = 10
data = gen_logsumexp(n=n, N=30, seed=0)
spec = UncertaintySpec(2, 0.1, logsumexp_support(n))
prob = logsumexp_problem(n, kmeans(data, 3, seed=0), spec)

res = cutting_plane_solve(prob)
print(f"converged={res.converged} after {res.iterations} iterations")
for h in res.history:
    print(f"  iter {h['iter']:>2}  master {h['master_obj']:.6f}  violation {h['oracle_val']:.6f}")
print(f"allocation: {prob.x_of(res.solution).round(3)}")
