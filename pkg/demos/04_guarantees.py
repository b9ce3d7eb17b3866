"""How far the clustered worst case can drift from the unclustered one.

The clustered value is sandwiched between the singleton-cluster value and the
support-relaxed singleton value plus ``L D / 2``.  Adding the clustering
error ``eta`` to the radius restores the finite-sample guarantee of the
unclustered ball, and ``eta`` bounds the Wasserstein distance between the
clustered and empirical distributions.

Run with ``python demos/04_guarantees.py``.
"""

import numpy as np

from mro.clustering import kmeans
from mro.data import Dataset, SupportSet, UncertaintySpec
from mro.families import ConcaveQuadratic
from mro.guarantees import adjusted_epsilon, sandwich_check, wasserstein_distance

rng = np.random.default_rng(1)
G = rng.normal(size=(2, 3, 3))
family = ConcaveQuadratic(np.einsum("nji,njk->nik", G, G) + 0.5 * np.eye(3))
data = Dataset(rng.normal(size=(25, 3)))
x = np.array([0.6, 0.4])
spec = UncertaintySpec(2, 0.3, SupportSet.full(3))
uniform = np.full(data.N, 1 / data.N)

print(" K   g_N       g_K       g_N*+LD/2  eta     W_2     adjusted eps")
for K in (1, 3, 8, 25):
    cs = kmeans(data, K, seed=0)
    rep = sandwich_check(family, x, data, cs, spec)
    W = wasserstein_distance(cs.centroids, cs.weights, data.samples, uniform, 2)
    print(f"{K:>2}  {rep.g_N:<9.4f} {rep.g_K:<9.4f} {rep.g_N_star + rep.bound:<10.4f} "
          f"{cs.eta:<7.4f} {W:<7.4f} {adjusted_epsilon(spec.epsilon, cs):.4f}")
