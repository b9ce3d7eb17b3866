"""The dual program reproduces the direct worst-case search.

For a fixed decision ``x`` the worst-case expected constraint value over the
clustered ambiguity set can be computed two ways: by solving the conic dual,
or by searching for the worst scenarios directly with projected gradient
ascent.  Strong duality says they agree.  The second half shows how the value
at finite ``p`` approaches the ``p = inf`` value as ``p`` grows.

Run with ``python demos/02_worst_case_duality.py``.
"""

import math

import numpy as np

from mro.clustering import kmeans
from mro.cutting_plane import max_oracle
from mro.data import Dataset, SupportSet, UncertaintySpec
from mro.families import ConcaveQuadratic
from mro.reformulate import worst_case_value

rng = np.random.default_rng(0)
G = rng.normal(size=(3, 2, 2))
A = np.einsum("nji,njk->nik", G, G) + 0.5 * np.eye(2)
family = ConcaveQuadratic(A)
data = Dataset(rng.normal(size=(20, 2)))
clustered = kmeans(data, 4, seed=0)
x = rng.uniform(0.2, 1.0, 3)

print("eps    dual          direct search  gap")
for eps in (0.05, 0.1, 0.3, 1.0):
    spec = UncertaintySpec(2, eps, SupportSet.full(2))
    dual = worst_case_value(family, x, clustered, spec)
    direct = max_oracle(family, x, clustered, spec)
    print(f"{eps:<6} {dual:<13.8f} {direct.value:<14.8f} {abs(dual - direct.value):.1e}")

print("\nvalue as p grows (eps=0.1)")
limit = max_oracle(family, x, clustered, UncertaintySpec(math.inf, 0.1, SupportSet.full(2)))
for p in (2, 4, 8, 16):
    v = max_oracle(family, x, clustered, UncertaintySpec(p, 0.1, SupportSet.full(2))).value
    print(f"  p={p:<3} value={v:.6f}  gap to p=inf {abs(v - limit.value):.2e}")
