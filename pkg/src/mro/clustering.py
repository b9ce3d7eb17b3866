"""K-means partitioning of a dataset and the clustering-quality metrics.

``D`` is the mean squared Euclidean distance from each sample to its centroid
(the k-means objective).  ``eta`` is the largest distance, measured in the
uncertainty-set norm, from any sample to its centroid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from mro.data import L2, Dataset, NormSpec


@dataclass(frozen=True, eq=False)
class ClusteredSet:
    centroids: np.ndarray
    weights: np.ndarray
    assignments: np.ndarray
    D: float
    eta: float
    source_N: int

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def m(self) -> int:
        return self.centroids.shape[1]

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "source_N": self.source_N,
            "centroids": self.centroids.tolist(),
            "weights": self.weights.tolist(),
            "assignments": self.assignments.tolist(),
            "D": self.D,
            "eta": self.eta,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ClusteredSet":
        return cls(np.asarray(d["centroids"], dtype=float),
                   np.asarray(d["weights"], dtype=float),
                   np.asarray(d["assignments"], dtype=int),
                   float(d["D"]), float(d["eta"]), int(d["source_N"]))

    @classmethod
    def from_json(cls, text: str) -> "ClusteredSet":
        return cls.from_dict(json.loads(text))

    def equals(self, other: "ClusteredSet") -> bool:
        return (np.array_equal(self.centroids, other.centroids)
                and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.assignments, other.assignments)
                and self.D == other.D and self.eta == other.eta
                and self.source_N == other.source_N)


def _samples(data) -> np.ndarray:
    return data.samples if isinstance(data, Dataset) else np.atleast_2d(
        np.asarray(data, dtype=float))


def from_assignments(data, assignments, norm: NormSpec = L2) -> ClusteredSet:
    """Build a ClusteredSet from a label vector (labels must be 0..K-1, all used)."""
    X = _samples(data)
    labels = np.asarray(assignments, dtype=int)
    K = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=K)
    if np.any(counts == 0):
        raise ValueError("empty cluster in assignments")
    centroids = np.zeros((K, X.shape[1]))
    np.add.at(centroids, labels, X)
    centroids /= counts[:, None]
    diff = X - centroids[labels]
    D = float(np.mean(np.sum(diff**2, axis=1)))
    eta = float(np.max(norm(diff, axis=1))) if X.shape[0] else 0.0
    return ClusteredSet(centroids, counts / X.shape[0], labels, D, eta, X.shape[0])


def singletons(data, norm: NormSpec = L2) -> ClusteredSet:
    """Every sample its own cluster (the K = N clustering)."""
    X = _samples(data)
    return ClusteredSet(X.copy(), np.full(X.shape[0], 1.0 / X.shape[0]),
                        np.arange(X.shape[0]), 0.0, 0.0, X.shape[0])


def _kmeanspp(X, K, rng) -> np.ndarray:
    N = X.shape[0]
    idx = [int(rng.integers(N))]
    d2 = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with chosen centers
            remaining = np.setdiff1d(np.arange(N), idx)
            nxt = int(remaining[0])
        else:
            nxt = int(rng.choice(N, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[idx].copy()


def _lloyd(X, centers, max_iter, tol):
    K = centers.shape[0]
    labels = None
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        counts = np.bincount(labels, minlength=K)
        # re-seed empty clusters with the farthest points
        for k in np.flatnonzero(counts == 0):
            own = d2[np.arange(X.shape[0]), labels]
            movable = counts[labels] > 1
            far = int(np.argmax(np.where(movable, own, -1.0)))
            counts[labels[far]] -= 1
            labels[far] = k
            counts[k] = 1
            centers[k] = X[far]
        new = np.zeros_like(centers)
        np.add.at(new, labels, X)
        new /= counts[:, None]
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift <= tol:
            break
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    if np.any(np.bincount(labels, minlength=K) == 0):
        # keep the last consistent labelling if the final pass empties a cluster
        labels = _fix_empty(X, labels, K)
    return labels


def _fix_empty(X, labels, K):
    labels = labels.copy()
    while True:
        counts = np.bincount(labels, minlength=K)
        empty = np.flatnonzero(counts == 0)
        if not empty.size:
            return labels
        cents = np.zeros((K, X.shape[1]))
        np.add.at(cents, labels, X)
        cents[counts > 0] /= counts[counts > 0, None]
        own = np.sum((X - cents[labels]) ** 2, axis=1)
        own[counts[labels] <= 1] = -1.0
        far = int(np.argmax(own))
        labels[far] = empty[0]


def _canonical(labels) -> np.ndarray:
    """Relabel clusters in order of first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=int)
    remap[np.unique(labels)[order]] = np.arange(order.size)
    return remap[labels]


def kmeans(data, K: int, seed: int = 0, restarts: int = 10, max_iter: int = 300,
           tol: float = 1e-10, norm: NormSpec = L2, init=None) -> ClusteredSet:
    """Lloyd's algorithm from k-means++ seeds; best of ``restarts`` runs by D.

    Restart ``r`` draws from ``numpy.random.default_rng([seed, r])``; ties in D
    keep the lowest restart index.  ``init`` adds extra initial centroid
    matrices that are tried after the random restarts.
    """
    X = _samples(data)
    N = X.shape[0]
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > N:
        raise ValueError(f"K={K} exceeds the number of samples N={N}")
    if K == N:
        return from_assignments(X, np.arange(N), norm)
    if K == 1:
        return from_assignments(X, np.zeros(N, dtype=int), norm)
    best = None
    starts = [(_kmeanspp(X, K, np.random.default_rng([seed, r])))
              for r in range(restarts)]
    starts += [np.array(c, dtype=float) for c in (init or [])]
    for centers in starts:
        labels = _canonical(_lloyd(X, centers.copy(), max_iter, tol))
        cs = from_assignments(X, labels, norm)
        if best is None or cs.D < best.D:
            best = cs
    return best


def _split_worst(cs: ClusteredSet, X) -> np.ndarray:
    """Centroids of ``cs`` with its highest-cost cluster split in two."""
    labels = cs.assignments
    cost = np.zeros(cs.K)
    np.add.at(cost, labels, np.sum((X - cs.centroids[labels]) ** 2, axis=1))
    sizes = np.bincount(labels, minlength=cs.K)
    cost[sizes < 2] = -1.0
    k = int(np.argmax(cost))
    pts = X[labels == k]
    # split along the direction of largest spread
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    proj = centered @ vt[0]
    left, right = pts[proj <= 0], pts[proj > 0]
    if not len(left) or not len(right):
        left, right = pts[:1], pts[1:]
    cents = np.delete(cs.centroids, k, axis=0)
    return np.vstack([cents, left.mean(axis=0), right.mean(axis=0)])


def d_profile(data, K_list, seed: int = 0, restarts: int = 10, max_iter: int = 300,
              tol: float = 1e-10, norm: NormSpec = L2) -> list[tuple[int, float, float]]:
    """``(K, D(K), eta(K))`` for each K, with D forced nonincreasing in K."""
    X = _samples(data)
    K_list = list(K_list)
    if K_list != sorted(K_list) or any(k < 1 or k > X.shape[0] for k in K_list):
        raise ValueError("K_list must be sorted with values in [1, N]")
    out = []
    prev: ClusteredSet | None = None
    for K in K_list:
        cs = kmeans(X, K, seed=seed, restarts=restarts, max_iter=max_iter, tol=tol,
                    norm=norm)
        if prev is not None and cs.D > prev.D:
            init = prev.centroids
            while init.shape[0] < K:
                tmp = kmeans(X, init.shape[0], restarts=0, init=[init], norm=norm)
                init = _split_worst(tmp, X)
            alt = kmeans(X, K, seed=seed, restarts=0, max_iter=max_iter, tol=tol,
                         norm=norm, init=[init])
            if alt.D < cs.D:
                cs = alt
        if prev is not None and cs.D > prev.D:
            # Lloyd from a refinement of prev cannot do worse than prev itself
            raise RuntimeError("failed to enforce a monotone D profile")
        out.append((K, cs.D, cs.eta))
        prev = cs
    return out


def elbow_select(profile, drop_ratio: float = 0.1) -> int:
    """Smallest K whose next relative drop in D is below ``drop_ratio``.

    ``profile`` is either the output of :func:`d_profile` or a plain sequence
    of D values for K = 1, 2, ...
    """
    profile = list(profile)
    if not profile:
        raise ValueError("empty profile")
    if np.ndim(profile[0]) == 0:
        profile = [(k + 1, float(d)) for k, d in enumerate(profile)]
    Ks = [p[0] for p in profile]
    Ds = [p[1] for p in profile]
    scale = max(Ds[0], np.finfo(float).eps)
    for i in range(len(profile) - 1):
        if (Ds[i] - Ds[i + 1]) / scale < drop_ratio:
            return Ks[i]
    return Ks[-1]
