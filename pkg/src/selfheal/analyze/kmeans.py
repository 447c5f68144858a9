"""k-means with k-means++ seeding; used only for cluster-purity diagnostics."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..engine import RngStream


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia_history: list[float]

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _sqdist(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def fit_kmeans(data, k: int, stream: RngStream, max_iter: int = 100, tol: float = 1e-9) -> KMeansResult:
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.asarray(data, dtype=float)
    if len(x) < k:
        raise ValueError(f"need at least k={k} points, got {len(x)}")
    centroids = [x[stream.randbelow(len(x))]]
    for _ in range(1, k):
        d2 = _sqdist(x, np.array(centroids)).min(axis=1)
        total = float(d2.sum())
        if total == 0:
            centroids.append(x[stream.randbelow(len(x))])
            continue
        u = stream.uniform01() * total
        i = int(np.searchsorted(np.cumsum(d2), u, side="right"))
        centroids.append(x[min(i, len(x) - 1)])
    c = np.array(centroids)
    history: list[float] = []
    labels = np.zeros(len(x), dtype=int)
    for _ in range(max_iter):
        d2 = _sqdist(x, c)
        labels = d2.argmin(axis=1)
        inertia = float(d2[np.arange(len(x)), labels].sum())
        if history and history[-1] - inertia < tol:
            history.append(inertia)
            break
        history.append(inertia)
        for j in range(k):
            members = x[labels == j]
            if len(members):
                c[j] = members.mean(axis=0)
    labels = _sqdist(x, c).argmin(axis=1)
    return KMeansResult(c, labels, history)


def kmeans_assign(centroids, x) -> int:
    c = np.asarray(centroids, dtype=float)
    return int(((c - np.asarray(x, dtype=float)) ** 2).sum(axis=1).argmin())


def cluster_purity(assignments, labels) -> float:
    """Fraction of points sharing their cluster's majority label."""
    groups: dict[int, Counter] = {}
    for a, lab in zip(assignments, labels):
        groups.setdefault(int(a), Counter())[lab] += 1
    n = sum(sum(g.values()) for g in groups.values())
    return sum(max(g.values()) for g in groups.values()) / n if n else 0.0
