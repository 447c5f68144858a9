"""Isolation forest (Liu, Ting & Zhou) built from the ``detectors`` RNG stream."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..engine import RngStream

EULER_GAMMA = 0.5772156649


def harmonic(n: float) -> float:
    return math.log(n) + EULER_GAMMA


def c_norm(n: int) -> float:
    """Average unsuccessful-search path length in a BST of ``n`` points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


@dataclass
class IsolationTree:
    # parallel node arrays; feature == -1 marks a leaf whose ``size`` points remain
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    size: list[int] = field(default_factory=list)
    node_depth: list[int] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return max(self.node_depth) if self.node_depth else 0

    def path_length(self, x) -> float:
        node = 0
        feature, threshold, left, right = self.feature, self.threshold, self.left, self.right
        depth = 0
        while feature[node] >= 0:
            node = left[node] if x[feature[node]] < threshold[node] else right[node]
            depth += 1
        return depth + c_norm(self.size[node])


@dataclass
class IsolationForestModel:
    n_trees: int
    subsample: int
    n_features: int
    trees: list[IsolationTree]
    c_norm: float
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    def packed(self) -> tuple:
        """Trees as flat arrays so every tree can be walked at once.

        Child pointers are global indices; a leaf points to itself on both
        sides so a fixed number of steps lands every walker on its leaf.
        """
        if self._packed is None:
            feat, thr, left, right, leaf, roots = [], [], [], [], [], []
            for t in self.trees:
                base = len(feat)
                roots.append(base)
                for k, f in enumerate(t.feature):
                    inner = f >= 0
                    feat.append(f if inner else 0)
                    thr.append(t.threshold[k] if inner else 0.0)
                    left.append(base + t.left[k] if inner else base + k)
                    right.append(base + t.right[k] if inner else base + k)
                leaf.extend(d + c_norm(sz) for d, sz in zip(t.node_depth, t.size))
            height = max(t.depth for t in self.trees)
            self._packed = (np.array(feat, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64),
                            np.array(right, dtype=np.int64), np.array(leaf), np.array(roots, dtype=np.int64),
                            height)
        return self._packed

    def summary(self) -> dict:
        depths = [t.depth for t in self.trees]
        return {
            "n_trees": self.n_trees,
            "subsample": self.subsample,
            "max_depth": max(depths) if depths else 0,
            "mean_depth": sum(depths) / len(depths) if depths else 0.0,
        }


def _build_tree(data: np.ndarray, height_limit: int, rng: RngStream) -> IsolationTree:
    tree = IsolationTree()

    def new_node(size: int, depth: int) -> int:
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.size.append(size)
        tree.node_depth.append(depth)
        return len(tree.feature) - 1

    stack = [(new_node(len(data), 0), data, 0)]
    while stack:
        node, pts, depth = stack.pop()
        if depth >= height_limit or len(pts) <= 1:
            continue
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if splittable.size == 0:
            continue
        q = int(splittable[rng.randbelow(splittable.size)])
        p = rng.uniform(float(lo[q]), float(hi[q]))
        if p <= lo[q]:
            p = float(np.nextafter(lo[q], hi[q]))
        mask = pts[:, q] < p
        lpts, rpts = pts[mask], pts[~mask]
        tree.feature[node] = q
        tree.threshold[node] = p
        ln = new_node(len(lpts), depth + 1)
        rn = new_node(len(rpts), depth + 1)
        tree.left[node] = ln
        tree.right[node] = rn
        stack.append((rn, rpts, depth + 1))
        stack.append((ln, lpts, depth + 1))
    return tree


def fit_iforest(data, n_trees: int = 100, subsample: int = 256, stream: RngStream | None = None,
                seed: int = 0) -> IsolationForestModel:
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("iforest data must be a 2-D array of feature vectors")
    if subsample < 1:
        raise ValueError("subsample must be >= 1")
    if len(x) < subsample:
        raise ValueError(f"need at least {subsample} rows to fit, got {len(x)}")
    rng = stream if stream is not None else RngStream("detectors", seed)
    height_limit = math.ceil(math.log2(subsample)) if subsample > 1 else 0
    trees = []
    n = len(x)
    for _ in range(n_trees):
        # partial Fisher-Yates draws the subsample without replacement
        idx = list(range(n))
        for i in range(subsample):
            j = i + rng.randbelow(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        trees.append(_build_tree(x[idx[:subsample]], height_limit, rng))
    return IsolationForestModel(n_trees, subsample, x.shape[1], trees, c_norm(subsample))


def expected_path_length(model: IsolationForestModel, x) -> float:
    feat, thr, left, right, leaf, roots, height = model.packed()
    xv = np.asarray(x, dtype=float)
    node = roots
    for _ in range(height):
        node = np.where(xv[feat[node]] < thr[node], left[node], right[node])
    return float(leaf[node].mean())


def iforest_score(model: IsolationForestModel, x) -> float:
    if len(x) != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {len(x)}")
    if model.c_norm == 0:
        return 0.5
    return 2.0 ** (-expected_path_length(model, x) / model.c_norm)
