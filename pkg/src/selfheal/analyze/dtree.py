"""CART classifier with greedy Gini splits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - (p * p).sum())


@dataclass
class Node:
    histogram: np.ndarray
    feature: int = -1
    threshold: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class DecisionTreeModel:
    classes: list[str]
    root: Node
    n_features: int
    max_depth: int | None
    min_leaf: int
    importances: list[float] = field(default_factory=list)

    def leaves(self) -> list[Node]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out

    def depth(self) -> int:
        def d(node):
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))
        return d(self.root)

    def summary(self) -> dict:
        return {
            "classes": list(self.classes),
            "depth": self.depth(),
            "leaves": len(self.leaves()),
            "feature_importances": [round(v, 6) for v in self.importances],
        }


def _best_split(x: np.ndarray, y_onehot: np.ndarray, min_leaf: int):
    n, k = y_onehot.shape
    total = y_onehot.sum(axis=0)
    parent = gini(total)
    # zero-gain cuts are kept: an impure node can need one to expose gain below it (XOR)
    best = (-np.inf, -1, 0.0)
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="mergesort")
        xs = x[order, f]
        left = np.cumsum(y_onehot[order], axis=0)[:-1]
        nl = np.arange(1, n, dtype=float)
        # candidate cut between positions i and i+1 only where the value changes
        valid = xs[1:] > xs[:-1]
        valid &= (nl >= min_leaf) & (n - nl >= min_leaf)
        if not valid.any():
            continue
        right = total - left
        nr = n - nl
        gl = 1.0 - ((left / nl[:, None]) ** 2).sum(axis=1)
        gr = 1.0 - ((right / nr[:, None]) ** 2).sum(axis=1)
        weighted = (nl * gl + nr * gr) / n
        gain = np.where(valid, parent - weighted, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0] + 1e-12:
            best = (float(gain[i]), f, float((xs[i] + xs[i + 1]) / 2.0))
    return best


def fit_dtree(features, labels, max_depth: int | None = 8, min_leaf: int = 20) -> DecisionTreeModel:
    x = np.asarray(features, dtype=float)
    labels = list(labels)
    if len(x) != len(labels) or len(x) == 0:
        raise ValueError("features and labels must be non-empty and of equal length")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("decision tree needs at least two classes")
    index = {c: i for i, c in enumerate(classes)}
    y = np.zeros((len(labels), len(classes)))
    y[np.arange(len(labels)), [index[c] for c in labels]] = 1.0
    importances = np.zeros(x.shape[1])
    n_total = len(x)

    def grow(rows: np.ndarray, depth: int) -> Node:
        hist = y[rows].sum(axis=0)
        node = Node(histogram=hist)
        if (max_depth is not None and depth >= max_depth) or np.count_nonzero(hist) <= 1:
            return node
        if len(rows) < 2 * min_leaf:
            return node
        gain, f, thr = _best_split(x[rows], y[rows], min_leaf)
        if f < 0:
            return node
        importances[f] += max(gain, 0.0) * len(rows) / n_total
        mask = x[rows, f] <= thr
        node.feature, node.threshold = f, thr
        node.left = grow(rows[mask], depth + 1)
        node.right = grow(rows[~mask], depth + 1)
        return node

    root = grow(np.arange(len(x)), 0)
    total = importances.sum()
    imp = (importances / total).tolist() if total > 0 else importances.tolist()
    return DecisionTreeModel(classes, root, x.shape[1], max_depth, min_leaf, imp)


def route(model: DecisionTreeModel, x) -> Node:
    node = model.root
    while not node.is_leaf:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node


def classify(model: DecisionTreeModel, x) -> tuple[str, float]:
    """(majority class, purity) of the leaf that ``x`` lands in."""
    if len(x) != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {len(x)}")
    leaf = route(model, x)
    i = int(np.argmax(leaf.histogram))
    return model.classes[i], float(leaf.histogram[i] / leaf.histogram.sum())
