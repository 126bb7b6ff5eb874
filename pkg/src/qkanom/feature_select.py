"""CART-style decision tree on Gini impurity and impurity-decrease feature ranking.

The tree is grown greedily: at every node each feature's candidate
thresholds (midpoints between consecutive distinct sorted values) are
scored by the impurity decrease

    dI = I_parent - (n_left/n * I_left + n_right/n * I_right),

the best (feature, threshold) wins, ties resolved by lowest feature index
then lowest threshold. Feature scores sum the node-mass-weighted decreases
per feature and are normalized to total 1.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError


def gini(labels) -> float:
    """Gini impurity 1 - sum_c (count_c / total)**2 of a label multiset."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("gini of an empty node is undefined")
    _, counts = np.unique(labels, return_counts=True)
    proportions = counts / labels.size
    return float(1.0 - np.sum(proportions**2))


@dataclass
class TreeNode:
    impurity: float
    num_samples: int
    predicted_class: object
    feature_index: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def impurity_decrease(parent: TreeNode, left: TreeNode, right: TreeNode) -> float:
    """Weighted impurity decrease of a split (Gini gain)."""
    if left.num_samples + right.num_samples != parent.num_samples:
        raise ValueError(
            f"child sample counts {left.num_samples}+{right.num_samples} "
            f"do not sum to parent's {parent.num_samples}"
        )
    n = parent.num_samples
    weighted = (left.num_samples * left.impurity + right.num_samples * right.impurity) / n
    return parent.impurity - weighted


def _majority(y_encoded: np.ndarray, classes: np.ndarray):
    counts = np.bincount(y_encoded, minlength=len(classes))
    return classes[int(np.argmax(counts))]


def _best_split(X, y_encoded, n_classes):
    """Best (gain, feature, threshold) over all features, or None.

    Sorted-sweep per feature with cumulative class counts, scanning change
    points only; candidates whose floating midpoint fails to separate the
    sorted values are dropped.
    """
    n = len(y_encoded)
    parent_counts = np.bincount(y_encoded, minlength=n_classes)
    parent_impurity = 1.0 - np.sum((parent_counts / n) ** 2)
    best = None
    for f in range(X.shape[1]):
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        sorted_vals = col[order]
        change = np.nonzero(sorted_vals[:-1] != sorted_vals[1:])[0]
        if change.size == 0:
            continue
        one_hot = np.zeros((n, n_classes))
        one_hot[np.arange(n), y_encoded[order]] = 1.0
        cum = np.cumsum(one_hot, axis=0)
        left_counts = cum[change]
        right_counts = parent_counts - left_counts
        n_left = (change + 1).astype(float)
        n_right = n - n_left
        gini_left = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
        gini_right = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
        gains = parent_impurity - (n_left * gini_left + n_right * gini_right) / n
        thresholds = (sorted_vals[change] + sorted_vals[change + 1]) / 2.0
        valid = (thresholds >= sorted_vals[change]) & (thresholds < sorted_vals[change + 1])
        if not valid.any():
            continue
        gains, thresholds = gains[valid], thresholds[valid]
        pos = int(np.argmax(gains))  # first max: lowest threshold wins ties
        if best is None or gains[pos] > best[0]:
            best = (float(gains[pos]), f, float(thresholds[pos]))
    return best


def fit_tree(X, y, max_depth: int | None = None, min_samples_split: int = 2) -> TreeNode:
    """Grow a binary CART tree; split rule is ``value <= threshold`` goes left.

    Degenerate inputs (single class, constant features) yield a single leaf.
    Splits with zero gain are not taken.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got {X.ndim}-D")
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)} labels")
    if len(y) == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    classes, y_encoded = np.unique(y, return_inverse=True)
    n_classes = len(classes)

    def make_node(idx):
        counts = np.bincount(y_encoded[idx], minlength=n_classes)
        impurity = float(1.0 - np.sum((counts / len(idx)) ** 2))
        return TreeNode(impurity, len(idx), _majority(y_encoded[idx], classes))

    root_idx = np.arange(len(y))
    root = make_node(root_idx)
    stack = [(root, root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if node.impurity <= 0.0 or len(idx) < min_samples_split:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        best = _best_split(X[idx], y_encoded[idx], n_classes)
        if best is None or best[0] <= 0.0:
            continue
        _, f, threshold = best
        left_mask = X[idx, f] <= threshold
        node.feature_index = f
        node.threshold = threshold
        node.left = make_node(idx[left_mask])
        node.right = make_node(idx[~left_mask])
        stack.append((node.left, idx[left_mask], depth + 1))
        stack.append((node.right, idx[~left_mask], depth + 1))
    return root


@dataclass
class FeatureRanking:
    """Per-feature cumulative impurity-decrease scores with the sorted order."""

    scores: np.ndarray
    order: np.ndarray
    selected: np.ndarray | None = None

    def top_k(self, k: int) -> np.ndarray:
        if not 1 <= k <= len(self.order):
            raise ValueError(f"k must be in [1, {len(self.order)}], got {k}")
        return self.order[:k].copy()


def rank_features(tree: TreeNode, num_features: int) -> FeatureRanking:
    """Sum node-mass-weighted impurity decreases per feature, normalized to 1.

    Each internal node splitting on feature f contributes
    (n_node / n_root) * dI_node to score_f. Ties in the descending order
    break by ascending feature index.
    """
    scores = np.zeros(num_features)
    stack = [tree]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            continue
        decrease = impurity_decrease(node, node.left, node.right)
        scores[node.feature_index] += (node.num_samples / tree.num_samples) * decrease
        stack.append(node.left)
        stack.append(node.right)
    total = scores.sum()
    if total > 0:
        scores = scores / total
    order = np.lexsort((np.arange(num_features), -scores))
    return FeatureRanking(scores=scores, order=order)


def select_top_k(ranking: FeatureRanking, k: int) -> np.ndarray:
    return ranking.top_k(k)


def dump_tree(tree: TreeNode) -> str:
    """Human-readable dump, one node per line, two-space indent per depth."""
    lines = []

    def walk(node, depth):
        pad = "  " * depth
        if node.is_leaf:
            lines.append(
                f"{pad}leaf {node.predicted_class} | "
                f"gini={node.impurity:.4f} n={node.num_samples}"
            )
            return
        lines.append(
            f"{pad}f{node.feature_index} <= {node.threshold:.6g} | "
            f"gini={node.impurity:.4f} n={node.num_samples}"
        )
        walk(node.left, depth + 1)
        walk(node.right, depth + 1)

    walk(tree, 0)
    return "\n".join(lines) + "\n"


class GiniFeatureSelector(BaseEstimator):
    """Select the top-k features by decision-tree impurity decrease.

    Parameters
    ----------
    k : int
        Number of features to keep.
    max_depth : int or None
        Tree depth limit; None grows until purity or min_samples_split.
    min_samples_split : int
        Minimum node size eligible for splitting.
    """

    def __init__(self, k: int = 8, max_depth: int | None = None,
                 min_samples_split: int = 2):
        self.k = k
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if not 1 <= self.k <= X.shape[1]:
            raise ValueError(
                f"k must be in [1, {X.shape[1]}] for {X.shape[1]} features, got {self.k}"
            )
        self.tree_ = fit_tree(X, y, self.max_depth, self.min_samples_split)
        self.ranking_ = rank_features(self.tree_, X.shape[1])
        self.ranking_.selected = self.ranking_.top_k(self.k)
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "ranking_"):
            raise NotFittedError("GiniFeatureSelector is not fitted")

    def get_support(self, indices: bool = False):
        self._check_fitted()
        if indices:
            return self.ranking_.selected.copy()
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.ranking_.selected] = True
        return mask

    def transform(self, X):
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, selector was fitted on "
                f"{self.n_features_in_}"
            )
        return X[:, self.ranking_.selected]

    def fit_transform(self, X, y):
        return self.fit(X, y).transform(X)
