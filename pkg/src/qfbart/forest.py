"""Binary decision trees over the augmented (x, tau) space.

A tree is stored as parallel flat arrays (one entry per node) so the hot
evaluation kernels can walk it without chasing Python objects.  Node 0 is
the root; ``feature[i] < 0`` marks node ``i`` as a leaf.  The quantile level
tau enters as feature index d (0-based), one past the covariates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LEAF",
    "SplitPools",
    "Tree",
    "TreePriorConfig",
    "forest_eval",
    "grow_from_prior",
    "log_tree_prior",
    "rearrange_nondecreasing",
    "single_leaf",
    "forest_from_obj",
    "forest_to_obj",
    "tree_eval",
    "tree_from_nodes",
    "tree_to_nodes",
]

LEAF = -1

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class TreePriorConfig:
    """Regularization prior: a node at depth d splits with probability
    alpha*(1+d)^(-beta); leaf values are iid N(0, leaf_scale^2).

    leaf_scale=None defers to the sampler, which resolves it from the
    response range at fit time.  max_depth, when set, forces leaves at that
    depth (the prior renormalizes onto the truncated tree space).
    """

    alpha: float = 0.95
    beta: float = 2.0
    num_trees: int = 1000
    leaf_scale: float | None = None
    max_depth: int | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if self.num_trees < 1:
            raise ValueError(f"num_trees must be >= 1, got {self.num_trees}")
        if self.leaf_scale is not None and not self.leaf_scale > 0.0:
            raise ValueError(f"leaf_scale must be positive, got {self.leaf_scale}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError(f"max_depth must be nonnegative, got {self.max_depth}")


class SplitPools:
    """Per-feature candidate thresholds.

    Each pool holds a feature's distinct observed values with the maximum
    removed: routing is "<= threshold goes left", so a split at the maximum
    would route every observation left.  A feature with an empty pool
    (fewer than two distinct values) is never selected for splitting.
    """

    __slots__ = ("pools", "available")

    def __init__(self, pools):
        self.pools = [np.ascontiguousarray(p, dtype=np.float64) for p in pools]
        self.available = [j for j, p in enumerate(self.pools) if p.size > 0]

    @classmethod
    def from_data(cls, X, taus):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        cols = [X[:, j] for j in range(X.shape[1])]
        cols.append(np.asarray(taus, dtype=np.float64))
        return cls([np.unique(c)[:-1] for c in cols])

    @property
    def num_features(self):
        return len(self.pools)


class Tree:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.ascontiguousarray(feature, dtype=np.int32)
        self.threshold = np.ascontiguousarray(threshold, dtype=np.float64)
        self.left = np.ascontiguousarray(left, dtype=np.int32)
        self.right = np.ascontiguousarray(right, dtype=np.int32)
        self.value = np.ascontiguousarray(value, dtype=np.float64)

    @property
    def num_nodes(self):
        return self.feature.size

    def leaf_ids(self):
        return np.flatnonzero(self.feature < 0)

    def with_leaf_values(self, leaf_values):
        """Copy sharing structure arrays, with new values at the leaves
        (ordered by leaf node id)."""
        value = np.zeros_like(self.value)
        value[self.leaf_ids()] = leaf_values
        return Tree(self.feature, self.threshold, self.left, self.right, value)

    def node_depths(self):
        depth = np.zeros(self.num_nodes, dtype=np.int32)
        stack = [0]
        while stack:
            i = stack.pop()
            if self.feature[i] >= 0:
                for c in (self.left[i], self.right[i]):
                    depth[c] = depth[i] + 1
                    stack.append(int(c))
        return depth


def single_leaf(value=0.0):
    return Tree([LEAF], [0.0], [LEAF], [LEAF], [value])


def tree_eval(tree, x, tau):
    """Route (x, tau) to its leaf and return the leaf value."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a 1-d vector")
    z = np.empty(x.size + 1)
    z[:-1] = x
    z[-1] = tau
    feature = tree.feature
    node = 0
    while True:
        f = feature[node]
        if f < 0:
            return float(tree.value[node])
        if f >= z.size:
            raise ValueError(
                f"tree splits on feature {f} but input has {z.size} features "
                "including tau"
            )
        node = tree.left[node] if z[f] <= tree.threshold[node] else tree.right[node]


def forest_eval(trees, x, tau):
    """Sum of tree_eval over the forest."""
    if len(trees) == 0:
        raise ValueError("forest must contain at least one tree")
    return sum(tree_eval(t, x, tau) for t in trees)


def grow_from_prior(pools, cfg, rng):
    """Draw a tree structure from the regularization prior.

    Leaf values are left at zero; the caller fills them.  Returns the tree
    and the log-probability of the structure draws made, which doubles as
    the structure part of log_tree_prior for prior-grown trees.
    """
    avail = pools.available
    feature, threshold, left, right = [], [], [], []
    log_q = 0.0

    def new_node():
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        return len(feature) - 1

    root = new_node()
    stack = [(root, 0)]
    while stack:
        node, depth = stack.pop()
        if not avail or (cfg.max_depth is not None and depth >= cfg.max_depth):
            continue
        p_split = cfg.alpha * (1.0 + depth) ** (-cfg.beta)
        if rng.random() >= p_split:
            log_q += math.log1p(-p_split)
            continue
        f = avail[int(rng.integers(len(avail)))]
        pool = pools.pools[f]
        t = float(pool[int(rng.integers(pool.size))])
        log_q += math.log(p_split) - math.log(len(avail)) - math.log(pool.size)
        feature[node] = f
        threshold[node] = t
        lc, rc = new_node(), new_node()
        left[node], right[node] = lc, rc
        stack.append((rc, depth + 1))
        stack.append((lc, depth + 1))

    return Tree(feature, threshold, left, right, np.zeros(len(feature))), log_q


def log_tree_prior(tree, cfg, pools, include_leaves=False):
    """Log prior probability of a tree under the generative process.

    Returns -inf for trees outside the prior's support (a threshold not in
    the feature's pool, or a split at or beyond max_depth).  With
    include_leaves, adds the iid Gaussian leaf-value log density, which
    requires cfg.leaf_scale to be set.
    """
    avail = pools.available
    depths = tree.node_depths()
    log_p = 0.0
    for i in range(tree.num_nodes):
        depth = int(depths[i])
        f = int(tree.feature[i])
        forced_leaf = not avail or (
            cfg.max_depth is not None and depth >= cfg.max_depth
        )
        if f < 0:
            if not forced_leaf:
                p_split = cfg.alpha * (1.0 + depth) ** (-cfg.beta)
                log_p += math.log1p(-p_split)
            if include_leaves:
                if cfg.leaf_scale is None:
                    raise ValueError("leaf_scale must be set to score leaf values")
                s = cfg.leaf_scale
                v = float(tree.value[i])
                log_p += -0.5 * (v / s) ** 2 - math.log(s) - 0.5 * _LOG_2PI
            continue
        if forced_leaf or f not in avail:
            return -math.inf
        pool = pools.pools[f]
        if not np.any(pool == tree.threshold[i]):
            return -math.inf
        p_split = cfg.alpha * (1.0 + depth) ** (-cfg.beta)
        log_p += math.log(p_split) - math.log(len(avail)) - math.log(pool.size)
    return log_p


def rearrange_nondecreasing(values):
    """Nondecreasing rearrangement of a quantile curve sampled on a sorted
    tau grid: the sorted permutation of the values."""
    return np.sort(np.asarray(values, dtype=np.float64))


def tree_to_nodes(tree):
    """Self-describing node list: internal nodes carry feature/threshold
    and child indices, leaves carry their value."""
    nodes = []
    for i in range(tree.num_nodes):
        if tree.feature[i] < 0:
            nodes.append({"value": float(tree.value[i])})
        else:
            nodes.append(
                {
                    "feature": int(tree.feature[i]),
                    "threshold": float(tree.threshold[i]),
                    "left": int(tree.left[i]),
                    "right": int(tree.right[i]),
                }
            )
    return nodes


def tree_from_nodes(nodes):
    n = len(nodes)
    feature = np.full(n, LEAF, dtype=np.int32)
    threshold = np.zeros(n)
    left = np.full(n, LEAF, dtype=np.int32)
    right = np.full(n, LEAF, dtype=np.int32)
    value = np.zeros(n)
    for i, node in enumerate(nodes):
        if "value" in node:
            value[i] = node["value"]
        else:
            feature[i] = node["feature"]
            threshold[i] = node["threshold"]
            left[i] = node["left"]
            right[i] = node["right"]
    return Tree(feature, threshold, left, right, value)


def forest_to_obj(trees):
    return [tree_to_nodes(t) for t in trees]


def forest_from_obj(obj):
    return [tree_from_nodes(nodes) for nodes in obj]
