"""Bagged decision forest with leaf-neighborhood voting.

Each tree trains on a bootstrap resample (same size as the training set,
drawn with replacement) and considers a fresh uniformly random subset of
ceil(sqrt(m)) features at every split, chosen by Gini impurity over midpoint
thresholds.  A leaf keeps the bootstrap row indices that reached it, with
multiplicity, and the tree's vote for a query is the sign of the summed
labels over the query's leaf (empty sum or tie votes benign).  The forest
score is the fraction of trees voting malware.
"""

from __future__ import annotations

import logging

import numpy as np
from numba import njit

from ..errors import ConfigError
from ..seeds import derive_seed, rng_from

log = logging.getLogger(__name__)

DEFAULT_TREES = 10
DEFAULT_DEPTH = 10

_MIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX_M1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_M2 = np.uint64(0x94D049BB133111EB)
_SH30 = np.uint64(30)
_SH27 = np.uint64(27)
_SH31 = np.uint64(31)


@njit(cache=True)
def _build_tree(X, z, rows, q, max_depth, mix_state):  # pragma: no cover - jit
    """Grow one tree in place over the bootstrap ``rows`` span.

    Nodes are numbered in creation order; children spans partition the parent
    span of ``rows``, so after the build every leaf owns a contiguous slice.
    Feature subsets come from a splitmix64 stream advanced in left-first
    depth-first order, which makes the whole tree a pure function of
    (X, z, rows, q, max_depth, mix_state).
    """
    n = rows.shape[0]
    m = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    leaf_sum = np.zeros(cap, dtype=np.int64)
    leaf_start = np.zeros(cap, dtype=np.int64)
    leaf_count = np.zeros(cap, dtype=np.int64)

    stack_node = np.empty(max_depth + 2, dtype=np.int64)
    stack_lo = np.empty(max_depth + 2, dtype=np.int64)
    stack_hi = np.empty(max_depth + 2, dtype=np.int64)
    stack_depth = np.empty(max_depth + 2, dtype=np.int64)

    vals = np.empty(n, dtype=np.float64)
    tmp = np.empty(n, dtype=np.int64)
    perm = np.empty(m, dtype=np.int64)

    state = mix_state
    n_nodes = 1
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0

    while top >= 0:
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        depth = stack_depth[top]
        top -= 1
        span = hi - lo

        pos = 0
        for r in range(lo, hi):
            if z[rows[r]] > 0:
                pos += 1
        if depth >= max_depth or span < 2 or pos == 0 or pos == span:
            leaf_sum[node] = 2 * pos - span
            leaf_start[node] = lo
            leaf_count[node] = span
            continue

        # draw the feature subset by partial shuffle of [0, m)
        for f in range(m):
            perm[f] = f
        for a in range(q):
            state = state + _MIX_GAMMA
            v = state
            v = (v ^ (v >> _SH30)) * _MIX_M1
            v = (v ^ (v >> _SH27)) * _MIX_M2
            v = v ^ (v >> _SH31)
            r = a + np.int64(v % np.uint64(m - a))
            perm[a], perm[r] = perm[r], perm[a]

        best_imp = 1e300
        best_f = -1
        best_t = 0.0
        for a in range(q):
            f = perm[a]
            for r in range(span):
                vals[r] = X[rows[lo + r], f]
            order = np.argsort(vals[:span])
            pos_left = 0
            for r in range(span - 1):
                if z[rows[lo + order[r]]] > 0:
                    pos_left += 1
                va = vals[order[r]]
                vb = vals[order[r + 1]]
                if va == vb:
                    continue
                nl = r + 1
                nr = span - nl
                pl = pos_left
                pr = pos - pl
                imp = (2.0 * pl * (nl - pl)) / nl + (2.0 * pr * (nr - pr)) / nr
                if imp < best_imp:
                    t = 0.5 * (va + vb)
                    if t <= va:
                        t = vb
                    best_imp = imp
                    best_f = f
                    best_t = t
        if best_f < 0:
            # sampled features are all constant on this span
            leaf_sum[node] = 2 * pos - span
            leaf_start[node] = lo
            leaf_count[node] = span
            continue

        k = 0
        for r in range(lo, hi):
            if X[rows[r], best_f] < best_t:
                tmp[k] = rows[r]
                k += 1
        nl = k
        for r in range(lo, hi):
            if not (X[rows[r], best_f] < best_t):
                tmp[k] = rows[r]
                k += 1
        for r in range(span):
            rows[lo + r] = tmp[r]

        feature[node] = best_f
        threshold[node] = best_t
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        top += 1
        stack_node[top] = rc
        stack_lo[top] = lo + nl
        stack_hi[top] = hi
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lc
        stack_lo[top] = lo
        stack_hi[top] = lo + nl
        stack_depth[top] = depth + 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
            right[:n_nodes], leaf_sum[:n_nodes], leaf_start[:n_nodes],
            leaf_count[:n_nodes])


@njit(cache=True)
def _apply_tree(feature, threshold, left, right, Q):  # pragma: no cover - jit
    out = np.empty(Q.shape[0], dtype=np.int64)
    for r in range(Q.shape[0]):
        node = 0
        while feature[node] >= 0:
            if Q[r, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "leaf_sum",
                 "leaf_start", "leaf_count", "rows")

    def __init__(self, feature, threshold, left, right, leaf_sum,
                 leaf_start, leaf_count, rows):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.leaf_sum = leaf_sum
        self.leaf_start = leaf_start
        self.leaf_count = leaf_count
        self.rows = rows

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.feature[node] < 0:
                if d > best:
                    best = d
            else:
                stack.append((int(self.left[node]), d + 1))
                stack.append((int(self.right[node]), d + 1))
        return best


class ForestModel:
    """Trained bagged forest; score is the malware vote fraction in [0, 1]."""

    variant = "random_forest"

    def __init__(self, trees, z_train, n_features, n_trees, max_depth, seed):
        self.trees = trees
        self.z_train = np.asarray(z_train, dtype=np.int64)
        self.n_features = int(n_features)
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.seed = int(seed)

    @property
    def feature_dim(self) -> int:
        return self.n_features

    def _check(self, Q: np.ndarray) -> np.ndarray:
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[1] != self.n_features:
            raise ConfigError(
                f"query matrix must be 2-D with {self.n_features} columns, "
                f"got shape {Q.shape}")
        return Q

    def tree_leaves(self, t: int, Q: np.ndarray) -> np.ndarray:
        tree = self.trees[t]
        return _apply_tree(tree.feature, tree.threshold, tree.left,
                           tree.right, self._check(Q))

    def tree_neighborhood_scores(self, t: int, Q: np.ndarray) -> np.ndarray:
        """Summed labels over each query's leaf rows (with multiplicity)."""
        return self.trees[t].leaf_sum[self.tree_leaves(t, Q)]

    def leaf_rows(self, t: int, leaf: int) -> np.ndarray:
        tree = self.trees[t]
        s = int(tree.leaf_start[leaf])
        return tree.rows[s:s + int(tree.leaf_count[leaf])]

    def tree_votes(self, Q: np.ndarray) -> np.ndarray:
        """(n_trees, n_queries) votes; each is the sign of the leaf sum."""
        Q = self._check(Q)
        votes = np.empty((self.n_trees, Q.shape[0]), dtype=np.int64)
        for t, tree in enumerate(self.trees):
            leaves = _apply_tree(tree.feature, tree.threshold, tree.left,
                                 tree.right, Q)
            votes[t] = np.where(tree.leaf_sum[leaves] > 0, 1, -1)
        return votes

    def scores(self, Q: np.ndarray) -> np.ndarray:
        votes = self.tree_votes(Q)
        return np.count_nonzero(votes == 1, axis=0) / self.n_trees

    def predict(self, Q: np.ndarray) -> np.ndarray:
        return np.where(self.scores(Q) > 0.5, 1, -1).astype(np.int64)

    def state_doc(self) -> dict:
        return {
            "variant": self.variant,
            "hyperparameters": {
                "n_trees": self.n_trees,
                "max_depth": self.max_depth,
                "seed": self.seed,
            },
            "parameters": {
                "n_features": self.n_features,
                "z_train": self.z_train.tolist(),
                "trees": [{
                    "feature": tr.feature.tolist(),
                    "threshold": tr.threshold.tolist(),
                    "left": tr.left.tolist(),
                    "right": tr.right.tolist(),
                    "leaf_sum": tr.leaf_sum.tolist(),
                    "leaf_start": tr.leaf_start.tolist(),
                    "leaf_count": tr.leaf_count.tolist(),
                    "rows": tr.rows.tolist(),
                } for tr in self.trees],
            },
        }

    @classmethod
    def from_state(cls, doc: dict) -> "ForestModel":
        hp = doc["hyperparameters"]
        pm = doc["parameters"]
        trees = [_Tree(np.asarray(d["feature"], dtype=np.int64),
                       np.asarray(d["threshold"], dtype=np.float64),
                       np.asarray(d["left"], dtype=np.int64),
                       np.asarray(d["right"], dtype=np.int64),
                       np.asarray(d["leaf_sum"], dtype=np.int64),
                       np.asarray(d["leaf_start"], dtype=np.int64),
                       np.asarray(d["leaf_count"], dtype=np.int64),
                       np.asarray(d["rows"], dtype=np.int64))
                 for d in pm["trees"]]
        return cls(trees, np.asarray(pm["z_train"], dtype=np.int64),
                   pm["n_features"], hp["n_trees"], hp["max_depth"],
                   hp["seed"])


def train_forest(X: np.ndarray, z: np.ndarray, n_trees: int = DEFAULT_TREES,
                 max_depth: int = DEFAULT_DEPTH, seed: int = 0) -> ForestModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    z = np.asarray(z)
    if X.ndim != 2:
        raise ConfigError(f"training matrix must be 2-D, got shape {X.shape}")
    if z.shape != (X.shape[0],):
        raise ConfigError(
            f"labels shape {z.shape} does not match {X.shape[0]} rows")
    if not np.all(np.isin(z, (-1, 1))):
        raise ConfigError("labels must be +1 or -1")
    if not (isinstance(n_trees, (int, np.integer)) and n_trees >= 1):
        raise ConfigError(f"n_trees must be a positive integer, got {n_trees}")
    if not (isinstance(max_depth, (int, np.integer)) and max_depth >= 1):
        raise ConfigError(
            f"max_depth must be a positive integer, got {max_depth}")
    zi = z.astype(np.int64)
    if np.all(zi == zi[0]):
        log.warning(
            "single-class training set: forest degenerates to %d "
            "single-leaf trees", n_trees)

    n, m = X.shape
    q = int(np.ceil(np.sqrt(m))) if m else 0
    trees = []
    for t in range(n_trees):
        rows = rng_from(seed, "tree", t).integers(0, n, size=n,
                                                  dtype=np.int64)
        mix = np.uint64(derive_seed(seed, "features", t))
        parts = _build_tree(X, zi, rows, q, int(max_depth), mix)
        trees.append(_Tree(*parts, rows=rows))
    return ForestModel(trees, zi, m, int(n_trees), int(max_depth), int(seed))
