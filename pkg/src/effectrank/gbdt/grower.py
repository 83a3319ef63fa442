"""Single-tree construction: histogram accumulation, split search, leaf-wise growth.

Trees grow best-first: among all current leaves the one whose best split gains
the most is split next, until num_leaves is reached or nothing gains. Split gain
is the Newton objective reduction G_l^2/(H_l+l2) + G_r^2/(H_r+l2) - G^2/(H+l2);
ties are broken toward the lowest feature index, then the lowest bin, and among
leaves toward the earliest-created node, so growth is fully deterministic. One
child's histogram is always derived by subtracting the other child's from the
parent's.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = ["Tree", "grow_tree"]


@njit(cache=True)
def _accumulate_histograms(binned, rows, grad, hess, hist_g, hist_h, hist_c):
    n_features = binned.shape[1]
    for idx in range(rows.shape[0]):
        r = rows[idx]
        g = grad[r]
        h = hess[r]
        for f in range(n_features):
            b = binned[r, f]
            hist_g[f, b] += g
            hist_h[f, b] += h
            hist_c[f, b] += 1


@njit(cache=True)
def _scan_splits(hist_g, hist_h, hist_c, n_bins, sum_g, sum_h, n_rows, l2, min_leaf):
    best_gain = 0.0
    best_feature = -1
    best_bin = -1
    parent_score = sum_g * sum_g / (sum_h + l2)
    for f in range(hist_g.shape[0]):
        g_left = 0.0
        h_left = 0.0
        c_left = 0
        for b in range(n_bins[f] - 1):
            g_left += hist_g[f, b]
            h_left += hist_h[f, b]
            c_left += hist_c[f, b]
            if c_left < min_leaf:
                continue
            if n_rows - c_left < min_leaf:
                break
            g_right = sum_g - g_left
            h_right = sum_h - h_left
            gain = (
                g_left * g_left / (h_left + l2)
                + g_right * g_right / (h_right + l2)
                - parent_score
            )
            if gain > best_gain:
                best_gain = gain
                best_feature = f
                best_bin = b
    return best_gain, best_feature, best_bin


@dataclass
class Tree:
    """Flat node-array tree; feature < 0 marks a leaf, children are node indices.

    Leaf values are stored pre-scaled by the learning rate, so a model prediction
    is base_score plus the plain sum of per-tree values. leaf_rows (training-time
    only, not serialized) maps each leaf's node id to the training rows it holds.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_rows: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, features: np.ndarray) -> np.ndarray:
        """Leaf node index for every row, by raw threshold traversal."""
        idx = np.zeros(features.shape[0], dtype=np.int32)
        while True:
            active = np.flatnonzero(self.feature[idx] >= 0)
            if active.size == 0:
                return idx
            cur = idx[active]
            fv = features[active, self.feature[cur]]
            go_left = fv <= self.threshold[cur]
            idx[active] = np.where(go_left, self.left[cur], self.right[cur])

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.value[self.apply(features)]


class _NodeStats:
    __slots__ = ("rows", "depth", "sum_g", "sum_h", "hist", "split")

    def __init__(self, rows, depth, sum_g, sum_h, hist, split):
        self.rows = rows
        self.depth = depth
        self.sum_g = sum_g
        self.sum_h = sum_h
        self.hist = hist
        self.split = split


def grow_tree(binned, bin_edges, n_bins, grad, hess, params) -> Tree | None:
    """Grow one tree on pre-binned features for the given gradient/curvature.

    Returns None when num_leaves > 1 and no split at the root has positive gain
    (the caller decides whether that ends boosting). Leaf values are
    -learning_rate * G / (H + l2_reg).
    """
    n = grad.shape[0]
    all_rows = np.arange(n, dtype=np.int64)
    total_g = float(grad.sum())
    total_h = float(hess.sum())

    feature = [-1]
    threshold = [np.nan]
    left = [-1]
    right = [-1]
    node_stats = {0: None}

    def make_hist(rows):
        shape = (len(bin_edges), int(n_bins.max()))
        hg = np.zeros(shape, dtype=np.float64)
        hh = np.zeros(shape, dtype=np.float64)
        hc = np.zeros(shape, dtype=np.int64)
        _accumulate_histograms(binned, rows, grad, hess, hg, hh, hc)
        return hg, hh, hc

    def find_split(stats):
        return _scan_splits(
            *stats.hist,
            n_bins,
            stats.sum_g,
            stats.sum_h,
            stats.rows.shape[0],
            params.l2_reg,
            params.min_data_in_leaf,
        )

    single_leaf = params.num_leaves == 1
    if not single_leaf:
        root = _NodeStats(all_rows, 0, total_g, total_h, make_hist(all_rows), None)
        root.split = find_split(root)
        if root.split[0] <= 0.0:
            return None
        node_stats[0] = root
        heap = [(-root.split[0], 0)]
    else:
        node_stats[0] = _NodeStats(all_rows, 0, total_g, total_h, None, None)
        heap = []

    n_leaves = 1
    while heap and n_leaves < params.num_leaves:
        _, nid = heapq.heappop(heap)
        stats = node_stats[nid]
        gain, f, b = stats.split
        rows = stats.rows
        mask = binned[rows, f] <= b
        rows_l = rows[mask]
        rows_r = rows[~mask]

        lid = len(feature)
        rid = lid + 1
        feature[nid] = f
        threshold[nid] = float(bin_edges[f][b])
        left[nid] = lid
        right[nid] = rid
        feature.extend((-1, -1))
        threshold.extend((np.nan, np.nan))
        left.extend((-1, -1))
        right.extend((-1, -1))

        smaller, larger = (rows_l, rows_r) if rows_l.shape[0] <= rows_r.shape[0] else (rows_r, rows_l)
        hist_small = make_hist(smaller)
        gs = float(grad[smaller].sum())
        hs = float(hess[smaller].sum())
        hist_large = tuple(p - c for p, c in zip(stats.hist, hist_small))
        child_depth = stats.depth + 1
        pairs = [(smaller, hist_small, gs, hs), (larger, hist_large, stats.sum_g - gs, stats.sum_h - hs)]
        if smaller is rows_r:
            pairs.reverse()
        for cid, (crows, chist, cg, ch) in zip((lid, rid), pairs):
            child = _NodeStats(crows, child_depth, cg, ch, chist, None)
            node_stats[cid] = child
            depth_ok = params.max_depth is None or child_depth < params.max_depth
            if depth_ok and crows.shape[0] >= 2 * params.min_data_in_leaf:
                child.split = find_split(child)
                if child.split[0] > 0.0:
                    heapq.heappush(heap, (-child.split[0], cid))
        node_stats[nid] = _NodeStats(rows, stats.depth, stats.sum_g, stats.sum_h, None, None)
        n_leaves += 1

    n_nodes = len(feature)
    feature_arr = np.asarray(feature, dtype=np.int32)
    value = np.zeros(n_nodes, dtype=np.float64)
    leaf_rows = {}
    for nid in range(n_nodes):
        if feature_arr[nid] >= 0:
            continue
        stats = node_stats[nid]
        value[nid] = -params.learning_rate * stats.sum_g / (stats.sum_h + params.l2_reg)
        leaf_rows[nid] = stats.rows
    return Tree(
        feature=feature_arr,
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=value,
        leaf_rows=leaf_rows,
    )
