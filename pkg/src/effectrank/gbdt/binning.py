"""Quantile binning of raw feature matrices into small integer codes.

Training works entirely on binned values; split thresholds are real numbers on
bin boundaries, so a fitted model predicts from raw features without the mapper.
The boundary between adjacent bins is the midpoint of the nearest represented
values (or an interpolated quantile when a feature has more distinct values than
bins), which makes predictions invariant to any strictly monotone feature
transform that preserves the bin assignment.
"""

from __future__ import annotations

import numpy as np

__all__ = ["BinMapper"]


class BinMapper:
    """Per-feature quantile binning with at most max_bins bins.

    Attributes set by fit: bin_edges_ is a list of ascending upper-boundary
    arrays (feature value x lands in bin b iff edges[b-1] < x <= edges[b], with
    open ends), n_bins_ the per-feature bin counts.
    """

    def __init__(self, max_bins: int = 256):
        if not 2 <= max_bins <= 65536:
            raise ValueError(f"max_bins must be in [2, 65536], got {max_bins}")
        self.max_bins = max_bins
        self.bin_edges_: list[np.ndarray] | None = None
        self.n_bins_: np.ndarray | None = None

    def fit(self, features: np.ndarray) -> "BinMapper":
        features = np.asarray(features, dtype=np.float64)
        edges = []
        for j in range(features.shape[1]):
            col = features[:, j]
            uniq = np.unique(col)
            if uniq.size <= self.max_bins:
                cuts = (uniq[1:] + uniq[:-1]) / 2.0
            else:
                qs = np.quantile(col, np.arange(1, self.max_bins) / self.max_bins)
                cuts = np.unique(qs)
            edges.append(np.ascontiguousarray(cuts))
        self.bin_edges_ = edges
        self.n_bins_ = np.asarray([e.size + 1 for e in edges], dtype=np.int64)
        return self

    def transform(self, features: np.ndarray) -> np.ndarray:
        if self.bin_edges_ is None:
            raise RuntimeError("BinMapper.transform called before fit")
        features = np.asarray(features, dtype=np.float64)
        if features.shape[1] != len(self.bin_edges_):
            raise ValueError(
                f"feature count {features.shape[1]} does not match fitted {len(self.bin_edges_)}"
            )
        dtype = np.uint8 if int(self.n_bins_.max()) <= 256 else np.uint16
        binned = np.empty(features.shape, dtype=dtype)
        for j, cuts in enumerate(self.bin_edges_):
            binned[:, j] = np.searchsorted(cuts, features[:, j], side="left")
        return np.ascontiguousarray(binned)
