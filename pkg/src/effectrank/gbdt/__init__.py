"""Histogram-binned Newton-boosted trees with pluggable training objectives."""

from .binning import BinMapper
from .booster import GbdtModel, GbdtParams, ValidationData, fit
from .grower import Tree, grow_tree

__all__ = ["BinMapper", "GbdtModel", "GbdtParams", "ValidationData", "Tree", "fit", "grow_tree"]
