"""Cellular-sheaf Laplacians, Identity Sheaf Networks and oversmoothing diagnostics."""

from .blocksparse import BlockSparseOperator
from .graph import FeatureMatrix, Fold, FoldSplits, Graph, LabelVector, connected_components, graph_laplacian
from .sheaf import (CellularSheaf, assemble_sheaf_laplacian, augment_fixed_channels, coboundary_apply,
                    diagonal_sheaf, identity_sheaf)

__version__ = "0.1.0"
