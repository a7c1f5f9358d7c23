"""Random self-similar trees: pruning, sampling, transforms, statistics, and
branch-dynamics numerics, with a CLI for reproducible Monte Carlo campaigns."""

__version__ = "0.1.0"

from .errors import DomainError, HortonLabError, OrderCapError, ParameterError, TreeInvalidError
from .trees import (
    Tree,
    branch_decompose,
    dfs_labels,
    horton_orders,
    proper_embed,
    shape,
    total_length,
    tree_from_json,
    tree_from_newick,
    tree_to_json,
    tree_to_newick,
    validate,
)
from .pruning import PruneResult, order_by_pruning, prune, prune_iter, series_reduce

__all__ = [
    "__version__",
    "HortonLabError",
    "TreeInvalidError",
    "ParameterError",
    "OrderCapError",
    "DomainError",
    "Tree",
    "validate",
    "horton_orders",
    "branch_decompose",
    "proper_embed",
    "dfs_labels",
    "shape",
    "total_length",
    "tree_to_json",
    "tree_from_json",
    "tree_to_newick",
    "tree_from_newick",
    "PruneResult",
    "series_reduce",
    "prune",
    "prune_iter",
    "order_by_pruning",
]
