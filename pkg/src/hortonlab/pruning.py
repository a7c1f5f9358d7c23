"""Horton pruning: leaf removal followed by series reduction.

Pruning is the basic coarsening operator on trees.  A single application
removes every leaf together with its parental edge and then dissolves the
resulting degree-2 vertices, summing the lengths of merged edges.  The empty
tree is the unique fixed point, and the minimal number of prunings that
empties a tree is its Horton-Strahler order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import TreeInvalidError
from .trees import Tree, _prune_tree, validate

__all__ = ["PruneResult", "series_reduce", "prune", "prune_iter", "order_by_pruning"]


@dataclass
class PruneResult:
    pruned: Tree
    removed_leaf_count: int
    merged_edge_count: int


def series_reduce(tree: Tree) -> Tree:
    """Remove degree-2 vertices by merging their adjacent edges.

    Accepts raw binary trees (nodes with a single child are allowed on
    input); the output is reduced.  Merged edge lengths are summed.
    """
    n = tree.n_nodes
    parent, left, right = tree.parent, tree.left, tree.right
    lengths = tree.lengths
    child_count = np.where(left != -1, 1, 0) + np.where(right != -1, 1, 0)
    dissolved = child_count == 1
    dissolved[0] = False
    keep = ~dissolved
    old_to_new = np.full(n, -1, dtype=np.int64)
    old_to_new[keep] = np.arange(int(np.count_nonzero(keep)))
    m = int(np.count_nonzero(keep))
    np_parent = np.full(m, -1, dtype=np.int64)
    np_left = np.full(m, -1, dtype=np.int64)
    np_right = np.full(m, -1, dtype=np.int64)
    np_lengths = None if lengths is None else np.full(m, np.nan)
    for v in range(1, n):
        if dissolved[v]:
            continue
        nv = int(old_to_new[v])
        total = 0.0 if lengths is None else float(lengths[v])
        top = v
        p = int(parent[v])
        while dissolved[p]:
            if lengths is not None:
                total += float(lengths[p])
            top = p
            p = int(parent[p])
        npv = int(old_to_new[p])
        np_parent[nv] = npv
        if left[p] == top:
            np_left[npv] = nv
        else:
            np_right[npv] = nv
        if np_lengths is not None:
            np_lengths[nv] = total
    if np_left[0] == -1 and np_right[0] != -1:
        np_left[0], np_right[0] = np_right[0], np_left[0]
    return Tree(np_parent, np_left, np_right, np_lengths, embedded=tree.embedded,
                root_stem_length=tree.root_stem_length)


def prune(tree: Tree, *, checked: bool = True) -> PruneResult:
    """One Horton pruning.  The embedding of surviving vertices is kept."""
    if checked:
        rep = validate(tree)
        if not rep.valid:
            raise TreeInvalidError("; ".join(rep.violations))
    pruned, removed, merged, _, _ = _prune_tree(tree)
    return PruneResult(pruned, removed, merged)


def prune_iter(tree: Tree, m: int, *, checked: bool = True) -> Tree:
    """The m-fold pruning; the identity for m = 0."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    cur = tree
    for _ in range(m):
        if cur.is_empty:
            break
        cur = prune(cur, checked=checked).pruned
        checked = False  # outputs of prune are valid by construction
    return cur


def order_by_pruning(tree: Tree, *, checked: bool = True) -> int:
    """Minimal number of prunings that reduce the tree to the empty tree."""
    if checked:
        rep = validate(tree)
        if not rep.valid:
            raise TreeInvalidError("; ".join(rep.violations))
    k = 0
    cur = tree
    while not cur.is_empty:
        cur = prune(cur, checked=False).pruned
        k += 1
    return k
