import numpy as np
import pytest
from hypothesis import given, settings

from hortonlab.pruning import order_by_pruning, prune, prune_iter, series_reduce
from hortonlab.trees import (
    Tree,
    branch_decompose,
    horton_orders,
    total_length,
    tree_from_nested,
)

from conftest import leaf, node, trees


def chain_tree(*lengths):
    """root -> v1 -> v2 ... a path with degree-2 vertices (raw input)."""
    n = len(lengths) + 1
    parent = [-1] + list(range(n - 1))
    left = list(range(1, n)) + [-1]
    right = [-1] * n
    lens = [np.nan] + [float(x) for x in lengths]
    return Tree(parent, left, right, lens)


class TestSeriesReduce:
    def test_two_edge_path_merges(self):
        t = series_reduce(chain_tree(1.5, 2.5))
        assert t.n_nodes == 2
        assert t.lengths[1] == 4.0

    def test_already_reduced_is_identity(self, fig2a_tree):
        t = series_reduce(fig2a_tree)
        assert np.array_equal(t.parent, fig2a_tree.parent)
        assert np.allclose(t.lengths[1:], fig2a_tree.lengths[1:])

    def test_three_edge_chain(self):
        t = series_reduce(chain_tree(1.0, 1.0, 1.0))
        assert t.n_nodes == 2 and t.lengths[1] == 3.0


class TestPrune:
    def test_order3_tree_needs_three_prunings(self, fig2a_tree):
        assert horton_orders(fig2a_tree).tree_order == 3
        one = prune(fig2a_tree).pruned
        assert horton_orders(one).tree_order == 2
        assert prune_iter(fig2a_tree, 3).is_empty

    def test_order1_tree_prunes_to_empty(self):
        res = prune(Tree.single_edge(1.0))
        assert res.pruned.is_empty
        assert res.removed_leaf_count == 1

    def test_cherry_merges_to_single_stem(self):
        cherry = tree_from_nested(node(leaf(2.0), leaf(3.0), 1.0))
        res = prune(cherry)
        assert res.pruned.n_nodes == 2
        assert res.pruned.lengths[1] == 1.0
        assert res.removed_leaf_count == 2

    def test_empty_tree_is_fixed_point(self):
        assert prune(Tree.empty()).pruned.is_empty

    @given(trees(max_leaves=10))
    @settings(max_examples=60, deadline=None)
    def test_pruned_tree_is_valid_and_order_drops(self, t):
        from hortonlab.trees import validate

        k = horton_orders(t).tree_order
        res = prune(t)
        assert validate(res.pruned).valid
        assert horton_orders(res.pruned).tree_order == k - 1

    @given(trees(max_leaves=10))
    @settings(max_examples=60, deadline=None)
    def test_total_length_strictly_decreases(self, t):
        res = prune(t)
        if not res.pruned.is_empty:
            assert total_length(res.pruned) < total_length(t)


class TestPruneIter:
    @given(trees(max_leaves=8))
    @settings(max_examples=30, deadline=None)
    def test_m0_is_identity(self, t):
        out = prune_iter(t, 0)
        assert np.array_equal(out.parent, t.parent)

    def test_beyond_order_stays_empty(self, fig2a_tree):
        assert prune_iter(fig2a_tree, 5).is_empty


class TestOrderByPruning:
    def test_examples(self, fig2a_tree):
        assert order_by_pruning(Tree.empty()) == 0
        assert order_by_pruning(Tree.single_edge(1.0)) == 1
        assert order_by_pruning(fig2a_tree) == 3


class TestCountShift:
    @given(trees(with_lengths=False, max_leaves=12))
    @settings(max_examples=80, deadline=None)
    def test_branch_counts_shift_down_under_pruning(self, t):
        # N_k[T] = N_{k-1}[R(T)] and N_{i,j}[T] = N_{i-1,j-1}[R(T)], k,i >= 2
        d0 = branch_decompose(t)
        res = prune(t)
        if res.pruned.is_empty:
            return
        d1 = branch_decompose(res.pruned)
        for k in range(2, d0.tree_order + 1):
            assert d0.branch_count(k) == d1.branch_count(k - 1)
        for i in range(2, d0.tree_order + 1):
            for j in range(i + 1, d0.tree_order + 1):
                assert d0.side_count(i, j) == d1.side_count(i - 1, j - 1)
