import numpy as np
import pytest
from hypothesis import given, settings

from hortonlab.errors import TreeInvalidError
from hortonlab.pruning import order_by_pruning, prune
from hortonlab.trees import (
    Tree,
    branch_decompose,
    census_key,
    dfs_labels,
    horton_orders,
    proper_embed,
    shape,
    shapes_equal,
    total_length,
    tree_from_json,
    tree_from_nested,
    tree_from_newick,
    tree_to_json,
    tree_to_newick,
    trees_equal_embedded,
    validate,
)

from conftest import leaf, node, trees


class TestValidate:
    def test_empty_tree_is_valid(self):
        assert validate(Tree.empty()).valid

    def test_single_edge_with_length_is_valid(self):
        assert validate(Tree.single_edge(1.0)).valid

    def test_single_child_node_is_not_reduced(self):
        # root -> a -> b (a has exactly one child)
        t = Tree([-1, 0, 1], [1, 2, -1], [-1, -1, -1])
        rep = validate(t)
        assert not rep.valid
        assert any("not reduced" in v for v in rep.violations)

    def test_nonpositive_length_rejected(self):
        t = tree_from_nested(node(leaf(1.0), leaf(0.0), 1.0))
        assert not validate(t).valid

    def test_root_with_two_children_rejected(self):
        t = Tree([-1, 0, 0], [1, -1, -1], [2, -1, -1])
        assert not validate(t).valid


class TestHortonOrders:
    def test_children_orders_1_1_give_parent_2(self):
        t = tree_from_nested(node(leaf(), leaf()))
        o = horton_orders(t)
        assert o.tree_order == 2

    def test_children_orders_1_3_give_parent_3(self):
        # left child: order-3 perfect subtree; right child: leaf
        def perfect(d):
            return leaf() if d == 0 else node(perfect(d - 1), perfect(d - 1))

        t = tree_from_nested(node(perfect(2), leaf()))
        o = horton_orders(t)
        assert o.tree_order == 3

    def test_fig2a_counts(self, fig2a_tree):
        o = horton_orders(fig2a_tree)
        assert o.tree_order == 3
        d = branch_decompose(fig2a_tree, o)
        assert d.branch_count(1) == 10
        assert d.branch_count(2) == 3
        assert d.branch_count(3) == 1

    def test_empty_tree_order_zero(self):
        assert horton_orders(Tree.empty()).tree_order == 0


class TestBranchDecompose:
    def test_fig2a_side_branch_counts(self, fig2a_tree):
        d = branch_decompose(fig2a_tree)
        assert d.side_count(1, 2) == 3
        assert d.side_count(1, 3) == 1
        assert d.side_count(2, 3) == 1

    def test_order1_tree_single_branch_no_sides(self):
        d = branch_decompose(Tree.single_edge(1.0))
        assert len(d.branches) == 1
        assert d.branches[0].side_branches == []
        assert d.branch_count(1) == 1

    def test_perfect_depth2_counts(self):
        cherry = node(leaf(), leaf())
        t = tree_from_nested(node(cherry, node(leaf(), leaf())))
        d = branch_decompose(t)
        assert d.branch_count(1) == 4
        assert d.branch_count(2) == 2
        assert d.branch_count(3) == 1
        assert int(d.n_ij.sum()) == 0

    def test_top_branch_unique_and_totals(self, fig2a_tree):
        d = branch_decompose(fig2a_tree)
        assert d.branch_count(d.tree_order) == 1
        assert sum(d.branch_count(k) for k in range(1, d.tree_order + 1)) == len(d.branches)
        # every non-root edge belongs to exactly one branch
        edges = [e for b in d.branches for e in b.edges]
        assert sorted(edges) == list(range(1, fig2a_tree.n_nodes))

    def test_planted_binary_identities(self, fig2a_tree):
        d = branch_decompose(fig2a_tree)
        n1 = d.branch_count(1)
        assert fig2a_tree.n_leaves() == n1
        assert fig2a_tree.n_nodes == 2 * n1  # leaves + internals + root
        assert int(d.n_ij.sum()) == sum(b.m for b in d.branches)


class TestProperEmbed:
    def test_order1_unique_embedding(self):
        t = proper_embed(Tree.single_edge(1.0))
        assert t.embedded

    def test_side_branches_go_right(self):
        # order-2 branch with two order-1 side branches, built side-on-left
        w2 = node(leaf(1.0), leaf(1.0), 1.0)
        w1 = node(leaf(1.0), w2, 1.0)
        w0 = node(leaf(1.0), w1, 1.0)
        t = proper_embed(tree_from_nested(w0))
        o = horton_orders(t)
        # at every internal vertex with children of unequal order, the lower
        # order (the side branch) must sit in the right slot
        for v in range(t.n_nodes):
            l, r = int(t.left[v]), int(t.right[v])
            if l == -1 or r == -1:
                continue
            if o.order[l] != o.order[r]:
                assert o.order[l] > o.order[r]

    def test_shorter_root_edge_branches_right(self):
        sub_long = node(leaf(3.0), leaf(4.0), 2.0)
        sub_short = node(leaf(3.0), leaf(4.0), 1.0)
        t = proper_embed(tree_from_nested(node(sub_short, sub_long, 1.0)))
        v = t.root_child
        assert t.edge_length(int(t.left[v])) == 2.0
        assert t.edge_length(int(t.right[v])) == 1.0
        # same outcome regardless of input child order
        t2 = proper_embed(tree_from_nested(node(sub_long, sub_short, 1.0)))
        assert trees_equal_embedded(t, t2)

    @given(trees(max_leaves=8))
    @settings(max_examples=60, deadline=None)
    def test_embedding_is_deterministic(self, t):
        assert trees_equal_embedded(proper_embed(t), proper_embed(t))

    @given(trees(with_lengths=False, max_leaves=8))
    @settings(max_examples=60, deadline=None)
    def test_embed_commutes_with_prune_on_shapes(self, t):
        lhs = prune(proper_embed(t)).pruned
        rhs = proper_embed(prune(t).pruned)
        assert trees_equal_embedded(lhs, rhs)


class TestDfsLabels:
    def test_single_edge_labels(self):
        t = proper_embed(Tree.single_edge(1.0))
        labels = dfs_labels(t)
        assert labels[0] == 1 and labels[1] == 2

    def test_cherry_labels_left_before_right(self):
        t = proper_embed(tree_from_nested(node(leaf(1.0), leaf(2.0), 1.0)))
        labels = dfs_labels(t)
        v = t.root_child
        assert labels[0] == 1 and labels[v] == 2
        assert labels[int(t.left[v])] == 3 and labels[int(t.right[v])] == 4

    def test_missing_embedding_rejected(self):
        with pytest.raises(TreeInvalidError):
            dfs_labels(Tree.single_edge(1.0))

    @given(trees(max_leaves=10))
    @settings(max_examples=40, deadline=None)
    def test_labels_are_a_bijection(self, t):
        labels = dfs_labels(proper_embed(t))
        assert sorted(labels.tolist()) == list(range(1, t.n_nodes + 1))


class TestShapeAndLength:
    def test_shape_drops_lengths_keeps_adjacency(self, fig2a_tree):
        s = shape(fig2a_tree)
        assert s.lengths is None
        assert np.array_equal(s.parent, fig2a_tree.parent)

    def test_shape_idempotent(self, fig2a_tree):
        s = shape(fig2a_tree)
        s2 = shape(s)
        assert np.array_equal(s.parent, s2.parent) and s2.lengths is None

    @given(trees(max_leaves=10))
    @settings(max_examples=40, deadline=None)
    def test_shape_preserves_orders(self, t):
        assert horton_orders(t).tree_order == horton_orders(shape(t)).tree_order

    def test_total_length_examples(self):
        assert total_length(Tree.single_edge(2.5)) == 2.5
        assert total_length(Tree.empty()) == 0.0
        cherry = tree_from_nested(node(leaf(1.0), leaf(1.0), 1.0))
        assert total_length(cherry) == 3.0

    def test_total_length_requires_lengths(self):
        with pytest.raises(TreeInvalidError):
            total_length(tree_from_nested(node(leaf(), leaf())))


class TestOrderEquivalence:
    @given(trees(with_lengths=False, max_leaves=12))
    @settings(max_examples=100, deadline=None)
    def test_hierarchical_counting_equals_order_by_pruning(self, t):
        assert horton_orders(t).tree_order == order_by_pruning(t)


class TestSerialization:
    def test_newick_example(self):
        t = tree_from_newick("((:1.0,:2.0):0.5);")
        assert t.n_leaves() == 2 and total_length(t) == 3.5
        assert tree_to_newick(t) == "((:1.0,:2.0):0.5);"

    @given(trees(max_leaves=10))
    @settings(max_examples=40, deadline=None)
    def test_json_roundtrip(self, t):
        back = tree_from_json(tree_to_json(t))
        assert trees_equal_embedded(t, back)

    @given(trees(max_leaves=10))
    @settings(max_examples=40, deadline=None)
    def test_newick_roundtrip(self, t):
        back = tree_from_newick(tree_to_newick(t))
        assert trees_equal_embedded(t, back, tol=0.0)

    def test_empty_tree_roundtrips(self):
        assert tree_from_json(tree_to_json(Tree.empty())).is_empty
        assert tree_from_newick(";").is_empty

    def test_stem_field_roundtrips(self):
        t = Tree.single_edge(0.0)
        t.root_stem_length = 0.0
        back = tree_from_json(tree_to_json(t))
        assert back.root_stem_length == 0.0


class TestCensusKey:
    def test_distinguishes_small_shapes(self):
        a = tree_from_nested(node(node(leaf(), leaf()), leaf()))
        b = tree_from_nested(node(leaf(), node(leaf(), leaf())))
        assert census_key(a) == census_key(b)  # same unordered shape
        c = tree_from_nested(node(node(leaf(), leaf()), node(leaf(), leaf())))
        assert census_key(a) != census_key(c)

    def test_big_trees_bin_coarsely(self):
        def perfect(d):
            return leaf() if d == 0 else node(perfect(d - 1), perfect(d - 1))

        t = tree_from_nested(perfect(5))
        assert census_key(t, max_leaves=12).startswith("big:")

    @given(trees(with_lengths=False, max_leaves=6))
    @settings(max_examples=60, deadline=None)
    def test_census_consistent_with_shape_equality(self, t):
        mirrored = Tree(t.parent.copy(), t.right.copy(), t.left.copy())
        # re-plant the root child in the left slot
        if mirrored.left[0] == -1:
            mirrored.left[0], mirrored.right[0] = mirrored.right[0], mirrored.left[0]
        assert shapes_equal(t, mirrored)
        assert census_key(t) == census_key(mirrored)
