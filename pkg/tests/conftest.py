import numpy as np
import pytest
from hypothesis import strategies as st

from hortonlab.trees import Tree, tree_from_nested


def leaf(length=None):
    return {"length": length, "children": []}


def node(a, b, length=None):
    return {"length": length, "children": [a, b]}


@pytest.fixture
def fig2a_tree():
    """A tree with the branch statistics of the paper-style order-3 example:
    N_1=10, N_2=3, N_3=1 and N_{1,2}=3, N_{1,3}=1, N_{2,3}=1."""

    def ord2():
        return node(leaf(1.0), node(leaf(1.0), leaf(1.0), 1.0), 1.0)

    v3 = node(ord2(), ord2(), 1.0)
    v2 = node(ord2(), v3, 1.0)
    v1 = node(leaf(1.0), v2, 1.0)
    return tree_from_nested(v1)


def _lengths():
    return st.floats(min_value=0.01, max_value=8.0, allow_nan=False, allow_infinity=False)


def nested_tree_specs(with_lengths=True, max_leaves=10):
    ln = _lengths() if with_lengths else st.none()
    leaves = st.builds(lambda l: {"length": l, "children": []}, ln)
    return st.recursive(
        leaves,
        lambda kids: st.builds(
            lambda l, a, b: {"length": l, "children": [a, b]}, ln, kids, kids
        ),
        max_leaves=max_leaves,
    )


def trees(with_lengths=True, max_leaves=10):
    return nested_tree_specs(with_lengths, max_leaves).map(tree_from_nested)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
