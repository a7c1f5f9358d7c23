"""Canonical tree representation and combinatorial operations.

Trees are finite rooted reduced planted binary trees: the root has degree 1
(one child) and every other vertex is either internal (two children) or a
leaf.  The degenerate empty tree (a bare root, no edges) is permitted and is
the fixed point of pruning.

A tree is stored as parallel numpy arrays indexed by node id, with the root
always at id 0:

    parent : int64[n]    parent id, -1 for the root
    left   : int64[n]    first child id, -1 if absent
    right  : int64[n]    second child id, -1 if absent
    lengths: float64[n]  length of the node's parental edge (nan at the root),
                         or None for a combinatorial tree

The planted root keeps its single child in the ``left`` slot.  When
``embedded`` is true the (left, right) slot order is meaningful and encodes a
planar embedding.  ``root_stem_length`` marks the root edge as an artificial
stem (used by the level-set construction when the input's global minimum is
interior); its length may be zero and is kept out of branch-length
statistics.

All operations are pure: inputs are never mutated.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import TreeInvalidError

__all__ = [
    "Tree",
    "ValidationReport",
    "HortonOrderAssignment",
    "Branch",
    "BranchDecomposition",
    "validate",
    "horton_orders",
    "branch_decompose",
    "proper_embed",
    "dfs_labels",
    "shape",
    "total_length",
    "tree_from_nested",
    "tree_to_nested",
    "tree_to_json",
    "tree_from_json",
    "tree_to_newick",
    "tree_from_newick",
    "trees_equal_embedded",
    "shapes_equal",
    "census_key",
    "extract_subtree",
    "extract_complete_subtrees",
]


class Tree:
    """A rooted reduced planted binary tree, optionally with edge lengths."""

    __slots__ = ("parent", "left", "right", "lengths", "embedded", "root_stem_length")

    def __init__(self, parent, left, right, lengths=None, embedded=False, root_stem_length=None):
        self.parent = np.asarray(parent, dtype=np.int64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.lengths = None if lengths is None else np.asarray(lengths, dtype=np.float64)
        self.embedded = bool(embedded)
        self.root_stem_length = root_stem_length

    # -- basic structure ------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return int(self.parent.shape[0])

    @property
    def is_empty(self) -> bool:
        return self.n_nodes == 1

    @property
    def has_lengths(self) -> bool:
        return self.lengths is not None

    @property
    def root_child(self) -> int:
        return int(self.left[0])

    def is_leaf(self, v: int) -> bool:
        return self.left[v] == -1 and self.right[v] == -1

    def n_leaves(self) -> int:
        if self.is_empty:
            return 0
        mask = (self.left[1:] == -1) & (self.right[1:] == -1)
        return int(np.count_nonzero(mask))

    def children(self, v: int):
        out = []
        if self.left[v] != -1:
            out.append(int(self.left[v]))
        if self.right[v] != -1:
            out.append(int(self.right[v]))
        return out

    def edge_length(self, v: int) -> float:
        """Length of the parental edge of ``v`` (root stem included)."""
        if v == self.root_child and self.root_stem_length is not None:
            return float(self.root_stem_length)
        return float(self.lengths[v])

    def copy(self) -> "Tree":
        return Tree(
            self.parent.copy(),
            self.left.copy(),
            self.right.copy(),
            None if self.lengths is None else self.lengths.copy(),
            self.embedded,
            self.root_stem_length,
        )

    def __repr__(self):
        kind = "L" if self.has_lengths else "T"
        emb = "+emb" if self.embedded else ""
        return f"<Tree {kind}{emb} n={self.n_nodes} leaves={self.n_leaves()}>"

    # -- factories -------------------------------------------------------

    @classmethod
    def empty(cls) -> "Tree":
        return cls([-1], [-1], [-1])

    @classmethod
    def single_edge(cls, length=None) -> "Tree":
        lens = None if length is None else [np.nan, float(length)]
        return cls([-1, 0], [1, -1], [-1, -1], lens)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations


def validate(tree: Tree) -> ValidationReport:
    """Check every structural invariant; report all violations found."""
    rep = ValidationReport()
    n = tree.n_nodes
    parent, left, right = tree.parent, tree.left, tree.right
    if n < 1 or parent[0] != -1:
        rep.violations.append("node 0 must be the unique root (parent -1)")
        return rep
    if np.count_nonzero(parent == -1) != 1:
        rep.violations.append("exactly one root is required")
    if tree.is_empty:
        if left[0] != -1 or right[0] != -1:
            rep.violations.append("empty tree must have no children")
        return rep
    if left[0] == -1 or right[0] != -1:
        rep.violations.append("root must be planted (exactly one child, in the left slot)")
    # parent/child cross-links and reachability
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        v = stack.pop()
        for c in (left[v], right[v]):
            if c == -1:
                continue
            c = int(c)
            if c < 0 or c >= n or parent[c] != v or seen[c]:
                rep.violations.append(f"inconsistent child link at node {v}")
                continue
            seen[c] = True
            stack.append(c)
    if not seen.all():
        rep.violations.append("graph is not a single tree rooted at node 0")
        return rep
    # reduced/full binary: non-root nodes have 0 or 2 children
    one_child = ((left[1:] == -1) != (right[1:] == -1)).nonzero()[0]
    if one_child.size:
        rep.violations.append(f"not reduced: {one_child.size} node(s) with exactly one child")
    if tree.lengths is not None:
        if tree.lengths.shape[0] != n:
            rep.violations.append("lengths array must have one entry per node")
        else:
            for v in range(1, n):
                lv = tree.lengths[v]
                if v == tree.root_child and tree.root_stem_length is not None:
                    if not (tree.root_stem_length >= 0.0):
                        rep.violations.append("root_stem_length must be nonnegative")
                elif not (lv > 0.0):
                    rep.violations.append(f"edge length at node {v} must be strictly positive")
    if tree.root_stem_length is not None and tree.lengths is None:
        rep.violations.append("root_stem_length requires edge lengths")
    return rep


def _require_valid(tree: Tree):
    rep = validate(tree)
    if not rep.valid:
        raise TreeInvalidError("; ".join(rep.violations))


# ---------------------------------------------------------------------------
# Horton-Strahler orders
# ---------------------------------------------------------------------------


@dataclass
class HortonOrderAssignment:
    """Per-node Horton-Strahler orders.

    ``order[v]`` is the order of non-root vertex ``v`` (leaves are 1, a parent
    of children with orders i and j has order ``max(i, j) + (i == j)``).  The
    root carries ``tree_order``, the order of its child; the empty tree has
    order 0.
    """

    order: np.ndarray
    tree_order: int


def horton_orders(tree: Tree, *, checked: bool = True) -> HortonOrderAssignment:
    """Compute Horton-Strahler orders by hierarchical counting."""
    if checked:
        _require_valid(tree)
    n = tree.n_nodes
    order = np.zeros(n, dtype=np.int64)
    if tree.is_empty:
        return HortonOrderAssignment(order, 0)
    left, right, parent = tree.left, tree.right, tree.parent
    pending = np.where(left != -1, 1, 0) + np.where(right != -1, 1, 0)
    queue = deque(int(v) for v in range(1, n) if pending[v] == 0)
    while queue:
        v = queue.popleft()
        if left[v] == -1:
            order[v] = 1
        else:
            i, j = order[left[v]], order[right[v]]
            order[v] = (i if i > j else j) + (1 if i == j else 0)
        p = parent[v]
        pending[p] -= 1
        if pending[p] == 0 and p != 0:
            queue.append(int(p))
    order[0] = order[tree.root_child]
    return HortonOrderAssignment(order, int(order[0]))


# ---------------------------------------------------------------------------
# Branch decomposition
# ---------------------------------------------------------------------------


@dataclass
class Branch:
    """A maximal chain of same-order vertices with their parental edges.

    ``edges`` lists the chain's edges top-down, each identified by its lower
    vertex.  ``side_branches`` records (order, position) pairs for merging
    lower-order branches, where position is the 1-based index of the
    attachment vertex along the chain.
    """

    order: int
    initial_vertex: int
    edges: list
    side_branches: list
    lengths: list | None

    @property
    def m(self) -> int:
        return len(self.side_branches)

    def total_length(self) -> float:
        return float(sum(self.lengths)) if self.lengths else 0.0


@dataclass
class BranchDecomposition:
    branches: list
    n_k: np.ndarray  # branch counts by order, index 1..K
    n_ij: np.ndarray  # side-branch counts, n_ij[i, j] for i < j
    tree_order: int

    def branch_count(self, k: int) -> int:
        return int(self.n_k[k]) if 0 < k < self.n_k.shape[0] else 0

    def side_count(self, i: int, j: int) -> int:
        if 0 < i < self.n_ij.shape[0] and 0 < j < self.n_ij.shape[1]:
            return int(self.n_ij[i, j])
        return 0


def branch_decompose(tree: Tree, orders: HortonOrderAssignment | None = None) -> BranchDecomposition:
    """Group vertices into branches and collect side-branch statistics."""
    if orders is None:
        orders = horton_orders(tree)
    n = tree.n_nodes
    if orders.order.shape[0] != n:
        raise TreeInvalidError("order assignment does not match this tree")
    K = orders.tree_order
    if tree.is_empty:
        return BranchDecomposition([], np.zeros(1, dtype=np.int64), np.zeros((1, 1), dtype=np.int64), 0)
    order = orders.order
    parent, left, right = tree.parent, tree.left, tree.right
    lengths = tree.lengths
    n_k = np.zeros(K + 1, dtype=np.int64)
    n_ij = np.zeros((K + 1, K + 1), dtype=np.int64)
    branches = []
    # A non-root vertex starts a branch iff its parent is the root or has a
    # different (necessarily higher) order.  Walk each chain downward.
    branch_of = np.full(n, -1, dtype=np.int64)
    for v in range(1, n):
        p = int(parent[v])
        if p != 0 and order[p] == order[v]:
            continue
        j = int(order[v])
        b = Branch(j, v, [], [], [] if lengths is not None else None)
        idx = len(branches)
        branches.append(b)
        n_k[j] += 1
        cur = v
        pos = 0
        while True:
            pos += 1
            branch_of[cur] = idx
            b.edges.append(cur)
            if b.lengths is not None:
                b.lengths.append(tree.edge_length(cur))
            l, r = int(left[cur]), int(right[cur])
            if l == -1:
                break  # leaf terminates the chain
            oi, oj = int(order[l]), int(order[r])
            if oi == j and oj < j:
                b.side_branches.append((oj, pos))
                n_ij[oj, j] += 1
                cur = l
            elif oj == j and oi < j:
                b.side_branches.append((oi, pos))
                n_ij[oi, j] += 1
                cur = r
            else:
                break  # terminal vertex: both children one order lower
    return BranchDecomposition(branches, n_k, n_ij, K)


# ---------------------------------------------------------------------------
# Internal pruning primitive (shared with the pruning module)
# ---------------------------------------------------------------------------


def _prune_arrays(parent, left, right, lengths):
    """One Horton pruning step on raw arrays.

    Returns ``(parent', left', right', lengths', removed_leaves, merged,
    old_to_new, attach_counts)`` where ``attach_counts[v']`` counts the
    dissolved degree-2 vertices inside the merged parental edge of new node
    ``v'`` (equivalently, the order-1 side branches that were attached along
    it) — needed by the proper-embedding comparison.
    """
    n = parent.shape[0]
    if n <= 2:
        # phi stays phi; the single-edge tree loses its leaf and becomes phi.
        # The empty tree carries no edges, hence no lengths array.
        removed = 1 if n == 2 else 0
        empty = Tree.empty()
        return empty.parent, empty.left, empty.right, None, removed, 0, None, np.zeros(1, dtype=np.int64)

    is_leaf = (left == -1) & (right == -1)
    is_leaf[0] = False
    kept = ~is_leaf
    surv_children = np.zeros(n, dtype=np.int64)
    for v in range(n):
        if not kept[v]:
            continue
        for c in (left[v], right[v]):
            if c != -1 and kept[c]:
                surv_children[v] += 1
    dissolved = kept & (surv_children == 1)
    dissolved[0] = False
    new_mask = kept & ~dissolved
    old_to_new = np.full(n, -1, dtype=np.int64)
    old_to_new[new_mask] = np.arange(int(np.count_nonzero(new_mask)))
    m = int(np.count_nonzero(new_mask))
    np_parent = np.full(m, -1, dtype=np.int64)
    np_left = np.full(m, -1, dtype=np.int64)
    np_right = np.full(m, -1, dtype=np.int64)
    np_lengths = None if lengths is None else np.full(m, np.nan)
    attach_counts = np.zeros(m, dtype=np.int64)
    for v in range(1, n):
        if not new_mask[v]:
            continue
        nv = int(old_to_new[v])
        total = 0.0 if lengths is None else float(lengths[v])
        count = 0
        top = v
        p = int(parent[v])
        while dissolved[p]:
            if lengths is not None:
                total += float(lengths[p])
            count += 1
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
        attach_counts[nv] = count
    # planted-root slot normalization: the root's sole child sits in `left`
    if np_left[0] == -1 and np_right[0] != -1:
        np_left[0], np_right[0] = np_right[0], np_left[0]
    removed = int(np.count_nonzero(is_leaf))
    merged = int(np.count_nonzero(dissolved))
    return np_parent, np_left, np_right, np_lengths, removed, merged, old_to_new, attach_counts


def _prune_tree(tree: Tree):
    """Prune a Tree, returning (pruned, removed, merged, old_to_new, counts)."""
    lens = tree.lengths
    if lens is not None and tree.root_stem_length is not None:
        lens = lens.copy()
        lens[tree.root_child] = float(tree.root_stem_length)
    p, l, r, w, removed, merged, o2n, counts = _prune_arrays(tree.parent, tree.left, tree.right, lens)
    pruned = Tree(p, l, r, w, embedded=tree.embedded)
    return pruned, removed, merged, o2n, counts


# ---------------------------------------------------------------------------
# Proper embedding
# ---------------------------------------------------------------------------


def _canonical_shape_ids(tree: Tree, intern: dict) -> np.ndarray:
    """Unordered-shape canonical id per node (AHU hash-consing).

    Ids are comparable across calls that share the ``intern`` dictionary.
    """
    n = tree.n_nodes
    ids = np.zeros(n, dtype=np.int64)
    left, right, parent = tree.left, tree.right, tree.parent
    pending = np.where(left != -1, 1, 0) + np.where(right != -1, 1, 0)
    queue = deque(int(v) for v in range(n) if pending[v] == 0)
    while queue:
        v = queue.popleft()
        if left[v] == -1:
            ids[v] = 0
        elif right[v] == -1:  # planted root
            ids[v] = ids[left[v]]
        else:
            a, b = int(ids[left[v]]), int(ids[right[v]])
            key = (a, b) if a <= b else (b, a)
            ids[v] = intern.setdefault(key, len(intern) + 1)
        if v == 0:
            continue
        p = int(parent[v])
        pending[p] -= 1
        if pending[p] == 0:
            queue.append(p)
    return ids


def _dfs_preorder(tree: Tree):
    """Node ids in DFS order honoring child slots (left before right)."""
    out = []
    stack = [0]
    left, right = tree.left, tree.right
    while stack:
        v = stack.pop()
        out.append(v)
        r = int(right[v])
        l = int(left[v])
        if r != -1:
            stack.append(r)
        if l != -1:
            stack.append(l)
    return out


def _compare_shapes(t1: Tree, t2: Tree) -> int:
    """Order two equal-order combinatorial subtrees for proper embedding.

    Returns a negative value when ``t1`` must branch to the right, positive
    when ``t2`` must, and 0 when the shapes are identical.  Descends the
    pruning trajectory to the deepest level where the two shapes differ;
    there they differ only in order-1 side-branch counts, which are compared
    lexicographically along the proper labeling of the common pruned shape
    (the subtree with the smaller first non-coinciding count branches right).
    """
    intern: dict = {}
    id1 = _canonical_shape_ids(t1, intern)
    id2 = _canonical_shape_ids(t2, intern)
    if id1[0] == id2[0]:
        return 0
    p1, _, _, m1, c1 = _prune_tree(t1)
    p2, _, _, m2, c2 = _prune_tree(t2)
    deeper = _compare_shapes(p1, p2)
    if deeper != 0:
        return deeper
    # pruned shapes coincide: compare order-1 attachment counts along the
    # DFS labeling of the properly embedded common descendant
    d0 = proper_embed(p1)
    seq = _dfs_preorder(d0)
    vec1 = [int(c1[v]) for v in seq if v != 0]
    vec2 = [int(c2[v]) for v in seq if v != 0]
    if vec1 == vec2:
        return 0
    return -1 if vec1 < vec2 else 1


def _compare_subtrees(t1: Tree, t2: Tree) -> int:
    """Full embedding comparison: shapes first, then the length tie-breaks."""
    c = _compare_shapes(shape(t1), shape(t2))
    if c != 0 or t1.lengths is None:
        return c
    r1, r2 = t1.edge_length(t1.root_child), t2.edge_length(t2.root_child)
    if r1 != r2:
        return -1 if r1 < r2 else 1  # shorter root edge branches right
    # identical shapes and root edges: lexicographic DFS length vectors
    e1, e2 = proper_embed(t1), proper_embed(t2)
    v1 = [e1.edge_length(v) for v in _dfs_preorder(e1) if v != 0]
    v2 = [e2.edge_length(v) for v in _dfs_preorder(e2) if v != 0]
    if v1 == v2:
        return 0
    return -1 if v1 < v2 else 1


def proper_embed(tree: Tree, *, checked: bool = True) -> Tree:
    """Embed a tree so that embedding commutes with pruning.

    Side branches go to the right of the branch they merge; where two
    equal-order complete subtrees merge, the smaller one under the pruning-
    descendant comparison (with the shorter-root-edge and lexicographic
    length tie-breaks) goes to the right.  Exact ties keep the input child
    order, so the embedding is deterministic.
    """
    if checked:
        _require_valid(tree)
    out = tree.copy()
    out.embedded = True
    if tree.is_empty:
        return out
    orders = horton_orders(out, checked=False)
    order = orders.order
    left, right = out.left, out.right
    for v in range(out.n_nodes):
        l, r = int(left[v]), int(right[v])
        if l == -1 or r == -1:
            continue
        ol, orr = int(order[l]), int(order[r])
        if ol != orr:
            if ol < orr:  # lower order is the side branch: branch it right
                left[v], right[v] = r, l
            continue
        c = _compare_subtrees(extract_subtree(out, l), extract_subtree(out, r))
        if c < 0:  # left child is the smaller subtree: it branches right
            left[v], right[v] = r, l
    return out


def dfs_labels(tree: Tree) -> np.ndarray:
    """Depth-first labels 1..n honoring the embedding (left before right)."""
    if not tree.embedded:
        raise TreeInvalidError("dfs_labels requires an embedded tree")
    labels = np.zeros(tree.n_nodes, dtype=np.int64)
    for i, v in enumerate(_dfs_preorder(tree), start=1):
        labels[v] = i
    return labels


# ---------------------------------------------------------------------------
# Shape / length projections
# ---------------------------------------------------------------------------


def shape(tree: Tree) -> Tree:
    """The combinatorial tree: same adjacency, no lengths, no embedding."""
    return Tree(tree.parent.copy(), tree.left.copy(), tree.right.copy())


def total_length(tree: Tree) -> float:
    """Sum of all edge lengths, including the root stem when present."""
    if tree.is_empty:
        return 0.0
    if tree.lengths is None:
        raise TreeInvalidError("total_length requires edge lengths")
    s = float(np.nansum(tree.lengths[1:]))
    if tree.root_stem_length is not None:
        s += float(tree.root_stem_length) - float(tree.lengths[tree.root_child])
    return s


# ---------------------------------------------------------------------------
# Subtree extraction
# ---------------------------------------------------------------------------


def extract_subtree(tree: Tree, v: int) -> Tree:
    """The planted subtree comprised of ``v``, its descendants, and its
    parental edge (a fresh root stands in for the parent)."""
    ids = []
    stack = [int(v)]
    left, right = tree.left, tree.right
    while stack:
        u = stack.pop()
        ids.append(u)
        r, l = int(right[u]), int(left[u])
        if r != -1:
            stack.append(r)
        if l != -1:
            stack.append(l)
    remap = {old: new for new, old in enumerate(ids, start=1)}
    m = len(ids) + 1
    parent = np.full(m, -1, dtype=np.int64)
    nleft = np.full(m, -1, dtype=np.int64)
    nright = np.full(m, -1, dtype=np.int64)
    lens = None if tree.lengths is None else np.full(m, np.nan)
    parent[1] = 0
    nleft[0] = 1
    for old in ids:
        new = remap[old]
        l, r = int(left[old]), int(right[old])
        if l != -1:
            nleft[new] = remap[l]
            parent[remap[l]] = new
        if r != -1:
            nright[new] = remap[r]
            parent[remap[r]] = new
        if lens is not None:
            lens[new] = tree.edge_length(old)
    return Tree(parent, nleft, nright, lens, embedded=tree.embedded)


def extract_complete_subtrees(tree: Tree, K: int, orders: HortonOrderAssignment | None = None):
    """All complete subtrees of order ``K``, one per initial vertex of an
    order-``K`` branch, in node-id (construction) order."""
    if orders is None:
        orders = horton_orders(tree)
    order = orders.order
    out = []
    for v in range(1, tree.n_nodes):
        if order[v] != K:
            continue
        p = int(tree.parent[v])
        if p == 0 or order[p] != K:
            out.append(extract_subtree(tree, v))
    return out


# ---------------------------------------------------------------------------
# Structural equality and the shape census
# ---------------------------------------------------------------------------


def trees_equal_embedded(a: Tree, b: Tree, tol: float = 0.0) -> bool:
    """Exact embedded structural equality; lengths compared within ``tol``."""
    if a.is_empty and b.is_empty:
        return True
    if a.n_nodes != b.n_nodes or a.has_lengths != b.has_lengths:
        return False
    sa, sb = _dfs_preorder(a), _dfs_preorder(b)
    pos_a = {v: i for i, v in enumerate(sa)}
    pos_b = {v: i for i, v in enumerate(sb)}
    for va, vb in zip(sa, sb):
        ka = (a.left[va] != -1) + (a.right[va] != -1)
        kb = (b.left[vb] != -1) + (b.right[vb] != -1)
        if ka != kb:
            return False
        if a.left[va] != -1 and pos_a[int(a.left[va])] != pos_b[int(b.left[vb])]:
            return False
        if va != 0 and a.has_lengths and abs(a.edge_length(va) - b.edge_length(vb)) > tol:
            return False
    return True


def shapes_equal(a: Tree, b: Tree) -> bool:
    """Unordered combinatorial equality."""
    intern: dict = {}
    return _canonical_shape_ids(a, intern)[0] == _canonical_shape_ids(b, intern)[0]


def census_key(tree: Tree, max_leaves: int = 12) -> str:
    """Canonical census bin for a combinatorial tree.

    Trees up to ``max_leaves`` leaves bin exactly (parenthesization of the
    proper embedding); larger trees bin coarsely by (order, leaf count).
    """
    n1 = tree.n_leaves()
    if n1 > max_leaves:
        k = horton_orders(tree).tree_order
        return f"big:{k}:{n1}"
    emb = proper_embed(shape(tree), checked=False)
    left, right = emb.left, emb.right
    parts = []
    stack = [(emb.root_child if not emb.is_empty else -1, 0)]
    if emb.is_empty:
        return "phi"
    while stack:
        v, phase = stack.pop()
        l, r = int(left[v]), int(right[v])
        if l == -1:
            parts.append("o")
            continue
        if phase == 0:
            parts.append("(")
            stack.append((v, 1))
            stack.append((r, 0))
            stack.append((l, 0))
        else:
            parts.append(")")
    # close phases interleave; rebuild with explicit markers
    return "".join(parts)


# ---------------------------------------------------------------------------
# Nested construction (mirrors the JSON schema)
# ---------------------------------------------------------------------------


def tree_from_nested(node, embedded: bool = False, root_stem_length=None) -> Tree:
    """Build a tree from nested ``{"length": x|None, "children": [...]}``
    dicts describing the root's child subtree; ``None`` builds the empty
    tree."""
    if node is None:
        return Tree.empty()
    parent, left, right, lens = [-1], [-1], [-1], [np.nan]
    any_len = [False]

    def new_node(p, length):
        idx = len(parent)
        parent.append(p)
        left.append(-1)
        right.append(-1)
        if length is None:
            lens.append(np.nan)
        else:
            any_len[0] = True
            lens.append(float(length))
        if left[p] == -1:
            left[p] = idx
        else:
            right[p] = idx
        return idx

    stack = [(node, 0)]
    while stack:
        spec, p = stack.pop()
        idx = new_node(p, spec.get("length"))
        kids = spec.get("children") or []
        if len(kids) not in (0, 2):
            raise TreeInvalidError("nodes must have exactly 0 or 2 children")
        for kid in reversed(kids):
            stack.append((kid, idx))
    lengths = np.array(lens) if any_len[0] else None
    return Tree(parent, left, right, lengths, embedded=embedded, root_stem_length=root_stem_length)


def tree_to_nested(tree: Tree):
    """Inverse of :func:`tree_from_nested` (iterative; safe for deep trees)."""
    if tree.is_empty:
        return None
    nodes = {}
    for v in reversed(_dfs_preorder(tree)):
        if v == 0:
            continue
        kids = []
        if tree.left[v] != -1:
            kids.append(nodes[int(tree.left[v])])
        if tree.right[v] != -1:
            kids.append(nodes[int(tree.right[v])])
        length = tree.edge_length(v) if tree.has_lengths else None
        nodes[v] = {"length": length, "children": kids}
    return nodes[tree.root_child]


# ---------------------------------------------------------------------------
# JSON tree schema
# ---------------------------------------------------------------------------
#
# {"root_stem_length": number|null, "embedded": bool, "tree": NODE}
# NODE = {"length": number|null, "children": [NODE, NODE] | []}
#
# Serialization is hand-rolled and iterative: sampled trees routinely nest
# thousands of levels deep, beyond both json.dumps and json.loads recursion
# limits.


def tree_to_json(tree: Tree) -> str:
    parts = ['{"root_stem_length": ']
    parts.append("null" if tree.root_stem_length is None else repr(float(tree.root_stem_length)))
    parts.append(', "embedded": ')
    parts.append("true" if tree.embedded else "false")
    parts.append(', "tree": ')
    if tree.is_empty:
        parts.append("null}")
        return "".join(parts)
    left, right = tree.left, tree.right
    stack = [(tree.root_child, 0)]
    while stack:
        v, phase = stack.pop()
        if phase == 0:
            if tree.has_lengths:
                parts.append('{"length": %r, "children": [' % tree.edge_length(v))
            else:
                parts.append('{"length": null, "children": [')
            l, r = int(left[v]), int(right[v])
            stack.append((v, 2))
            if l != -1:
                stack.append((r, 1))
                stack.append((l, 0))
        elif phase == 1:
            parts.append(", ")
            stack.append((v, 0))
        else:
            parts.append("]}")
    parts.append("}")
    return "".join(parts)


class _JsonCursor:
    __slots__ = ("s", "i")

    def __init__(self, s):
        self.s = s
        self.i = 0

    def skip_ws(self):
        while self.i < len(self.s) and self.s[self.i] in " \t\r\n":
            self.i += 1

    def expect(self, ch):
        self.skip_ws()
        if self.i >= len(self.s) or self.s[self.i] != ch:
            raise TreeInvalidError(f"malformed tree JSON near offset {self.i}: expected {ch!r}")
        self.i += 1

    def peek(self):
        self.skip_ws()
        return self.s[self.i] if self.i < len(self.s) else ""

    def literal(self, word):
        if self.s.startswith(word, self.i):
            self.i += len(word)
            return True
        return False

    def string(self):
        self.expect('"')
        j = self.s.index('"', self.i)
        out = self.s[self.i : j]
        self.i = j + 1
        return out

    def number(self):
        j = self.i
        s = self.s
        while j < len(s) and (s[j] in "+-.eE" or s[j].isdigit()):
            j += 1
        val = float(s[self.i : j])
        self.i = j
        return val


def tree_from_json(text: str) -> Tree:
    cur = _JsonCursor(text)
    cur.expect("{")
    root_stem = None
    embedded = False
    node_spec_start = None
    while True:
        key = cur.string()
        cur.expect(":")
        cur.skip_ws()
        if key == "root_stem_length":
            root_stem = None if cur.literal("null") else cur.number()
        elif key == "embedded":
            if cur.literal("true"):
                embedded = True
            elif cur.literal("false"):
                embedded = False
            else:
                raise TreeInvalidError("embedded must be true or false")
        elif key == "tree":
            node_spec_start = cur.i
            _skip_json_value(cur)
        else:
            _skip_json_value(cur)
        if cur.peek() == ",":
            cur.expect(",")
            continue
        cur.expect("}")
        break
    if node_spec_start is None:
        raise TreeInvalidError('tree JSON requires a "tree" key')
    return _parse_node_value(text, node_spec_start, embedded, root_stem)


def _skip_json_value(cur: _JsonCursor):
    depth = 0
    s = cur.s
    while cur.i < len(s):
        ch = s[cur.i]
        if ch == '"':
            cur.string()
            continue
        if ch in "[{":
            depth += 1
        elif ch in "]}":
            if depth == 0:
                return
            depth -= 1
            if depth == 0:
                cur.i += 1
                return
        elif depth == 0 and ch == ",":
            return
        cur.i += 1


def _parse_node_value(text: str, start: int, embedded: bool, root_stem) -> Tree:
    cur = _JsonCursor(text)
    cur.i = start
    if cur.peek() == "n":
        if not cur.literal("null"):
            raise TreeInvalidError("malformed tree value")
        return Tree.empty()
    parent, left, right, lens = [-1], [-1], [-1], [np.nan]
    any_len = False
    open_nodes = []  # node ids whose children array is currently open
    next_parent = 0
    while True:
        # node header: '{' fields with "length" first, then "children": '['
        cur.expect("{")
        length = None
        while True:
            key = cur.string()
            cur.expect(":")
            cur.skip_ws()
            if key == "length":
                length = None if cur.literal("null") else cur.number()
            elif key == "children":
                cur.expect("[")
                break
            else:
                _skip_json_value(cur)
            cur.expect(",")
        idx = len(parent)
        parent.append(next_parent)
        left.append(-1)
        right.append(-1)
        if length is None:
            lens.append(np.nan)
        else:
            any_len = True
            lens.append(float(length))
        if left[next_parent] == -1:
            left[next_parent] = idx
        else:
            right[next_parent] = idx
        if cur.peek() != "]":
            open_nodes.append(idx)
            next_parent = idx
            continue
        # leaf: close it, then unwind enclosing arrays
        while True:
            cur.expect("]")
            cur.expect("}")
            if not open_nodes:
                lengths = np.array(lens) if any_len else None
                t = Tree(parent, left, right, lengths, embedded=embedded, root_stem_length=root_stem)
                rep = validate(t)
                if not rep.valid:
                    raise TreeInvalidError("; ".join(rep.violations))
                return t
            if cur.peek() == ",":
                cur.expect(",")
                next_parent = open_nodes[-1]
                break
            open_nodes.pop()


# ---------------------------------------------------------------------------
# Newick export/import (unlabeled leaves, optional branch lengths)
# ---------------------------------------------------------------------------


def tree_to_newick(tree: Tree) -> str:
    """Export as Newick, e.g. ``((:1.0,:2.0):0.5);``.

    The outermost parentheses are the planted root (one child); leaves are
    unlabeled and carry branch lengths when the tree has them.  The empty
    tree exports as ``;``.
    """
    if tree.is_empty:
        return ";"
    parts = ["("]
    left, right = tree.left, tree.right
    stack = [(tree.root_child, 0)]
    while stack:
        v, phase = stack.pop()
        if phase == 2:
            parts.append(",")
            continue
        if phase == 1:
            parts.append(")")
            if tree.has_lengths:
                parts.append(":%r" % tree.edge_length(v))
            continue
        l, r = int(left[v]), int(right[v])
        if l == -1:
            if tree.has_lengths:
                parts.append(":%r" % tree.edge_length(v))
            continue
        parts.append("(")
        stack.append((v, 1))
        stack.append((r, 0))
        stack.append((-1, 2))
        stack.append((l, 0))
    parts.append(");")
    return "".join(parts)


def tree_from_newick(text: str) -> Tree:
    s = text.strip()
    if not s.endswith(";"):
        raise TreeInvalidError("Newick input must end with ';'")
    s = s[:-1].strip()
    if not s:
        return Tree.empty()
    parent, left, right, lens = [-1], [-1], [-1], [np.nan]
    any_len = [False]

    def add(p, length):
        idx = len(parent)
        parent.append(p)
        left.append(-1)
        right.append(-1)
        if length is None:
            lens.append(np.nan)
        else:
            any_len[0] = True
            lens.append(float(length))
        if left[p] == -1:
            left[p] = idx
        else:
            right[p] = idx
        return idx

    i = 0
    n = len(s)
    stack = []  # open internal nodes, as (children-spec list) placeholders
    pending_children: list = []

    def read_length(i):
        if i < n and s[i] == ":":
            j = i + 1
            while j < n and (s[j] in "+-.eE" or s[j].isdigit()):
                j += 1
            return float(s[i + 1 : j]), j
        return None, i

    # Two-pass: build a child-count skeleton via tokens, then materialize.
    # Tokens: '(' open internal, ',' sibling separator, ')' close (optionally
    # followed by :len), bare ':len' or empty = leaf.
    node_stack = []
    root_spec = None
    while i < n:
        ch = s[i]
        if ch == "(":
            node_stack.append([])
            i += 1
        elif ch in ",)":
            # an empty slot before ',' or ')' denotes a leaf with no length
            prev = s[i - 1]
            if prev in "(,":
                node_stack[-1].append((None, []))
            if ch == ",":
                i += 1
            else:
                kids = node_stack.pop()
                length, i2 = read_length(i + 1)
                spec = (length, kids)
                i = i2
                if node_stack:
                    node_stack[-1].append(spec)
                else:
                    root_spec = spec
        elif ch == ":":
            length, i = read_length(i)
            node_stack[-1].append((length, []))
        elif ch in " \t\r\n":
            i += 1
        else:
            raise TreeInvalidError(f"unsupported Newick token {ch!r} (labels are not used)")
    if root_spec is None:
        # a single bare leaf like ":1.5;"
        length, _ = read_length(0) if s[0] == ":" else (None, 0)
        root_spec = (length, [])
    # the outermost single-child node is the planted root wrapper
    if len(root_spec[1]) == 1:
        if root_spec[0] is not None:
            raise TreeInvalidError("the planted root carries no branch length")
        root_spec = root_spec[1][0]
    build = [(root_spec, 0)]
    while build:
        (length, kids), p = build.pop()
        idx = add(p, length)
        if len(kids) not in (0, 2):
            raise TreeInvalidError("Newick tree must be strictly binary")
        for kid in reversed(kids):
            build.append((kid, idx))
    lengths = np.array(lens) if any_len[0] else None
    t = Tree(parent, left, right, lengths)
    rep = validate(t)
    if not rep.valid:
        raise TreeInvalidError("; ".join(rep.violations))
    return t
