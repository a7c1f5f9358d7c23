"""Estimators and distributional checks for the tree self-similarity laws.

Estimation follows two rules throughout.  Ratio quantities (Tokunaga
coefficients, vertex-frequency ratios, pooled means) use ratio-of-sums
estimators, matching the defining ratios of expectations; their standard
errors come from the per-tree cluster residuals.  Statistical decisions are
reproducible by construction: fixed seeds, and fixed z-bands (default 4
standard errors) instead of p-value machinery; every report records the band
it used.

The module also hosts the Monte Carlo campaign drivers.  Campaigns derive one
generator per trajectory from the master seed, stream per-tree statistics
through the kernel lane without materializing large trees, and merge chunk
results in index order, so reports are identical for any worker count.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import active as _kern
from .errors import ParameterError, TreeInvalidError
from .rng import trajectory_rng
from .samplers import (
    EventLog,
    ProcessParams,
    WalkParams,
    draw_order,
    kernel_constants,
    sample_hbp,
)
from .trees import (
    Tree,
    branch_decompose,
    census_key,
    extract_complete_subtrees,
    horton_orders,
)
from .pruning import prune

__all__ = [
    "ExactSum",
    "Accumulator",
    "BandCheck",
    "TokunagaEstimate",
    "HortonStats",
    "estimate_tokunaga",
    "horton_stats",
    "order_distribution_test",
    "prune_invariance_test",
    "side_branch_test",
    "principal_subtree_stats",
    "vertex_order_frequencies",
    "uniform_point_order",
    "uniform_complete_subtree",
    "empirical_width",
    "WidthEstimate",
    "hbp_statistics_campaign",
    "width_event_campaign",
    "cross_sampler_campaign",
    "excursion_campaign",
    "walk_forest_tokunaga",
    "principal_order_campaign",
    "sample_conditioned_trees",
]


# ---------------------------------------------------------------------------
# Exact mergeable accumulation
# ---------------------------------------------------------------------------


class ExactSum:
    """Exact running sum of doubles (Shewchuk partials).

    The represented value is exact, so adding the same multiset of numbers in
    any order, or merging partial sums in any order, rounds to bit-identical
    totals.  This is what makes the statistics accumulators safely mergeable
    across workers.
    """

    __slots__ = ("partials",)

    def __init__(self, value=0.0):
        self.partials = [float(value)] if value else []

    def add(self, x: float):
        partials = self.partials
        i = 0
        x = float(x)
        for y in partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                partials[i] = lo
                i += 1
            x = hi
        partials[i:] = [x]

    def merge(self, other: "ExactSum"):
        for y in other.partials:
            self.add(y)
        return self

    @property
    def value(self) -> float:
        return math.fsum(self.partials)


class Accumulator:
    """Mergeable sufficient statistics keyed by (statistic, order indices).

    Each key holds (count, exact sum, exact sum of squares).  ``merge`` is
    associative and commutative with bit-identical totals.
    """

    def __init__(self):
        self._cells = {}

    def _cell(self, key):
        cell = self._cells.get(key)
        if cell is None:
            cell = [0, ExactSum(), ExactSum()]
            self._cells[key] = cell
        return cell

    def add(self, key, value: float = 0.0, count: int = 1):
        cell = self._cell(key)
        cell[0] += count
        if value:
            cell[1].add(value)
            cell[2].add(value * value)

    def merge(self, other: "Accumulator"):
        for key, cell in other._cells.items():
            mine = self._cell(key)
            mine[0] += cell[0]
            mine[1].merge(cell[1])
            mine[2].merge(cell[2])
        return self

    def keys(self):
        return self._cells.keys()

    def count(self, key) -> int:
        cell = self._cells.get(key)
        return cell[0] if cell else 0

    def total(self, key) -> float:
        cell = self._cells.get(key)
        return cell[1].value if cell else 0.0

    def sum_sq(self, key) -> float:
        cell = self._cells.get(key)
        return cell[2].value if cell else 0.0

    def mean(self, key) -> float:
        cell = self._cells.get(key)
        if not cell or cell[0] == 0:
            return math.nan
        return cell[1].value / cell[0]

    def variance(self, key) -> float:
        cell = self._cells.get(key)
        if not cell or cell[0] < 2:
            return math.nan
        n, s, ss = cell[0], cell[1].value, cell[2].value
        return max(0.0, (ss - s * s / n) / (n - 1))

    def se_mean(self, key) -> float:
        n = self.count(key)
        v = self.variance(key)
        return math.sqrt(v / n) if n and not math.isnan(v) else math.nan


# ---------------------------------------------------------------------------
# Band checks (the reproducible pass/fail unit)
# ---------------------------------------------------------------------------


@dataclass
class BandCheck:
    """|estimate - target| <= band * se, the package's test decision unit."""

    name: str
    estimate: float
    target: float
    se: float
    band: float = 4.0

    @property
    def z(self) -> float:
        if self.se == 0.0:
            return 0.0 if self.estimate == self.target else math.inf
        return (self.estimate - self.target) / self.se

    @property
    def passed(self) -> bool:
        return abs(self.z) <= self.band

    def as_dict(self):
        return {
            "name": self.name,
            "estimate": self.estimate,
            "target": self.target,
            "se": self.se,
            "band": self.band,
            "z": self.z,
            "passed": self.passed,
        }


def _ratio_se(sum_a, sum_b, sum_a2, sum_ab, sum_b2):
    """SE of the ratio-of-sums A/B from per-cluster moment sums."""
    if sum_b <= 0:
        return math.nan
    r = sum_a / sum_b
    resid2 = sum_a2 - 2.0 * r * sum_ab + r * r * sum_b2
    return math.sqrt(max(resid2, 0.0)) / sum_b


# ---------------------------------------------------------------------------
# Tokunaga and Horton estimators
# ---------------------------------------------------------------------------


@dataclass
class TokunagaEstimate:
    K: int
    n_trees: int
    t_hat: np.ndarray  # (K+1, K+1), entry [i, j]
    se: np.ndarray
    nij_total: np.ndarray
    nj_total: np.ndarray

    def coefficient(self, i: int, j: int) -> float:
        return float(self.t_hat[i, j])


def estimate_tokunaga(trees, K: int | None = None) -> TokunagaEstimate:
    """Ratio-of-sums Tokunaga coefficients from an order-K sample."""
    trees = list(trees)
    if not trees:
        raise ParameterError("empty sample")
    orders = [horton_orders(t).tree_order for t in trees]
    if K is None:
        K = orders[0]
    if any(o != K for o in orders):
        raise ParameterError("estimate_tokunaga requires a fixed-order sample")
    if K < 2:
        raise ParameterError("Tokunaga estimation needs order at least 2")
    dim = K + 1
    nij = np.zeros((dim, dim))
    nj = np.zeros(dim)
    nij2 = np.zeros((dim, dim))
    cross = np.zeros((dim, dim))
    nj2 = np.zeros(dim)
    for t in trees:
        d = branch_decompose(t)
        a = d.n_ij.astype(np.float64)
        b = d.n_k.astype(np.float64)
        nij[: a.shape[0], : a.shape[1]] += a
        nj[: b.shape[0]] += b
        nij2[: a.shape[0], : a.shape[1]] += a * a
        cross[: a.shape[0], : a.shape[1]] += a * b[np.newaxis, : a.shape[1]]
        nj2[: b.shape[0]] += b * b
    t_hat = np.full((dim, dim), np.nan)
    se = np.full((dim, dim), np.nan)
    for j in range(2, dim):
        if nj[j] <= 0:
            continue
        for i in range(1, j):
            t_hat[i, j] = nij[i, j] / nj[j]
            se[i, j] = _ratio_se(nij[i, j], nj[j], nij2[i, j], cross[i, j], nj2[j])
    return TokunagaEstimate(K, len(trees), t_hat, se, nij, nj)


@dataclass
class HortonStats:
    K: int
    n_trees: int
    nk_mean: np.ndarray  # average branch counts by order, index 1..K
    nk_se: np.ndarray
    ratios: np.ndarray  # nk_mean / nk_mean[1]
    horton_ratio: float  # fitted R


def horton_stats(trees, K: int | None = None) -> HortonStats:
    """Average Horton numbers and the fitted geometric-decay exponent R.

    R comes from an ordinary least-squares fit of log N_k on k (exact when
    the decay is exactly geometric).
    """
    trees = list(trees)
    if not trees:
        raise ParameterError("empty sample")
    orders = [horton_orders(t).tree_order for t in trees]
    if K is None:
        K = orders[0]
    if any(o != K for o in orders):
        raise ParameterError("horton_stats requires a fixed-order sample")
    dim = K + 1
    tot = np.zeros(dim)
    tot2 = np.zeros(dim)
    for t in trees:
        b = branch_decompose(t).n_k.astype(np.float64)
        tot[: b.shape[0]] += b
        tot2[: b.shape[0]] += b * b
    n = len(trees)
    mean = tot / n
    var = np.maximum(0.0, (tot2 - tot * tot / n) / max(n - 1, 1))
    se = np.sqrt(var / n)
    ratios = np.full(dim, np.nan)
    ratios[1:] = mean[1:] / mean[1]
    ks = np.arange(1, K + 1, dtype=np.float64)
    logs = np.log(mean[1:])
    slope = np.polyfit(ks, logs, 1)[0]
    return HortonStats(K, n, mean, se, ratios, float(math.exp(-slope)))


# ---------------------------------------------------------------------------
# Order distribution
# ---------------------------------------------------------------------------


@dataclass
class OrderDistributionReport:
    n: int
    counts: dict
    p_mle: float
    checks: list
    band: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def order_distribution_test(orders, band: float = 4.0, min_expected: float = 20.0) -> OrderDistributionReport:
    """Geometric goodness of fit for a sample of tree orders.

    Fits p by maximum likelihood (1 / mean order) and checks every bin with
    expected count >= ``min_expected`` against its geometric probability at
    the configured z-band.
    """
    orders = np.asarray(list(orders), dtype=np.int64)
    if orders.size == 0:
        raise ParameterError("empty sample")
    n = orders.size
    p = 1.0 / float(orders.mean())
    counts = {}
    for k in orders:
        counts[int(k)] = counts.get(int(k), 0) + 1
    checks = []
    for k in sorted(counts):
        pk = p * (1.0 - p) ** (k - 1)
        if n * pk < min_expected:
            continue
        se = math.sqrt(pk * (1.0 - pk) / n)
        checks.append(BandCheck(f"p_{k}", counts[k] / n, pk, se, band))
    return OrderDistributionReport(n, counts, p, checks, band)


# ---------------------------------------------------------------------------
# Prune invariance
# ---------------------------------------------------------------------------


@dataclass
class PruneInvarianceReport:
    n: int
    n_pruned_nonempty: int
    checks: list
    chi2: float
    bins_compared: int
    band: float

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)


def prune_invariance_test(
    sample_fn,
    seed: int,
    n: int,
    band: float = 4.0,
    min_expected: float = 50.0,
    census_cap: int = 12,
) -> PruneInvarianceReport:
    """Compare the shape census of a sample against its pruned census.

    ``sample_fn(rng)`` draws one tree.  The pruned sample conditions on being
    nonempty.  Bins whose pooled expected count reaches ``min_expected`` are
    compared at the z-band; the report also carries a chi-squared distance.
    """
    before = {}
    after = {}
    n_after = 0
    for i in range(n):
        t = sample_fn(trajectory_rng(seed, i))
        key = census_key(t, census_cap)
        before[key] = before.get(key, 0) + 1
        pt = prune(t, checked=False).pruned
        if not pt.is_empty:
            key2 = census_key(pt, census_cap)
            after[key2] = after.get(key2, 0) + 1
            n_after += 1
    if n_after == 0:
        raise ParameterError("the pruned sample is empty (order-1-only sampler)")
    checks = []
    chi2 = 0.0
    bins = 0
    for key in sorted(set(before) | set(after)):
        c1 = before.get(key, 0)
        c2 = after.get(key, 0)
        pooled = (c1 + c2) / (n + n_after)
        if pooled * min(n, n_after) < min_expected:
            continue
        p1 = c1 / n
        p2 = c2 / n_after
        se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n + 1.0 / n_after))
        checks.append(BandCheck(f"shape[{key}]", p1, p2, se, band))
        chi2 += (p1 - p2) ** 2 / max(pooled, 1e-300)
        bins += 1
    return PruneInvarianceReport(n, n_after, checks, chi2, bins, band)


# ---------------------------------------------------------------------------
# Side-branch law checks
# ---------------------------------------------------------------------------


@dataclass
class SideBranchReport:
    checks: list
    skipped_orders: list
    band: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def side_branch_test(trees, params: ProcessParams, band: float = 4.0, min_branches: int = 30) -> SideBranchReport:
    """Check the per-branch side-branching laws of the branching process.

    Per branch order j with enough branches: the total side count against its
    geometric mean, each per-order count against its Tokunaga coefficient,
    placement uniformity (mean normalized slot of each side order), and edge
    lengths against their exponential rate (first and second moments).
    """
    consts = kernel_constants(params)
    acc_m = Accumulator()
    acc_mi = Accumulator()
    acc_pos = Accumulator()
    acc_len = Accumulator()
    for t in trees:
        d = branch_decompose(t)
        for b in d.branches:
            j = b.order
            acc_m.add(("m", j), b.m)
            counts = {}
            for o, pos in b.side_branches:
                counts[o] = counts.get(o, 0) + 1
                acc_pos.add(("pos", j, o), pos / (b.m + 1.0))
            for i in range(1, j):
                acc_mi.add(("mi", j, i), counts.get(i, 0))
            if b.lengths is not None:
                for le in b.lengths:
                    acc_len.add(("len", j), le)
    checks = []
    skipped = []
    orders_seen = sorted({k[1] for k in acc_m.keys()})
    for j in orders_seen:
        nb = acc_m.count(("m", j))
        if nb < min_branches:
            skipped.append(j)
            continue
        if j >= 2:
            target_m = float(consts.cumT[j - 1])
            checks.append(BandCheck(f"mean_m[j={j}]", acc_m.mean(("m", j)), target_m, acc_m.se_mean(("m", j)), band))
            for i in range(1, j):
                key = ("mi", j, i)
                checks.append(
                    BandCheck(f"mean_m_{i}[j={j}]", acc_mi.mean(key), float(consts.T[j - i]), acc_mi.se_mean(key), band)
                )
                pkey = ("pos", j, i)
                if acc_pos.count(pkey) >= min_branches:
                    checks.append(BandCheck(f"placement[j={j},i={i}]", acc_pos.mean(pkey), 0.5, acc_pos.se_mean(pkey), band))
        lkey = ("len", j)
        ne = acc_len.count(lkey)
        if ne >= min_branches:
            rate = 1.0 / consts.inv_edge_rate[j]
            checks.append(BandCheck(f"edge_mean[j={j}]", acc_len.mean(lkey), 1.0 / rate, acc_len.se_mean(lkey), band))
            m2 = acc_len.sum_sq(lkey) / ne
            # Var(X^2) = 20 / rate^4 for an exponential
            se_m2 = math.sqrt(20.0 / rate**4 / ne)
            checks.append(BandCheck(f"edge_m2[j={j}]", m2, 2.0 / rate**2, se_m2, band))
    return SideBranchReport(checks, skipped, band)


# ---------------------------------------------------------------------------
# Principal subtrees
# ---------------------------------------------------------------------------


@dataclass
class PrincipalSubtreeStats:
    n_pairs: int
    joint: dict  # (K_a, K_b) -> count
    marginal_a: dict

    def joint_p(self, a: int, b: int) -> float:
        return self.joint.get((a, b), 0) / self.n_pairs

    def marginal_p(self, a: int) -> float:
        return self.marginal_a.get(a, 0) / self.n_pairs


def principal_subtree_stats(trees, rng) -> PrincipalSubtreeStats:
    """Orders (K_a, K_b) of the two principal subtrees, uniformly permuted.

    The principal subtrees hang from the internal vertex closest to the root;
    trees of order 1 are skipped.
    """
    joint = {}
    marg = {}
    n_pairs = 0
    for t in trees:
        o = horton_orders(t)
        if o.tree_order < 2:
            continue
        v = t.root_child
        a = int(o.order[int(t.left[v])])
        b = int(o.order[int(t.right[v])])
        if rng.random() < 0.5:
            a, b = b, a
        joint[(a, b)] = joint.get((a, b), 0) + 1
        marg[a] = marg.get(a, 0) + 1
        n_pairs += 1
    if n_pairs == 0:
        raise ParameterError("no trees of order above 1 in the sample")
    return PrincipalSubtreeStats(n_pairs, joint, marg)


def principal_pair_theory(params: ProcessParams, a: int, b: int, kmax: int = 80) -> float:
    """P(K_a = a, K_b = b | K > 1) for the process, from the split law
    composed with the order distribution."""
    consts = kernel_constants(params, max(a, b, kmax))
    od = params.order_dist
    p1 = od.pmf(1)
    out = 0.0
    j, m = min(a, b), max(a, b)
    for k in range(2, consts.jmax + 1):
        pk = od.pmf(k) / (1.0 - p1)
        if pk == 0.0:
            continue
        denom = 1.0 + consts.cumT[k - 1]
        if j == m == k - 1:
            cond = 1.0 / denom
        elif m == k and j < k:
            cond = consts.T[k - j] / denom
        else:
            cond = 0.0
        out += pk * cond
    return out if a == b else out / 2.0


# ---------------------------------------------------------------------------
# Vertex orders and uniform points
# ---------------------------------------------------------------------------


@dataclass
class VertexFrequencyReport:
    K: int
    n_trees: int
    v_totals: np.ndarray
    ratios: np.ndarray  # V_k / V_1 (ratio of sums)
    ratio_se: np.ndarray
    order_freq: np.ndarray  # P(random non-root vertex has order k)
    order_freq_se: np.ndarray


def vertex_order_frequencies(trees, K: int | None = None) -> VertexFrequencyReport:
    """Vertex-order frequency ratios for an order-K sample.

    Asserts the exact per-tree identity V = 2 V_1 - 1 while accumulating.
    """
    trees = list(trees)
    if not trees:
        raise ParameterError("empty sample")
    first = horton_orders(trees[0]).tree_order
    K = first if K is None else K
    dim = K + 1
    tot = np.zeros(dim)
    tot2 = np.zeros(dim)
    cross1 = np.zeros(dim)  # sum of V_k * V_1
    totv = 0.0
    totv2 = 0.0
    cross_tot = np.zeros(dim)  # sum of V_k * V
    n = 0
    for t in trees:
        o = horton_orders(t)
        if o.tree_order != K:
            raise ParameterError("vertex_order_frequencies requires a fixed-order sample")
        v = np.zeros(dim)
        counts = np.bincount(o.order[1:], minlength=dim)
        v[: counts.shape[0]] = counts[:dim]
        total = v.sum()
        if int(total) != 2 * int(v[1]) - 1:
            raise TreeInvalidError("violated identity V = 2 V_1 - 1")
        tot += v
        tot2 += v * v
        cross1 += v * v[1]
        totv += total
        totv2 += total * total
        cross_tot += v * total
        n += 1
    ratios = tot / tot[1]
    ratio_se = np.array(
        [_ratio_se(tot[k], tot[1], tot2[k], cross1[k], tot2[1]) for k in range(dim)]
    )
    freq = tot / totv
    freq_se = np.array(
        [_ratio_se(tot[k], totv, tot2[k], cross_tot[k], totv2) for k in range(dim)]
    )
    return VertexFrequencyReport(K, n, tot, ratios, ratio_se, freq, freq_se)


def uniform_point_order(tree: Tree, rng) -> int:
    """Order of the edge containing a uniform random point of the metric tree
    (edges weighted by length, position uniform within the edge)."""
    if not tree.has_lengths:
        raise TreeInvalidError("uniform_point_order requires edge lengths")
    if tree.is_empty:
        raise TreeInvalidError("the empty tree has no points")
    lens = np.array([tree.edge_length(v) for v in range(1, tree.n_nodes)])
    total = float(lens.sum())
    if total <= 0:
        raise TreeInvalidError("zero total length")
    cum = np.cumsum(lens)
    u = rng.random() * total
    v = 1 + int(np.searchsorted(cum, u, side="right"))
    v = min(v, tree.n_nodes - 1)
    orders = horton_orders(tree)
    return int(orders.order[v])


def uniform_complete_subtree(tree: Tree, K: int, rng) -> Tree:
    """A uniformly chosen complete subtree of order K."""
    subs = extract_complete_subtrees(tree, K)
    if not subs:
        raise ParameterError(f"the tree has no complete subtrees of order {K}")
    return subs[int(rng.random() * len(subs)) % len(subs)]


# ---------------------------------------------------------------------------
# Width function
# ---------------------------------------------------------------------------


@dataclass
class WidthEstimate:
    s_grid: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n: int


def _tree_alive_counts(tree: Tree, s_grid) -> np.ndarray:
    """Branches alive at each depth s: intervals [birth, birth + length)."""
    d = branch_decompose(tree)
    depth = np.zeros(tree.n_nodes)
    order = [0]
    for v in order:
        for c in (int(tree.left[v]), int(tree.right[v])):
            if c != -1:
                depth[c] = depth[v] + tree.edge_length(c)
                order.append(c)
    out = np.zeros(len(s_grid), dtype=np.int64)
    for b in d.branches:
        top = b.edges[0]
        birth = depth[int(tree.parent[top])]
        death = birth + b.total_length()
        for k, s in enumerate(s_grid):
            if birth <= s < death:
                out[k] += 1
    return out


def empirical_width(sample, s_grid) -> WidthEstimate:
    """Monte Carlo width function: the average number of branches alive at
    each s over a sample of trees or event logs (half-open intervals, so the
    estimate at s=0 is exactly 1)."""
    s_grid = np.asarray(s_grid, dtype=np.float64)
    if s_grid.size == 0:
        raise ParameterError("empty grid")
    rows = []
    for item in sample:
        if isinstance(item, EventLog):
            counts = np.array(
                [int(np.count_nonzero((item.birth <= s) & (s < item.death))) for s in s_grid]
            )
        else:
            counts = _tree_alive_counts(item, s_grid)
        rows.append(counts)
    if not rows:
        raise ParameterError("empty sample")
    mat = np.vstack(rows).astype(np.float64)
    n = mat.shape[0]
    mean = mat.mean(axis=0)
    se = mat.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return WidthEstimate(s_grid, mean, se, n)


# ---------------------------------------------------------------------------
# Campaign drivers
# ---------------------------------------------------------------------------


@dataclass
class HbpCampaignResult:
    """Streamed branch statistics of an unconditioned process sample.

    Orders are drawn for every trajectory; per-branch statistics stream only
    for trees of order <= body_cap (the ratio-of-sums estimators stay
    consistent under any order conditioning because the side-branch laws are
    coordinated across orders).
    """

    n: int
    body_cap: int
    orders: np.ndarray
    built: np.ndarray
    nj_sum: np.ndarray
    nij_sum: np.ndarray
    nij_sq: np.ndarray
    nij_cross: np.ndarray
    nj_sq: np.ndarray
    edge_by_order: np.ndarray  # (cap+1, 3): count, sum, sumsq
    edge_tree_moments: np.ndarray  # scalars: [n_built, Scnt, Ssum, Scnt2, Ssum2, Scnt*Ssum]
    vcounts: np.ndarray
    n1n2: np.ndarray  # per-tree (N_1, N_2) for built trees, -1 otherwise

    def tokunaga_check(self, i: int, j: int):
        t = self.nij_sum[i, j] / self.nj_sum[j]
        se = _ratio_se(self.nij_sum[i, j], self.nj_sum[j], self.nij_sq[i, j], self.nij_cross[i, j], self.nj_sq[j])
        return t, se

    def pooled_edge_mean(self):
        _, scnt, ssum, scnt2, ssum2, scs = self.edge_tree_moments
        mean = ssum / scnt
        se = _ratio_se(ssum, scnt, ssum2, scs, scnt2)
        return mean, se


def _campaign_chunks(n: int, chunk: int = 4096):
    return [(i, min(i + chunk, n)) for i in range(0, n, chunk)]


def _hbp_stats_chunk(args):
    (params, seed, lo, hi, body_cap) = args
    consts = kernel_constants(params, max(body_cap, 1))
    dim = body_cap + 1
    orders = np.zeros(hi - lo, dtype=np.int64)
    built = np.zeros(hi - lo, dtype=bool)
    nj_sum = np.zeros(dim)
    nij_sum = np.zeros((dim, dim))
    nij_sq = np.zeros((dim, dim))
    nij_cross = np.zeros((dim, dim))
    nj_sq = np.zeros(dim)
    edge_by_order = np.zeros((dim, 3))
    edge_tree = np.zeros(6)
    vcounts = np.zeros(dim, dtype=np.int64)
    n1n2 = np.full((hi - lo, 2), -1, dtype=np.int64)
    nj_buf = np.zeros(dim, dtype=np.int64)
    nij_buf = np.zeros((dim, dim), dtype=np.int64)
    edge_buf = np.zeros((dim, 3))
    v_buf = np.zeros(dim, dtype=np.int64)
    for i in range(lo, hi):
        rg = trajectory_rng(seed, i)
        K = draw_order(rg, params)
        orders[i - lo] = K
        if K > body_cap:
            continue
        built[i - lo] = True
        nj_buf.fill(0)
        nij_buf.fill(0)
        edge_buf.fill(0.0)
        v_buf.fill(0)
        _kern.hbp_tree_stats(
            rg.bit_generator, K, consts.T, consts.cumT, consts.log1mq,
            consts.inv_edge_rate, body_cap, nj_buf, nij_buf, edge_buf, v_buf,
            2_000_000_000,
        )
        a = nij_buf.astype(np.float64)
        b = nj_buf.astype(np.float64)
        nj_sum += b
        nij_sum += a
        nij_sq += a * a
        nij_cross += a * b[np.newaxis, :]
        nj_sq += b * b
        edge_by_order += edge_buf
        cnt = float(edge_buf[:, 0].sum())
        s = float(edge_buf[:, 1].sum())
        edge_tree += (1.0, cnt, s, cnt * cnt, s * s, cnt * s)
        vcounts += v_buf
        n1n2[i - lo, 0] = nj_buf[1]
        n1n2[i - lo, 1] = nj_buf[2] if dim > 2 else 0
    return (orders, built, nj_sum, nij_sum, nij_sq, nij_cross, nj_sq,
            edge_by_order, edge_tree, vcounts, n1n2)


def _run_chunked(worker_fn, arg_list, workers: int):
    if workers <= 1:
        return [worker_fn(a) for a in arg_list]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(workers) as pool:
        return pool.map(worker_fn, arg_list)


def hbp_statistics_campaign(
    params: ProcessParams, n: int, seed: int, body_cap: int = 12, workers: int = 1
) -> HbpCampaignResult:
    """Unconditioned process sample with streamed branch statistics."""
    args = [(params, seed, lo, hi, body_cap) for lo, hi in _campaign_chunks(n)]
    parts = _run_chunked(_hbp_stats_chunk, args, workers)
    dim = body_cap + 1
    orders = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    built = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, dtype=bool)
    nj_sum = np.zeros(dim)
    nij_sum = np.zeros((dim, dim))
    nij_sq = np.zeros((dim, dim))
    nij_cross = np.zeros((dim, dim))
    nj_sq = np.zeros(dim)
    edge_by_order = np.zeros((dim, 3))
    edge_tree = np.zeros(6)
    vcounts = np.zeros(dim, dtype=np.int64)
    for p in parts:
        nj_sum += p[2]
        nij_sum += p[3]
        nij_sq += p[4]
        nij_cross += p[5]
        nj_sq += p[6]
        edge_by_order += p[7]
        edge_tree += p[8]
        vcounts += p[9]
    n1n2 = np.concatenate([p[10] for p in parts]) if parts else np.zeros((0, 2), dtype=np.int64)
    return HbpCampaignResult(
        n, body_cap, orders, built, nj_sum, nij_sum, nij_sq, nij_cross, nj_sq,
        edge_by_order, edge_tree, vcounts, n1n2,
    )


def _width_chunk(args):
    (params, seed, lo, hi, s_points, horizon, domain) = args
    consts = kernel_constants(params)
    s_arr = np.asarray(s_points, dtype=np.float64)
    dim = params.max_order_cap + 1
    alive = np.zeros((hi - lo, s_arr.shape[0]), dtype=np.int64)
    orders = np.zeros(hi - lo, dtype=np.int64)
    nj_buf = np.zeros(dim, dtype=np.int64)
    alive_buf = np.zeros(s_arr.shape[0], dtype=np.int64)
    for i in range(lo, hi):
        rg = trajectory_rng(seed, i, domain)
        K = draw_order(rg, params)
        orders[i - lo] = K
        nj_buf.fill(0)
        alive_buf.fill(0)
        _kern.hbp_events_stats(
            rg.bit_generator, K, consts.T, consts.cumT, consts.inv_term_rate,
            consts.inv_side_rate, s_arr, horizon, params.max_order_cap,
            nj_buf, alive_buf, 100_000_000,
        )
        alive[i - lo] = alive_buf
    return orders, alive


def width_event_campaign(
    params: ProcessParams, n: int, seed: int, s_points, horizon: float, workers: int = 1, domain: int = 0
) -> WidthEstimate:
    """Monte Carlo width function via horizon-truncated event simulation.

    Branches born after the horizon cannot be alive at any s <= horizon, so
    the truncation is exact for the requested grid.
    """
    s_arr = np.asarray(s_points, dtype=np.float64)
    if s_arr.size and s_arr.max() > horizon:
        raise ParameterError("the horizon must cover the evaluation grid")
    args = [(params, seed, lo, hi, s_arr, horizon, domain) for lo, hi in _campaign_chunks(n)]
    parts = _run_chunked(_width_chunk, args, workers)
    mat = np.concatenate([p[1] for p in parts]).astype(np.float64)
    mean = mat.mean(axis=0)
    se = mat.std(axis=0, ddof=1) / math.sqrt(mat.shape[0])
    return WidthEstimate(s_arr, mean, se, n)


def _events_census_chunk(args):
    (params, seed, lo, hi, domain) = args
    consts = kernel_constants(params)
    dim = params.max_order_cap + 1
    rows = np.zeros((hi - lo, 3), dtype=np.int64)
    nj_buf = np.zeros(dim, dtype=np.int64)
    alive_buf = np.zeros(0, dtype=np.int64)
    s_arr = np.zeros(0)
    for i in range(lo, hi):
        rg = trajectory_rng(seed, i, domain)
        K = draw_order(rg, params)
        nj_buf.fill(0)
        _kern.hbp_events_stats(
            rg.bit_generator, K, consts.T, consts.cumT, consts.inv_term_rate,
            consts.inv_side_rate, s_arr, math.inf, params.max_order_cap,
            nj_buf, alive_buf, 100_000_000,
        )
        rows[i - lo] = (K, nj_buf[1], nj_buf[2] if dim > 2 else 0)
    return rows


def cross_sampler_campaign(params: ProcessParams, n: int, seed: int, body_cap: int, workers: int = 1):
    """(order, N_1, N_2) rows from the direct and the event-driven sampler.

    The two samplers run on disjoint stream domains of the same master seed;
    their agreement is the module's core distributional oracle.
    """
    direct = hbp_statistics_campaign(params, n, seed, body_cap, workers)
    if not direct.built.all():
        raise ParameterError("cross_sampler_campaign requires body_cap above every drawn order")
    rows_direct = np.column_stack([direct.orders, direct.n1n2])
    args = [(params, seed, lo, hi, 1) for lo, hi in _campaign_chunks(n)]
    parts = _run_chunked(_events_census_chunk, args, workers)
    rows_events = np.concatenate(parts)
    return rows_direct, rows_events


@dataclass
class ExcursionCampaignResult:
    n_requested: int
    n_sampled: int
    n_capped: int
    rise_moments: np.ndarray  # [count, sum, sumsq]
    fall_moments: np.ndarray  # excluding each excursion's final fall
    nj_sum: np.ndarray
    nij_sum: np.ndarray
    nij_sq: np.ndarray
    nij_cross: np.ndarray
    nj_sq: np.ndarray
    blen_by_order: np.ndarray  # (jcap+1, 3) per-branch total-length moments
    order_counts: np.ndarray

    def p0_estimate(self):
        """Termination probability from rise/fall rates: p0 = mf / (mr + mf)."""
        nr, sr, sr2 = self.rise_moments
        nf, sf, sf2 = self.fall_moments
        mr, mf = sr / nr, sf / nf
        p0 = mf / (mr + mf)
        # delta method on (mr, mf)
        vr = max(sr2 / nr - mr * mr, 0.0) / nr
        vf = max(sf2 / nf - mf * mf, 0.0) / nf
        d_mr = -mf / (mr + mf) ** 2
        d_mf = mr / (mr + mf) ** 2
        se = math.sqrt(d_mr * d_mr * vr + d_mf * d_mf * vf)
        return p0, se

    def branch_length_check(self, j: int):
        n, s, ss = self.blen_by_order[j]
        mean = s / n
        se = math.sqrt(max(ss / n - mean * mean, 0.0) / n)
        return mean, se

    def tokunaga_check(self, i: int, j: int):
        t = self.nij_sum[i, j] / self.nj_sum[j]
        se = _ratio_se(self.nij_sum[i, j], self.nj_sum[j], self.nij_sq[i, j], self.nij_cross[i, j], self.nj_sq[j])
        return t, se


def _excursion_chunk(args):
    (walk, seed, lo, hi, step_cap, jcap, domain) = args
    dim = jcap + 1
    rise = np.zeros(3)
    fall = np.zeros(3)
    nj_sum = np.zeros(dim)
    nij_sum = np.zeros((dim, dim))
    nij_sq = np.zeros((dim, dim))
    nij_cross = np.zeros((dim, dim))
    nj_sq = np.zeros(dim)
    blen = np.zeros((dim, 3))
    order_counts = np.zeros(dim, dtype=np.int64)
    capped = 0
    sampled = 0
    nj_buf = np.zeros(dim, dtype=np.int64)
    nij_buf = np.zeros((dim, dim), dtype=np.int64)
    edge_buf = np.zeros((dim, 3))
    v_buf = np.zeros(dim, dtype=np.int64)
    blen_buf = np.zeros((dim, 3))
    for i in range(lo, hi):
        rg = trajectory_rng(seed, i, domain)
        ext = _kern.first_return_excursion(rg.bit_generator, walk.rho, walk.lam_u, walk.lam_d, step_cap)
        if ext is None:
            capped += 1
            continue
        sampled += 1
        diffs = np.diff(ext)
        rises = diffs[0::2]
        falls = -diffs[1::2]
        rise += (rises.shape[0], float(rises.sum()), float((rises * rises).sum()))
        ff = falls[:-1]
        fall += (ff.shape[0], float(ff.sum()), float((ff * ff).sum()))
        maxima = ext[1::2]
        minima = ext[2:-1:2]
        parent, left, right, lens = _kern.build_level_tree(maxima, minima, 0.0)
        nj_buf.fill(0)
        nij_buf.fill(0)
        edge_buf.fill(0.0)
        v_buf.fill(0)
        blen_buf.fill(0.0)
        K = _kern.tree_branch_stats(parent, left, right, lens, jcap, nj_buf, nij_buf, edge_buf, v_buf, blen_buf)
        order_counts[min(K, jcap)] += 1
        a = nij_buf.astype(np.float64)
        b = nj_buf.astype(np.float64)
        nj_sum += b
        nij_sum += a
        nij_sq += a * a
        nij_cross += a * b[np.newaxis, :]
        nj_sq += b * b
        blen += blen_buf
    return (rise, fall, nj_sum, nij_sum, nij_sq, nij_cross, nj_sq, blen, order_counts, capped, sampled)


def excursion_campaign(
    walk: WalkParams, n: int, seed: int, step_cap: int = 1 << 22, jcap: int = 8, workers: int = 1, domain: int = 0
) -> ExcursionCampaignResult:
    """First-return excursions of an exponential walk, reduced to rise/fall
    moments and level-set-tree branch statistics.

    Excursion lengths are heavy-tailed (index 1/2), so draws exceeding
    ``step_cap`` steps are dropped and counted; the induced conditioning
    bias is far below the statistical bands at the default cap.
    """
    args = [(walk, seed, lo, hi, step_cap, jcap, domain) for lo, hi in _campaign_chunks(n, 2048)]
    parts = _run_chunked(_excursion_chunk, args, workers)
    dim = jcap + 1
    out = ExcursionCampaignResult(
        n, 0, 0, np.zeros(3), np.zeros(3), np.zeros(dim), np.zeros((dim, dim)),
        np.zeros((dim, dim)), np.zeros((dim, dim)), np.zeros(dim), np.zeros((dim, 3)),
        np.zeros(dim, dtype=np.int64),
    )
    for p in parts:
        out.rise_moments += p[0]
        out.fall_moments += p[1]
        out.nj_sum += p[2]
        out.nij_sum += p[3]
        out.nij_sq += p[4]
        out.nij_cross += p[5]
        out.nj_sq += p[6]
        out.blen_by_order += p[7]
        out.order_counts += p[8]
        out.n_capped += p[9]
        out.n_sampled += p[10]
    return out


def walk_forest_tokunaga(walk: WalkParams, n_walks: int, steps: int, seed: int, jcap: int = 8, domain: int = 0):
    """Pooled Tokunaga statistics of the level-set forest of long walks.

    Each walk is one replicate: its complete excursions' level-set trees are
    pooled, and the coefficient T_{i,j} is the ratio of pooled counts with a
    cluster (per-walk) standard error.
    """
    from .samplers import sample_exp_walk
    from .transforms import extract_excursions

    dim = jcap + 1
    per_walk_a = np.zeros((n_walks, dim, dim))
    per_walk_b = np.zeros((n_walks, dim))
    nj_buf = np.zeros(dim, dtype=np.int64)
    nij_buf = np.zeros((dim, dim), dtype=np.int64)
    edge_buf = np.zeros((dim, 3))
    v_buf = np.zeros(dim, dtype=np.int64)
    blen_buf = np.zeros((dim, 3))
    for w in range(n_walks):
        rg = trajectory_rng(seed, w, domain)
        series = sample_exp_walk(walk, steps, rg)
        for exc in extract_excursions(series):
            ext, _ = _extrema_of_excursion(exc)
            if ext.shape[0] < 3:
                continue
            maxima = ext[1::2]
            minima = ext[2:-1:2]
            parent, left, right, lens = _kern.build_level_tree(maxima, minima, 0.0)
            nj_buf.fill(0)
            nij_buf.fill(0)
            edge_buf.fill(0.0)
            v_buf.fill(0)
            blen_buf.fill(0.0)
            _kern.tree_branch_stats(parent, left, right, lens, jcap, nj_buf, nij_buf, edge_buf, v_buf, blen_buf)
            per_walk_a[w] += nij_buf
            per_walk_b[w] += nj_buf
    return per_walk_a, per_walk_b


def _extrema_of_excursion(exc):
    from .transforms import extrema_sequence

    return extrema_sequence(exc.values)


def forest_tokunaga_check(per_walk_a, per_walk_b, i: int, j: int):
    """Ratio-of-sums T_{i,j} with a per-walk cluster SE."""
    a = per_walk_a[:, i, j]
    b = per_walk_b[:, j]
    sum_a, sum_b = float(a.sum()), float(b.sum())
    t = sum_a / sum_b
    resid = a - t * b
    se = math.sqrt(float((resid * resid).sum())) / sum_b
    return t, se


def principal_order_campaign(params: ProcessParams, n: int, seed: int):
    """(K, K_a, K_b) rows via the one-vertex decomposition of the process.

    The split at the internal vertex closest to the root is determined by the
    root branch's first draw: with probability 1/(1 + sum T) the branch has
    no side branches and splits into two order-(K-1) subtrees; otherwise the
    first side branch (Tokunaga-weighted order) meets the continuing branch
    of order K.  This reproduces the full sampler's principal-pair law
    exactly while doing O(1) work per tree.
    """
    consts = kernel_constants(params)
    rows = np.zeros((n, 3), dtype=np.int64)
    for i in range(n):
        rg = trajectory_rng(seed, i)
        K = draw_order(rg, params)
        rows[i, 0] = K
        if K < 2:
            rows[i, 1:] = 0
            continue
        s = consts.cumT[K - 1]
        m = 0
        if s > 0.0:
            u = rg.random()
            m = int(math.log1p(-u) / consts.log1mq[K])
        if m == 0:
            a = b = K - 1
        else:
            u = rg.random()
            target = u * s
            acc = 0.0
            o = 1
            for d in range(1, K):
                acc += consts.T[d]
                if target < acc:
                    o = K - d
                    break
            a, b = o, K
        if rg.random() < 0.5:
            a, b = b, a
        rows[i, 1] = a
        rows[i, 2] = b
    return rows


def sample_conditioned_trees(params: ProcessParams, K: int, n: int, seed: int, max_draws: int | None = None):
    """Rejection sampling of trees conditioned on order K.

    The order is drawn first, so rejected trajectories cost one uniform; the
    expected number of draws per accepted tree is 1/p_K (slow for large K).
    """
    out = []
    draws = 0
    cap = max_draws if max_draws is not None else max(100 * n * int(1.0 / max(params.order_dist.pmf(K), 1e-12)), 1000)
    i = 0
    while len(out) < n and draws < cap:
        rg = trajectory_rng(seed, i)
        i += 1
        draws += 1
        if params.order_dist.draw(rg.random()) != K:
            continue
        consts = kernel_constants(params)
        parent, left, right, lens = _kern.build_hbp_tree(
            rg.bit_generator, K, consts.T, consts.cumT, consts.log1mq, consts.inv_edge_rate, 200_000_000
        )
        out.append(Tree(parent, left, right, lens))
    if len(out) < n:
        raise ParameterError(f"rejection sampling exhausted {draws} draws for order {K}")
    return out
