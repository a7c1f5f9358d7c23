"""Random tree and walk generators.

The central model is the hierarchical branching process: a tree of order K
(drawn from an order distribution) is grown branch by branch, each order-j
branch carrying a geometric number of lower-order side branches, multinomial
side orders placed by a uniform permutation, and i.i.d. exponential edge
lengths.  The process has an equivalent continuous-time description in which
branches terminate at rate lambda_j and shed order-i side branches at rate
lambda_j * T_{j-i}; both samplers are provided and are used as each other's
statistical oracle.

Also here: binary Galton-Watson shapes, exponential Galton-Watson trees,
the recursive random-attachment construction, and exponential random walks.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import active as _kern
from .errors import OrderCapError, ParameterError
from .rng import trajectory_rng
from .trees import Tree

__all__ = [
    "TokunagaRule",
    "RatesRule",
    "OrderDistribution",
    "ProcessParams",
    "SelfSimilarParams",
    "CriticalTokunagaParams",
    "WalkParams",
    "EventLog",
    "TimeSeries",
    "kernel_constants",
    "draw_order",
    "sample_hbp",
    "sample_hbp_events",
    "sample_gw_shape",
    "sample_exp_gw",
    "sample_random_attachment",
    "sample_exp_walk",
]

DEFAULT_NODE_BUDGET = 200_000_000


def as_generator(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return trajectory_rng(int(seed_or_rng), 0)


# ---------------------------------------------------------------------------
# Parameter rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TokunagaRule:
    """Tokunaga coefficients T_k: an explicit head plus a zero or geometric
    tail (T_k = a * c**(k-1) beyond the explicit values)."""

    values: tuple = ()
    tail_a: float = 0.0
    tail_c: float = 1.0

    @classmethod
    def explicit(cls, values) -> "TokunagaRule":
        return cls(tuple(float(v) for v in values))

    @classmethod
    def geometric(cls, a: float, c: float) -> "TokunagaRule":
        return cls((), float(a), float(c))

    @classmethod
    def critical(cls, c: float) -> "TokunagaRule":
        """T_k = (c - 1) * c**(k-1), the critical Tokunaga family."""
        return cls((), float(c) - 1.0, float(c))

    def coefficient(self, k: int) -> float:
        if k < 1:
            raise ParameterError("Tokunaga indices start at 1")
        if k <= len(self.values):
            return float(self.values[k - 1])
        return self.tail_a * self.tail_c ** (k - 1)

    def sequence(self, kmax: int) -> np.ndarray:
        out = np.zeros(kmax + 1)
        for k in range(1, kmax + 1):
            out[k] = self.coefficient(k)
        return out

    @property
    def limsup_root(self) -> float:
        """L = limsup T_k**(1/k); analytic for both tail kinds."""
        return self.tail_c if self.tail_a > 0.0 else 0.0

    def validate(self):
        seq = [self.coefficient(k) for k in range(1, max(len(self.values), 2) + 1)]
        if any(t < 0 for t in seq) or self.tail_a < 0:
            raise ParameterError("Tokunaga coefficients must be nonnegative")
        if self.tail_a > 0 and self.tail_c <= 0:
            raise ParameterError("geometric tail requires c > 0")


@dataclass(frozen=True)
class RatesRule:
    """Termination rates lambda_j: explicit head plus geometric tail
    (lambda_j = coef * ratio**(j-1) beyond the explicit values)."""

    values: tuple = ()
    tail_coef: float = 1.0
    tail_ratio: float = 1.0

    @classmethod
    def explicit(cls, values, tail_coef=None, tail_ratio=1.0) -> "RatesRule":
        values = tuple(float(v) for v in values)
        if tail_coef is None:
            # extend by holding the last explicit value
            tail_coef = values[-1] / tail_ratio ** (len(values) - 1) if values else 1.0
        return cls(values, float(tail_coef), float(tail_ratio))

    @classmethod
    def geometric(cls, coef: float, ratio: float) -> "RatesRule":
        return cls((), float(coef), float(ratio))

    @classmethod
    def constant(cls, value: float) -> "RatesRule":
        return cls((), float(value), 1.0)

    def rate(self, j: int) -> float:
        if j < 1:
            raise ParameterError("rate indices start at 1")
        if j <= len(self.values):
            return float(self.values[j - 1])
        return self.tail_coef * self.tail_ratio ** (j - 1)

    def sequence(self, jmax: int) -> np.ndarray:
        out = np.zeros(jmax + 1)
        for j in range(1, jmax + 1):
            out[j] = self.rate(j)
        return out

    def validate(self, jmax: int = 8):
        if any(self.rate(j) <= 0 for j in range(1, jmax + 1)):
            raise ParameterError("termination rates must be strictly positive")


@dataclass(frozen=True)
class OrderDistribution:
    """Root-order distribution p_K: explicit list or geometric
    p_K = p (1-p)**(K-1)."""

    probs: tuple | None = None
    p_geom: float | None = None

    _SUM_TOL = 1e-9

    @classmethod
    def geometric(cls, p: float) -> "OrderDistribution":
        if not 0.0 < p <= 1.0:
            raise ParameterError("geometric order parameter must be in (0, 1]")
        return cls(None, float(p))

    @classmethod
    def explicit(cls, probs) -> "OrderDistribution":
        probs = tuple(float(x) for x in probs)
        if any(x < 0 for x in probs):
            raise ParameterError("order probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > cls._SUM_TOL:
            raise ParameterError("explicit order probabilities must sum to 1")
        return cls(probs, None)

    def pmf(self, K: int) -> float:
        if K < 1:
            return 0.0
        if self.probs is not None:
            return self.probs[K - 1] if K <= len(self.probs) else 0.0
        p = self.p_geom
        return p * (1.0 - p) ** (K - 1)

    def draw(self, u: float) -> int:
        """Inversion from one uniform (the shared draw protocol)."""
        if self.probs is not None:
            acc = 0.0
            for i, q in enumerate(self.probs):
                acc += q
                if u < acc:
                    return i + 1
            return len(self.probs)
        p = self.p_geom
        if p >= 1.0:
            return 1
        return 1 + int(math.log1p(-u) / math.log1p(-p))


# ---------------------------------------------------------------------------
# Process parameter bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProcessParams:
    """The hierarchical branching process triplet ({T_k}, {lambda_j}, {p_K})."""

    tokunaga: TokunagaRule
    rates: RatesRule
    order_dist: OrderDistribution
    max_order_cap: int = 64

    def __post_init__(self):
        self.tokunaga.validate()
        self.rates.validate()
        if self.max_order_cap < 1:
            raise ParameterError("max_order_cap must be at least 1")


@dataclass(frozen=True)
class SelfSimilarParams:
    """Self-similar process: p_K geometric(p), lambda_j = gamma * zeta**(-j).

    The scaling exponent must dominate the Tokunaga growth rate,
    zeta >= max(1, L); pass ``unchecked=True`` to bypass (the hydrodynamic
    guarantees then no longer apply).
    """

    p: float
    gamma: float
    zeta: float
    tokunaga: TokunagaRule
    unchecked: bool = False

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ParameterError("p must lie in (0, 1)")
        if self.gamma <= 0 or self.zeta <= 0:
            raise ParameterError("gamma and zeta must be positive")
        L = self.tokunaga.limsup_root
        if not self.unchecked and self.zeta < max(1.0, L) - 1e-12:
            raise ParameterError(f"zeta must satisfy zeta >= max(1, L) = {max(1.0, L)}")

    def to_process(self, max_order_cap: int = 64) -> ProcessParams:
        return ProcessParams(
            self.tokunaga,
            RatesRule.geometric(self.gamma / self.zeta, 1.0 / self.zeta),
            OrderDistribution.geometric(self.p),
            max_order_cap,
        )


@dataclass(frozen=True)
class CriticalTokunagaParams:
    """The critical Tokunaga family: lambda_j = gamma c**(2-j), p_K = 2**-K,
    T_k = (c-1) c**(k-1)."""

    c: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.c < 1.0:
            raise ParameterError("c must be at least 1")
        if self.gamma <= 0:
            raise ParameterError("gamma must be positive")

    def to_process(self, max_order_cap: int = 64) -> ProcessParams:
        return ProcessParams(
            TokunagaRule.critical(self.c),
            RatesRule.geometric(self.gamma * self.c, 1.0 / self.c),
            OrderDistribution.geometric(0.5),
            max_order_cap,
        )


@dataclass(frozen=True)
class WalkParams:
    """Exponential random walk triplet {rho, lambda_u, lambda_d}."""

    rho: float
    lam_u: float
    lam_d: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterError("rho must lie in [0, 1]")
        if self.lam_u <= 0 or self.lam_d <= 0:
            raise ParameterError("jump rates must be positive")


@dataclass
class EventLog:
    """Per-branch birth/death records from the event-driven sampler."""

    order: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    parent: np.ndarray

    @property
    def n_branches(self) -> int:
        return int(self.order.shape[0])


@dataclass
class TimeSeries:
    """A finite real sequence; interpolation between indices is linear."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.shape[0] < 1:
            raise ParameterError("a time series needs at least one value")

    def __len__(self):
        return int(self.values.shape[0])


# ---------------------------------------------------------------------------
# Kernel constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelConstants:
    """Precomputed per-order tables shared by both kernel lanes.

    Sharing the tables (rather than recomputing per lane) keeps the lanes'
    floating-point behaviour identical.
    """

    jmax: int
    T: np.ndarray  # T[d], d = 1..jmax
    cumT: np.ndarray  # cumT[j] = T_1 + ... + T_j
    log1mq: np.ndarray  # log(1 - q_j), q_j = 1/(1 + cumT[j-1]); 0 where unused
    inv_edge_rate: np.ndarray  # 1 / (lambda_j * (1 + cumT[j-1]))
    inv_term_rate: np.ndarray  # 1 / lambda_j
    inv_side_rate: np.ndarray  # 1 / (lambda_j * cumT[j-1]); 0 where no sides


def kernel_constants(params: ProcessParams, jmax: int | None = None) -> KernelConstants:
    jmax = params.max_order_cap if jmax is None else int(jmax)
    T = params.tokunaga.sequence(jmax)
    lam = params.rates.sequence(jmax)
    cumT = np.zeros(jmax + 1)
    cumT[1:] = np.cumsum(T[1:])
    log1mq = np.zeros(jmax + 1)
    inv_edge = np.zeros(jmax + 1)
    inv_term = np.zeros(jmax + 1)
    inv_side = np.zeros(jmax + 1)
    for j in range(1, jmax + 1):
        s = cumT[j - 1]
        if s > 0.0:
            log1mq[j] = math.log(s) - math.log1p(s)
            inv_side[j] = 1.0 / (lam[j] * s)
        inv_edge[j] = 1.0 / (lam[j] * (1.0 + s))
        inv_term[j] = 1.0 / lam[j]
    return KernelConstants(jmax, T, cumT, log1mq, inv_edge, inv_term, inv_side)


def draw_order(rg: np.random.Generator, params: ProcessParams) -> int:
    """Draw the root order (one uniform); enforce the order cap."""
    K = params.order_dist.draw(rg.random())
    if K > params.max_order_cap:
        raise OrderCapError(
            f"drew order {K} above max_order_cap={params.max_order_cap}; "
            "raise the cap explicitly if this is intended"
        )
    return K


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def sample_hbp(params: ProcessParams, seed_or_rng, *, max_nodes: int = DEFAULT_NODE_BUDGET) -> Tree:
    """One hierarchical-branching-process tree with edge lengths, built by
    the direct (time-free) recursion."""
    rg = as_generator(seed_or_rng)
    K = draw_order(rg, params)
    c = kernel_constants(params)
    parent, left, right, lens = _kern.build_hbp_tree(
        rg.bit_generator, K, c.T, c.cumT, c.log1mq, c.inv_edge_rate, max_nodes
    )
    return Tree(parent, left, right, lens)


def sample_hbp_events(
    params: ProcessParams,
    seed_or_rng,
    *,
    horizon: float = math.inf,
    max_nodes: int = DEFAULT_NODE_BUDGET,
):
    """One tree from the continuous-time simulation, with its event log.

    With a finite ``horizon`` the simulation is truncated in process time:
    branches born after the horizon are not simulated (their alive intervals
    cannot intersect [0, horizon]).
    """
    rg = as_generator(seed_or_rng)
    K = draw_order(rg, params)
    c = kernel_constants(params)
    tree_arrays, log_arrays = _kern.build_hbp_events(
        rg.bit_generator, K, c.T, c.cumT, c.inv_term_rate, c.inv_side_rate, horizon, max_nodes
    )
    tree = Tree(*tree_arrays)
    log = EventLog(*log_arrays)
    return tree, log


def sample_gw_shape(p0: float, seed_or_rng, *, max_nodes: int | None = None) -> Tree:
    """A combinatorial binary Galton-Watson tree (planted root prepended).

    Each vertex independently terminates with probability ``p0`` or splits
    with probability ``1 - p0``; one uniform per vertex, depth-first.  For
    supercritical ``p0 < 1/2`` a node budget is mandatory.
    """
    if not 0.0 <= p0 <= 1.0:
        raise ParameterError("p0 must lie in [0, 1]")
    if p0 < 0.5 and max_nodes is None:
        raise ParameterError("p0 < 1/2 is supercritical: a max_nodes cap is required")
    budget = DEFAULT_NODE_BUDGET if max_nodes is None else int(max_nodes)
    rg = as_generator(seed_or_rng)
    parent = [-1, 0]
    left = [1, -1]
    right = [-1, -1]
    stack = [1]
    while stack:
        v = stack.pop()
        if rg.random() < p0:
            continue  # leaf
        if len(parent) + 2 > budget:
            raise OrderCapError(f"Galton-Watson tree exceeded max_nodes={budget}")
        a = len(parent)
        parent.append(v)
        left.append(-1)
        right.append(-1)
        b = len(parent)
        parent.append(v)
        left.append(-1)
        right.append(-1)
        left[v], right[v] = a, b
        stack.append(b)
        stack.append(a)
    return Tree(parent, left, right)


def sample_exp_gw(lam_prime: float, lam: float, seed_or_rng, *, max_nodes: int | None = None) -> Tree:
    """An exponential binary Galton-Watson tree GW(lambda', lambda):
    shape from p0 = (lambda + lambda')/(2 lambda), edges i.i.d. Exp(2 lambda)."""
    if not 0.0 <= lam_prime < lam:
        raise ParameterError("rates must satisfy 0 <= lambda' < lambda")
    rg = as_generator(seed_or_rng)
    p0 = (lam + lam_prime) / (2.0 * lam)
    t = sample_gw_shape(p0, rg, max_nodes=max_nodes)
    lens = np.empty(t.n_nodes)
    lens[0] = np.nan
    if t.n_nodes > 1:
        lens[1:] = rg.standard_exponential(t.n_nodes - 1) / (2.0 * lam)
    return Tree(t.parent, t.left, t.right, lens)


def sample_random_attachment(draw_count, K: int, seed_or_rng) -> Tree:
    """The recursive random-attachment construction of a mean self-similar
    tree of order ``K``.

    ``draw_count(k, K, rg)`` draws the side-branch count from the family
    member P_{k,K} (nonnegative integers with mean T_k).  Stage j doubles
    every leaf of the stage-(j-1) tree, then attaches the drawn number of
    order-1 side branches to every branch of order >= 2, positions
    multinomially uniform over the branch's edge slots (one uniform per
    attached vertex, in branch order).
    """
    if K < 1:
        raise ParameterError("the order K must be at least 1")
    rg = as_generator(seed_or_rng)
    children = [[1], []]  # children[v] in (left, right) slot order
    parent = [-1, 0]

    def add_node(p):
        idx = len(children)
        children.append([])
        parent.append(p)
        return idx

    for _stage in range(2, K + 1):
        n0 = len(children)
        for v in range(1, n0):
            if not children[v]:
                a = add_node(v)
                b = add_node(v)
                children[v] = [a, b]
        order = _orders_of_children(children, parent)
        for j, chain in _branches_of(children, parent, order):
            if j < 2:
                continue
            count = int(draw_count(j - 1, K, rg))
            if count < 0:
                raise ParameterError("side-branch counts must be nonnegative")
            slots = len(chain)  # the chain's m + 1 edges
            picks = sorted(int(rg.random() * slots) for _ in range(count))
            for s in picks:
                # split the parental edge of chain[s]: a new attachment
                # vertex takes its place and carries a new leaf
                vtop = chain[s]
                p = parent[vtop]
                mid = add_node(p)
                leafid = add_node(mid)
                children[mid] = [vtop, leafid]
                parent[vtop] = mid
                kids = children[p]
                kids[kids.index(vtop)] = mid
    n = len(children)
    parent_arr = np.full(n, -1, dtype=np.int64)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    for v, kids in enumerate(children):
        if len(kids) >= 1:
            left[v] = kids[0]
            parent_arr[kids[0]] = v
        if len(kids) == 2:
            right[v] = kids[1]
            parent_arr[kids[1]] = v
    return Tree(parent_arr, left, right)


def _orders_of_children(children, parent):
    n = len(children)
    order = [0] * n
    pending = [len(k) for k in children]
    queue = [v for v in range(1, n) if pending[v] == 0]
    head = 0
    while head < len(queue):
        v = queue[head]
        head += 1
        kids = children[v]
        if not kids:
            order[v] = 1
        else:
            a, b = order[kids[0]], order[kids[1]]
            order[v] = max(a, b) + (1 if a == b else 0)
        p = parent[v]
        pending[p] -= 1
        if pending[p] == 0 and p != 0:
            queue.append(p)
    order[0] = order[children[0][0]]
    return order


def _branches_of(children, parent, order):
    """(order, top-down vertex chain) for every branch, by initial vertex."""
    out = []
    for v in range(1, len(children)):
        p = parent[v]
        if p != 0 and order[p] == order[v]:
            continue
        j = order[v]
        chain = []
        cur = v
        while True:
            chain.append(cur)
            nxt = -1
            for k in children[cur]:
                if order[k] == j:
                    nxt = k
            if nxt == -1:
                break
            cur = nxt
        out.append((j, chain))
    return out


def sample_exp_walk(params: WalkParams, n: int, seed_or_rng) -> TimeSeries:
    """An exponential random walk of ``n`` increments starting at 0.

    Draw protocol: n uniforms (direction mix), then n standard exponentials
    (jump sizes).
    """
    if n < 1:
        raise ParameterError("n must be at least 1")
    rg = as_generator(seed_or_rng)
    us = rg.random(n)
    es = rg.standard_exponential(n)
    inc = np.where(us < params.rho, es / params.lam_u, -es / params.lam_d)
    values = np.empty(n + 1)
    values[0] = 0.0
    np.cumsum(inc, out=values[1:])
    return TimeSeries(values)
