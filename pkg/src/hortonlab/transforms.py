"""Duality between trees and continuous functions.

A finite embedded tree with edge lengths maps to its Harris path (the
depth-first distance-from-root profile, a piecewise-linear excursion with
slopes +-1), and a continuous excursion maps back to its level-set tree; the
two transforms are mutually inverse.  Taking the local minima of an excursion
corresponds to pruning its level-set tree, which lets every pruning statement
be read as a statement about time series.

The level-set tree depends only on the sequence of local-extrema values, so
excursions are canonically represented by that sequence.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import active as _kern
from .errors import DomainError, ParameterError, TreeInvalidError
from .samplers import TimeSeries, WalkParams
from .trees import Tree, total_length

__all__ = [
    "Excursion",
    "extrema_sequence",
    "harris_path",
    "level_set_tree",
    "local_minima_series",
    "extract_excursions",
    "minima_kernel",
    "verify_char_identity",
]


@dataclass
class Excursion:
    """A continuous piecewise-linear function given by its breakpoints.

    Canonical excursions (as produced by :func:`harris_path`) have alternating
    slopes +-1, so their breakpoints are exactly their local extrema and the
    times are determined by the values.
    """

    times: np.ndarray
    values: np.ndarray
    ties_collapsed: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ParameterError("times and values must be 1-d arrays of equal length")
        if self.times.shape[0] >= 2 and not np.all(np.diff(self.times) > 0):
            raise ParameterError("breakpoint times must be strictly increasing")

    @classmethod
    def from_extrema(cls, values, ties_collapsed=False) -> "Excursion":
        """Canonical +-1-slope excursion through the given extrema values."""
        values = np.asarray(values, dtype=np.float64)
        times = np.empty_like(values)
        times[0] = 0.0
        if values.shape[0] > 1:
            np.cumsum(np.abs(np.diff(values)), out=times[1:])
        return cls(times, values, ties_collapsed)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def extrema(self) -> np.ndarray:
        ext, _ = extrema_sequence(self.values)
        return ext


def extrema_sequence(values):
    """Endpoint and turning-point values of a polyline, plateaus collapsed.

    Returns ``(extrema, had_ties)``; ties (repeated consecutive values) are
    collapsed to a single point and flagged.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ParameterError("need a 1-d sequence of values")
    keep = np.ones(v.shape[0], dtype=bool)
    keep[1:] = v[1:] != v[:-1]
    ties = not bool(keep.all())
    v = v[keep]
    if v.shape[0] <= 2:
        return v, ties
    d = np.sign(np.diff(v))
    turn = np.ones(v.shape[0], dtype=bool)
    turn[1:-1] = d[1:] != d[:-1]
    return v[turn], ties


# ---------------------------------------------------------------------------
# Harris path
# ---------------------------------------------------------------------------


def harris_path(tree: Tree) -> Excursion:
    """The depth-first distance profile of an embedded tree with lengths.

    The excursion lives on [0, 2 * LENGTH(T)] and consists of 2n alternating
    +-1 segments for a tree with n leaves.
    """
    if tree.is_empty:
        raise TreeInvalidError("the empty tree has no Harris path")
    if not tree.embedded:
        raise TreeInvalidError("harris_path requires an embedded tree")
    if not tree.has_lengths:
        raise TreeInvalidError("harris_path requires edge lengths")
    extrema = [0.0]
    left, right = tree.left, tree.right
    stack = [(tree.root_child, 0.0, 0)]
    while stack:
        v, pdepth, phase = stack.pop()
        if phase == 1:
            # between the two child subtrees: the junction depth is a minimum
            extrema.append(pdepth)
            continue
        d = pdepth + tree.edge_length(v)
        l, r = int(left[v]), int(right[v])
        if l == -1:
            extrema.append(d)  # leaf: a maximum
            continue
        stack.append((r, d, 0))
        stack.append((v, d, 1))
        stack.append((l, d, 0))
    extrema.append(0.0)
    return Excursion.from_extrema(extrema)


# ---------------------------------------------------------------------------
# Level set tree
# ---------------------------------------------------------------------------


def _classify_extrema(ext):
    """Split an alternating extrema sequence into maxima, interior minima,
    and the base level.  Returns (maxima, minima, base, base_is_interior)."""
    m = ext.shape[0]
    maxima = []
    minima = []
    for i in range(m):
        lo_ok = i == 0 or ext[i] > ext[i - 1]
        hi_ok = i == m - 1 or ext[i] > ext[i + 1]
        if lo_ok and hi_ok and m > 1:
            maxima.append(float(ext[i]))
        elif 0 < i < m - 1:
            minima.append(float(ext[i]))
    base = float(ext.min())
    base_is_interior = ext[0] > base and ext[-1] > base
    return maxima, minima, base, base_is_interior


def level_set_tree(x, root_stem_length: float = 0.0) -> Tree:
    """The tree encoding the merging topology of superlevel sets.

    Leaves correspond to local maxima and internal vertices to interior local
    minima; each edge's length is the value difference of its endpoints'
    extrema.  Accepts an :class:`Excursion` (boundary values must be 0 with a
    positive interior) or a :class:`TimeSeries` (meanders allowed: a boundary
    global minimum becomes the root; an interior one triggers an artificial
    root whose stem length is ``root_stem_length``).  Returns an embedded
    tree, left subtrees earlier in time.
    """
    if isinstance(x, Excursion):
        vals = x.values
        if abs(vals[0]) > 0 or abs(vals[-1]) > 0:
            raise DomainError("an excursion must start and end at 0")
        if vals.shape[0] > 2 and vals[1:-1].min() <= 0:
            raise DomainError("an excursion must be positive in its interior")
    elif isinstance(x, TimeSeries):
        vals = x.values
    else:
        raise TypeError("level_set_tree expects an Excursion or TimeSeries")
    ext, ties = extrema_sequence(vals)
    maxima, minima, base, interior_min = _classify_extrema(ext)
    if not maxima:
        return Tree.empty()
    parent, left, right, lens = _kern.build_level_tree(
        np.asarray(maxima), np.asarray(minima), base
    )
    stem = None
    if interior_min:
        if root_stem_length < 0:
            raise ParameterError("root_stem_length must be nonnegative")
        stem = float(root_stem_length)
        lens = lens.copy()
        lens[int(left[0])] = stem
    return Tree(parent, left, right, lens, embedded=True, root_stem_length=stem)


# ---------------------------------------------------------------------------
# Local-minima coarsening
# ---------------------------------------------------------------------------


def local_minima_series(x):
    """Linear interpolation through the boundary values and interior local
    minima; applying it m times yields the m-fold coarsening."""
    if isinstance(x, Excursion):
        ext, ties = extrema_sequence(x.values)
        if ext.shape[0] <= 2:
            # nothing above the baseline is left: the flat excursion
            return Excursion.from_extrema(np.array([0.0]), ties)
        inner = [float(ext[i]) for i in range(1, ext.shape[0] - 1) if ext[i] < ext[i - 1]]
        new_vals = np.array([ext[0]] + inner + [float(ext[-1])])
        new_ext, ties2 = extrema_sequence(new_vals)
        return Excursion.from_extrema(new_ext, ties or ties2)
    if isinstance(x, TimeSeries):
        v = x.values
        ext, _ = extrema_sequence(v)
        if ext.shape[0] <= 2:
            return TimeSeries(np.array([v[0], v[-1]]))
        inner = [float(ext[i]) for i in range(1, ext.shape[0] - 1) if ext[i] < ext[i - 1]]
        return TimeSeries(np.array([float(v[0])] + inner + [float(v[-1])]))
    raise TypeError("local_minima_series expects an Excursion or TimeSeries")


# ---------------------------------------------------------------------------
# Excursion extraction from a time series
# ---------------------------------------------------------------------------


def extract_excursions(series: TimeSeries):
    """All maximal positive excursions of a time series.

    A fragment [l, r] qualifies when X_l >= X_r and X_k > X_l strictly
    between; the excursion is the linear interpolation on [l, r~] where the
    path first returns to the level X_l, shifted so its baseline is 0.
    """
    x = np.asarray(series.values, dtype=np.float64)
    n = x.shape[0]
    if n < 3:
        return []
    run_min = np.minimum.accumulate(x)
    ladder = np.empty(n, dtype=bool)
    ladder[0] = True
    ladder[1:] = x[1:] <= run_min[:-1]
    idx = np.flatnonzero(ladder)
    out = []
    for l, r in zip(idx[:-1], idx[1:]):
        l, r = int(l), int(r)
        if r < l + 2:
            continue
        base = x[l]
        frac = (x[r - 1] - base) / (x[r - 1] - x[r]) if x[r] < x[r - 1] else 1.0
        times = np.empty(r - l + 1)
        times[:-1] = np.arange(l, r)
        times[-1] = (r - 1) + frac
        values = np.empty(r - l + 1)
        values[:-1] = x[l:r] - base
        values[-1] = 0.0
        out.append(Excursion(times, values))
    return out


# ---------------------------------------------------------------------------
# Exponential-walk kernel algebra
# ---------------------------------------------------------------------------


def minima_kernel(params: WalkParams) -> WalkParams:
    """Parameters of the local-minima walk of an exponential walk."""
    if not 0.0 < params.rho < 1.0:
        raise DomainError("the minima kernel needs 0 < rho < 1")
    up = (1.0 - params.rho) * params.lam_u
    down = params.rho * params.lam_d
    rho_star = down / (down + up)
    return WalkParams(rho_star, up, down)


def verify_char_identity(lam: float, s_values) -> np.ndarray:
    """Residuals of the fixed-point identity for the exponential kernel.

    For the characteristic function f(s) = lam / (lam - i s) of an
    exponential density, evaluates Re[f(2s)] - |f(s) / (2 - f(s))|^2 at each
    sample point; the exponential family solves the identity exactly, so the
    residuals vanish to machine precision.
    """
    if lam <= 0:
        raise DomainError("lam must be positive")
    s = np.asarray(s_values, dtype=np.float64)
    f2 = lam / (lam - 2j * s)
    f1 = lam / (lam - 1j * s)
    rhs = np.abs(f1 / (2.0 - f1)) ** 2
    return np.real(f2) - rhs
