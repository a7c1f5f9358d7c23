"""Pure-Python sampling and accumulation kernels.

This module and the compiled ``_core`` extension implement the same surface
with the same variate-consumption protocol, so for a given BitGenerator state
the two lanes produce bit-identical samples.  All draws reduce to two
primitives, ``random()`` and ``standard_exponential()``, consumed in the
order documented below.

Hierarchical-branching-process branch protocol (work stack, LIFO; items are
pushed terminal-pair-first then side branches in reverse, so they pop as
side_1..side_m, terminal_left, terminal_right):

1. side-branch total ``m``: one uniform, geometric by inversion
   (skipped entirely when the order is 1 or all Tokunaga weights vanish);
2. side-branch orders: one uniform each, cumulative scan of T_1..T_{j-1}
   mapping offset d to order j - d;
3. edge lengths: ``m + 1`` standard exponentials scaled by the precomputed
   inverse edge rate of the branch order.

Event-driven branch protocol (same stack discipline; a branch whose birth
time exceeds the horizon is skipped before any draw):

1. termination: one standard exponential scaled by 1/lambda_j;
2. side arrivals: alternating standard exponential (gap) draws until the
   death time is passed, each accepted arrival followed by one uniform for
   its order (same cumulative scan as above).

Exponential-walk steps consume block-wise: 1024 uniforms, then 1024 standard
exponentials, repeating.
"""

import math

import numpy as np

from ..errors import OrderCapError

LANE = "pure"

_WALK_BLOCK = 1024


# ---------------------------------------------------------------------------
# Hierarchical branching process: direct sampler
# ---------------------------------------------------------------------------


def build_hbp_tree(bitgen, K, T, cumT, log1mq, inv_edge_rate, max_nodes):
    """Materialize one process tree of root order ``K`` as node arrays."""
    rg = np.random.Generator(bitgen)
    parent = [-1]
    left = [-1]
    right = [-1]
    lens = [np.nan]
    work = [(0, 0, int(K))]
    while work:
        pnode, slot, j = work.pop()
        if j >= 2 and cumT[j - 1] > 0.0:
            u = rg.random()
            m = int(math.log1p(-u) / log1mq[j])
        else:
            m = 0
        side_orders = []
        if m:
            total = cumT[j - 1]
            us = rg.random(m)
            for s in range(m):
                target = us[s] * total
                acc = 0.0
                o = 1
                for d in range(1, j):
                    acc += T[d]
                    if target < acc:
                        o = j - d
                        break
                side_orders.append(o)
        ls = rg.standard_exponential(m + 1) * inv_edge_rate[j]
        if len(parent) + m + 1 > max_nodes:
            raise OrderCapError(f"tree exceeds the node budget ({max_nodes})")
        chain = []
        cur_parent, cur_slot = pnode, slot
        for e in range(m + 1):
            v = len(parent)
            parent.append(cur_parent)
            left.append(-1)
            right.append(-1)
            lens.append(ls[e])
            if cur_slot == 0:
                left[cur_parent] = v
            else:
                right[cur_parent] = v
            chain.append(v)
            cur_parent, cur_slot = v, 0
        if j >= 2:
            t = chain[-1]
            work.append((t, 1, j - 1))
            work.append((t, 0, j - 1))
        for s in range(m - 1, -1, -1):
            work.append((chain[s], 1, side_orders[s]))
    return (
        np.array(parent, dtype=np.int64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(lens, dtype=np.float64),
    )


def hbp_tree_stats(bitgen, K, T, cumT, log1mq, inv_edge_rate, jcap, nj, nij, edge, vcounts, max_edges):
    """Stream one tree's branch statistics without materializing it.

    Consumes exactly the same variates as :func:`build_hbp_tree`.  Adds into
    the caller's buffers: ``nj[j]`` branch counts, ``nij[i, j]`` side-branch
    counts, ``edge[j, (count, sum, sumsq)]`` per-edge length moments keyed by
    branch order, ``vcounts[j]`` vertex counts.  Orders above ``jcap`` fold
    into the top row.
    """
    rg = np.random.Generator(bitgen)
    edges_seen = 0
    work = [int(K)]
    while work:
        j = work.pop()
        if j >= 2 and cumT[j - 1] > 0.0:
            u = rg.random()
            m = int(math.log1p(-u) / log1mq[j])
        else:
            m = 0
        side_orders = []
        jj = min(j, jcap)
        nj[jj] += 1
        vcounts[jj] += m + 1
        if m:
            total = cumT[j - 1]
            us = rg.random(m)
            for s in range(m):
                target = us[s] * total
                acc = 0.0
                o = 1
                for d in range(1, j):
                    acc += T[d]
                    if target < acc:
                        o = j - d
                        break
                side_orders.append(o)
                nij[min(o, jcap), jj] += 1
        ls = rg.standard_exponential(m + 1) * inv_edge_rate[j]
        edges_seen += m + 1
        if edges_seen > max_edges:
            raise OrderCapError(f"tree exceeds the edge budget ({max_edges})")
        edge[jj, 0] += m + 1
        edge[jj, 1] += float(ls.sum())
        edge[jj, 2] += float((ls * ls).sum())
        if j >= 2:
            work.append(j - 1)
            work.append(j - 1)
        for s in range(m - 1, -1, -1):
            work.append(side_orders[s])


# ---------------------------------------------------------------------------
# Hierarchical branching process: event-driven sampler
# ---------------------------------------------------------------------------


def build_hbp_events(bitgen, K, T, cumT, inv_term_rate, inv_side_rate, horizon, max_nodes):
    """Continuous-time simulation assembled into tree arrays plus an event
    log (order, birth, death, parent-branch index per branch)."""
    rg = np.random.Generator(bitgen)
    parent = [-1]
    left = [-1]
    right = [-1]
    lens = [np.nan]
    ev_order = []
    ev_birth = []
    ev_death = []
    ev_parent = []
    work = [(0, 0, int(K), 0.0, -1)]
    while work:
        pnode, slot, j, birth, pbranch = work.pop()
        if birth > horizon:
            continue
        death = birth + rg.standard_exponential() * inv_term_rate[j]
        bidx = len(ev_order)
        ev_order.append(j)
        ev_birth.append(birth)
        ev_death.append(death)
        ev_parent.append(pbranch)
        arr_t = []
        arr_o = []
        if j >= 2 and cumT[j - 1] > 0.0:
            total = cumT[j - 1]
            t = birth
            while True:
                t = t + rg.standard_exponential() * inv_side_rate[j]
                if t >= death:
                    break
                u = rg.random()
                target = u * total
                acc = 0.0
                o = 1
                for d in range(1, j):
                    acc += T[d]
                    if target < acc:
                        o = j - d
                        break
                arr_t.append(t)
                arr_o.append(o)
        m = len(arr_t)
        if len(parent) + m + 1 > max_nodes:
            raise OrderCapError(f"tree exceeds the node budget ({max_nodes})")
        chain = []
        cur_parent, cur_slot = pnode, slot
        prev = birth
        for e in range(m + 1):
            t_end = arr_t[e] if e < m else death
            v = len(parent)
            parent.append(cur_parent)
            left.append(-1)
            right.append(-1)
            lens.append(t_end - prev)
            if cur_slot == 0:
                left[cur_parent] = v
            else:
                right[cur_parent] = v
            chain.append(v)
            cur_parent, cur_slot = v, 0
            prev = t_end
        if j >= 2:
            t = chain[-1]
            work.append((t, 1, j - 1, death, bidx))
            work.append((t, 0, j - 1, death, bidx))
        for s in range(m - 1, -1, -1):
            work.append((chain[s], 1, arr_o[s], arr_t[s], bidx))
    tree = (
        np.array(parent, dtype=np.int64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(lens, dtype=np.float64),
    )
    log = (
        np.array(ev_order, dtype=np.int64),
        np.array(ev_birth, dtype=np.float64),
        np.array(ev_death, dtype=np.float64),
        np.array(ev_parent, dtype=np.int64),
    )
    return tree, log


def hbp_events_stats(bitgen, K, T, cumT, inv_term_rate, inv_side_rate, s_points, horizon, jcap, nj, alive, max_branches):
    """Event simulation reduced to branch counts and alive-at-s counts.

    Same draws as :func:`build_hbp_events`.  ``alive[k]`` accumulates the
    number of branches whose [birth, death) interval contains ``s_points[k]``.
    """
    rg = np.random.Generator(bitgen)
    ns = len(s_points)
    branches = 0
    work = [(int(K), 0.0)]
    while work:
        j, birth = work.pop()
        if birth > horizon:
            continue
        branches += 1
        if branches > max_branches:
            raise OrderCapError(f"simulation exceeds the branch budget ({max_branches})")
        death = birth + rg.standard_exponential() * inv_term_rate[j]
        nj[min(j, jcap)] += 1
        for k in range(ns):
            s = s_points[k]
            if birth <= s < death:
                alive[k] += 1
        arr_t = []
        arr_o = []
        if j >= 2 and cumT[j - 1] > 0.0:
            total = cumT[j - 1]
            t = birth
            while True:
                t = t + rg.standard_exponential() * inv_side_rate[j]
                if t >= death:
                    break
                u = rg.random()
                target = u * total
                acc = 0.0
                o = 1
                for d in range(1, j):
                    acc += T[d]
                    if target < acc:
                        o = j - d
                        break
                arr_t.append(t)
                arr_o.append(o)
        if j >= 2:
            work.append((j - 1, death))
            work.append((j - 1, death))
        for s in range(len(arr_t) - 1, -1, -1):
            work.append((arr_o[s], arr_t[s]))


# ---------------------------------------------------------------------------
# Exponential walks and level-set trees
# ---------------------------------------------------------------------------


def first_return_excursion(bitgen, rho, lam_u, lam_d, max_steps):
    """Extrema of one first-return excursion of an exponential walk.

    The walk starts at 0; a first step downward restarts it (an excursion
    requires an interior above its baseline).  Returns the alternating
    extrema values [0, M_1, m_1, ..., M_q, 0], or None once ``max_steps``
    total steps are consumed (the caller decides how to treat capped draws).
    """
    rg = np.random.Generator(bitgen)
    extrema = [0.0]
    x = 0.0
    direction = 0
    steps = 0
    while steps < max_steps:
        us = rg.random(_WALK_BLOCK)
        es = rg.standard_exponential(_WALK_BLOCK)
        for i in range(_WALK_BLOCK):
            steps += 1
            if us[i] < rho:
                inc = es[i] / lam_u
            else:
                inc = -es[i] / lam_d
            nx = x + inc
            if direction == 0:
                if inc <= 0.0:
                    x = 0.0
                    continue
                direction = 1
                x = nx
                continue
            if nx <= 0.0:
                if direction == 1:
                    extrema.append(x)
                extrema.append(0.0)
                return np.array(extrema, dtype=np.float64)
            if direction == 1 and inc < 0.0:
                extrema.append(x)
                direction = -1
            elif direction == -1 and inc > 0.0:
                extrema.append(x)
                direction = 1
            x = nx
            if steps >= max_steps:
                break
    return None


def build_level_tree(maxima, minima, base):
    """Level-set tree of an alternating extrema sequence.

    ``maxima`` are the q local maxima in time order, ``minima`` the q-1
    interior minima between them, ``base`` the closing level (the global
    minimum).  Left children are earlier in time.  Returns node arrays; the
    root sits at the base level.
    """
    q = len(maxima)
    parent = [-1]
    left = [-1]
    right = [-1]
    lens = [np.nan]
    stack = []  # (node, node_value, pending_base)
    for i in range(q):
        cur = len(parent)
        parent.append(-1)
        left.append(-1)
        right.append(-1)
        lens.append(np.nan)
        cur_val = float(maxima[i])
        w = float(minima[i]) if i < q - 1 else float(base)
        while stack and stack[-1][2] > w:
            n2, v2, b2 = stack.pop()
            p = len(parent)
            parent.append(-1)
            left.append(-1)
            right.append(-1)
            lens.append(np.nan)
            left[p] = n2
            parent[n2] = p
            lens[n2] = v2 - b2
            right[p] = cur
            parent[cur] = p
            lens[cur] = cur_val - b2
            cur, cur_val = p, b2
        stack.append((cur, cur_val, w))
    # drain ties: remaining entries all pend at the base level
    while len(stack) > 1:
        n1, v1, _ = stack.pop(0)
        n2, v2, _ = stack.pop(0)
        p = len(parent)
        parent.append(-1)
        left.append(-1)
        right.append(-1)
        lens.append(np.nan)
        left[p] = n1
        parent[n1] = p
        lens[n1] = v1 - float(base)
        right[p] = n2
        parent[n2] = p
        lens[n2] = v2 - float(base)
        stack.insert(0, (p, float(base), float(base)))
    top, top_val, _ = stack[0]
    parent[top] = 0
    left[0] = top
    lens[top] = top_val - float(base)
    return (
        np.array(parent, dtype=np.int64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(lens, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# Branch statistics over materialized node arrays
# ---------------------------------------------------------------------------


def compute_orders(parent, left, right):
    """Horton-Strahler orders of raw node arrays (root at 0 carries the tree
    order)."""
    n = parent.shape[0]
    order = np.zeros(n, dtype=np.int64)
    if n == 1:
        return order
    pending = np.where(left != -1, 1, 0) + np.where(right != -1, 1, 0)
    queue = [int(v) for v in range(1, n) if pending[v] == 0]
    head = 0
    while head < len(queue):
        v = queue[head]
        head += 1
        l = left[v]
        if l == -1:
            order[v] = 1
        else:
            a, b = order[l], order[right[v]]
            order[v] = (a if a > b else b) + (1 if a == b else 0)
        p = parent[v]
        pending[p] -= 1
        if pending[p] == 0 and p != 0:
            queue.append(int(p))
    order[0] = order[left[0]]
    return order


def tree_branch_stats(parent, left, right, lengths, jcap, nj, nij, edge, vcounts, blen):
    """Accumulate branch statistics of one materialized tree.

    Adds into ``nj`` (branch counts), ``nij`` (side-branch counts), ``edge``
    (per-edge length moments by branch order), ``vcounts`` (vertex counts by
    order) and ``blen`` (per-branch total-length moments by order).  Returns
    the tree order.
    """
    n = parent.shape[0]
    if n == 1:
        return 0
    order = compute_orders(parent, left, right)
    K = int(order[0])
    for v in range(1, n):
        p = parent[v]
        j = int(order[v])
        if p != 0 and order[p] == j:
            continue
        jj = min(j, jcap)
        nj[jj] += 1
        cur = v
        verts = 0
        btot = 0.0
        while True:
            verts += 1
            if lengths is not None:
                le = float(lengths[cur])
                btot += le
                edge[jj, 0] += 1
                edge[jj, 1] += le
                edge[jj, 2] += le * le
            else:
                edge[jj, 0] += 1
            l, r = int(left[cur]), int(right[cur])
            if l == -1:
                break
            oi, oj = int(order[l]), int(order[r])
            if oi == j and oj < j:
                nij[min(oj, jcap), jj] += 1
                cur = l
            elif oj == j and oi < j:
                nij[min(oi, jcap), jj] += 1
                cur = r
            else:
                break
        vcounts[jj] += verts
        blen[jj, 0] += 1
        blen[jj, 1] += btot
        blen[jj, 2] += btot * btot
    return K
