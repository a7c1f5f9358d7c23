# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampling and accumulation kernels.

Mirror of ``_pure`` with the identical variate-consumption protocol; see that
module's docstring for the protocol.  Variates come straight from the
BitGenerator C interface, so a given generator state yields bit-identical
samples on both lanes.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log1p, floor, INFINITY
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_exponential

import numpy as np

from ..errors import OrderCapError

LANE = "compiled"

DEF WALK_BLOCK = 1024


cdef inline bitgen_t *_bitgen(object bitgenerator) except NULL:
    return <bitgen_t *>PyCapsule_GetPointer(bitgenerator.capsule, "BitGenerator")


cdef inline double _uniform(bitgen_t *rng) nogil:
    return rng.next_double(rng.state)


# ---------------------------------------------------------------------------
# growable buffers
# ---------------------------------------------------------------------------


cdef class _NodeStore:
    cdef object parent_a, left_a, right_a, lens_a
    cdef long long[::1] parent, left, right
    cdef double[::1] lens
    cdef Py_ssize_t n, cap

    def __cinit__(self):
        self.cap = 1024
        self.n = 0
        self.parent_a = np.empty(self.cap, np.int64)
        self.left_a = np.empty(self.cap, np.int64)
        self.right_a = np.empty(self.cap, np.int64)
        self.lens_a = np.empty(self.cap, np.float64)
        self.parent = self.parent_a
        self.left = self.left_a
        self.right = self.right_a
        self.lens = self.lens_a

    cdef void _grow(self):
        self.cap *= 2
        for name in ("parent_a", "left_a", "right_a", "lens_a"):
            old = getattr(self, name)
            new = np.empty(self.cap, old.dtype)
            new[: self.n] = old[: self.n]
            setattr(self, name, new)
        self.parent = self.parent_a
        self.left = self.left_a
        self.right = self.right_a
        self.lens = self.lens_a

    cdef Py_ssize_t add(self, long long parent, double length):
        if self.n == self.cap:
            self._grow()
        cdef Py_ssize_t idx = self.n
        self.parent[idx] = parent
        self.left[idx] = -1
        self.right[idx] = -1
        self.lens[idx] = length
        self.n += 1
        return idx

    cdef tuple arrays(self):
        return (
            self.parent_a[: self.n].copy(),
            self.left_a[: self.n].copy(),
            self.right_a[: self.n].copy(),
            self.lens_a[: self.n].copy(),
        )


# ---------------------------------------------------------------------------
# direct hierarchical-branching-process sampler
# ---------------------------------------------------------------------------


cdef inline long _side_order(double u, double total, const double[::1] T, long j) nogil:
    cdef double target = u * total
    cdef double acc = 0.0
    cdef long d
    for d in range(1, j):
        acc += T[d]
        if target < acc:
            return j - d
    return 1


def build_hbp_tree(bitgenerator, long K, const double[::1] T, const double[::1] cumT,
                   const double[::1] log1mq, const double[::1] inv_edge_rate, long max_nodes):
    cdef bitgen_t *rng = _bitgen(bitgenerator)
    cdef _NodeStore store = _NodeStore()
    store.add(-1, np.nan)  # root
    cdef list work = [(0, 0, K)]
    cdef long j, m, s, e, o
    cdef long long pnode, cur_parent, v, t
    cdef int slot, cur_slot
    cdef double u
    side_arr = np.empty(64, np.int64)
    cdef long long[::1] side = side_arr
    chain_arr = np.empty(64, np.int64)
    cdef long long[::1] chain = chain_arr
    while work:
        pnode, slot, j = work.pop()
        m = 0
        if j >= 2 and cumT[j - 1] > 0.0:
            u = _uniform(rng)
            m = <long>floor(log1p(-u) / log1mq[j])
        if m + 1 > side_arr.shape[0]:
            side_arr = np.empty(m + 1, np.int64)
            side = side_arr
            chain_arr = np.empty(m + 2, np.int64)
            chain = chain_arr
        for s in range(m):
            u = _uniform(rng)
            side[s] = _side_order(u, cumT[j - 1], T, j)
        if store.n + m + 1 > max_nodes:
            raise OrderCapError(f"tree exceeds the node budget ({max_nodes})")
        cur_parent = pnode
        cur_slot = slot
        for e in range(m + 1):
            v = store.add(cur_parent, random_standard_exponential(rng) * inv_edge_rate[j])
            if cur_slot == 0:
                store.left[cur_parent] = v
            else:
                store.right[cur_parent] = v
            chain[e] = v
            cur_parent = v
            cur_slot = 0
        if j >= 2:
            t = chain[m]
            work.append((t, 1, j - 1))
            work.append((t, 0, j - 1))
        for s in range(m - 1, -1, -1):
            work.append((chain[s], 1, side[s]))
    return store.arrays()


def hbp_tree_stats(bitgenerator, long K, const double[::1] T, const double[::1] cumT,
                   const double[::1] log1mq, const double[::1] inv_edge_rate, long jcap,
                   long long[::1] nj, long long[:, ::1] nij, double[:, ::1] edge,
                   long long[::1] vcounts, long long max_edges):
    cdef bitgen_t *rng = _bitgen(bitgenerator)
    cdef long long edges_seen = 0
    # explicit order stack
    cdef Py_ssize_t cap = 256, top = 0
    stack_arr = np.empty(cap, np.int64)
    cdef long long[::1] stack = stack_arr
    stack[0] = K
    top = 1
    cdef long j, jj, m, s, o
    cdef double u, x, le, lsum, lsq
    cdef double total
    side_arr = np.empty(64, np.int64)
    cdef long long[::1] side = side_arr
    while top > 0:
        top -= 1
        j = <long>stack[top]
        m = 0
        if j >= 2 and cumT[j - 1] > 0.0:
            u = _uniform(rng)
            m = <long>floor(log1p(-u) / log1mq[j])
        jj = j if j < jcap else jcap
        nj[jj] += 1
        vcounts[jj] += m + 1
        if m > side_arr.shape[0]:
            side_arr = np.empty(m, np.int64)
            side = side_arr
        for s in range(m):
            u = _uniform(rng)
            o = _side_order(u, cumT[j - 1], T, j)
            side[s] = o
            nij[o if o < jcap else jcap, jj] += 1
        lsum = 0.0
        lsq = 0.0
        for s in range(m + 1):
            le = random_standard_exponential(rng) * inv_edge_rate[j]
            lsum += le
            lsq += le * le
        edges_seen += m + 1
        if edges_seen > max_edges:
            raise OrderCapError(f"tree exceeds the edge budget ({max_edges})")
        edge[jj, 0] += m + 1
        edge[jj, 1] += lsum
        edge[jj, 2] += lsq
        if top + m + 2 > cap:
            while top + m + 2 > cap:
                cap *= 2
            new = np.empty(cap, np.int64)
            new[:top] = stack_arr[:top]
            stack_arr = new
            stack = stack_arr
        if j >= 2:
            stack[top] = j - 1
            stack[top + 1] = j - 1
            top += 2
        for s in range(m - 1, -1, -1):
            stack[top] = side[s]
            top += 1


# ---------------------------------------------------------------------------
# event-driven sampler
# ---------------------------------------------------------------------------


def build_hbp_events(bitgenerator, long K, const double[::1] T, const double[::1] cumT,
                     const double[::1] inv_term_rate, const double[::1] inv_side_rate,
                     double horizon, long max_nodes):
    cdef bitgen_t *rng = _bitgen(bitgenerator)
    cdef _NodeStore store = _NodeStore()
    store.add(-1, np.nan)
    cdef list ev_order = [], ev_birth = [], ev_death = [], ev_parent = []
    cdef list work = [(0, 0, K, 0.0, -1)]
    cdef long j, m, s, o
    cdef long long pnode, cur_parent, v, t
    cdef int slot, cur_slot
    cdef long bidx, pbranch
    cdef double birth, death, tt, u, prev, t_end
    cdef list arr_t, arr_o
    while work:
        pnode, slot, j, birth, pbranch = work.pop()
        if birth > horizon:
            continue
        death = birth + random_standard_exponential(rng) * inv_term_rate[j]
        bidx = len(ev_order)
        ev_order.append(j)
        ev_birth.append(birth)
        ev_death.append(death)
        ev_parent.append(pbranch)
        arr_t = []
        arr_o = []
        if j >= 2 and cumT[j - 1] > 0.0:
            tt = birth
            while True:
                tt = tt + random_standard_exponential(rng) * inv_side_rate[j]
                if tt >= death:
                    break
                u = _uniform(rng)
                arr_t.append(tt)
                arr_o.append(_side_order(u, cumT[j - 1], T, j))
        m = len(arr_t)
        if store.n + m + 1 > max_nodes:
            raise OrderCapError(f"tree exceeds the node budget ({max_nodes})")
        cur_parent = pnode
        cur_slot = slot
        prev = birth
        chain_last = 0
        chain_list = []
        for s in range(m + 1):
            t_end = <double>arr_t[s] if s < m else death
            v = store.add(cur_parent, t_end - prev)
            if cur_slot == 0:
                store.left[cur_parent] = v
            else:
                store.right[cur_parent] = v
            chain_list.append(v)
            cur_parent = v
            cur_slot = 0
            prev = t_end
        if j >= 2:
            t = chain_list[m]
            work.append((t, 1, j - 1, death, bidx))
            work.append((t, 0, j - 1, death, bidx))
        for s in range(m - 1, -1, -1):
            work.append((chain_list[s], 1, arr_o[s], arr_t[s], bidx))
    tree = store.arrays()
    log = (
        np.array(ev_order, dtype=np.int64),
        np.array(ev_birth, dtype=np.float64),
        np.array(ev_death, dtype=np.float64),
        np.array(ev_parent, dtype=np.int64),
    )
    return tree, log


def hbp_events_stats(bitgenerator, long K, const double[::1] T, const double[::1] cumT,
                     const double[::1] inv_term_rate, const double[::1] inv_side_rate,
                     const double[::1] s_points, double horizon, long jcap,
                     long long[::1] nj, long long[::1] alive, long long max_branches):
    cdef bitgen_t *rng = _bitgen(bitgenerator)
    cdef long long branches = 0
    cdef Py_ssize_t cap = 256, top = 0
    orders_arr = np.empty(cap, np.int64)
    births_arr = np.empty(cap, np.float64)
    cdef long long[::1] ostack = orders_arr
    cdef double[::1] bstack = births_arr
    ostack[0] = K
    bstack[0] = 0.0
    top = 1
    cdef long j, m, s, o, k
    cdef double birth, death, tt, u, sp
    cdef Py_ssize_t ns = s_points.shape[0]
    cdef Py_ssize_t acap = 64
    at_arr = np.empty(acap, np.float64)
    ao_arr = np.empty(acap, np.int64)
    cdef double[::1] at = at_arr
    cdef long long[::1] ao = ao_arr
    while top > 0:
        top -= 1
        j = <long>ostack[top]
        birth = bstack[top]
        if birth > horizon:
            continue
        branches += 1
        if branches > max_branches:
            raise OrderCapError(f"simulation exceeds the branch budget ({max_branches})")
        death = birth + random_standard_exponential(rng) * inv_term_rate[j]
        nj[j if j < jcap else jcap] += 1
        for k in range(ns):
            sp = s_points[k]
            if birth <= sp and sp < death:
                alive[k] += 1
        m = 0
        if j >= 2 and cumT[j - 1] > 0.0:
            tt = birth
            while True:
                tt = tt + random_standard_exponential(rng) * inv_side_rate[j]
                if tt >= death:
                    break
                u = _uniform(rng)
                if m == acap:
                    acap *= 2
                    new_t = np.empty(acap, np.float64)
                    new_t[:m] = at_arr[:m]
                    at_arr = new_t
                    at = at_arr
                    new_o = np.empty(acap, np.int64)
                    new_o[:m] = ao_arr[:m]
                    ao_arr = new_o
                    ao = ao_arr
                at[m] = tt
                ao[m] = _side_order(u, cumT[j - 1], T, j)
                m += 1
        if top + m + 2 > cap:
            while top + m + 2 > cap:
                cap *= 2
            new_ord = np.empty(cap, np.int64)
            new_ord[:top] = orders_arr[:top]
            orders_arr = new_ord
            ostack = orders_arr
            new_b = np.empty(cap, np.float64)
            new_b[:top] = births_arr[:top]
            births_arr = new_b
            bstack = births_arr
        if j >= 2:
            ostack[top] = j - 1
            bstack[top] = death
            ostack[top + 1] = j - 1
            bstack[top + 1] = death
            top += 2
        for s in range(m - 1, -1, -1):
            ostack[top] = ao[s]
            bstack[top] = at[s]
            top += 1


# ---------------------------------------------------------------------------
# exponential walks and level-set trees
# ---------------------------------------------------------------------------


def first_return_excursion(bitgenerator, double rho, double lam_u, double lam_d, long long max_steps):
    cdef bitgen_t *rng = _bitgen(bitgenerator)
    cdef list extrema = [0.0]
    cdef double x = 0.0, inc, nx, u
    cdef int direction = 0
    cdef long long steps = 0
    cdef Py_ssize_t i
    cdef double[WALK_BLOCK] us, es
    while steps < max_steps:
        for i in range(WALK_BLOCK):
            us[i] = _uniform(rng)
        for i in range(WALK_BLOCK):
            es[i] = random_standard_exponential(rng)
        for i in range(WALK_BLOCK):
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


def build_level_tree(const double[::1] maxima, const double[::1] minima, double base):
    cdef Py_ssize_t q = maxima.shape[0]
    cdef _NodeStore store = _NodeStore()
    store.add(-1, np.nan)
    # stack of (node, node_value, pending_base) in parallel buffers
    cdef Py_ssize_t cap = 256, top = 0
    sn_arr = np.empty(cap, np.int64)
    sv_arr = np.empty(cap, np.float64)
    sb_arr = np.empty(cap, np.float64)
    cdef long long[::1] sn = sn_arr
    cdef double[::1] sv = sv_arr
    cdef double[::1] sb = sb_arr
    cdef Py_ssize_t i
    cdef long long cur, n2, p
    cdef double cur_val, w, v2, b2
    for i in range(q):
        cur = store.add(-1, np.nan)
        cur_val = maxima[i]
        w = minima[i] if i < q - 1 else base
        while top > 0 and sb[top - 1] > w:
            top -= 1
            n2 = sn[top]
            v2 = sv[top]
            b2 = sb[top]
            p = store.add(-1, np.nan)
            store.left[p] = n2
            store.parent[n2] = p
            store.lens[n2] = v2 - b2
            store.right[p] = cur
            store.parent[cur] = p
            store.lens[cur] = cur_val - b2
            cur = p
            cur_val = b2
        if top == cap:
            cap *= 2
            new_n = np.empty(cap, np.int64)
            new_n[:top] = sn_arr[:top]
            sn_arr = new_n
            sn = sn_arr
            new_v = np.empty(cap, np.float64)
            new_v[:top] = sv_arr[:top]
            sv_arr = new_v
            sv = sv_arr
            new_b = np.empty(cap, np.float64)
            new_b[:top] = sb_arr[:top]
            sb_arr = new_b
            sb = sb_arr
        sn[top] = cur
        sv[top] = cur_val
        sb[top] = w
        top += 1
    # drain ties pending at the base level, left-nested
    cdef long long n1
    cdef double v1
    cdef Py_ssize_t lo = 0
    while top - lo > 1:
        n1 = sn[lo]
        v1 = sv[lo]
        n2 = sn[lo + 1]
        v2 = sv[lo + 1]
        p = store.add(-1, np.nan)
        store.left[p] = n1
        store.parent[n1] = p
        store.lens[n1] = v1 - base
        store.right[p] = n2
        store.parent[n2] = p
        store.lens[n2] = v2 - base
        lo += 1
        sn[lo] = p
        sv[lo] = base
    cur = sn[lo]
    cur_val = sv[lo]
    store.parent[cur] = 0
    store.left[0] = cur
    store.lens[cur] = cur_val - base
    return store.arrays()


# ---------------------------------------------------------------------------
# branch statistics over materialized arrays
# ---------------------------------------------------------------------------


def compute_orders(const long long[::1] parent, const long long[::1] left, const long long[::1] right):
    cdef Py_ssize_t n = parent.shape[0]
    order_arr = np.zeros(n, np.int64)
    cdef long long[::1] order = order_arr
    if n == 1:
        return order_arr
    pending_arr = np.zeros(n, np.int64)
    cdef long long[::1] pending = pending_arr
    queue_arr = np.empty(n, np.int64)
    cdef long long[::1] queue = queue_arr
    cdef Py_ssize_t head = 0, tail = 0
    cdef long long v, p, a, b
    for v in range(n):
        if left[v] != -1:
            pending[v] += 1
        if right[v] != -1:
            pending[v] += 1
    for v in range(1, n):
        if pending[v] == 0:
            queue[tail] = v
            tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        if left[v] == -1:
            order[v] = 1
        else:
            a = order[left[v]]
            b = order[right[v]]
            order[v] = (a if a > b else b) + (1 if a == b else 0)
        p = parent[v]
        pending[p] -= 1
        if pending[p] == 0 and p != 0:
            queue[tail] = p
            tail += 1
    order[0] = order[left[0]]
    return order_arr


def tree_branch_stats(const long long[::1] parent, const long long[::1] left, const long long[::1] right,
                      lengths, long jcap, long long[::1] nj, long long[:, ::1] nij,
                      double[:, ::1] edge, long long[::1] vcounts, double[:, ::1] blen):
    cdef Py_ssize_t n = parent.shape[0]
    if n == 1:
        return 0
    order_arr = compute_orders(parent, left, right)
    cdef long long[::1] order = order_arr
    cdef long K = <long>order[0]
    cdef const double[::1] lens
    cdef bint has_lens = lengths is not None
    if has_lens:
        lens = lengths
    cdef long long v, p, cur, l, r
    cdef long j, jj, oi, oj, verts
    cdef double le, btot
    for v in range(1, n):
        p = parent[v]
        j = <long>order[v]
        if p != 0 and order[p] == j:
            continue
        jj = j if j < jcap else jcap
        nj[jj] += 1
        cur = v
        verts = 0
        btot = 0.0
        while True:
            verts += 1
            if has_lens:
                le = lens[cur]
                btot += le
                edge[jj, 0] += 1
                edge[jj, 1] += le
                edge[jj, 2] += le * le
            else:
                edge[jj, 0] += 1
            l = left[cur]
            r = right[cur]
            if l == -1:
                break
            oi = <long>order[l]
            oj = <long>order[r]
            if oi == j and oj < j:
                nij[oj if oj < jcap else jcap, jj] += 1
                cur = l
            elif oj == j and oi < j:
                nij[oi if oi < jcap else jcap, jj] += 1
                cur = r
            else:
                break
        vcounts[jj] += verts
        blen[jj, 0] += 1
        blen[jj, 1] += btot
        blen[jj, 2] += btot * btot
    return K
