# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: network simplex for the transportation problem and
pairwise segment distance extremes.

The pure-Python twins live in ``_fallback.py``; both must return identical
results up to floating point round-off.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, ceil

cnp.import_array()

DEF STATE_TREE = 0
DEF STATE_LOWER = 1
DEF DIR_UP = 1
DEF DIR_DOWN = -1


cdef inline double _dist(const double[:, ::1] X, Py_ssize_t i,
                         const double[:, ::1] Y, Py_ssize_t j,
                         Py_ssize_t d, int metric) noexcept nogil:
    cdef double s = 0.0, t
    cdef Py_ssize_t k
    if metric == 1:
        for k in range(d):
            s += fabs(X[i, k] - Y[j, k])
        return s
    for k in range(d):
        t = X[i, k] - Y[j, k]
        s += t * t
    return sqrt(s)


cdef class _Network:
    cdef Py_ssize_t m, n, N, root, narc, d
    cdef int metric
    cdef bint dense
    cdef const double[:, ::1] C
    cdef const double[:, ::1] X
    cdef const double[:, ::1] Y
    cdef double scale
    cdef double[::1] art_cost
    cdef Py_ssize_t[::1] art_src
    cdef Py_ssize_t[::1] art_tgt

    cdef inline double cost(self, Py_ssize_t e) noexcept nogil:
        cdef Py_ssize_t i, j
        if e < self.narc:
            i = e // self.n
            j = e - i * self.n
            if self.dense:
                return self.C[i, j] * self.scale
            return _dist(self.X, i, self.Y, j, self.d, self.metric) * self.scale
        return self.art_cost[e - self.narc]

    cdef inline Py_ssize_t src(self, Py_ssize_t e) noexcept nogil:
        if e < self.narc:
            return e // self.n
        return self.art_src[e - self.narc]

    cdef inline Py_ssize_t tgt(self, Py_ssize_t e) noexcept nogil:
        if e < self.narc:
            return self.m + e % self.n
        return self.art_tgt[e - self.narc]


def network_simplex(supply, demand, cost=None, xs=None, ys=None, int metric=2,
                    long max_iter=-1, order=None):
    """Solve a balanced transportation problem.

    Either a dense ``cost`` matrix or two coordinate arrays ``xs``/``ys`` with a
    metric code (1 = L1, 2 = L2) must be given.  Without ``order`` the search
    starts from the all-artificial basis; with ``order`` (a priority
    permutation of the arcs ``i * n + j``) it starts from the greedy basis that
    fills arcs in that order.  Returns
    ``(rows, cols, flows, u, v, iterations, artificial_residual)`` where
    ``u``/``v`` are node potentials with ``cost[i, j] + u[i] - v[j] >= 0``.
    """
    cdef double[::1] sup = np.ascontiguousarray(supply, dtype=np.float64)
    cdef double[::1] dem = np.ascontiguousarray(demand, dtype=np.float64)
    cdef _Network net = _Network()
    cdef Py_ssize_t m = sup.shape[0], n = dem.shape[0]
    net.m = m
    net.n = n
    net.N = m + n
    net.root = m + n
    net.narc = m * n
    net.metric = metric
    cdef double max_cost = 0.0, c
    cdef Py_ssize_t i, j
    if cost is not None:
        net.dense = True
        net.C = np.ascontiguousarray(cost, dtype=np.float64)
        net.d = 0
        net.X = np.zeros((1, 1))
        net.Y = np.zeros((1, 1))
        for i in range(m):
            for j in range(n):
                c = fabs(net.C[i, j])
                if c > max_cost:
                    max_cost = c
    else:
        net.dense = False
        net.X = np.ascontiguousarray(xs, dtype=np.float64)
        net.Y = np.ascontiguousarray(ys, dtype=np.float64)
        net.d = net.X.shape[1]
        net.C = np.zeros((1, 1))
        for i in range(m):
            for j in range(n):
                c = _dist(net.X, i, net.Y, j, net.d, metric)
                if c > max_cost:
                    max_cost = c
    net.scale = 1.0 / max_cost if max_cost > 0 else 1.0

    cdef Py_ssize_t N = net.N, root = net.root, narc = net.narc
    cdef double ART = 2.0 * (N + 1)
    cdef double eps = 1e-12

    net.art_cost = np.zeros(N, dtype=np.float64)
    net.art_src = np.full(N, root, dtype=np.intp)
    net.art_tgt = np.arange(N, dtype=np.intp)

    cdef double[::1] flow = np.zeros(narc + N, dtype=np.float64)
    cdef signed char[::1] state = np.full(narc + N, STATE_LOWER, dtype=np.int8)
    cdef double[::1] pi = np.zeros(N + 1, dtype=np.float64)
    cdef Py_ssize_t[::1] parent = np.zeros(N + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] pred = np.zeros(N + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] thread = np.zeros(N + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] rev_thread = np.zeros(N + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] succ_num = np.zeros(N + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] last_succ = np.zeros(N + 1, dtype=np.intp)
    cdef signed char[::1] pred_dir = np.zeros(N + 1, dtype=np.int8)
    cdef Py_ssize_t[::1] dirty = np.zeros(N + 1, dtype=np.intp)
    cdef Py_ssize_t ndirty
    cdef Py_ssize_t u, e
    cdef Py_ssize_t[::1] prio
    cdef double[::1] rs
    cdef double[::1] rd
    cdef double total = 0.0, tiny, f
    cdef Py_ssize_t[::1] bas
    cdef Py_ssize_t nbas = 0, left = N, idx

    if order is None:
        # all-artificial start: supplies drain to the root at cost 0, demands
        # are fed from the root at a prohibitive cost
        eps = 64.0 * 2.220446049250313e-16 * ART
        parent[root] = -1
        pred[root] = -1
        thread[root] = 0
        rev_thread[0] = root
        succ_num[root] = N + 1
        last_succ[root] = root - 1
        for u in range(N):
            e = narc + u
            parent[u] = root
            pred[u] = e
            thread[u] = u + 1
            rev_thread[u + 1] = u
            succ_num[u] = 1
            last_succ[u] = u
            state[e] = STATE_TREE
            if u < m:
                pred_dir[u] = DIR_UP
                net.art_src[u] = u
                net.art_tgt[u] = root
                flow[e] = sup[u]
            else:
                pred_dir[u] = DIR_DOWN
                pi[u] = ART
                flow[e] = dem[u - m]
                net.art_cost[u] = ART
    else:
        # greedy start; artificial arcs root -> u (cost 0) only hang the
        # forest's components off the root and never carry flow
        prio = np.ascontiguousarray(order, dtype=np.intp)
        rs = np.array(sup, dtype=np.float64)
        rd = np.array(dem, dtype=np.float64)
        for i in range(m):
            total += sup[i]
        tiny = 1e-12 * total
        bas = np.empty(N, dtype=np.intp)
        with nogil:
            for idx in range(prio.shape[0]):
                if left <= 0:
                    break
                e = prio[idx]
                i = e // n
                j = e - i * n
                if rs[i] <= 0.0 or rd[j] <= 0.0:
                    continue
                f = rs[i] if rs[i] < rd[j] else rd[j]
                flow[e] = f
                bas[nbas] = e
                nbas += 1
                rs[i] -= f
                rd[j] -= f
                if rs[i] <= tiny:
                    rs[i] = 0.0
                    left -= 1
                if rd[j] <= tiny:
                    rd[j] = 0.0
                    left -= 1
        # crumbs below 1e-9 of the total are rounding left by the greedy fill
        if left > 0 and max(np.asarray(rs).max(), np.asarray(rd).max()) > 1e-9 * total:
            raise ValueError("priority order does not cover a feasible basis")
        _build_tree(net, bas[:nbas], flow, state, pi, parent, pred, pred_dir,
                    thread, rev_thread, succ_num, last_succ)

    cdef Py_ssize_t block = <Py_ssize_t>ceil(sqrt(<double>narc))
    if block < 10:
        block = 10
    if block > narc:
        block = narc
    cdef Py_ssize_t next_arc = 0, cnt, k
    cdef Py_ssize_t in_arc = -1, join, u_in, v_in, u_out, v_out, first, second
    cdef Py_ssize_t vv, result, stem, par_stem, next_stem, last, before, after
    cdef Py_ssize_t old_rev_thread, old_succ_num, old_last_succ, thread_continue
    cdef Py_ssize_t tmp_sc, tmp_ls, p, up_limit_out, last_succ_out, end
    cdef double min_c, delta, dd, val, sigma
    cdef long iterations = 0
    cdef bint change

    with nogil:
        while True:
            if max_iter >= 0 and iterations >= max_iter:
                break
            # entering arc: block search
            min_c = 0.0
            in_arc = -1
            cnt = block
            e = next_arc
            for k in range(narc):
                if state[e] != STATE_TREE:
                    c = state[e] * (net.cost(e) + pi[net.src(e)] - pi[net.tgt(e)])
                    if c < min_c:
                        min_c = c
                        in_arc = e
                e += 1
                cnt -= 1
                if e == narc:
                    e = 0
                    cnt = 0
                if cnt == 0:
                    if min_c < -eps:
                        break
                    cnt = block
            if min_c >= -eps or in_arc < 0:
                break
            next_arc = e
            iterations += 1

            # join node
            u = net.src(in_arc)
            vv = net.tgt(in_arc)
            while u != vv:
                if succ_num[u] < succ_num[vv]:
                    u = parent[u]
                else:
                    vv = parent[vv]
            join = u

            # leaving arc
            if state[in_arc] == STATE_LOWER:
                first = net.src(in_arc)
                second = net.tgt(in_arc)
            else:
                first = net.tgt(in_arc)
                second = net.src(in_arc)
            delta = 1e300
            result = 0
            u_out = -1
            u = first
            while u != join:
                e = pred[u]
                if pred_dir[u] == DIR_UP:
                    dd = flow[e]
                else:
                    dd = 1e300
                if dd < delta:
                    delta = dd
                    u_out = u
                    result = 1
                u = parent[u]
            u = second
            while u != join:
                e = pred[u]
                if pred_dir[u] == DIR_DOWN:
                    dd = flow[e]
                else:
                    dd = 1e300
                if dd <= delta:
                    delta = dd
                    u_out = u
                    result = 2
                u = parent[u]
            if result == 1:
                u_in = first
                v_in = second
            else:
                u_in = second
                v_in = first
            change = result != 0
            if not change:
                # unbounded cannot happen on a bipartite transportation graph
                iterations = -iterations
                break

            # augment
            if delta > 0:
                val = state[in_arc] * delta
                flow[in_arc] += val
                u = net.src(in_arc)
                while u != join:
                    flow[pred[u]] -= pred_dir[u] * val
                    u = parent[u]
                u = net.tgt(in_arc)
                while u != join:
                    flow[pred[u]] += pred_dir[u] * val
                    u = parent[u]
            state[in_arc] = STATE_TREE
            flow[pred[u_out]] = 0.0
            state[pred[u_out]] = STATE_LOWER

            # tree update
            old_rev_thread = rev_thread[u_out]
            old_succ_num = succ_num[u_out]
            old_last_succ = last_succ[u_out]
            v_out = parent[u_out]

            if u_in == u_out:
                parent[u_in] = v_in
                pred[u_in] = in_arc
                pred_dir[u_in] = DIR_UP if u_in == net.src(in_arc) else DIR_DOWN
                if thread[v_in] != u_out:
                    after = thread[old_last_succ]
                    thread[old_rev_thread] = after
                    rev_thread[after] = old_rev_thread
                    after = thread[v_in]
                    thread[v_in] = u_out
                    rev_thread[u_out] = v_in
                    thread[old_last_succ] = after
                    rev_thread[after] = old_last_succ
            else:
                if old_rev_thread == v_in:
                    thread_continue = thread[old_last_succ]
                else:
                    thread_continue = thread[v_in]
                stem = u_in
                par_stem = v_in
                last = last_succ[u_in]
                after = thread[last]
                thread[v_in] = u_in
                ndirty = 0
                dirty[ndirty] = v_in
                ndirty += 1
                while stem != u_out:
                    next_stem = parent[stem]
                    thread[last] = next_stem
                    dirty[ndirty] = last
                    ndirty += 1
                    before = rev_thread[stem]
                    thread[before] = after
                    rev_thread[after] = before
                    parent[stem] = par_stem
                    par_stem = stem
                    stem = next_stem
                    if last_succ[stem] == last_succ[par_stem]:
                        last = rev_thread[par_stem]
                    else:
                        last = last_succ[stem]
                    after = thread[last]
                parent[u_out] = par_stem
                thread[last] = thread_continue
                rev_thread[thread_continue] = last
                last_succ[u_out] = last
                if old_rev_thread != v_in:
                    thread[old_rev_thread] = after
                    rev_thread[after] = old_rev_thread
                for k in range(ndirty):
                    u = dirty[k]
                    rev_thread[thread[u]] = u
                tmp_sc = 0
                tmp_ls = last_succ[u_out]
                u = u_out
                p = parent[u]
                while u != u_in:
                    pred[u] = pred[p]
                    pred_dir[u] = -pred_dir[p]
                    tmp_sc += succ_num[u] - succ_num[p]
                    succ_num[u] = tmp_sc
                    last_succ[p] = tmp_ls
                    u = p
                    p = parent[u]
                pred[u_in] = in_arc
                pred_dir[u_in] = DIR_UP if u_in == net.src(in_arc) else DIR_DOWN
                succ_num[u_in] = old_succ_num

            if last_succ[join] == v_in:
                up_limit_out = join
            else:
                up_limit_out = -1
            last_succ_out = last_succ[u_out]
            u = v_in
            while u != -1 and last_succ[u] == v_in:
                last_succ[u] = last_succ_out
                u = parent[u]
            if join != old_rev_thread and v_in != old_rev_thread:
                u = v_out
                while u != up_limit_out and last_succ[u] == old_last_succ:
                    last_succ[u] = old_rev_thread
                    u = parent[u]
            elif last_succ_out != old_last_succ:
                u = v_out
                while u != up_limit_out and last_succ[u] == old_last_succ:
                    last_succ[u] = last_succ_out
                    u = parent[u]
            u = v_in
            while u != join:
                succ_num[u] += old_succ_num
                u = parent[u]
            u = v_out
            while u != join:
                succ_num[u] -= old_succ_num
                u = parent[u]

            # potentials
            sigma = pi[v_in] - pi[u_in] - pred_dir[u_in] * net.cost(in_arc)
            end = thread[last_succ[u_in]]
            if 2 * succ_num[u_in] <= N + 1:
                u = u_in
                while u != end:
                    pi[u] += sigma
                    u = thread[u]
            else:
                # shifting the complement instead leaves reduced costs unchanged
                u = end
                while u != u_in:
                    pi[u] -= sigma
                    u = thread[u]

    # collect basic real arcs carrying flow
    rows = []
    cols = []
    vals = []
    cdef double art_res = 0.0
    for u in range(N):
        e = pred[u]
        if e < narc:
            if flow[e] > 0.0:
                rows.append(e // n)
                cols.append(e % n)
                vals.append(flow[e])
        elif e >= 0:
            art_res += flow[e]
    pi_np = np.asarray(pi)
    inv = 1.0 / net.scale
    u_pot = pi_np[:m] * inv
    v_pot = pi_np[m:N] * inv
    return (np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp),
            np.asarray(vals, dtype=np.float64), u_pot, v_pot, iterations, art_res)


cdef void _build_tree(_Network net, Py_ssize_t[::1] bas, double[::1] flow,
                      signed char[::1] state, double[::1] pi,
                      Py_ssize_t[::1] parent, Py_ssize_t[::1] pred,
                      signed char[::1] pred_dir, Py_ssize_t[::1] thread,
                      Py_ssize_t[::1] rev_thread, Py_ssize_t[::1] succ_num,
                      Py_ssize_t[::1] last_succ):
    """Spanning tree from a forest of basic arcs; components hang off the root."""
    cdef Py_ssize_t N = net.N, root = net.root, narc = net.narc
    cdef Py_ssize_t nb = bas.shape[0], k, e, a, b, u, w, top, pos, c
    deg_np = np.zeros(N + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] deg = deg_np
    for k in range(nb):
        e = bas[k]
        deg[net.src(e)] += 1
        deg[net.tgt(e)] += 1
    cdef Py_ssize_t[::1] start = np.zeros(N + 2, dtype=np.intp)
    for u in range(N + 1):
        start[u + 1] = start[u] + deg[u]
    cdef Py_ssize_t[::1] fill = np.array(start[:N + 1], dtype=np.intp)
    cdef Py_ssize_t[::1] adj = np.empty(2 * nb + 1, dtype=np.intp)
    for k in range(nb):
        e = bas[k]
        a = net.src(e)
        b = net.tgt(e)
        adj[fill[a]] = e
        fill[a] += 1
        adj[fill[b]] = e
        fill[b] += 1
        state[e] = STATE_TREE
    cdef Py_ssize_t[::1] order = np.empty(N + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] stack = np.empty(N + 1, dtype=np.intp)
    cdef signed char[::1] seen = np.zeros(N + 1, dtype=np.int8)
    pos = 0
    order[pos] = root
    pos += 1
    seen[root] = 1
    parent[root] = -1
    pred[root] = -1
    pi[root] = 0.0
    for c in range(N):
        if seen[c]:
            continue
        e = narc + c
        state[e] = STATE_TREE
        flow[e] = 0.0
        parent[c] = root
        pred[c] = e
        pred_dir[c] = DIR_DOWN
        pi[c] = 0.0
        seen[c] = 1
        top = 0
        stack[top] = c
        top += 1
        while top > 0:
            top -= 1
            u = stack[top]
            order[pos] = u
            pos += 1
            for k in range(start[u], start[u + 1]):
                e = adj[k]
                w = net.tgt(e) if net.src(e) == u else net.src(e)
                if seen[w]:
                    continue
                seen[w] = 1
                parent[w] = u
                pred[w] = e
                if net.src(e) == w:
                    pred_dir[w] = DIR_UP
                    pi[w] = pi[u] - net.cost(e)
                else:
                    pred_dir[w] = DIR_DOWN
                    pi[w] = pi[u] + net.cost(e)
                stack[top] = w
                top += 1
    for k in range(N + 1):
        thread[order[k]] = order[k + 1] if k < N else root
        rev_thread[order[k + 1] if k < N else root] = order[k]
    cdef Py_ssize_t[::1] where = np.empty(N + 1, dtype=np.intp)
    for k in range(N + 1):
        where[order[k]] = k
        succ_num[k] = 1
    for k in range(N, 0, -1):
        u = order[k]
        succ_num[parent[u]] += succ_num[u]
    for k in range(N + 1):
        u = order[k]
        last_succ[u] = order[k + succ_num[u] - 1]


def segment_pair_extremes(const double[:, ::1] A0, const double[:, ::1] A1,
                          const double[:, ::1] B0, const double[:, ::1] B1,
                          int metric):
    """Closest and farthest distances for every pair (A_i, B_j) of segments.

    Returns two ``(len(A), len(B))`` arrays.
    """
    cdef Py_ssize_t na = A0.shape[0], nb = B0.shape[0], d = A0.shape[1]
    dmin_np = np.empty((na, nb), dtype=np.float64)
    dmax_np = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] dmin = dmin_np
    cdef double[:, ::1] dmax = dmax_np
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(na):
            for j in range(nb):
                dmin[i, j] = _seg_seg_min(A0, A1, i, B0, B1, j, d, metric)
                dmax[i, j] = _seg_seg_max(A0, A1, i, B0, B1, j, d, metric)
    return dmin_np, dmax_np


cdef inline double _pt_dist(const double[:, ::1] P, Py_ssize_t i, double* q,
                            Py_ssize_t d, int metric) noexcept nogil:
    cdef double s = 0.0, t
    cdef Py_ssize_t k
    if metric == 1:
        for k in range(d):
            s += fabs(P[i, k] - q[k])
        return s
    for k in range(d):
        t = P[i, k] - q[k]
        s += t * t
    return sqrt(s)


cdef double _seg_seg_max(const double[:, ::1] A0, const double[:, ::1] A1, Py_ssize_t i,
                         const double[:, ::1] B0, const double[:, ::1] B1, Py_ssize_t j,
                         Py_ssize_t d, int metric) noexcept nogil:
    cdef double best = 0.0, v
    cdef double q[8]
    cdef Py_ssize_t k
    for k in range(d):
        q[k] = B0[j, k]
    v = _pt_dist(A0, i, q, d, metric)
    if v > best:
        best = v
    v = _pt_dist(A1, i, q, d, metric)
    if v > best:
        best = v
    for k in range(d):
        q[k] = B1[j, k]
    v = _pt_dist(A0, i, q, d, metric)
    if v > best:
        best = v
    v = _pt_dist(A1, i, q, d, metric)
    if v > best:
        best = v
    return best


cdef inline double _clamp01(double x) noexcept nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


cdef double _l1_point_seg(double* p, double* a, double* b, Py_ssize_t d) noexcept nogil:
    # convex piecewise-linear in t: minimum sits at an endpoint or a breakpoint
    cdef double best = 1e300, t, s, diff
    cdef Py_ssize_t k, r
    cdef double cand[10]
    cdef Py_ssize_t nc = 2
    cand[0] = 0.0
    cand[1] = 1.0
    for k in range(d):
        diff = b[k] - a[k]
        if diff != 0.0:
            t = (p[k] - a[k]) / diff
            if t > 0.0 and t < 1.0:
                cand[nc] = t
                nc += 1
    for r in range(nc):
        t = cand[r]
        s = 0.0
        for k in range(d):
            s += fabs(a[k] + t * (b[k] - a[k]) - p[k])
        if s < best:
            best = s
    return best


cdef double _seg_seg_min(const double[:, ::1] A0, const double[:, ::1] A1, Py_ssize_t i,
                         const double[:, ::1] B0, const double[:, ::1] B1, Py_ssize_t j,
                         Py_ssize_t d, int metric) noexcept nogil:
    cdef double a0[8]
    cdef double a1[8]
    cdef double b0[8]
    cdef double b1[8]
    cdef double u[8]
    cdef double v[8]
    cdef double r[8]
    cdef Py_ssize_t k, k2, r_i
    for k in range(d):
        a0[k] = A0[i, k]
        a1[k] = A1[i, k]
        b0[k] = B0[j, k]
        b1[k] = B1[j, k]
        u[k] = a1[k] - a0[k]
        v[k] = b1[k] - b0[k]
        r[k] = a0[k] - b0[k]
    cdef double aa = 0.0, ee = 0.0, ff = 0.0, cc = 0.0, bb = 0.0, denom, s, t, dist, best, det, diff
    if metric == 2:
        for k in range(d):
            aa += u[k] * u[k]
            ee += v[k] * v[k]
            ff += v[k] * r[k]
            cc += u[k] * r[k]
            bb += u[k] * v[k]
        denom = aa * ee - bb * bb
        if denom > 1e-14 * aa * ee:
            s = _clamp01((bb * ff - cc * ee) / denom)
        else:
            s = 0.0
        t = (bb * s + ff) / ee
        if t < 0.0:
            t = 0.0
            s = _clamp01(-cc / aa)
        elif t > 1.0:
            t = 1.0
            s = _clamp01((bb - cc) / aa)
        dist = 0.0
        for k in range(d):
            diff = r[k] + s * u[k] - t * v[k]
            dist += diff * diff
        return sqrt(dist)
    # L1: candidates on the boundary of the parameter square plus interior vertices
    best = _l1_point_seg(a0, b0, b1, d)
    dist = _l1_point_seg(a1, b0, b1, d)
    if dist < best:
        best = dist
    dist = _l1_point_seg(b0, a0, a1, d)
    if dist < best:
        best = dist
    dist = _l1_point_seg(b1, a0, a1, d)
    if dist < best:
        best = dist
    for k in range(d):
        for k2 in range(k + 1, d):
            # s*u_k - t*v_k = -r_k ; s*u_k2 - t*v_k2 = -r_k2
            det = -u[k] * v[k2] + v[k] * u[k2]
            if det == 0.0:
                continue
            s = (-r[k] * -v[k2] - (-v[k]) * -r[k2]) / det
            t = (u[k] * -r[k2] - u[k2] * -r[k]) / det
            if s < 0.0 or s > 1.0 or t < 0.0 or t > 1.0:
                continue
            dist = 0.0
            for r_i in range(d):
                dist += fabs(r[r_i] + s * u[r_i] - t * v[r_i])
            if dist < best:
                best = dist
    return best
