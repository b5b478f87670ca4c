"""Pure-Python twins of the compiled kernels in ``_native.pyx``.

Same algorithm, pivot rule and tie-breaking as the compiled path.  Pricing
is vectorized with numpy; tree maintenance runs on Python lists.
"""
import math

import numpy as np

STATE_TREE = 0
STATE_LOWER = 1
DIR_UP = 1
DIR_DOWN = -1


def _pair_dist(X, Y, metric):
    diff = X[:, None, :] - Y[None, :, :]
    if metric == 1:
        return np.abs(diff).sum(axis=2)
    return np.sqrt((diff * diff).sum(axis=2))


def network_simplex(supply, demand, cost=None, xs=None, ys=None, metric=2, max_iter=-1,
                    order=None):
    """Solve a balanced transportation problem (see ``_native.network_simplex``)."""
    sup = np.ascontiguousarray(supply, dtype=np.float64)
    dem = np.ascontiguousarray(demand, dtype=np.float64)
    m, n = len(sup), len(dem)
    if cost is None:
        X = np.ascontiguousarray(xs, dtype=np.float64)
        Y = np.ascontiguousarray(ys, dtype=np.float64)
        C = _pair_dist(X, Y, metric)
    else:
        C = np.ascontiguousarray(cost, dtype=np.float64)
    max_cost = float(np.abs(C).max()) if C.size else 0.0
    scale = 1.0 / max_cost if max_cost > 0 else 1.0
    Cflat = (C * scale).ravel()

    N = m + n
    root = N
    narc = m * n
    ART = 2.0 * (N + 1)
    eps = 1e-12

    art_cost = [0.0] * N
    art_src = [root] * N
    art_tgt = list(range(N))

    def src(e):
        return e // n if e < narc else art_src[e - narc]

    def tgt(e):
        return m + e % n if e < narc else art_tgt[e - narc]

    def arc_cost(e):
        return float(Cflat[e]) if e < narc else art_cost[e - narc]

    flow = [0.0] * (narc + N)
    real_state = np.full(narc, STATE_LOWER, dtype=np.int8)
    pi = [0.0] * (N + 1)
    parent = [0] * (N + 1)
    pred = [0] * (N + 1)
    pred_dir = [0] * (N + 1)
    thread = [0] * (N + 1)
    rev_thread = [0] * (N + 1)
    succ_num = [1] * (N + 1)
    last_succ = [0] * (N + 1)
    parent[root] = -1
    pred[root] = -1

    if order is None:
        # all-artificial start: supplies drain to the root at cost 0, demands
        # are fed from the root at a prohibitive cost
        eps = 64.0 * 2.220446049250313e-16 * ART
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
            last_succ[u] = u
            if u < m:
                pred_dir[u] = DIR_UP
                art_src[u] = u
                art_tgt[u] = root
                flow[e] = float(sup[u])
            else:
                pred_dir[u] = DIR_DOWN
                pi[u] = ART
                flow[e] = float(dem[u - m])
                art_cost[u] = ART
    else:
        # greedy start; artificial arcs root -> u (cost 0) only hang the
        # forest's components off the root and never carry flow
        rs = sup.tolist()
        rd = dem.tolist()
        tiny = 1e-12 * float(sup.sum())
        bas = []
        left = N
        for e in np.asarray(order).tolist():
            if left <= 0:
                break
            i, j = divmod(e, n)
            if rs[i] <= 0.0 or rd[j] <= 0.0:
                continue
            f = min(rs[i], rd[j])
            flow[e] = f
            bas.append(e)
            rs[i] -= f
            rd[j] -= f
            if rs[i] <= tiny:
                rs[i] = 0.0
                left -= 1
            if rd[j] <= tiny:
                rd[j] = 0.0
                left -= 1
        # crumbs below 1e-9 of the total are rounding left by the greedy fill
        if left > 0 and max(max(rs), max(rd)) > 1e-9 * float(sup.sum()):
            raise ValueError("priority order does not cover a feasible basis")
        adj = [[] for _ in range(N + 1)]
        for e in bas:
            adj[src(e)].append(e)
            adj[tgt(e)].append(e)
            real_state[e] = STATE_TREE
        seen = [False] * (N + 1)
        seen[root] = True
        visit = [root]
        for c in range(N):
            if seen[c]:
                continue
            parent[c] = root
            pred[c] = narc + c
            pred_dir[c] = DIR_DOWN
            seen[c] = True
            stack = [c]
            while stack:
                u = stack.pop()
                visit.append(u)
                for e in adj[u]:
                    w = tgt(e) if src(e) == u else src(e)
                    if seen[w]:
                        continue
                    seen[w] = True
                    parent[w] = u
                    pred[w] = e
                    if src(e) == w:
                        pred_dir[w] = DIR_UP
                        pi[w] = pi[u] - arc_cost(e)
                    else:
                        pred_dir[w] = DIR_DOWN
                        pi[w] = pi[u] + arc_cost(e)
                    stack.append(w)
        for k in range(N + 1):
            nxt = visit[k + 1] if k < N else root
            thread[visit[k]] = nxt
            rev_thread[nxt] = visit[k]
        for u in reversed(visit[1:]):
            succ_num[parent[u]] += succ_num[u]
        for k, u in enumerate(visit):
            last_succ[u] = visit[k + succ_num[u] - 1]

    block = max(10, int(math.ceil(math.sqrt(narc))))
    block = min(block, narc)
    arc_src = np.repeat(np.arange(m), n)
    arc_tgt = np.tile(np.arange(n), m) + m
    next_arc = 0
    iterations = 0

    while max_iter < 0 or iterations < max_iter:
        # entering arc: block search, scanning blocks cyclically from next_arc
        pi_np = np.asarray(pi)
        min_c = 0.0
        in_arc = -1
        start = next_arc
        scanned = 0
        while scanned < narc:
            stop = min(start + block, narc)
            idx = slice(start, stop)
            st = real_state[idx]
            rc = st * (Cflat[idx] + pi_np[arc_src[idx]] - pi_np[arc_tgt[idx]])
            rc[st == STATE_TREE] = 0.0
            k = int(np.argmin(rc))
            if rc[k] < min_c:
                min_c = float(rc[k])
                in_arc = start + k
            scanned += stop - start
            start = 0 if stop == narc else stop
            if min_c < -eps:
                break
        if min_c >= -eps or in_arc < 0:
            break
        next_arc = start
        iterations += 1

        u = src(in_arc)
        v = tgt(in_arc)
        while u != v:
            if succ_num[u] < succ_num[v]:
                u = parent[u]
            else:
                v = parent[v]
        join = u

        # leaving arc, strongly feasible tie rule
        first, second = src(in_arc), tgt(in_arc)
        delta = math.inf
        result = 0
        u_out = -1
        u = first
        while u != join:
            if pred_dir[u] == DIR_UP and flow[pred[u]] < delta:
                delta = flow[pred[u]]
                u_out = u
                result = 1
            u = parent[u]
        u = second
        while u != join:
            if pred_dir[u] == DIR_DOWN and flow[pred[u]] <= delta:
                delta = flow[pred[u]]
                u_out = u
                result = 2
            u = parent[u]
        if result == 0:
            iterations = -iterations
            break
        if result == 1:
            u_in, v_in = first, second
        else:
            u_in, v_in = second, first

        if delta > 0:
            flow[in_arc] += delta
            u = src(in_arc)
            while u != join:
                flow[pred[u]] -= pred_dir[u] * delta
                u = parent[u]
            u = tgt(in_arc)
            while u != join:
                flow[pred[u]] += pred_dir[u] * delta
                u = parent[u]
        real_state[in_arc] = STATE_TREE
        out_arc = pred[u_out]
        flow[out_arc] = 0.0
        if out_arc < narc:
            real_state[out_arc] = STATE_LOWER

        # tree update
        old_rev_thread = rev_thread[u_out]
        old_succ_num = succ_num[u_out]
        old_last_succ = last_succ[u_out]
        v_out = parent[u_out]
        in_dir = DIR_UP if u_in == src(in_arc) else DIR_DOWN

        if u_in == u_out:
            parent[u_in] = v_in
            pred[u_in] = in_arc
            pred_dir[u_in] = in_dir
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
            thread_continue = thread[old_last_succ] if old_rev_thread == v_in else thread[v_in]
            stem = u_in
            par_stem = v_in
            last = last_succ[u_in]
            after = thread[last]
            thread[v_in] = u_in
            dirty = [v_in]
            while stem != u_out:
                next_stem = parent[stem]
                thread[last] = next_stem
                dirty.append(last)
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
            for w in dirty:
                rev_thread[thread[w]] = w
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
            pred_dir[u_in] = in_dir
            succ_num[u_in] = old_succ_num

        up_limit_out = join if last_succ[join] == v_in else -1
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

        sigma = pi[v_in] - pi[u_in] - pred_dir[u_in] * arc_cost(in_arc)
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

    rows, cols, vals = [], [], []
    art_res = 0.0
    for u in range(N):
        e = pred[u]
        if e < narc:
            if flow[e] > 0.0:
                rows.append(e // n)
                cols.append(e % n)
                vals.append(flow[e])
        else:
            art_res += flow[e]
    pi_np = np.asarray(pi)
    u_pot = pi_np[:m] / scale
    v_pot = pi_np[m:N] / scale
    return (np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp),
            np.asarray(vals, dtype=np.float64), u_pot, v_pot, iterations, art_res)


def _l1_point_seg(p, a, b):
    ts = [0.0, 1.0]
    for k in range(len(p)):
        diff = b[k] - a[k]
        if diff != 0.0:
            t = (p[k] - a[k]) / diff
            if 0.0 < t < 1.0:
                ts.append(t)
    return min(float(np.abs(a + t * (b - a) - p).sum()) for t in ts)


def _seg_seg_min(a0, a1, b0, b1, metric):
    u = a1 - a0
    v = b1 - b0
    r = a0 - b0
    if metric == 2:
        aa, ee = u @ u, v @ v
        ff, cc, bb = v @ r, u @ r, u @ v
        denom = aa * ee - bb * bb
        s = min(max((bb * ff - cc * ee) / denom, 0.0), 1.0) if denom > 1e-14 * aa * ee else 0.0
        t = (bb * s + ff) / ee
        if t < 0.0:
            t = 0.0
            s = min(max(-cc / aa, 0.0), 1.0)
        elif t > 1.0:
            t = 1.0
            s = min(max((bb - cc) / aa, 0.0), 1.0)
        return float(np.sqrt(np.sum((r + s * u - t * v) ** 2)))
    best = min(_l1_point_seg(a0, b0, b1), _l1_point_seg(a1, b0, b1),
               _l1_point_seg(b0, a0, a1), _l1_point_seg(b1, a0, a1))
    d = len(u)
    for k in range(d):
        for k2 in range(k + 1, d):
            det = -u[k] * v[k2] + v[k] * u[k2]
            if det == 0.0:
                continue
            s = (r[k] * v[k2] - v[k] * r[k2]) / det
            t = (-u[k] * r[k2] + u[k2] * r[k]) / det
            if 0.0 <= s <= 1.0 and 0.0 <= t <= 1.0:
                best = min(best, float(np.abs(r + s * u - t * v).sum()))
    return best


def segment_pair_extremes(A0, A1, B0, B1, metric):
    """Closest and farthest distances for every pair (A_i, B_j) of segments."""
    A0, A1, B0, B1 = (np.asarray(x, dtype=np.float64) for x in (A0, A1, B0, B1))
    ends = [_pair_dist(P, Q, metric) for P in (A0, A1) for Q in (B0, B1)]
    dmax = np.maximum.reduce(ends)
    dmin = np.empty_like(dmax)
    for i in range(len(A0)):
        for j in range(len(B0)):
            dmin[i, j] = _seg_seg_min(A0[i], A1[i], B0[j], B1[j], metric)
    return dmin, dmax
