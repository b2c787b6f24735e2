# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend.

Same API and semantics as _kernels_py; routing and order statistics are
bit-identical, floating-point reductions may differ by summation order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, log, sqrt

cnp.import_array()

BACKEND = "compiled"


cdef double _prop_scale(double s, double lr, cnp.int64_t cnt,
                        double spread) noexcept nogil:
    # risk-curvature width, capped at the prior scale; empty leaves
    # propose from the prior so the importance correction cancels
    cdef double w
    if cnt == 0:
        return s
    w = sqrt(2.0 * spread / (lr * cnt)) + 1.0 / (lr * cnt)
    if w < s:
        return w
    return s


cdef double _log_corr_term(double v, double c, double s,
                           double sp) noexcept nogil:
    # log N(v; 0, s) - log N(v; c, sp)
    cdef double a = v / s
    cdef double b = (v - c) / sp
    return -0.5 * a * a - log(s) + 0.5 * b * b + log(sp)


cdef double _check_loss_sum(cnp.int32_t* leaf_ord, Py_ssize_t n,
                            double* resid, double* taus,
                            double* values) noexcept nogil:
    # four accumulators so the adds pipeline instead of serializing
    cdef Py_ssize_t i = 0
    cdef double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0, u
    while i + 4 <= n:
        u = resid[i] - values[leaf_ord[i]]
        l0 += u * taus[i] - (u if u < 0.0 else 0.0)
        u = resid[i + 1] - values[leaf_ord[i + 1]]
        l1 += u * taus[i + 1] - (u if u < 0.0 else 0.0)
        u = resid[i + 2] - values[leaf_ord[i + 2]]
        l2 += u * taus[i + 2] - (u if u < 0.0 else 0.0)
        u = resid[i + 3] - values[leaf_ord[i + 3]]
        l3 += u * taus[i + 3] - (u if u < 0.0 else 0.0)
        i += 4
    while i < n:
        u = resid[i] - values[leaf_ord[i]]
        l0 += u * taus[i] - (u if u < 0.0 else 0.0)
        i += 1
    return (l0 + l1) + (l2 + l3)


cdef void _scatter_select_core(cnp.int32_t* leaf_ord, Py_ssize_t n,
                               Py_ssize_t L, double* resid, double* grouped,
                               double* gwork, cnp.int64_t* pos,
                               cnp.int64_t* cursor, cnp.int64_t* counts,
                               double* tausum, double* centers,
                               double* spreads) noexcept nogil:
    # counts and tausum must already be accumulated; gwork is select
    # scratch of the same length as grouped
    cdef Py_ssize_t i, l, c, k, start
    cdef double s, mn, mx
    pos[0] = 0
    for l in range(L):
        pos[l + 1] = pos[l] + counts[l]
        cursor[l] = pos[l]
    for i in range(n):
        l = leaf_ord[i]
        grouped[cursor[l]] = resid[i]
        cursor[l] += 1
    for l in range(L):
        c = counts[l]
        if c == 0:
            centers[l] = 0.0
            spreads[l] = 0.0
            continue
        start = pos[l]
        if c < 4:
            mn = grouped[start]
            mx = grouped[start]
            s = grouped[start]
            for i in range(start + 1, start + c):
                mn = grouped[i] if grouped[i] < mn else mn
                mx = grouped[i] if grouped[i] > mx else mx
                s += grouped[i]
            centers[l] = s / c
            spreads[l] = mx - mn
        else:
            k = <Py_ssize_t>ceil(tausum[l])
            if k < 1:
                k = 1
            if k > c:
                k = c
            centers[l] = _select_minmax(&grouped[start], &gwork[start], c,
                                        k - 1, &mn, &mx)
            spreads[l] = mx - mn


cdef void _stats_core(cnp.int32_t* leaf_ord, Py_ssize_t n, Py_ssize_t L,
                      double* resid, double* taus, double* grouped,
                      double* gwork, cnp.int64_t* pos, cnp.int64_t* cursor,
                      cnp.int64_t* counts, double* tausum, double* centers,
                      double* spreads) noexcept nogil:
    cdef Py_ssize_t i, l
    for l in range(L):
        counts[l] = 0
        tausum[l] = 0.0
    for i in range(n):
        counts[leaf_ord[i]] += 1
        tausum[leaf_ord[i]] += taus[i]
    _scatter_select_core(leaf_ord, n, L, resid, grouped, gwork, pos, cursor,
                         counts, tausum, centers, spreads)


def grow_route_eval(double[::1] ubuf, Py_ssize_t ui,
                    double[::1] nbuf, Py_ssize_t ni,
                    double alpha, double beta, long max_depth,
                    double s, double lr,
                    double[::1] pool_values, cnp.int64_t[::1] pool_ptr,
                    cnp.int32_t[::1] avail,
                    double[:, ::1] Z, double[::1] resid, double[::1] taus,
                    cnp.int32_t[::1] feature, double[::1] threshold,
                    cnp.int32_t[::1] left, cnp.int32_t[::1] right,
                    cnp.int32_t[::1] ord_of_node,
                    cnp.int32_t[::1] leaf_ord,
                    double[::1] values, double[::1] centers, double[::1] sp,
                    double[::1] grouped, double[::1] gwork,
                    cnp.int64_t[::1] pos,
                    cnp.int64_t[::1] cursor, cnp.int64_t[::1] counts,
                    double[::1] tausum, double[::1] spreads,
                    cnp.int32_t[::1] snode, cnp.int32_t[::1] sdepth):
    """Grow a candidate from the structure prior (consuming ubuf/nbuf),
    route the rows, compute leaf proposal stats, draw leaf values, and
    return (num_nodes, num_leaves, ui, ni, loss, corr).  num_nodes = -1
    signals the node budget was exhausted."""
    cdef Py_ssize_t maxn = feature.shape[0]
    cdef Py_ssize_t n = Z.shape[0]
    cdef Py_ssize_t A = avail.shape[0]
    cdef Py_ssize_t nn = 0, top = 0, L = 0
    cdef Py_ssize_t node, i, l, f, fi, psize
    cdef int depth
    cdef double p_split, u, loss, corr, uu
    with nogil:
        # structure growth, depth-first, left child processed first
        feature[0] = -1
        left[0] = -1
        right[0] = -1
        threshold[0] = 0.0
        nn = 1
        snode[0] = 0
        sdepth[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = snode[top]
            depth = sdepth[top]
            if A == 0 or (max_depth >= 0 and depth >= max_depth):
                continue
            p_split = alpha * (1.0 + depth) ** (-beta)
            u = ubuf[ui]
            ui += 1
            if u >= p_split:
                continue
            if nn + 2 > maxn:
                nn = -1
                break
            uu = ubuf[ui]
            ui += 1
            fi = <Py_ssize_t>(uu * A)
            if fi > A - 1:
                fi = A - 1
            f = avail[fi]
            psize = pool_ptr[f + 1] - pool_ptr[f]
            uu = ubuf[ui]
            ui += 1
            i = <Py_ssize_t>(uu * psize)
            if i > psize - 1:
                i = psize - 1
            feature[node] = <cnp.int32_t>f
            threshold[node] = pool_values[pool_ptr[f] + i]
            left[node] = <cnp.int32_t>nn
            right[node] = <cnp.int32_t>(nn + 1)
            feature[nn] = -1
            left[nn] = -1
            right[nn] = -1
            threshold[nn] = 0.0
            feature[nn + 1] = -1
            left[nn + 1] = -1
            right[nn + 1] = -1
            threshold[nn + 1] = 0.0
            snode[top] = <cnp.int32_t>(nn + 1)
            sdepth[top] = depth + 1
            snode[top + 1] = <cnp.int32_t>nn
            sdepth[top + 1] = depth + 1
            top += 2
            nn += 2
        if nn > 0:
            L = 0
            for i in range(nn):
                if feature[i] < 0:
                    ord_of_node[i] = <cnp.int32_t>L
                    L += 1
                else:
                    ord_of_node[i] = -1
            for l in range(L):
                counts[l] = 0
                tausum[l] = 0.0
            # route, accumulating leaf counts and tau sums in the same pass
            for i in range(n):
                node = 0
                f = feature[node]
                while f >= 0:
                    node = left[node] if Z[i, f] <= threshold[node] else right[node]
                    f = feature[node]
                l = ord_of_node[node]
                leaf_ord[i] = <cnp.int32_t>l
                counts[l] += 1
                tausum[l] += taus[i]
            _scatter_select_core(&leaf_ord[0], n, L, &resid[0], &grouped[0],
                                 &gwork[0], &pos[0], &cursor[0], &counts[0],
                                 &tausum[0], &centers[0], &spreads[0])
            corr = 0.0
            for l in range(L):
                sp[l] = _prop_scale(s, lr, counts[l], spreads[l])
                values[l] = centers[l] + sp[l] * nbuf[ni]
                ni += 1
                corr += _log_corr_term(values[l], centers[l], s, sp[l])
            loss = _check_loss_sum(&leaf_ord[0], n, &resid[0], &taus[0],
                                   &values[0])
    if nn < 0:
        return -1, 0, ui, ni, 0.0, 0.0
    return nn, L, ui, ni, loss, corr


def eval_reference(cnp.int32_t[::1] leaf_ord, Py_ssize_t L,
                   double[::1] leaf_values, double s, double lr,
                   double[::1] resid, double[::1] taus,
                   double[::1] centers, double[::1] sp,
                   double[::1] grouped, double[::1] gwork,
                   cnp.int64_t[::1] pos,
                   cnp.int64_t[::1] cursor, cnp.int64_t[::1] counts,
                   double[::1] tausum, double[::1] spreads):
    """Loss and importance correction for the retained tree, as if it had
    been proposed fresh against the current residuals.  Fills centers and
    sp for reuse by the refresh pass."""
    cdef Py_ssize_t n = leaf_ord.shape[0]
    cdef Py_ssize_t l
    cdef double loss = 0.0, corr = 0.0
    with nogil:
        _stats_core(&leaf_ord[0], n, L, &resid[0], &taus[0], &grouped[0],
                    &gwork[0], &pos[0], &cursor[0], &counts[0], &tausum[0],
                    &centers[0], &spreads[0])
        for l in range(L):
            sp[l] = _prop_scale(s, lr, counts[l], spreads[l])
            corr += _log_corr_term(leaf_values[l], centers[l], s, sp[l])
        loss = _check_loss_sum(&leaf_ord[0], n, &resid[0], &taus[0],
                               &leaf_values[0])
    return loss, corr


def refresh_leaves(cnp.int32_t[::1] leaf_ord, Py_ssize_t L,
                   double[::1] values, double[::1] new_values,
                   double[::1] centers, double[::1] sp,
                   double s, double lr,
                   double[::1] resid, double[::1] taus,
                   double[::1] ubuf, Py_ssize_t ui,
                   double[::1] nbuf, Py_ssize_t ni,
                   double[::1] loss_cur, double[::1] loss_prop):
    """One independence-Metropolis pass over leaf values with proposal
    N(center, sp).  Writes accepted-or-kept values into new_values;
    returns (num_accepted, ui, ni)."""
    cdef Py_ssize_t n = leaf_ord.shape[0]
    cdef Py_ssize_t i, l
    cdef Py_ssize_t acc = 0
    cdef double u, la, a, b
    with nogil:
        for l in range(L):
            new_values[l] = centers[l] + sp[l] * nbuf[ni]
            ni += 1
            loss_cur[l] = 0.0
            loss_prop[l] = 0.0
        for i in range(n):
            l = leaf_ord[i]
            u = resid[i] - values[l]
            loss_cur[l] += u * taus[i] - (u if u < 0.0 else 0.0)
            u = resid[i] - new_values[l]
            loss_prop[l] += u * taus[i] - (u if u < 0.0 else 0.0)
        for l in range(L):
            a = new_values[l]
            b = values[l]
            la = (-lr * (loss_prop[l] - loss_cur[l])
                  - 0.5 * (a * a - b * b) / (s * s)
                  + 0.5 * ((a - centers[l]) ** 2 - (b - centers[l]) ** 2)
                  / (sp[l] * sp[l]))
            u = ubuf[ui]
            ui += 1
            if log(u) < la:
                acc += 1
            else:
                new_values[l] = values[l]
    return acc, ui, ni


def route_ordinals(cnp.int32_t[::1] feature, double[::1] threshold,
                   cnp.int32_t[::1] left, cnp.int32_t[::1] right,
                   cnp.int32_t[::1] ord_of_node, double[:, ::1] Z):
    cdef Py_ssize_t n = Z.shape[0]
    out_arr = np.empty(n, dtype=np.int32)
    cdef cnp.int32_t[::1] out = out_arr
    cdef Py_ssize_t i
    cdef int node, f
    with nogil:
        for i in range(n):
            node = 0
            f = feature[node]
            while f >= 0:
                node = left[node] if Z[i, f] <= threshold[node] else right[node]
                f = feature[node]
            out[i] = ord_of_node[node]
    return out_arr


cdef double _ins_select(double* a, Py_ssize_t n, Py_ssize_t k) noexcept nogil:
    # insertion-sort a in place; only called for small n
    cdef Py_ssize_t i, j
    cdef double tmp
    for i in range(1, n):
        tmp = a[i]
        j = i
        while j > 0 and a[j - 1] > tmp:
            a[j] = a[j - 1]
            j -= 1
        a[j] = tmp
    return a[k]


cdef inline double _med3(double a, double b, double c) noexcept nogil:
    cdef double lo = a if a < b else b
    cdef double hi = b if a < b else a
    if c < lo:
        return lo
    if c > hi:
        return hi
    return c


cdef double _select_core(double* src, double* dst, Py_ssize_t n,
                         Py_ssize_t k) noexcept nogil:
    """k-th smallest (0-based).  Both buffers are scratch and ping-pong
    between levels.

    The partition is branchless: every element is written to both cursor
    positions and the cursors advance by comparison results, so the cost
    is immune to the data-dependent branch misses that make in-place
    quickselect slow on fresh data each call.  Elements equal to the
    pivot land in the dead middle, so each level strictly shrinks.
    """
    cdef Py_ssize_t lo, hi, i
    cdef double x, pivot
    cdef double* swp
    while n >= 16:
        pivot = _med3(src[0], src[n >> 1], src[n - 1])
        lo = 0
        hi = n - 1
        for i in range(n):
            x = src[i]
            dst[lo] = x
            dst[hi] = x
            lo += x < pivot
            hi -= x > pivot
        if k < lo:
            n = lo
        elif k > hi:
            src += hi + 1
            dst += hi + 1
            k -= hi + 1
            n -= hi + 1
        else:
            return pivot
        swp = src
        src = dst
        dst = swp
    return _ins_select(src, n, k)


cdef double _select_minmax(double* src, double* dst, Py_ssize_t n,
                           Py_ssize_t k, double* mnp,
                           double* mxp) noexcept nogil:
    # _select_core whose first sweep also reduces min and max, saving a
    # separate pass over the leaf
    cdef Py_ssize_t lo, hi, i
    cdef double x, y, pivot, mn0, mx0, mn1, mx1
    mn0 = src[0]
    mx0 = src[0]
    if n < 16:
        for i in range(1, n):
            x = src[i]
            mn0 = x if x < mn0 else mn0
            mx0 = x if x > mx0 else mx0
        mnp[0] = mn0
        mxp[0] = mx0
        return _ins_select(src, n, k)
    mn1 = src[n - 1]
    mx1 = src[n - 1]
    pivot = _med3(src[0], src[n >> 1], src[n - 1])
    lo = 0
    hi = n - 1
    i = 0
    while i + 1 < n:
        x = src[i]
        y = src[i + 1]
        mn0 = x if x < mn0 else mn0
        mx0 = x if x > mx0 else mx0
        mn1 = y if y < mn1 else mn1
        mx1 = y if y > mx1 else mx1
        dst[lo] = x
        dst[hi] = x
        lo += x < pivot
        hi -= x > pivot
        dst[lo] = y
        dst[hi] = y
        lo += y < pivot
        hi -= y > pivot
        i += 2
    if i < n:
        x = src[i]
        mn0 = x if x < mn0 else mn0
        mx0 = x if x > mx0 else mx0
        dst[lo] = x
        dst[hi] = x
        lo += x < pivot
        hi -= x > pivot
    mnp[0] = mn0 if mn0 < mn1 else mn1
    mxp[0] = mx0 if mx0 > mx1 else mx1
    if k < lo:
        return _select_core(dst, src, lo, k)
    if k > hi:
        return _select_core(dst + hi + 1, src + hi + 1, n - hi - 1, k - hi - 1)
    return pivot


def leaf_stats(cnp.int32_t[::1] leaf_ord, Py_ssize_t num_leaves,
               double[::1] resid, double[::1] taus):
    cdef Py_ssize_t n = leaf_ord.shape[0]
    counts_arr = np.empty(num_leaves, dtype=np.int64)
    tausum_arr = np.empty(num_leaves)
    centers_arr = np.empty(num_leaves)
    spreads_arr = np.empty(num_leaves)
    grouped_arr = np.empty(n)
    gwork_arr = np.empty(n)
    pos_arr = np.empty(num_leaves + 1, dtype=np.int64)
    cursor_arr = np.empty(num_leaves, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef double[::1] tausum = tausum_arr
    cdef double[::1] centers = centers_arr
    cdef double[::1] spreads = spreads_arr
    cdef double[::1] grouped = grouped_arr
    cdef double[::1] gwork = gwork_arr
    cdef cnp.int64_t[::1] pos = pos_arr
    cdef cnp.int64_t[::1] cursor = cursor_arr
    with nogil:
        _stats_core(&leaf_ord[0], n, num_leaves, &resid[0], &taus[0],
                    &grouped[0], &gwork[0], &pos[0], &cursor[0], &counts[0],
                    &tausum[0], &centers[0], &spreads[0])
    return counts_arr, tausum_arr, centers_arr, spreads_arr


def loss_given_values(cnp.int32_t[::1] leaf_ord, double[::1] values,
                      double[::1] resid, double[::1] taus):
    cdef Py_ssize_t n = leaf_ord.shape[0]
    cdef double acc
    with nogil:
        acc = _check_loss_sum(&leaf_ord[0], n, &resid[0], &taus[0],
                              &values[0])
    return acc


def per_leaf_losses(cnp.int32_t[::1] leaf_ord, Py_ssize_t num_leaves,
                    double[::1] values, double[::1] resid, double[::1] taus):
    out_arr = np.zeros(num_leaves)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, n = leaf_ord.shape[0]
    cdef double u
    with nogil:
        for i in range(n):
            u = resid[i] - values[leaf_ord[i]]
            out[leaf_ord[i]] += u * taus[i] - (u if u < 0.0 else 0.0)
    return out_arr


cdef Py_ssize_t _bisect_right(double* grid, Py_ssize_t G, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = G, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if grid[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef void _accumulate_tree(cnp.int32_t[::1] feature, double[::1] threshold,
                           cnp.int32_t[::1] left, cnp.int32_t[::1] right,
                           double[::1] value, cnp.int64_t base, double[::1] x,
                           Py_ssize_t d, double* grid, Py_ssize_t G,
                           double* delta, cnp.int32_t* snode, double* slo,
                           double* shi) noexcept nogil:
    # restrict one tree to fixed x: a step function over tau intervals
    # (lo, hi]; splits route "<= threshold goes left"
    cdef Py_ssize_t top = 1, node, i0, i1
    cdef int f
    cdef double lo, hi, t, v
    snode[0] = 0
    slo[0] = 0.0
    shi[0] = 1.0
    while top > 0:
        top -= 1
        node = snode[top]
        lo = slo[top]
        hi = shi[top]
        f = feature[base + node]
        if f < 0:
            v = value[base + node]
            i0 = _bisect_right(grid, G, lo)
            i1 = _bisect_right(grid, G, hi)
            delta[i0] += v
            delta[i1] -= v
            continue
        t = threshold[base + node]
        if f < d:
            if x[f] <= t:
                snode[top] = left[base + node]
            else:
                snode[top] = right[base + node]
            slo[top] = lo
            shi[top] = hi
            top += 1
        elif t >= hi:
            snode[top] = left[base + node]
            slo[top] = lo
            shi[top] = hi
            top += 1
        elif t <= lo:
            snode[top] = right[base + node]
            slo[top] = lo
            shi[top] = hi
            top += 1
        else:
            snode[top] = right[base + node]
            slo[top] = t
            shi[top] = hi
            top += 1
            snode[top] = left[base + node]
            slo[top] = lo
            shi[top] = t
            top += 1


def _max_tree_nodes(cnp.int64_t[::1] tree_ptr):
    cdef Py_ssize_t t, m = 1, nt = tree_ptr.shape[0] - 1
    for t in range(nt):
        if tree_ptr[t + 1] - tree_ptr[t] > m:
            m = tree_ptr[t + 1] - tree_ptr[t]
    return m


def profile_eval(cnp.int32_t[::1] feature, double[::1] threshold,
                 cnp.int32_t[::1] left, cnp.int32_t[::1] right,
                 double[::1] value, cnp.int64_t[::1] tree_ptr,
                 cnp.int64_t[::1] draw_ptr, double[::1] x, double[::1] grid):
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t M = draw_ptr.shape[0] - 1
    cdef Py_ssize_t G = grid.shape[0]
    cdef Py_ssize_t maxn = _max_tree_nodes(tree_ptr)
    out_arr = np.empty((M, G))
    delta_arr = np.zeros(G + 1)
    snode_arr = np.empty(maxn + 1, dtype=np.int32)
    slo_arr = np.empty(maxn + 1)
    shi_arr = np.empty(maxn + 1)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] delta = delta_arr
    cdef cnp.int32_t[::1] snode = snode_arr
    cdef double[::1] slo = slo_arr
    cdef double[::1] shi = shi_arr
    cdef Py_ssize_t m, g
    cdef cnp.int64_t t
    cdef double acc
    with nogil:
        for m in range(M):
            for g in range(G + 1):
                delta[g] = 0.0
            for t in range(draw_ptr[m], draw_ptr[m + 1]):
                _accumulate_tree(feature, threshold, left, right, value,
                                 tree_ptr[t], x, d, &grid[0], G, &delta[0],
                                 &snode[0], &slo[0], &shi[0])
            acc = 0.0
            for g in range(G):
                acc += delta[g]
                out[m, g] = acc
    return out_arr


def pooled_eval(cnp.int32_t[::1] feature, double[::1] threshold,
                cnp.int32_t[::1] left, cnp.int32_t[::1] right,
                double[::1] value, cnp.int64_t[::1] tree_ptr,
                cnp.int64_t[::1] draw_ptr, double[::1] x, double[::1] us,
                cnp.int64_t[::1] group_ptr):
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t M = draw_ptr.shape[0] - 1
    cdef Py_ssize_t total = us.shape[0]
    cdef Py_ssize_t maxn = _max_tree_nodes(tree_ptr)
    cdef Py_ssize_t maxg = 0, m
    for m in range(M):
        if group_ptr[m + 1] - group_ptr[m] > maxg:
            maxg = group_ptr[m + 1] - group_ptr[m]
    out_arr = np.empty(total)
    delta_arr = np.zeros(maxg + 1)
    snode_arr = np.empty(maxn + 1, dtype=np.int32)
    slo_arr = np.empty(maxn + 1)
    shi_arr = np.empty(maxn + 1)
    cdef double[::1] out = out_arr
    cdef double[::1] delta = delta_arr
    cdef cnp.int32_t[::1] snode = snode_arr
    cdef double[::1] slo = slo_arr
    cdef double[::1] shi = shi_arr
    cdef Py_ssize_t g0, g1, G, g
    cdef cnp.int64_t t
    cdef double acc
    if total == 0:
        return out_arr
    with nogil:
        for m in range(M):
            g0 = group_ptr[m]
            g1 = group_ptr[m + 1]
            G = g1 - g0
            if G == 0:
                continue
            for g in range(G + 1):
                delta[g] = 0.0
            for t in range(draw_ptr[m], draw_ptr[m + 1]):
                _accumulate_tree(feature, threshold, left, right, value,
                                 tree_ptr[t], x, d, &us[g0], G, &delta[0],
                                 &snode[0], &slo[0], &shi[0])
            acc = 0.0
            for g in range(G):
                acc += delta[g]
                out[g0 + g] = acc
    return out_arr


def point_eval(cnp.int32_t[::1] feature, double[::1] threshold,
               cnp.int32_t[::1] left, cnp.int32_t[::1] right,
               double[::1] value, cnp.int64_t[::1] tree_ptr,
               cnp.int64_t[::1] draw_ptr, double[::1] x, double tau):
    cdef Py_ssize_t d = x.shape[0]
    cdef Py_ssize_t M = draw_ptr.shape[0] - 1
    out_arr = np.zeros(M)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t m, node
    cdef cnp.int64_t t, base
    cdef int f
    cdef double acc, zf
    with nogil:
        for m in range(M):
            acc = 0.0
            for t in range(draw_ptr[m], draw_ptr[m + 1]):
                base = tree_ptr[t]
                node = 0
                f = feature[base]
                while f >= 0:
                    if f == d:
                        zf = tau
                    else:
                        zf = x[f]
                    if zf <= threshold[base + node]:
                        node = left[base + node]
                    else:
                        node = right[base + node]
                    f = feature[base + node]
                acc += value[base + node]
            out[m] = acc
    return out_arr
