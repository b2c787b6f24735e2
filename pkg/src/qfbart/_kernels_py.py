"""Pure-numpy kernel backend.

Mirrors the compiled extension's API exactly; selected at import time by
qfbart.kernels when the extension is unavailable or disabled.  Routing and
order statistics are bit-identical to the compiled backend; floating-point
reductions may differ by summation order at the 1e-13 level.
"""

import math

import numpy as np

BACKEND = "python"


def _prop_scale(s, lr, cnt, spread):
    # risk-curvature width, capped at the prior scale; empty leaves
    # propose from the prior so the importance correction cancels
    if cnt == 0:
        return s
    return min(s, math.sqrt(2.0 * spread / (lr * cnt)) + 1.0 / (lr * cnt))


def _log_corr_term(v, c, s, sp):
    # log N(v; 0, s) - log N(v; c, sp)
    a = v / s
    b = (v - c) / sp
    return -0.5 * a * a - math.log(s) + 0.5 * b * b + math.log(sp)


def grow_route_eval(ubuf, ui, nbuf, ni, alpha, beta, max_depth, s, lr,
                    pool_values, pool_ptr, avail, Z, resid, taus,
                    feature, threshold, left, right, ord_of_node, leaf_ord,
                    values, centers, sp, grouped, gwork, pos, cursor, counts,
                    tausum, spreads, snode, sdepth):
    """Grow a candidate from the structure prior (consuming ubuf/nbuf),
    route the rows, compute leaf proposal stats, draw leaf values, and
    return (num_nodes, num_leaves, ui, ni, loss, corr).  num_nodes = -1
    signals the node budget was exhausted."""
    maxn = feature.shape[0]
    A = avail.shape[0]
    feature[0] = -1
    left[0] = -1
    right[0] = -1
    threshold[0] = 0.0
    nn = 1
    stack = [(0, 0)]
    while stack:
        node, depth = stack.pop()
        if A == 0 or (max_depth >= 0 and depth >= max_depth):
            continue
        p_split = alpha * (1.0 + depth) ** (-beta)
        u = ubuf[ui]
        ui += 1
        if u >= p_split:
            continue
        if nn + 2 > maxn:
            return -1, 0, ui, ni, 0.0, 0.0
        fi = min(int(ubuf[ui] * A), A - 1)
        ui += 1
        f = int(avail[fi])
        psize = int(pool_ptr[f + 1] - pool_ptr[f])
        i = min(int(ubuf[ui] * psize), psize - 1)
        ui += 1
        feature[node] = f
        threshold[node] = pool_values[pool_ptr[f] + i]
        left[node] = nn
        right[node] = nn + 1
        feature[nn : nn + 2] = -1
        left[nn : nn + 2] = -1
        right[nn : nn + 2] = -1
        threshold[nn : nn + 2] = 0.0
        stack.append((nn + 1, depth + 1))
        stack.append((nn, depth + 1))
        nn += 2

    leaf_mask = feature[:nn] < 0
    L = int(np.count_nonzero(leaf_mask))
    ord_of_node[:nn] = -1
    ord_of_node[:nn][leaf_mask] = np.arange(L, dtype=np.int32)
    leaf_ord[:] = route_ordinals(
        feature[:nn], threshold[:nn], left[:nn], right[:nn], ord_of_node[:nn], Z
    )
    cnts, ts, ctr, spr = leaf_stats(leaf_ord, L, resid, taus)
    counts[:L] = cnts
    tausum[:L] = ts
    centers[:L] = ctr
    spreads[:L] = spr
    corr = 0.0
    for l in range(L):
        sp[l] = _prop_scale(s, lr, int(counts[l]), spreads[l])
        values[l] = centers[l] + sp[l] * nbuf[ni]
        ni += 1
        corr += _log_corr_term(values[l], centers[l], s, sp[l])
    loss = loss_given_values(leaf_ord, values[:L], resid, taus)
    return nn, L, ui, ni, loss, corr


def eval_reference(leaf_ord, L, leaf_values, s, lr, resid, taus, centers, sp,
                   grouped, gwork, pos, cursor, counts, tausum, spreads):
    """Loss and importance correction for the retained tree, as if it had
    been proposed fresh against the current residuals.  Fills centers and
    sp for reuse by the refresh pass."""
    cnts, ts, ctr, spr = leaf_stats(leaf_ord, L, resid, taus)
    counts[:L] = cnts
    tausum[:L] = ts
    centers[:L] = ctr
    spreads[:L] = spr
    corr = 0.0
    for l in range(L):
        sp[l] = _prop_scale(s, lr, int(counts[l]), spreads[l])
        corr += _log_corr_term(leaf_values[l], centers[l], s, sp[l])
    loss = loss_given_values(leaf_ord, leaf_values[:L], resid, taus)
    return loss, corr


def refresh_leaves(leaf_ord, L, values, new_values, centers, sp, s, lr,
                   resid, taus, ubuf, ui, nbuf, ni, loss_cur, loss_prop):
    """One independence-Metropolis pass over leaf values with proposal
    N(center, sp).  Writes accepted-or-kept values into new_values;
    returns (num_accepted, ui, ni)."""
    new_values[:L] = centers[:L] + sp[:L] * nbuf[ni : ni + L]
    ni += L
    loss_cur[:L] = per_leaf_losses(leaf_ord, L, values[:L], resid, taus)
    loss_prop[:L] = per_leaf_losses(leaf_ord, L, new_values[:L], resid, taus)
    log_acc = (
        -lr * (loss_prop[:L] - loss_cur[:L])
        - 0.5 * (new_values[:L] ** 2 - values[:L] ** 2) / (s * s)
        + 0.5
        * ((new_values[:L] - centers[:L]) ** 2 - (values[:L] - centers[:L]) ** 2)
        / (sp[:L] * sp[:L])
    )
    keep = np.log(ubuf[ui : ui + L]) >= log_acc
    ui += L
    new_values[:L][keep] = values[:L][keep]
    return int(L - np.count_nonzero(keep)), ui, ni


def route_ordinals(feature, threshold, left, right, ord_of_node, Z):
    """Leaf ordinal reached by each row of the augmented matrix Z."""
    n = Z.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero(feature[node] >= 0)
    while active.size:
        nd = node[active]
        f = feature[nd]
        go_left = Z[active, f] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = active[feature[node[active]] >= 0]
    return ord_of_node[node].astype(np.int32)


def leaf_stats(leaf_ord, num_leaves, resid, taus):
    """Per-leaf (count, sum of tau, proposal center, residual spread).

    The center is the empirical minimizer of the leaf's check risk: the
    ceil(sum tau)-th order statistic of its residuals.  Leaves with fewer
    than 4 rows fall back to the residual mean; empty leaves center at 0.
    The spread is max - min of the leaf's residuals (0 when empty).
    """
    counts = np.bincount(leaf_ord, minlength=num_leaves).astype(np.int64)
    tausum = np.bincount(leaf_ord, weights=taus, minlength=num_leaves)
    centers = np.zeros(num_leaves)
    spreads = np.zeros(num_leaves)
    order = np.argsort(leaf_ord, kind="stable")
    grouped = resid[order]
    stops = np.cumsum(counts)
    for l in range(num_leaves):
        c = int(counts[l])
        if c == 0:
            continue
        seg = grouped[stops[l] - c : stops[l]]
        spreads[l] = seg.max() - seg.min()
        if c < 4:
            centers[l] = seg.mean()
        else:
            k = int(np.ceil(tausum[l]))
            k = min(max(k, 1), c)
            centers[l] = np.partition(seg, k - 1)[k - 1]
    return counts, tausum, centers, spreads


def loss_given_values(leaf_ord, values, resid, taus):
    """Total check loss when each row's fit is its leaf's value."""
    u = resid - values[leaf_ord]
    return float(np.sum(u * (taus - (u < 0.0))))


def per_leaf_losses(leaf_ord, num_leaves, values, resid, taus):
    """Check loss split by leaf, for per-leaf acceptance decisions."""
    u = resid - values[leaf_ord]
    return np.bincount(leaf_ord, weights=u * (taus - (u < 0.0)), minlength=num_leaves)


def _accumulate_tree(feature, threshold, left, right, value, base, x, d, grid, delta):
    # restrict one tree to fixed x: a step function over tau intervals
    # (lo, hi]; splits route "<= threshold goes left"
    stack = [(0, 0.0, 1.0)]
    while stack:
        node, lo, hi = stack.pop()
        f = feature[base + node]
        if f < 0:
            i0 = np.searchsorted(grid, lo, side="right")
            i1 = np.searchsorted(grid, hi, side="right")
            v = value[base + node]
            delta[i0] += v
            delta[i1] -= v
            continue
        t = threshold[base + node]
        l = int(left[base + node])
        r = int(right[base + node])
        if f < d:
            stack.append((l if x[f] <= t else r, lo, hi))
        elif t >= hi:
            stack.append((l, lo, hi))
        elif t <= lo:
            stack.append((r, lo, hi))
        else:
            stack.append((l, lo, t))
            stack.append((r, t, hi))


def profile_eval(feature, threshold, left, right, value, tree_ptr, draw_ptr, x, grid):
    """Forest values at fixed x over a sorted tau grid, one row per draw."""
    d = x.shape[0]
    M = draw_ptr.shape[0] - 1
    G = grid.shape[0]
    out = np.empty((M, G))
    for m in range(M):
        delta = np.zeros(G + 1)
        for t in range(draw_ptr[m], draw_ptr[m + 1]):
            _accumulate_tree(
                feature, threshold, left, right, value, tree_ptr[t], x, d, grid, delta
            )
        out[m] = np.cumsum(delta[:G])
    return out


def pooled_eval(
    feature, threshold, left, right, value, tree_ptr, draw_ptr, x, us, group_ptr
):
    """Per-draw forest values at fixed x; us holds tau points grouped by
    draw (sorted within each group), group_ptr the per-draw offsets."""
    d = x.shape[0]
    M = draw_ptr.shape[0] - 1
    out = np.empty(us.shape[0])
    for m in range(M):
        g0, g1 = int(group_ptr[m]), int(group_ptr[m + 1])
        if g0 == g1:
            continue
        grid = us[g0:g1]
        delta = np.zeros(g1 - g0 + 1)
        for t in range(draw_ptr[m], draw_ptr[m + 1]):
            _accumulate_tree(
                feature, threshold, left, right, value, tree_ptr[t], x, d, grid, delta
            )
        out[g0:g1] = np.cumsum(delta[: g1 - g0])
    return out


def point_eval(feature, threshold, left, right, value, tree_ptr, draw_ptr, x, tau):
    """Each draw's forest evaluated at a single (x, tau)."""
    d = x.shape[0]
    M = draw_ptr.shape[0] - 1
    out = np.zeros(M)
    for m in range(M):
        acc = 0.0
        for t in range(draw_ptr[m], draw_ptr[m + 1]):
            base = tree_ptr[t]
            node = 0
            while feature[base + node] >= 0:
                f = feature[base + node]
                zf = tau if f == d else x[f]
                if zf <= threshold[base + node]:
                    node = int(left[base + node])
                else:
                    node = int(right[base + node])
            acc += value[base + node]
        out[m] = acc
    return out
