"""Quantile-level data augmentation and the forest sampler.

The posterior is a Gibbs posterior: exp(-learning_rate * total check loss)
times the forest prior.  Check loss does not decompose additively over
trees, so each tree update re-evaluates the full-forest loss with that
tree swapped out, using cached partial sums (cost O(rows) per update).

Tree updates use conditional importance sampling: fresh candidates are
grown from the structure prior with leaf values proposed from a Gaussian
centered at each leaf's empirical check-risk minimizer, the retained tree
enters the pool as the reference particle, and every particle is weighted
by generalized likelihood times an importance correction (structure terms
cancel for prior-grown candidates).  Selecting from these weights leaves
the target invariant; optional per-leaf independence Metropolis refreshes
sharpen leaf values afterward.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .forest import SplitPools, Tree, TreePriorConfig

__all__ = [
    "AugmentationScheme",
    "AugmentedDataset",
    "DrawCache",
    "PosteriorDraws",
    "SamplerConfig",
    "augment",
    "log_gen_likelihood",
    "run_sampler",
]

_VARIANTS = ("single", "simultaneous", "fully_augmented")


@dataclass(frozen=True)
class AugmentationScheme:
    """How quantile levels are attached to the training rows.

    single: one tau per observation.  simultaneous(r): r shared tau values,
    each paired with a full copy of the data.  fully_augmented(r): r copies
    with independent tau per row.  single is fully_augmented with r=1.
    """

    variant: str = "single"
    r: int = 1

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown augmentation variant {self.variant!r}")
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.variant == "single" and self.r != 1:
            raise ValueError("single augmentation has no repetition count")

    @classmethod
    def single(cls):
        return cls("single", 1)

    @classmethod
    def simultaneous(cls, r):
        return cls("simultaneous", r)

    @classmethod
    def fully_augmented(cls, r):
        return cls("fully_augmented", r)


@dataclass
class AugmentedDataset:
    """Training rows with their fixed quantile levels, replicate-major:
    copy j of the data occupies rows [j*n, (j+1)*n)."""

    X: np.ndarray
    y: np.ndarray
    taus: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        self.taus = np.ascontiguousarray(self.taus, dtype=np.float64)
        self.origin = np.ascontiguousarray(self.origin, dtype=np.int64)

    @property
    def num_rows(self):
        return self.y.shape[0]


def augment(X, y, scheme, rng):
    """Attach quantile levels to (X, y) under the given scheme.

    tau values are drawn once here and never refreshed during sampling.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array")
    n = y.shape[0]
    if n < 1:
        raise ValueError("need at least one observation")
    if X.shape[0] != n:
        raise ValueError(f"X has {X.shape[0]} rows but y has {n}")
    r = scheme.r
    if scheme.variant == "simultaneous":
        shared = rng.random(r)
        taus = np.repeat(shared, n)
    else:
        taus = rng.random(n * r)
    Xr = np.tile(X, (r, 1))
    yr = np.tile(y, r)
    origin = np.tile(np.arange(n, dtype=np.int64), r)
    return AugmentedDataset(Xr, yr, taus, origin)


@dataclass
class SamplerConfig:
    prior: TreePriorConfig = field(default_factory=TreePriorConfig)
    learning_rate: float = 1.0
    burn_in: int = 1000
    draws: int = 1000
    num_particles: int = 20
    leaf_refresh: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be nonnegative, got {self.burn_in}")
        if self.draws < 1:
            raise ValueError(f"draws must be >= 1, got {self.draws}")
        if self.num_particles < 1:
            raise ValueError(f"num_particles must be >= 1, got {self.num_particles}")
        if self.leaf_refresh < 0:
            raise ValueError(f"leaf_refresh must be nonnegative, got {self.leaf_refresh}")


@dataclass
class PosteriorDraws:
    """Recorded post-burn-in forests.  Forests model the median-centered
    response; evaluations must add y_offset back."""

    forests: list
    config: SamplerConfig
    feature_ranges: np.ndarray
    y_offset: float

    @property
    def num_draws(self):
        return len(self.forests)


class DrawCache:
    """Chunked buffers over a Generator so the sampler's per-candidate
    draws cost an index bump instead of a Generator call.  Consumption
    order is fixed, so runs are bit-reproducible given the seed.

    Buffers are exposed to the kernels via ensure_uniforms/ensure_normals,
    which guarantee at least k draws remain (splicing leftovers ahead of
    fresh ones, preserving the stream order); kernels consume by cursor
    and hand the new cursor back through set_cursors.  A buffer array is
    never mutated, only replaced, so saved (buffer, cursor) pairs stay
    valid for deterministic replay of a selected candidate.
    """

    def __init__(self, rng, chunk=65536):
        self._rng = rng
        self._chunk = chunk
        self._u = rng.random(chunk)
        self._ui = 0
        self._n = rng.standard_normal(chunk)
        self._ni = 0

    def ensure_uniforms(self, k):
        if self._chunk - self._ui < k:
            rest = self._u[self._ui :]
            fresh = self._rng.random(self._chunk - rest.size)
            self._u = np.concatenate([rest, fresh])
            self._ui = 0
        return self._u, self._ui

    def ensure_normals(self, k):
        if self._chunk - self._ni < k:
            rest = self._n[self._ni :]
            fresh = self._rng.standard_normal(self._chunk - rest.size)
            self._n = np.concatenate([rest, fresh])
            self._ni = 0
        return self._n, self._ni

    def set_cursors(self, ui, ni):
        self._ui = ui
        self._ni = ni

    def random(self):
        buf, i = self.ensure_uniforms(1)
        self._ui = i + 1
        return float(buf[i])

    def integers(self, n):
        # floor of u*n; the min guards the half-ulp case u*n rounding to n
        return min(int(self.random() * n), n - 1)

    def uniforms(self, k):
        buf, i = self.ensure_uniforms(k)
        self._ui = i + k
        return buf[i : i + k]

    def normals(self, k):
        buf, i = self.ensure_normals(k)
        self._ni = i + k
        return buf[i : i + k]


def log_gen_likelihood(trees, data, learning_rate):
    """-learning_rate * sum of per-row check losses at the forest fit."""
    Z = np.column_stack([data.X, data.taus])
    fit = np.zeros(data.num_rows)
    for tree in trees:
        leaves = tree.leaf_ids()
        ord_of_node = np.full(tree.num_nodes, -1, dtype=np.int32)
        ord_of_node[leaves] = np.arange(leaves.size, dtype=np.int32)
        leaf_ord = kernels.route_ordinals(
            tree.feature, tree.threshold, tree.left, tree.right, ord_of_node, Z
        )
        fit += tree.value[leaves][leaf_ord]
    u = data.y - fit
    return float(-learning_rate * np.sum(u * (data.taus - (u < 0.0))))


def _resolve_leaf_scale(prior, y):
    if prior.leaf_scale is not None:
        return prior
    spread = float(np.max(y) - np.min(y))
    scale = max(spread / (4.0 * np.sqrt(prior.num_trees)), 1e-8)
    return replace(prior, leaf_scale=scale)


# Node budget per candidate tree.  At the default alpha=0.95, beta=2 the
# prior mass beyond a few hundred nodes is astronomically small; hitting
# the budget means a near-flat depth penalty was configured on a dataset
# with huge split pools, which we treat as an error rather than biasing
# the draw by truncation.
_MAX_NODES = 8192
_MAX_LEAVES = _MAX_NODES // 2 + 1

# worst-case draws one grow_route_eval can consume: three uniforms per
# popped node, one leaf value normal per leaf
_U_MARGIN = 3 * _MAX_NODES + 8
_N_MARGIN = _MAX_LEAVES + 1


class _TreeState:
    """Per-tree cache: structure arrays, leaf values in ordinal order, and
    the leaf ordinal every training row routes to.  leaf_ord and fit are
    slot-owned buffers written in place; structure arrays are replaced
    wholesale when a fresh candidate wins, so snapshots can share them."""

    __slots__ = (
        "feature",
        "threshold",
        "left",
        "right",
        "leaf_nodes",
        "leaf_values",
        "leaf_ord",
        "fit",
    )

    def __init__(self, num_rows):
        self.feature = np.full(1, -1, dtype=np.int32)
        self.threshold = np.zeros(1)
        self.left = np.full(1, -1, dtype=np.int32)
        self.right = np.full(1, -1, dtype=np.int32)
        self.leaf_nodes = np.zeros(1, dtype=np.int64)
        self.leaf_values = np.zeros(1)
        self.leaf_ord = np.zeros(num_rows, dtype=np.int32)
        self.fit = np.zeros(num_rows)

    @property
    def num_leaves(self):
        return self.leaf_values.shape[0]

    def snapshot(self):
        values = np.zeros(self.feature.shape[0])
        values[self.leaf_nodes] = self.leaf_values
        return Tree(self.feature, self.threshold, self.left, self.right, values)


def _flatten_pools(pools, num_features):
    sizes = [p.size for p in pools.pools]
    ptr = np.zeros(num_features + 1, dtype=np.int64)
    np.cumsum(sizes, out=ptr[1:])
    if ptr[-1] > 0:
        vals = np.ascontiguousarray(np.concatenate(pools.pools), dtype=np.float64)
    else:
        vals = np.zeros(0)
    avail = np.asarray(pools.available, dtype=np.int32)
    return vals, ptr, avail


def run_sampler(data, cfg):
    """Backfitting sweep over trees; records one forest per post-burn-in
    sweep.  Deterministic given cfg.seed."""
    if data.num_rows < 1:
        raise ValueError("augmented dataset is empty")
    if not np.all(np.isfinite(data.y)):
        raise ValueError("response contains non-finite values")
    if not np.all((data.taus > 0.0) & (data.taus < 1.0)):
        raise ValueError("tau values must lie strictly inside (0, 1)")

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    cache = DrawCache(rng)

    y_offset = float(np.median(data.y))
    yc = data.y - y_offset
    prior = _resolve_leaf_scale(cfg.prior, data.y)
    cfg = replace(cfg, prior=prior)
    lr = cfg.learning_rate
    s = prior.leaf_scale
    alpha = prior.alpha
    beta = prior.beta
    mdepth = -1 if prior.max_depth is None else prior.max_depth

    Z = np.ascontiguousarray(np.column_stack([data.X, data.taus]))
    taus = data.taus
    pools = SplitPools.from_data(data.X, taus)
    pool_values, pool_ptr, avail = _flatten_pools(pools, Z.shape[1])
    feature_ranges = np.column_stack([Z.min(axis=0), Z.max(axis=0)])

    T = prior.num_trees
    N = data.num_rows
    P = cfg.num_particles
    states = [_TreeState(N) for _ in range(T)]
    forest_total = np.zeros(N)

    # candidate workspace, overwritten on every grow_route_eval call; the
    # winner is re-grown into it from its saved draw buffers after selection
    feature = np.empty(_MAX_NODES, dtype=np.int32)
    threshold = np.empty(_MAX_NODES)
    left = np.empty(_MAX_NODES, dtype=np.int32)
    right = np.empty(_MAX_NODES, dtype=np.int32)
    ord_of_node = np.empty(_MAX_NODES, dtype=np.int32)
    snode = np.empty(_MAX_NODES, dtype=np.int32)
    sdepth = np.empty(_MAX_NODES, dtype=np.int32)
    values = np.empty(_MAX_LEAVES)
    centers = np.empty(_MAX_LEAVES)
    sp = np.empty(_MAX_LEAVES)
    tausum = np.empty(_MAX_LEAVES)
    spreads = np.empty(_MAX_LEAVES)
    ref_centers = np.empty(_MAX_LEAVES)
    ref_sp = np.empty(_MAX_LEAVES)
    new_vals = np.empty(_MAX_LEAVES)
    loss_cur = np.empty(_MAX_LEAVES)
    loss_prop = np.empty(_MAX_LEAVES)
    counts = np.empty(_MAX_LEAVES, dtype=np.int64)
    pos = np.empty(_MAX_LEAVES + 1, dtype=np.int64)
    cursor = np.empty(_MAX_LEAVES, dtype=np.int64)
    grouped = np.empty(N)
    gwork = np.empty(N)
    leaf_ord_ws = np.empty(N, dtype=np.int32)
    base = np.empty(N)
    resid = np.empty(N)
    log_w = np.empty(P)
    probs = np.empty(P)
    replay = [None] * P

    snapshots = []

    for sweep in range(cfg.burn_in + cfg.draws):
        for k in range(T):
            st = states[k]
            np.subtract(forest_total, st.fit, out=base)
            np.subtract(yc, base, out=resid)

            # reference particle: current tree reweighted as if freshly
            # proposed (centers and scales recomputed from current residuals)
            L0 = st.num_leaves
            loss, corr = kernels.eval_reference(
                st.leaf_ord, L0, st.leaf_values, s, lr, resid, taus,
                centers, sp, grouped, gwork, pos, cursor, counts, tausum,
                spreads,
            )
            log_w[0] = -lr * loss + corr
            ref_centers[:L0] = centers[:L0]
            ref_sp[:L0] = sp[:L0]

            for p in range(1, P):
                ubuf, ui = cache.ensure_uniforms(_U_MARGIN)
                nbuf, ni = cache.ensure_normals(_N_MARGIN)
                nn, L, ui2, ni2, loss, corr = kernels.grow_route_eval(
                    ubuf, ui, nbuf, ni, alpha, beta, mdepth, s, lr,
                    pool_values, pool_ptr, avail, Z, resid, taus,
                    feature, threshold, left, right, ord_of_node, leaf_ord_ws,
                    values, centers, sp, grouped, gwork, pos, cursor, counts,
                    tausum, spreads, snode, sdepth,
                )
                if nn < 0:
                    raise RuntimeError(
                        "candidate tree exceeded the node budget; the depth "
                        "penalty (alpha, beta) is too weak for this dataset"
                    )
                cache.set_cursors(ui2, ni2)
                replay[p] = (ubuf, ui, nbuf, ni)
                log_w[p] = -lr * loss + corr

            np.subtract(log_w, log_w.max(), out=probs)
            np.exp(probs, out=probs)
            np.cumsum(probs, out=probs)
            pick = int(np.searchsorted(probs, cache.random() * probs[-1], "right"))
            if pick >= P:
                pick = P - 1

            if pick > 0:
                # deterministic replay of the winner from its saved buffers
                ubuf, ui, nbuf, ni = replay[pick]
                nn, L, _, _, _, _ = kernels.grow_route_eval(
                    ubuf, ui, nbuf, ni, alpha, beta, mdepth, s, lr,
                    pool_values, pool_ptr, avail, Z, resid, taus,
                    feature, threshold, left, right, ord_of_node, leaf_ord_ws,
                    values, centers, sp, grouped, gwork, pos, cursor, counts,
                    tausum, spreads, snode, sdepth,
                )
                st.feature = feature[:nn].copy()
                st.threshold = threshold[:nn].copy()
                st.left = left[:nn].copy()
                st.right = right[:nn].copy()
                st.leaf_nodes = np.flatnonzero(st.feature < 0)
                st.leaf_values = values[:L].copy()
                st.leaf_ord[:] = leaf_ord_ws
                cur_centers, cur_sp = centers, sp
            else:
                L = L0
                cur_centers, cur_sp = ref_centers, ref_sp

            lv = st.leaf_values
            for _ in range(cfg.leaf_refresh):
                ubuf, ui = cache.ensure_uniforms(L)
                nbuf, ni = cache.ensure_normals(L)
                acc, ui, ni = kernels.refresh_leaves(
                    st.leaf_ord, L, lv, new_vals, cur_centers, cur_sp, s, lr,
                    resid, taus, ubuf, ui, nbuf, ni, loss_cur, loss_prop,
                )
                cache.set_cursors(ui, ni)
                if acc:
                    lv[:] = new_vals[:L]

            np.take(lv, st.leaf_ord, out=st.fit)
            np.add(base, st.fit, out=forest_total)

        if sweep >= cfg.burn_in:
            snapshots.append([st.snapshot() for st in states])

    return PosteriorDraws(snapshots, cfg, feature_ranges, y_offset)
