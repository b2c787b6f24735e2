"""Kernel backend selection and packed storage for posterior draws.

The compiled extension is used when present; set QFBART_NO_EXTENSION=1 to
force the pure-numpy fallback.  Either way the API below is identical and
reruns under a fixed backend are bit-exact.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("QFBART_NO_EXTENSION"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND

route_ordinals = _impl.route_ordinals
leaf_stats = _impl.leaf_stats
loss_given_values = _impl.loss_given_values
per_leaf_losses = _impl.per_leaf_losses
profile_eval = _impl.profile_eval
pooled_eval = _impl.pooled_eval
point_eval = _impl.point_eval
grow_route_eval = _impl.grow_route_eval
eval_reference = _impl.eval_reference
refresh_leaves = _impl.refresh_leaves

__all__ = [
    "BACKEND",
    "PackedDraws",
    "eval_reference",
    "grow_route_eval",
    "leaf_stats",
    "loss_given_values",
    "per_leaf_losses",
    "point_eval",
    "pooled_eval",
    "profile_eval",
    "refresh_leaves",
    "route_ordinals",
]


class PackedDraws:
    """Posterior forests flattened into contiguous node arrays.

    Child indices stay local to their tree; tree_ptr maps tree -> node
    offset, draw_ptr maps draw -> tree range.  This is the layout every
    scoring kernel walks.
    """

    __slots__ = (
        "feature",
        "threshold",
        "left",
        "right",
        "value",
        "tree_ptr",
        "draw_ptr",
    )

    def __init__(self, forests):
        trees = [t for forest in forests for t in forest]
        sizes = np.fromiter((t.num_nodes for t in trees), dtype=np.int64)
        self.tree_ptr = np.concatenate(([0], np.cumsum(sizes)))
        counts = np.fromiter((len(f) for f in forests), dtype=np.int64)
        self.draw_ptr = np.concatenate(([0], np.cumsum(counts)))
        self.feature = np.concatenate([t.feature for t in trees])
        self.threshold = np.concatenate([t.threshold for t in trees])
        self.left = np.concatenate([t.left for t in trees])
        self.right = np.concatenate([t.right for t in trees])
        self.value = np.concatenate([t.value for t in trees])

    @property
    def num_draws(self):
        return self.draw_ptr.size - 1

    def profile(self, x, grid):
        """(num_draws, len(grid)) forest values at fixed x over a sorted
        tau grid."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        grid = np.ascontiguousarray(grid, dtype=np.float64)
        return profile_eval(
            self.feature, self.threshold, self.left, self.right, self.value,
            self.tree_ptr, self.draw_ptr, x, grid,
        )

    def pooled(self, x, us, group_ptr):
        """Per-draw forest values at fixed x; us holds tau points grouped
        by draw (sorted within each group) with group_ptr offsets."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        us = np.ascontiguousarray(us, dtype=np.float64)
        group_ptr = np.ascontiguousarray(group_ptr, dtype=np.int64)
        return pooled_eval(
            self.feature, self.threshold, self.left, self.right, self.value,
            self.tree_ptr, self.draw_ptr, x, us, group_ptr,
        )

    def at_point(self, x, tau):
        """Each draw's forest evaluated at one (x, tau)."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        return point_eval(
            self.feature, self.threshold, self.left, self.right, self.value,
            self.tree_ptr, self.draw_ptr, x, float(tau),
        )
