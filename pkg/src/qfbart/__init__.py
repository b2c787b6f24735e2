"""Conditional quantile function estimation with sums of regression trees
under a check-loss Gibbs posterior."""

__version__ = "0.1.0"

from .aldq import (
    ald_log_density,
    check_loss,
    posterior_mean_quantile,
    sample_quantile,
)

__all__ = [
    "__version__",
    "ald_log_density",
    "check_loss",
    "posterior_mean_quantile",
    "sample_quantile",
]
