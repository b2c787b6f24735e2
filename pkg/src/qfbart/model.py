"""Posterior summarization: quantile point estimates, credible intervals,
inverse-transform predictive sampling, and the triangular multivariate
extension.

Two point estimators are offered.  The plug-in estimate averages the
quantile-function draws pointwise; it is cheap but not guaranteed
monotone in tau, so reported curves are rearranged.  The predictive
estimate reads empirical quantiles off a pool of inverse-transform
samples and is monotone by construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .forest import (
    TreePriorConfig,
    forest_from_obj,
    forest_to_obj,
    rearrange_nondecreasing,
)
from .kernels import PackedDraws
from .sampler import (
    AugmentationScheme,
    PosteriorDraws,
    SamplerConfig,
    augment,
    run_sampler,
)

__all__ = [
    "CredibleInterval",
    "MultivariateQuantileModel",
    "QuantileModel",
    "fit_multivariate",
]

MODEL_FORMAT = "qfbart-model"
MODEL_VERSION = 1


def _child_rng(seed, *key):
    # independent deterministic stream under the run's root seed
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=key))
    )


def _child_seed(seed, *key):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def _config_to_obj(cfg):
    p = cfg.prior
    return {
        "prior": {
            "alpha": p.alpha,
            "beta": p.beta,
            "num_trees": p.num_trees,
            "leaf_scale": p.leaf_scale,
            "max_depth": p.max_depth,
        },
        "learning_rate": cfg.learning_rate,
        "burn_in": cfg.burn_in,
        "draws": cfg.draws,
        "num_particles": cfg.num_particles,
        "leaf_refresh": cfg.leaf_refresh,
        "seed": cfg.seed,
    }


def _config_from_obj(obj):
    p = obj["prior"]
    prior = TreePriorConfig(
        alpha=p["alpha"],
        beta=p["beta"],
        num_trees=p["num_trees"],
        leaf_scale=p["leaf_scale"],
        max_depth=p["max_depth"],
    )
    return SamplerConfig(
        prior=prior,
        learning_rate=obj["learning_rate"],
        burn_in=obj["burn_in"],
        draws=obj["draws"],
        num_particles=obj["num_particles"],
        leaf_refresh=obj["leaf_refresh"],
        seed=obj["seed"],
    )


def config_digest(cfg):
    """Stable hash of a sampler configuration, embedded in artifacts."""
    blob = json.dumps(_config_to_obj(cfg), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class CredibleInterval:
    lower: float
    upper: float
    level: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"interval bounds out of order: {self.lower} > {self.upper}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {self.level}")

    @property
    def width(self):
        return self.upper - self.lower


class QuantileModel:
    """Fitted conditional quantile function: posterior forest draws plus
    the training metadata needed to evaluate them."""

    def __init__(self, draws, d, y_range):
        if not draws.forests:
            raise ValueError("model needs at least one posterior draw")
        self.draws = draws
        self.d = int(d)
        self.y_range = (float(y_range[0]), float(y_range[1]))
        self._packed = None

    @classmethod
    def fit(cls, X, y, scheme=None, cfg=None):
        """Augment, run the sampler, wrap the draws.

        The augmentation tau values use a stream spawned from cfg.seed, so
        a (data, scheme, cfg) triple fully determines the fit.
        """
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        if scheme is None:
            scheme = AugmentationScheme.fully_augmented(10)
        if cfg is None:
            cfg = SamplerConfig()
        data = augment(X, y, scheme, _child_rng(cfg.seed, 1))
        draws = run_sampler(data, cfg)
        return cls(draws, X.shape[1], (y.min(), y.max()))

    @property
    def num_draws(self):
        return self.draws.num_draws

    @property
    def y_offset(self):
        return self.draws.y_offset

    @property
    def packed(self):
        if self._packed is None:
            self._packed = PackedDraws(self.draws.forests)
        return self._packed

    def _check_x(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64).ravel()
        if x.size != self.d:
            raise ValueError(f"x has {x.size} features, model expects {self.d}")
        return x

    @staticmethod
    def _check_taus(taus):
        taus = np.ascontiguousarray(taus, dtype=np.float64).ravel()
        if taus.size == 0:
            raise ValueError("tau grid is empty")
        if not np.all((taus > 0.0) & (taus < 1.0)):
            raise ValueError("tau values must lie strictly inside (0, 1)")
        if np.any(np.diff(taus) < 0.0):
            raise ValueError("tau grid must be sorted ascending")
        return taus

    def plug_in_quantile(self, x, tau):
        """Mean over posterior draws of the forest at (x, tau)."""
        x = self._check_x(x)
        self._check_taus([tau])
        return float(np.mean(self.packed.at_point(x, tau))) + self.y_offset

    def plug_in_curve(self, x, taus, rearrange=True):
        """Plug-in estimates over a sorted tau grid; rearranged to a valid
        (nondecreasing) quantile function unless told otherwise."""
        x = self._check_x(x)
        taus = self._check_taus(taus)
        curve = self.packed.profile(x, taus).mean(axis=0) + self.y_offset
        return rearrange_nondecreasing(curve) if rearrange else curve

    def _pooled_samples(self, x, n, rng):
        m = rng.integers(0, self.num_draws, n)
        us = rng.random(n)
        order = np.lexsort((us, m))
        group_ptr = np.searchsorted(
            m[order], np.arange(self.num_draws + 1)
        ).astype(np.int64)
        vals = self.packed.pooled(x, us[order], group_ptr)
        out = np.empty(n)
        out[order] = vals
        return out + self.y_offset

    def sample_predictive(self, x, n, rng):
        """n inverse-transform samples, each from a uniformly chosen
        posterior draw at a fresh u ~ U(0,1)."""
        x = self._check_x(x)
        if n < 1:
            raise ValueError(f"need a positive sample count, got {n}")
        return self._pooled_samples(x, n, rng)

    def predictive_quantile(self, x, tau, n_mc, rng):
        """Empirical tau-quantile of a pooled inverse-transform sample."""
        return float(self.predictive_curve(x, [tau], n_mc, rng)[0])

    def predictive_curve(self, x, taus, n_mc, rng):
        """Predictive quantiles over a tau grid, all read from one shared
        pool; nondecreasing by construction."""
        x = self._check_x(x)
        taus = self._check_taus(taus)
        if n_mc < 1:
            raise ValueError(f"need a positive pool size, got {n_mc}")
        pool = self._pooled_samples(x, n_mc, rng)
        return np.quantile(pool, taus)

    def credible_interval(self, x, tau, level=0.9):
        """Equal-tailed posterior interval for the quantile value at
        (x, tau): epistemic spread across draws, not predictive spread."""
        x = self._check_x(x)
        self._check_taus([tau])
        if not 0.0 < level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {level}")
        if self.num_draws < 2:
            raise ValueError("credible interval needs at least 2 draws")
        vals = self.packed.at_point(x, tau) + self.y_offset
        half = (1.0 - level) / 2.0
        lo, hi = np.quantile(vals, [half, 1.0 - half])
        return CredibleInterval(float(lo), float(hi), level)

    def credible_band(self, x, taus, level=0.9):
        """Per-tau equal-tailed intervals over a grid; returns (lower,
        upper) arrays."""
        x = self._check_x(x)
        taus = self._check_taus(taus)
        if not 0.0 < level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {level}")
        if self.num_draws < 2:
            raise ValueError("credible band needs at least 2 draws")
        prof = self.packed.profile(x, taus) + self.y_offset
        half = (1.0 - level) / 2.0
        lo, hi = np.quantile(prof, [half, 1.0 - half], axis=0)
        return lo, hi

    def to_obj(self):
        cfg = self.draws.config
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "package_version": _package_version(),
            "seed": cfg.seed,
            "config": _config_to_obj(cfg),
            "config_digest": config_digest(cfg),
            "d": self.d,
            "y_range": list(self.y_range),
            "y_offset": self.draws.y_offset,
            "feature_ranges": [list(map(float, r)) for r in self.draws.feature_ranges],
            "forests": [forest_to_obj(f) for f in self.draws.forests],
        }

    @classmethod
    def from_obj(cls, obj):
        if obj.get("format") != MODEL_FORMAT:
            raise ValueError("not a quantile model file")
        if obj.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model file version {obj.get('version')}")
        cfg = _config_from_obj(obj["config"])
        draws = PosteriorDraws(
            [forest_from_obj(f) for f in obj["forests"]],
            cfg,
            np.asarray(obj["feature_ranges"], dtype=np.float64),
            float(obj["y_offset"]),
        )
        return cls(draws, obj["d"], obj["y_range"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_obj(), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_obj(json.load(fh))


def _package_version():
    from . import __version__

    return __version__


class MultivariateQuantileModel:
    """Triangular transport: component j models response column
    ordering[j] given (x, preceding response columns)."""

    def __init__(self, components, ordering):
        if len(components) < 2:
            raise ValueError("multivariate model needs at least 2 components")
        self.components = list(components)
        self.ordering = tuple(int(j) for j in ordering)
        if sorted(self.ordering) != list(range(len(self.components))):
            raise ValueError(f"ordering {ordering} is not a permutation")
        base = self.components[0].d
        for j, comp in enumerate(self.components):
            if comp.d != base + j:
                raise ValueError(
                    f"component {j} has covariate dimension {comp.d}, "
                    f"expected {base + j}"
                )

    @property
    def k(self):
        return len(self.components)

    @property
    def base_d(self):
        return self.components[0].d

    def sample(self, x, n, rng):
        """n joint samples (rows) in original column order: draw tau_j ~
        U(0,1) per component in sequence, feeding realized values
        forward."""
        x = np.ascontiguousarray(x, dtype=np.float64).ravel()
        if x.size != self.base_d:
            raise ValueError(f"x has {x.size} features, model expects {self.base_d}")
        if n < 1:
            raise ValueError(f"need a positive sample count, got {n}")
        from .forest import forest_eval

        cov = np.tile(x, (n, 1))
        out = np.empty((n, self.k))
        for j, comp in enumerate(self.components):
            m = rng.integers(0, comp.num_draws, n)
            us = rng.random(n)
            col = np.empty(n)
            for i in range(n):
                col[i] = (
                    forest_eval(comp.draws.forests[m[i]], cov[i], us[i])
                    + comp.y_offset
                )
            out[:, self.ordering[j]] = col
            cov = np.column_stack([cov, col])
        return out

    def to_obj(self):
        return {
            "format": MODEL_FORMAT + "-multivariate",
            "version": MODEL_VERSION,
            "ordering": list(self.ordering),
            "components": [c.to_obj() for c in self.components],
        }

    @classmethod
    def from_obj(cls, obj):
        if obj.get("format") != MODEL_FORMAT + "-multivariate":
            raise ValueError("not a multivariate quantile model file")
        comps = [QuantileModel.from_obj(o) for o in obj["components"]]
        return cls(comps, obj["ordering"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_obj(), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_obj(json.load(fh))


def fit_multivariate(X, Y, scheme=None, cfg=None, ordering=None):
    """Fit k conditional quantile models in sequence; component j regresses
    response column ordering[j] on (x, previously ordered columns), each
    with its own tau augmentation and a sampler seed spawned per component
    from cfg.seed."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] < 2:
        raise ValueError("Y must be a matrix with at least 2 columns")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    k = Y.shape[1]
    if scheme is None:
        scheme = AugmentationScheme.fully_augmented(10)
    if cfg is None:
        cfg = SamplerConfig()
    if ordering is None:
        ordering = tuple(range(k))
    ordering = tuple(int(j) for j in ordering)
    if sorted(ordering) != list(range(k)):
        raise ValueError(f"ordering {ordering} is not a permutation of 0..{k - 1}")

    comps = []
    cov = X
    for j in range(k):
        yj = Y[:, ordering[j]]
        cfg_j = replace(cfg, seed=_child_seed(cfg.seed, 2, j))
        data = augment(cov, yj, scheme, _child_rng(cfg.seed, 1, j))
        draws = run_sampler(data, cfg_j)
        comps.append(QuantileModel(draws, cov.shape[1], (yj.min(), yj.max())))
        cov = np.column_stack([cov, yj])
    return MultivariateQuantileModel(comps, ordering)
