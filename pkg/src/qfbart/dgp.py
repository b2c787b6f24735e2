"""Synthetic benchmark generators with conditional-quantile oracles.

Four joint distributions on (x, y) used to score distributional
regression: a three-component covariate-dependent mixture with varying
scale, skewness, and modality; a logistic smooth transition
autoregression observed as consecutive pairs; a Gaussian/log-gamma
mixture with smoothly drifting weights; and a bivariate-response
example whose second component depends on the first.

Ground truth comes in three grades: closed-form quantiles where the
conditional law admits them, bisection on the analytic conditional CDF,
and empirical quantiles from a large cached conditional sample.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

__all__ = [
    "BivariateExample",
    "CovDepMixture",
    "DifficultComponents",
    "DifficultConditional",
    "LSTAR",
    "OracleQuantile",
    "conditional_cdf",
    "default_oracle",
    "difficult_conditional_components",
    "sample_conditional",
    "sample_joint",
    "true_conditional_quantile",
]

_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


@dataclass(frozen=True)
class LSTAR:
    """Smooth-transition autoregression observed as (Z_{t-1}, Z_t) pairs:
    Z_t = rho1 z + rho2 sigmoid(gamma (z - c)) z + sigma t(nu)."""

    rho1: float = 0.0
    rho2: float = 0.9
    gamma: float = 5.0
    c: float = 0.0
    sigma: float = 1.0
    nu: float = 3.0

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.nu <= 0.0:
            raise ValueError(f"nu must be positive, got {self.nu}")

    def location(self, z):
        z = np.asarray(z, dtype=np.float64)
        return self.rho1 * z + self.rho2 * special.expit(self.gamma * (z - self.c)) * z


@dataclass(frozen=True)
class CovDepMixture:
    """Location curve plus noise that morphs between a Gaussian and a
    centered log-gamma as x sweeps (0, 1)."""


@dataclass(frozen=True)
class DifficultConditional:
    """Softmax-weighted mixture of a skew-normal, a symmetric pair of
    heavy t's, and a Beta/t blend; every parameter drifts with x."""


@dataclass(frozen=True)
class BivariateExample:
    """Two-column response: y1 is a Gaussian/exponential mixture, y2 is
    Gaussian around 0.5 y1 + x1 x2."""


# ---------------------------------------------------------------------------
# covariate-dependent mixture pieces

_COVDEP_SD = 0.3**1.5  # noise variance is stated as 0.3^3


def _covdep_location(x):
    x = np.asarray(x, dtype=np.float64)
    return 5.0 * special.expit(15.0 * (x - 0.5)) - 4.0 * x


def _covdep_weight(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-10.0 * (x - 0.8) ** 2)


def _covdep_shape(x):
    x = np.asarray(x, dtype=np.float64)
    return x * x + 0.5


# ---------------------------------------------------------------------------
# difficult conditional pieces


@dataclass(frozen=True)
class DifficultComponents:
    """Mixture weights and every parameter function at one x."""

    weights: np.ndarray
    location: float  # 1 + sin(0.8 pi x), shared by all three blocks
    alpha1: float
    sigma1: float
    xi1: float
    gap: float
    sigma2: float
    a_b: float
    b_b: float
    sigma_b: float
    lambda_b: float
    mu_t: float
    sigma_t: float


def _difficult_params(x):
    """Parameter functions on an array of covariates; returns a dict of
    arrays aligned with x."""
    x = np.asarray(x, dtype=np.float64)
    logits = np.stack(
        [
            5.0 - 20.0 * np.abs(x - 0.2),
            5.0 - 20.0 * np.abs(x - 0.55),
            5.0 - 20.0 * np.abs(x - 0.85),
        ]
    )
    weights = special.softmax(logits, axis=0)
    m = 1.0 + np.sin(0.8 * np.pi * x)
    alpha1 = 20.0 * special.expit(15.0 * (x - 0.25))
    sigma1 = 0.1 + 3.0 * special.expit(10.0 * (x - 0.15))
    xi1 = m - sigma1 * alpha1 / np.sqrt(1.0 + alpha1**2) * _SQRT_2_OVER_PI
    gap = 6.0 * special.expit(15.0 * (x - 0.4))
    sigma2 = 0.1 + 0.2 * special.expit(10.0 * (x - 0.3))
    a_b = np.maximum(0.05, 0.2 + 0.3 * np.sin(2.5 * np.pi * (x - 0.6)))
    b_b = np.maximum(0.05, 0.2 + 0.3 * np.cos(2.5 * np.pi * (x - 0.6)))
    sigma_b = np.maximum(0.5, 2.0 + 2.0 * np.sin(2.0 * np.pi * (x - 0.6)))
    mu3 = m - 3.0 * special.expit(10.0 * (x - 0.7))
    mu_t = mu3 + 3.0 + 2.0 * np.sin(3.0 * np.pi * (x - 0.6))
    # the 0.85/0.15 mixture mean is pinned to mu3, so the Beta block
    # absorbs the t block's offset
    lambda_b = (mu3 - 0.15 * mu_t) / (0.85 * sigma_b) - a_b / (a_b + b_b)
    sigma_t = 0.3 + 0.2 * special.expit(15.0 * (x - 0.8))
    return {
        "weights": weights,
        "location": m,
        "alpha1": alpha1,
        "sigma1": sigma1,
        "xi1": xi1,
        "gap": gap,
        "sigma2": sigma2,
        "a_b": a_b,
        "b_b": b_b,
        "sigma_b": sigma_b,
        "lambda_b": lambda_b,
        "mu_t": mu_t,
        "sigma_t": sigma_t,
    }


def difficult_conditional_components(x):
    """Evaluate the difficult-conditional mixture at a single covariate."""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    p = _difficult_params(x)
    return DifficultComponents(
        weights=p["weights"].ravel(),
        **{k: float(v) for k, v in p.items() if k != "weights"},
    )


def _sample_skew_normal(alpha, xi, sigma, rng, n):
    # two-Gaussian construction: delta |Z1| + sqrt(1 - delta^2) Z2
    delta = alpha / np.sqrt(1.0 + alpha**2)
    z1 = rng.standard_normal(n)
    z2 = rng.standard_normal(n)
    return xi + sigma * (delta * np.abs(z1) + np.sqrt(1.0 - delta**2) * z2)


def _difficult_sample(x, rng):
    """One response per covariate entry.  Draw counts are fixed by len(x)
    so a given rng stream always produces the same dataset."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    p = _difficult_params(x)
    w = p["weights"]
    u = rng.random(n)
    comp = (u > w[0]).astype(np.int64) + (u > w[0] + w[1])

    z1 = _sample_skew_normal(p["alpha1"], p["xi1"], p["sigma1"], rng, n)
    side = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    z2 = p["location"] + side * p["gap"] + p["sigma2"] * rng.standard_t(1.2, n)
    beta_part = p["sigma_b"] * (rng.beta(p["a_b"], p["b_b"]) + p["lambda_b"])
    t_part = p["mu_t"] + p["sigma_t"] * rng.standard_t(1.5, n)
    z3 = np.where(rng.random(n) < 0.85, beta_part, t_part)

    return np.choose(comp, [z1, z2, z3])


def _difficult_cdf(x, y):
    c = difficult_conditional_components(x)
    y = np.asarray(y, dtype=np.float64)
    w1, w2, w3 = c.weights
    f1 = stats.skewnorm.cdf(y, c.alpha1, loc=c.xi1, scale=c.sigma1)
    f2 = 0.5 * (
        stats.t.cdf((y - (c.location - c.gap)) / c.sigma2, 1.2)
        + stats.t.cdf((y - (c.location + c.gap)) / c.sigma2, 1.2)
    )
    f3 = 0.85 * stats.beta.cdf(y / c.sigma_b - c.lambda_b, c.a_b, c.b_b) + 0.15 * stats.t.cdf(
        (y - c.mu_t) / c.sigma_t, 1.5
    )
    return w1 * f1 + w2 * f2 + w3 * f3


# ---------------------------------------------------------------------------
# bivariate pieces


def _bivariate_split(x):
    """x of length 2 addresses y1 | x; length 3 appends the realized y1
    and addresses y2 | (x, y1)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size not in (2, 3):
        raise ValueError(
            f"bivariate covariate must have 2 entries (y1 given x) or 3 "
            f"(y2 given x and y1), got {x.size}"
        )
    return x


def _bivariate_y1_parts(x1, x2):
    w = special.expit(2.0 * x1 - 1.0)
    mean = x1 + x2
    sd = 0.2 + 0.3 * x2
    rate = 2.0 + 3.0 * x1
    return w, mean, sd, rate


def _bivariate_y2_parts(x1, x2, y1):
    return 0.5 * y1 + x1 * x2, 0.1 + 0.2 * x1


# ---------------------------------------------------------------------------
# sampling


def sample_joint(spec, n, rng):
    """n draws from the joint law.  Returns (X, y) with X of shape (n, d);
    y has one column per response component (a vector when univariate)."""
    n = int(n)
    if n < 1:
        raise ValueError(f"need a positive sample count, got {n}")
    if isinstance(spec, LSTAR):
        eps = spec.sigma * rng.standard_t(spec.nu, n)
        z = np.empty(n + 1)
        z[0] = 0.0
        for t in range(n):
            z[t + 1] = spec.location(z[t]) + eps[t]
        return z[:-1].reshape(n, 1), z[1:].copy()
    if isinstance(spec, CovDepMixture):
        x = rng.random(n)
        y = _covdep_location(x) + _covdep_noise(x, rng)
        return x.reshape(n, 1), y
    if isinstance(spec, DifficultConditional):
        x = rng.random(n)
        return x.reshape(n, 1), _difficult_sample(x, rng)
    if isinstance(spec, BivariateExample):
        x = rng.random((n, 2))
        w, mean, sd, rate = _bivariate_y1_parts(x[:, 0], x[:, 1])
        pick_exp = rng.random(n) < w
        gauss = mean + sd * rng.standard_normal(n)
        expo = rng.exponential(1.0 / rate)
        y1 = np.where(pick_exp, expo, gauss)
        mu2, sd2 = _bivariate_y2_parts(x[:, 0], x[:, 1], y1)
        y2 = mu2 + sd2 * rng.standard_normal(n)
        return x, np.column_stack([y1, y2])
    raise TypeError(f"unknown data-generating process {spec!r}")


def _covdep_noise(x, rng):
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    w = _covdep_weight(x)
    shape = _covdep_shape(x)
    gauss = 2.0 * x - 0.6 + _COVDEP_SD * rng.standard_normal(n)
    # log-gamma noise is mean-centered so the location curve carries the
    # conditional location on its own
    log_gamma = np.log(rng.gamma(shape)) - special.digamma(shape)
    return np.where(rng.random(n) < w, gauss, log_gamma)


def sample_conditional(spec, x, n, rng):
    """n draws of the response given a single covariate value."""
    n = int(n)
    if n < 1:
        raise ValueError(f"need a positive sample count, got {n}")
    if isinstance(spec, LSTAR):
        loc = float(spec.location(float(np.asarray(x).ravel()[0])))
        return loc + spec.sigma * rng.standard_t(spec.nu, n)
    if isinstance(spec, CovDepMixture):
        x = float(np.asarray(x).ravel()[0])
        return float(_covdep_location(x)) + _covdep_noise(np.full(n, x), rng)
    if isinstance(spec, DifficultConditional):
        x = float(np.asarray(x).ravel()[0])
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"x must lie in [0, 1], got {x}")
        return _difficult_sample(np.full(n, x), rng)
    if isinstance(spec, BivariateExample):
        x = _bivariate_split(x)
        if x.size == 2:
            w, mean, sd, rate = _bivariate_y1_parts(x[0], x[1])
            pick_exp = rng.random(n) < w
            gauss = mean + sd * rng.standard_normal(n)
            expo = rng.exponential(1.0 / rate, n)
            return np.where(pick_exp, expo, gauss)
        mu2, sd2 = _bivariate_y2_parts(x[0], x[1], x[2])
        return mu2 + sd2 * rng.standard_normal(n)
    raise TypeError(f"unknown data-generating process {spec!r}")


# ---------------------------------------------------------------------------
# conditional CDFs and quantile oracles


def conditional_cdf(spec, x, y):
    """P(Y <= y | x), vectorized over y."""
    y = np.asarray(y, dtype=np.float64)
    if isinstance(spec, LSTAR):
        loc = float(spec.location(float(np.asarray(x).ravel()[0])))
        return stats.t.cdf((y - loc) / spec.sigma, spec.nu)
    if isinstance(spec, CovDepMixture):
        x = float(np.asarray(x).ravel()[0])
        loc = float(_covdep_location(x))
        w = float(_covdep_weight(x))
        shape = float(_covdep_shape(x))
        gauss = stats.norm.cdf(y, loc=loc + 2.0 * x - 0.6, scale=_COVDEP_SD)
        log_gamma = stats.loggamma.cdf(y - loc + special.digamma(shape), shape)
        return w * gauss + (1.0 - w) * log_gamma
    if isinstance(spec, DifficultConditional):
        return _difficult_cdf(float(np.asarray(x).ravel()[0]), y)
    if isinstance(spec, BivariateExample):
        x = _bivariate_split(x)
        if x.size == 2:
            w, mean, sd, rate = _bivariate_y1_parts(x[0], x[1])
            return w * stats.expon.cdf(y, scale=1.0 / rate) + (1.0 - w) * stats.norm.cdf(
                y, loc=mean, scale=sd
            )
        mu2, sd2 = _bivariate_y2_parts(x[0], x[1], x[2])
        return stats.norm.cdf(y, loc=mu2, scale=sd2)
    raise TypeError(f"unknown data-generating process {spec!r}")


def _analytic_quantile(spec, x, taus):
    if isinstance(spec, LSTAR):
        loc = float(spec.location(float(np.asarray(x).ravel()[0])))
        return loc + spec.sigma * stats.t.ppf(taus, spec.nu)
    if isinstance(spec, BivariateExample):
        x = _bivariate_split(x)
        if x.size == 3:
            mu2, sd2 = _bivariate_y2_parts(x[0], x[1], x[2])
            return mu2 + sd2 * special.ndtri(taus)
    raise ValueError(f"no closed-form quantile for {type(spec).__name__}")


def _bracket_hint(spec, x):
    """Center and half-width that usually bracket the quantile; the
    bisection expands from here when they don't."""
    if isinstance(spec, LSTAR):
        return float(spec.location(float(np.asarray(x).ravel()[0]))), 10.0 * spec.sigma
    if isinstance(spec, CovDepMixture):
        return float(_covdep_location(float(np.asarray(x).ravel()[0]))), 10.0
    if isinstance(spec, DifficultConditional):
        c = difficult_conditional_components(float(np.asarray(x).ravel()[0]))
        return c.location, 30.0
    if isinstance(spec, BivariateExample):
        xs = _bivariate_split(x)
        if xs.size == 2:
            return float(xs[0] + xs[1]), 10.0
        mu2, sd2 = _bivariate_y2_parts(xs[0], xs[1], xs[2])
        return float(mu2), 10.0 * float(sd2)
    raise TypeError(f"unknown data-generating process {spec!r}")


def _bisect_quantile(cdf, taus, center, half_width, tol):
    lo = np.full(taus.shape, center - half_width)
    hi = np.full(taus.shape, center + half_width)
    for _ in range(200):
        low_ok = cdf(lo) <= taus
        if low_ok.all():
            break
        lo = np.where(low_ok, lo, lo - (hi - lo))
    for _ in range(200):
        high_ok = cdf(hi) >= taus
        if high_ok.all():
            break
        hi = np.where(high_ok, hi, hi + (hi - lo))
    for _ in range(200):
        if np.max(hi - lo) <= tol:
            break
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < taus
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


_ORACLE_METHODS = ("analytic", "cdf-bisection", "monte-carlo")


@dataclass
class OracleQuantile:
    """Ground-truth conditional quantiles.  Monte-Carlo draws are cached
    per (spec, x) and seeded from (seed, spec, x), so repeated scoring
    runs see identical truth."""

    method: str
    n_oracle: int = 1_000_000
    seed: int = 0
    tol: float = 1e-8
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.method not in _ORACLE_METHODS:
            raise ValueError(f"oracle method must be one of {_ORACLE_METHODS}")
        if self.method == "monte-carlo" and self.n_oracle < 100_000:
            raise ValueError(
                f"monte-carlo oracle needs at least 100000 draws, got {self.n_oracle}"
            )
        if self.tol <= 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")

    @classmethod
    def analytic(cls):
        return cls(method="analytic")

    @classmethod
    def cdf_bisection(cls, tol=1e-8):
        return cls(method="cdf-bisection", tol=tol)

    @classmethod
    def monte_carlo(cls, n_oracle=1_000_000, seed=0):
        return cls(method="monte-carlo", n_oracle=n_oracle, seed=seed)

    def _samples(self, spec, x):
        key = (spec, np.asarray(x, dtype=np.float64).tobytes())
        got = self._cache.get(key)
        if got is None:
            digest = hashlib.sha256(repr(spec).encode() + key[1]).digest()
            ss = np.random.SeedSequence(
                [self.seed, int.from_bytes(digest[:8], "little")]
            )
            rng = np.random.Generator(np.random.Philox(ss))
            got = np.sort(sample_conditional(spec, x, self.n_oracle, rng))
            self._cache[key] = got
        return got


def default_oracle(spec):
    """Bisection where the conditional CDF is cheap and exact; cached
    Monte Carlo for the two heavy mixtures."""
    if isinstance(spec, (LSTAR, CovDepMixture)):
        return OracleQuantile.cdf_bisection()
    if isinstance(spec, (DifficultConditional, BivariateExample)):
        return OracleQuantile.monte_carlo()
    raise TypeError(f"unknown data-generating process {spec!r}")


def true_conditional_quantile(spec, x, tau, oracle=None):
    """Conditional tau-quantile of the response at x; tau may be a scalar
    or an array (evaluated jointly)."""
    taus = np.asarray(tau, dtype=np.float64)
    scalar = taus.ndim == 0
    taus = np.atleast_1d(taus)
    if not np.all((taus > 0.0) & (taus < 1.0)):
        raise ValueError("tau values must lie strictly inside (0, 1)")
    if oracle is None:
        oracle = default_oracle(spec)
    if oracle.method == "analytic":
        q = _analytic_quantile(spec, x, taus)
    elif oracle.method == "cdf-bisection":
        center, half = _bracket_hint(spec, x)
        q = _bisect_quantile(
            lambda y: conditional_cdf(spec, x, y), taus, center, half, oracle.tol
        )
    else:
        q = np.quantile(oracle._samples(spec, x), taus)
    return float(q[0]) if scalar else q
