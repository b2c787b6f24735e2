"""Independent numerical oracles for test expectations.

Every routine here recomputes its target quantity from first principles
(adaptive quadrature, brute-force scans, naive summation) without touching
the implementation paths it is used to check.
"""

import math

import numpy as np
from scipy import integrate


def empirical_check_risk(y, tau, beta):
    """Direct summation of sum_i rho_tau(y_i - beta)."""
    u = np.asarray(y, dtype=float) - beta
    return float(np.sum(u * (tau - (u < 0.0))))


def sample_quantile_scan(y, tau):
    """Smallest order statistic minimizing the empirical check risk,
    found by exhaustive scan."""
    ys = np.sort(np.asarray(y, dtype=float))
    risks = np.array([empirical_check_risk(ys, tau, b) for b in ys])
    best = risks.min()
    # smallest minimizer; 1e-12 slack absorbs summation-order noise
    idx = int(np.flatnonzero(risks <= best + 1e-12 * max(1.0, abs(best)))[0])
    return float(ys[idx])


def pm_quantile_quadrature(y, tau, lam):
    """Posterior mean of mu under exp(-lambda^{-1} sum rho_tau(y_i - mu)),
    by piecewise adaptive quadrature plus analytic exponential tails.

    The risk is piecewise linear with kinks at the order statistics, so the
    integrand is smooth on each piece; pieces beyond the data are padded to
    40 lambda before switching to the exact tail integrals.
    """
    y = np.asarray(y, dtype=float).ravel()
    ys = np.sort(y)
    n = ys.size
    inv = 1.0 / lam
    total = float(np.sum(ys))

    def risk(mu):
        u = ys - mu
        return float(np.sum(u * (tau - (u < 0.0))))

    rstar = min(risk(v) for v in ys)

    def g(mu):
        return math.exp(-inv * (risk(mu) - rstar))

    lo = ys[0] - 40.0 * lam
    hi = ys[-1] + 40.0 * lam
    knots = np.unique(np.concatenate(([lo], ys, [hi])))
    den = 0.0
    num = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        d, _ = integrate.quad(g, a, b, epsabs=1e-15, epsrel=1e-12, limit=200)
        m, _ = integrate.quad(
            lambda mu: mu * g(mu), a, b, epsabs=1e-15, epsrel=1e-12, limit=200
        )
        den += d
        num += m

    # left tail: risk(mu) = tau (total - n mu) exactly for mu <= ys[0]
    b_l = inv * tau * n
    g_lo = math.exp(-inv * (tau * (total - n * lo) - rstar))
    den += g_lo / b_l
    num += g_lo * (lo / b_l - 1.0 / b_l ** 2)
    # right tail: risk(mu) = (1 - tau)(n mu - total) for mu >= ys[-1]
    b_r = inv * (1.0 - tau) * n
    g_hi = math.exp(-inv * ((1.0 - tau) * (n * hi - total) - rstar))
    den += g_hi / b_r
    num += g_hi * (hi / b_r + 1.0 / b_r ** 2)
    return num / den


def ald_density_integral(mu, lam, tau, span=60.0):
    """Quadrature of the asymmetric Laplace density over its support."""

    def dens(v):
        u = v - mu
        loss = u * (tau - (1.0 if u < 0 else 0.0))
        return tau * (1.0 - tau) / lam * math.exp(-loss / lam)

    width = span * lam / min(tau, 1.0 - tau)
    left, _ = integrate.quad(dens, mu - width, mu, epsabs=1e-13, limit=200)
    right, _ = integrate.quad(dens, mu, mu + width, epsabs=1e-13, limit=200)
    return left + right


def crps_integral(quantile_fn, y, lo=-50.0, hi=50.0):
    """CRPS as the integral of (F(z) - 1{z >= y})^2 via the inverse form:
    numeric integration over z with F recovered by bisection on quantile_fn.

    quantile_fn must be continuous and strictly increasing on (0, 1).
    """

    def cdf(z):
        a, b = 1e-12, 1.0 - 1e-12
        if quantile_fn(a) >= z:
            return 0.0
        if quantile_fn(b) <= z:
            return 1.0
        for _ in range(80):
            mid = 0.5 * (a + b)
            if quantile_fn(mid) < z:
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)

    val, _ = integrate.quad(
        lambda z: (cdf(z) - (1.0 if z >= y else 0.0)) ** 2,
        lo,
        hi,
        epsabs=1e-10,
        limit=400,
        points=[y],
    )
    return val


def walk_tree_nodes(nodes, z):
    """Recursive path walker over the JSON node-list form of a tree."""
    i = 0
    node = nodes[i]
    while "value" not in node:
        if z[node["feature"]] <= node["threshold"]:
            i = node["left"]
        else:
            i = node["right"]
        node = nodes[i]
    return float(node["value"])


def enumerate_structure_probs(pools, alpha, beta, max_depth):
    """Probabilities of every tree structure in the depth-capped prior.

    Splitting probability at depth d is alpha*(1+d)^(-beta); the feature is
    uniform over features with nonempty pools and the threshold uniform over
    that feature's pool.  Depth max_depth forces a leaf.
    """
    avail = [j for j, p in enumerate(pools) if len(p) > 0]

    def rec(depth):
        if depth >= max_depth or not avail:
            return [1.0]
        p_split = alpha * (1.0 + depth) ** (-beta)
        subs = rec(depth + 1)
        out = [1.0 - p_split]
        for f in avail:
            w = p_split / (len(avail) * len(pools[f]))
            for _t in pools[f]:
                for pl in subs:
                    for pr in subs:
                        out.append(w * pl * pr)
        return out

    return rec(0)


def pm_quantile_quadrature_mixed(y, taus, lam):
    """Posterior mean of a scalar mu under exp(-lambda^{-1} sum_i
    rho_{tau_i}(y_i - mu)) with per-observation tau, by piecewise
    quadrature plus analytic exponential tails."""
    y = np.asarray(y, dtype=float).ravel()
    taus = np.asarray(taus, dtype=float).ravel()
    ys = np.sort(y)
    inv = 1.0 / lam

    def risk(mu):
        u = y - mu
        return float(np.sum(u * (taus - (u < 0.0))))

    rstar = min(risk(v) for v in ys)

    def g(mu):
        return math.exp(-inv * (risk(mu) - rstar))

    lo = ys[0] - 40.0 * lam
    hi = ys[-1] + 40.0 * lam
    knots = np.unique(np.concatenate(([lo], ys, [hi])))
    den = 0.0
    num = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        den += integrate.quad(g, a, b, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
        num += integrate.quad(
            lambda m: m * g(m), a, b, epsabs=1e-15, epsrel=1e-12, limit=200
        )[0]
    # left tail: risk slope is -sum(taus); right tail: +sum(1 - taus)
    bl = inv * float(np.sum(taus))
    den += g(lo) / bl
    num += g(lo) * (lo / bl - 1.0 / bl**2)
    br = inv * float(np.sum(1.0 - taus))
    den += g(hi) / br
    num += g(hi) * (hi / br + 1.0 / br**2)
    return num / den
