"""Check loss, asymmetric Laplace density, and closed-form posterior
summaries for a single quantile under a flat-prior Gibbs posterior.

The central object is the generalized posterior over a scalar location mu,

    pi(mu | y) propto exp(-lambda^{-1} sum_i rho_tau(y_i - mu)),

whose mode is the sample tau-quantile and whose mean has a closed form as a
ratio of two inner products over the order-statistic intervals. All products
are formed in log space with sign tracking so the estimator survives extreme
learning rates (lambda^{-1} from 1e-8 to 1e6) without overflow or clamping.
"""

import math

import numpy as np

__all__ = [
    "check_loss",
    "ald_log_density",
    "sample_quantile",
    "posterior_mean_quantile",
]


def _validate_tau(tau):
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly inside (0, 1), got %r" % tau)
    return tau


def check_loss(u, tau):
    """Check (pinball) loss rho_tau(u) = u * (tau - 1{u < 0}).

    Convex and nonnegative, zero only at u = 0. Accepts scalars or arrays.
    """
    tau = _validate_tau(tau)
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0.0))
    return float(out) if out.ndim == 0 else out


def check_loss_rows(u, taus):
    """Row-wise check loss with a per-row quantile level vector."""
    u = np.asarray(u, dtype=float)
    taus = np.asarray(taus, dtype=float)
    return u * (taus - (u < 0.0))


def ald_log_density(y, mu, lam, tau):
    """Log density of the asymmetric Laplace with location mu, scale lam,
    tilt tau: log(tau (1 - tau) / lam) - rho_tau(y - mu) / lam."""
    tau = _validate_tau(tau)
    lam = float(lam)
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    return math.log(tau * (1.0 - tau) / lam) - check_loss(
        np.asarray(y, float) - mu, tau
    ) / lam


def sample_quantile(y, tau):
    """Smallest minimizer of the empirical check risk sum_i rho_tau(y_i - b).

    The minimizing set is the order statistic Y_(ceil(n tau)) when n*tau is
    not an integer, and the closed interval [Y_(k), Y_(k+1)] when n*tau = k;
    ties break to the smallest order statistic (the left-continuous
    generalized inverse).
    """
    tau = _validate_tau(tau)
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n == 0:
        raise ValueError("sample_quantile of an empty sample")
    ys = np.sort(y)
    kf = n * tau
    k_round = round(kf)
    # n*tau is integer mathematically but not always in floats (10 * 0.3).
    if abs(kf - k_round) < 1e-9 and k_round >= 1:
        idx = int(k_round)
    else:
        idx = int(math.ceil(kf))
    idx = min(max(idx, 1), n)
    return float(ys[idx - 1])


def _log_abs_expm1(x):
    # log |e^x - 1|; expm1 keeps small-x accuracy, branch avoids overflow
    if x > 709.0:
        return x
    v = math.expm1(x)
    return math.log(abs(v)) if v != 0.0 else -math.inf


def _signed_lse(signs, logs):
    """Sum of signs[i] * exp(logs[i]) as (sign, log|sum|)."""
    m = -math.inf
    for l in logs:
        if l > m:
            m = l
    if m == -math.inf:
        return 0.0, -math.inf
    tot = 0.0
    for s, l in zip(signs, logs):
        if l > -math.inf:
            tot += s * math.exp(l - m)
    if tot == 0.0:
        return 0.0, -math.inf
    return math.copysign(1.0, tot), m + math.log(abs(tot))


def _interval_terms(a, b, c):
    """Signed-log integrals over one order-statistic interval (a, b).

    Returns (psi_sign, psi_log, phi_log) for
        psi = integral of mu * exp(-c mu),  phi = integral of exp(-c mu),
    handling the unbounded end intervals and the c -> 0 regime. phi is a
    positive integral whenever the interval is nonempty, so only its log is
    returned.
    """
    if a == -math.inf:
        # c < 0 here (k = 0, tau > 0); mass decays toward -inf
        phi_log = -c * b - math.log(-c)
        q = b + 1.0 / c
        if q == 0.0:
            return 0.0, -math.inf, phi_log
        # psi = -(e^{-cb}/c) (b + 1/c) = (e^{-cb}/|c|) q
        return math.copysign(1.0, q), -c * b + math.log(abs(q)) - math.log(-c), phi_log
    if b == math.inf:
        # c > 0 here (k = n, tau < 1)
        phi_log = -c * a - math.log(c)
        q = a + 1.0 / c
        if q == 0.0:
            return 0.0, -math.inf, phi_log
        return math.copysign(1.0, q), -c * a + math.log(abs(q)) - math.log(c), phi_log
    d = b - a
    if d <= 0.0:
        return 0.0, -math.inf, -math.inf
    if c == 0.0:
        # k/n = tau branch: psi = (b^2 - a^2)/2, phi = b - a
        m = a + b
        phi_log = math.log(d)
        if m == 0.0:
            return 0.0, -math.inf, phi_log
        return math.copysign(1.0, m), math.log(d) + math.log(abs(m)) - math.log(2.0), phi_log
    z = c * d
    if abs(z) < 1e-4:
        # series for (1 - e^{-z})/z and (1 - (1+z) e^{-z})/z^2; the raw
        # exponential differences cancel catastrophically in this regime
        s0 = 1.0 - z / 2.0 + z * z / 6.0 - z ** 3 / 24.0 + z ** 4 / 120.0
        s1 = 0.5 - z / 3.0 + z * z / 8.0 - z ** 3 / 30.0 + z ** 4 / 144.0
        phi_log = -c * a + math.log(d) + math.log(s0)
        inner = a * s0 + d * s1
        if inner == 0.0:
            return 0.0, -math.inf, phi_log
        return (
            math.copysign(1.0, inner),
            -c * a + math.log(d) + math.log(abs(inner)),
            phi_log,
        )
    log_c = math.log(abs(c))
    phi_log = -c * a + _log_abs_expm1(-z) - log_c
    # psi = (a e^{-ca} - b e^{-cb})/c + phi/c, as three signed-log terms
    signs = []
    logs = []
    if a != 0.0:
        signs.append(math.copysign(1.0, a) * math.copysign(1.0, c))
        logs.append(math.log(abs(a)) - c * a - log_c)
    if b != 0.0:
        signs.append(-math.copysign(1.0, b) * math.copysign(1.0, c))
        logs.append(math.log(abs(b)) - c * b - log_c)
    signs.append(math.copysign(1.0, c))
    logs.append(phi_log - log_c)
    psi_sign, psi_log = _signed_lse(signs, logs)
    return psi_sign, psi_log, phi_log


def posterior_mean_quantile(y, tau, lam):
    """Posterior mean of mu under pi(mu|y) propto exp(-lambda^{-1} R_tau(mu)).

    Evaluates the closed-form ratio of inner products over order-statistic
    intervals entirely in log space with sign tracking, including the two
    unbounded end intervals. Data are centered by their median first; the
    estimator is translation equivariant, so this only improves conditioning.
    """
    tau = _validate_tau(tau)
    lam = float(lam)
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    if n == 0:
        raise ValueError("posterior_mean_quantile of an empty sample")
    if n >= 2 and np.all(y == y[0]):
        # collapsed interior intervals; every quantile equals the value
        return float(y[0])
    shift = float(np.median(y))
    ys = np.sort(y - shift)
    inv = 1.0 / lam

    prefix = np.concatenate(([0.0], np.cumsum(ys)))
    total = prefix[-1]
    num_signs = []
    num_logs = []
    den_logs = []
    for k in range(n + 1):
        logw = inv * (prefix[k] - tau * total)
        if 0 < k < n and abs(k - n * tau) < 1e-12:
            c = 0.0
        else:
            c = inv * (k - n * tau)
        a = ys[k - 1] if k >= 1 else -math.inf
        b = ys[k] if k < n else math.inf
        psi_sign, psi_log, phi_log = _interval_terms(a, b, c)
        if phi_log > -math.inf:
            den_logs.append(logw + phi_log)
        if psi_log > -math.inf:
            num_signs.append(psi_sign)
            num_logs.append(logw + psi_log)

    num_sign, num_log = _signed_lse(num_signs, num_logs)
    _, den_log = _signed_lse([1.0] * len(den_logs), den_logs)
    if den_log == -math.inf or not math.isfinite(den_log):
        raise FloatingPointError("posterior normalizer underflowed")
    if num_sign == 0.0:
        return shift
    return shift + num_sign * math.exp(num_log - den_log)
