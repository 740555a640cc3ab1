"""Compiled inner loops for the mean/variance recursion.

Transition codes: 0 none, 1 exponential, 2 logistic, 3 logistic-2.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def transition_scalar(code, u, gamma):
    if code == 1:
        return -math.expm1(-gamma * u * u)
    z = gamma * u if code == 2 else -gamma * u
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _variance_step(k, u, h, omega, alpha, beta, lam, gamma, code, h0):
    ht = omega
    for j in range(beta.shape[0]):
        i = k - j - 1
        ht += beta[j] * (h[i] if i >= 0 else h0)
    for j in range(alpha.shape[0]):
        i = k - j - 1
        ht += alpha[j] * (u[i] * u[i] if i >= 0 else h0)
    # pre-sample residuals are zero, so the asymmetric term starts at k = 1
    if code != 0 and k >= 1:
        ul = u[k - 1]
        ht += lam * ul * ul * transition_scalar(code, ul, gamma)
    return ht


@njit(cache=True)
def filter_kernel(y, p, mu, phi, theta, delta, omega, alpha, beta, lam, gamma, code, h0):
    """Run the recursion over t = p..N-1 (0-based).

    Returns (u, h, h_next, ok) where h_next is the one-step-ahead variance and
    ok is False as soon as any quantity stops being finite.
    """
    n = y.shape[0] - p
    u = np.zeros(n)
    h = np.zeros(n)
    for k in range(n):
        ht = _variance_step(k, u, h, omega, alpha, beta, lam, gamma, code, h0)
        if not (ht > 0.0 and ht < np.inf):
            return u, h, np.nan, False
        h[k] = ht
        m = mu + delta * math.sqrt(ht)
        t = p + k
        for j in range(p):
            m += phi[j] * y[t - j - 1]
        for j in range(theta.shape[0]):
            i = k - j - 1
            if i >= 0:
                m += theta[j] * u[i]
        ut = y[t] - m
        if not math.isfinite(ut):
            return u, h, np.nan, False
        u[k] = ut
    h_next = _variance_step(n, u, h, omega, alpha, beta, lam, gamma, code, h0)
    return u, h, h_next, math.isfinite(h_next)


@njit(cache=True)
def simulate_kernel(y, p, mu, phi, theta, delta, omega, alpha, beta, lam, gamma, code, h0, scale):
    """Generate y[p:] in place from the innovation multipliers ``scale``.

    ``scale[k]`` multiplies sqrt(h) to give u (standard normal draw, times the
    mixing factor for Student-t errors).  Uses exactly the conventions of
    ``filter_kernel`` so that filtering the output recovers u bit-for-bit.
    """
    n = y.shape[0] - p
    u = np.zeros(n)
    h = np.zeros(n)
    for k in range(n):
        ht = _variance_step(k, u, h, omega, alpha, beta, lam, gamma, code, h0)
        if not (ht > 0.0 and ht < np.inf):
            return u, h, False
        h[k] = ht
        sq = math.sqrt(ht)
        m = mu + delta * sq
        t = p + k
        for j in range(p):
            m += phi[j] * y[t - j - 1]
        for j in range(theta.shape[0]):
            i = k - j - 1
            if i >= 0:
                m += theta[j] * u[i]
        ut = scale[k] * sq
        y[t] = m + ut
        # recompute as the filter would, so the round trip is exact
        u[k] = y[t] - m
        if not math.isfinite(y[t]):
            return u, h, False
    return u, h, True
