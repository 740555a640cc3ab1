"""Digamma and trigamma functions, and the bracket term of the Jeffreys prior for nu.

Both polygamma functions shift the argument upwards with the recurrences

    psi(x)  = psi(x + 1) - 1/x
    psi'(x) = psi'(x + 1) + 1/x**2

until it reaches ``_ASYMPTOTIC_FROM`` and then sum the Stirling-type
asymptotic series.  Accuracy is close to machine precision on x >= 1e-3.
"""

import math

import numpy as np

from .errors import DomainError

_ASYMPTOTIC_FROM = 10.0

# Bernoulli numbers B_2, B_4, ..., B_16
_BERNOULLI = np.array(
    [1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510]
)
_K2 = 2.0 * np.arange(1, len(_BERNOULLI) + 1)

# trigamma(nu/2) - trigamma((nu+1)/2) - 2(nu+3)/(nu(nu+1)^2) = sum c_k nu^-k
# for k = 4..12, obtained from the trigamma asymptotic expansion.
_BRACKET_SERIES = np.array([6.0, -12.0, 14.0, -12.0, 22.0, -60.0, 30.0, 276.0, 38.0])
_BRACKET_SERIES_FROM = 50.0


_BERNOULLI_LIST = [float(b) for b in _BERNOULLI]
_BRACKET_LIST = [float(c) for c in _BRACKET_SERIES]


def _digamma_float(x: float) -> float:
    corr = 0.0
    while x < _ASYMPTOTIC_FROM:
        corr += 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for k in range(len(_BERNOULLI_LIST), 0, -1):
        series = (series + _BERNOULLI_LIST[k - 1] / (2 * k)) * inv2
    return math.log(x) - 0.5 / x - series - corr


def _trigamma_float(x: float) -> float:
    corr = 0.0
    while x < _ASYMPTOTIC_FROM:
        corr += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    for b in reversed(_BERNOULLI_LIST):
        series = (series + b) * inv2
    return inv + 0.5 * inv2 + series * inv + corr


def _bracket_float(v: float) -> float:
    if v > _BRACKET_SERIES_FROM:
        t = 1.0 / v
        acc = 0.0
        for c in reversed(_BRACKET_LIST):
            acc = (acc + c) * t
        return acc * t**3
    return _trigamma_float(0.5 * v) - _trigamma_float(0.5 * (v + 1.0)) - 2.0 * (v + 3.0) / (v * (v + 1.0) ** 2)


def _scalar(x):
    return isinstance(x, (float, int)) and not isinstance(x, bool)


def _as_positive_array(x, name):
    arr = np.array(x, dtype=float, copy=True, ndmin=1)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} requires x > 0")
    return arr


def _shift(x, power):
    """Shift ``x`` up to the asymptotic range, returning the shifted x and the
    accumulated correction sum of x**-power."""
    corr = np.zeros_like(x)
    small = x < _ASYMPTOTIC_FROM
    while np.any(small):
        corr[small] += x[small] ** -power
        x[small] += 1.0
        small = x < _ASYMPTOTIC_FROM
    return x, corr


def _unwrap(result, x):
    return float(result[0]) if np.ndim(x) == 0 else result.reshape(np.shape(x))


def digamma(x):
    """Logarithmic derivative of the gamma function for x > 0."""
    if _scalar(x):
        if not x > 0:
            raise DomainError("digamma requires x > 0")
        return _digamma_float(float(x))
    z, corr = _shift(_as_positive_array(x, "digamma"), 1)
    inv2 = 1.0 / (z * z)
    # sum_k B_2k / (2k z^2k), evaluated by Horner in 1/z^2
    series = np.zeros_like(z)
    for b, k2 in zip(_BERNOULLI[::-1], _K2[::-1]):
        series = (series + b / k2) * inv2
    out = np.log(z) - 0.5 / z - series - corr
    return _unwrap(out, x)


def trigamma(x):
    """Derivative of the digamma function for x > 0."""
    if _scalar(x):
        if not x > 0:
            raise DomainError("trigamma requires x > 0")
        return _trigamma_float(float(x))
    z, corr = _shift(_as_positive_array(x, "trigamma"), 2)
    inv = 1.0 / z
    inv2 = inv * inv
    series = np.zeros_like(z)
    for b in _BERNOULLI[::-1]:
        series = (series + b) * inv2
    out = inv + 0.5 * inv2 + series * inv + corr
    return _unwrap(out, x)


def jeffreys_bracket(nu):
    """trigamma(nu/2) - trigamma((nu+1)/2) - 2(nu+3)/(nu(nu+1)^2) for nu > 0.

    The three terms cancel to O(nu^-4), so for large nu the difference is
    taken from its asymptotic series instead.
    """
    if _scalar(nu):
        if not nu > 0:
            raise DomainError("jeffreys_bracket requires nu > 0")
        return _bracket_float(float(nu))
    v = _as_positive_array(nu, "jeffreys_bracket")
    out = np.empty_like(v)
    big = v > _BRACKET_SERIES_FROM
    if np.any(~big):
        s = v[~big]
        out[~big] = (
            trigamma(s / 2.0) - trigamma((s + 1.0) / 2.0) - 2.0 * (s + 3.0) / (s * (s + 1.0) ** 2)
        )
    if np.any(big):
        t = 1.0 / v[big]
        acc = np.zeros_like(t)
        for c in _BRACKET_SERIES[::-1]:
            acc = (acc + c) * t
        out[big] = acc * t**3
    return _unwrap(out, nu)
