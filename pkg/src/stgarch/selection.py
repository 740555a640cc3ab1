"""Marginal likelihood estimates from posterior log-likelihood draws, and Bayes tests."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError

MIN_DRAWS = 100
MAX_ITER = 500
TOL = 1e-8
LAMBDA_CAP = 1.0 - 1e-6


class Estimator(str, Enum):
    NEWTON_RAFTERY = "newton_raftery"
    SHIFTED_GAMMA = "shifted_gamma"


@dataclass(frozen=True)
class MarginalLikelihood:
    """Estimated log p(x).

    ``d_or_lambda`` is the mixing weight d for Newton-Raftery and the fitted
    gamma scale for the shifted-gamma estimator.
    """

    log_value: float
    estimator: Estimator
    d_or_lambda: float
    iterations_used: int
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "log_value": self.log_value,
            "estimator": self.estimator.value,
            "d_or_lambda": self.d_or_lambda,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalLikelihood":
        return cls(
            log_value=float(d["log_value"]),
            estimator=Estimator(d["estimator"]),
            d_or_lambda=float(d["d_or_lambda"]),
            iterations_used=int(d["iterations_used"]),
            converged=bool(d.get("converged", True)),
        )


def _check(logliks) -> np.ndarray:
    l = np.asarray(logliks, dtype=float).ravel()
    if l.size < MIN_DRAWS:
        raise DomainError(f"need at least {MIN_DRAWS} log-likelihood draws")
    if not np.all(np.isfinite(l)):
        raise DomainError("log-likelihood draws must be finite")
    return l


def harmonic_mean(logliks) -> float:
    l = np.asarray(logliks, dtype=float)
    return float(math.log(l.size) - logsumexp(-l))


def newton_raftery(logliks, d: float = 0.01) -> MarginalLikelihood:
    """Newton-Raftery stabilised harmonic-mean estimator.

    Solves the fixed-point equation

        p = [dm/(1-d) + sum L_i / (d p + (1-d) L_i)]
            / [dm/((1-d) p) + sum 1 / (d p + (1-d) L_i)]

    in log space, starting from the plain harmonic mean.  Log-likelihoods are
    centred on their maximum first, so shifting every draw by c shifts the
    result by c.
    """
    if not 0 < d < 1:
        raise DomainError("d must lie in (0, 1)")
    l = _check(logliks)
    ref = float(l.max())
    l = l - ref
    m = l.size
    log_dm = math.log(d * m / (1.0 - d))
    log_d, log_1d = math.log(d), math.log1p(-d)
    est = harmonic_mean(l)
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        a = np.logaddexp(log_d + est, log_1d + l)
        num = np.logaddexp(log_dm, logsumexp(l - a))
        den = np.logaddexp(log_dm - est, logsumexp(-a))
        new = float(num - den)
        if abs(new - est) < TOL:
            est, converged = new, True
            break
        est = new
    if not converged:
        warnings.warn("Newton-Raftery iteration did not converge", RuntimeWarning, stacklevel=2)
    return MarginalLikelihood(est + ref, Estimator.NEWTON_RAFTERY, d, it, converged)


def shifted_gamma(logliks, n_params: int, l_max: float | None = None) -> MarginalLikelihood:
    """Shifted-gamma estimator: l_max - l_k ~ Gamma(shape n_params/2, scale lambda).

    log p(x) = l_max + (n_params/2) log(1 - lambda).  When ``l_max`` is not
    given it is estimated by max(mean + variance, max_k l_k).  The scale is
    the maximum-likelihood value at fixed shape, capped just below 1.
    A sample with no spread falls back to log p = l_max.
    """
    if n_params < 1:
        raise DomainError("n_params must be positive")
    l = _check(logliks)
    if np.ptp(l) == 0.0:
        top = float(l[0]) if l_max is None else float(l_max)
        return MarginalLikelihood(top, Estimator.SHIFTED_GAMMA, 0.0, 0)
    shape = 0.5 * n_params
    if l_max is None:
        centre = float(l.max())
        c = l - centre
        top = max(float(c.mean() + c.var(ddof=1)), 0.0)
    else:
        centre = float(l_max)
        c = l - centre
        top = 0.0
    gaps = top - c
    if np.any(gaps < 0):
        raise DomainError("l_max is below some log-likelihood draw")
    lam = min(float(gaps.mean()) / shape, LAMBDA_CAP)
    return MarginalLikelihood(centre + top + shape * math.log1p(-lam), Estimator.SHIFTED_GAMMA, lam, 1)


class Verdict(str, Enum):
    ACCEPT_M1 = "accept_m1"
    ACCEPT_M2 = "accept_m2"


EVIDENCE_BANDS = (
    (2.0, "Not worth more than a bare mention"),
    (6.0, "Positive"),
    (10.0, "Strong"),
    (math.inf, "Very strong"),
)
NEGATIVE_LABEL = "Negative (supports M2)"


def evidence_label(log_b12: float) -> str:
    """Kass-Raftery label of the evidence for M1 against M2."""
    two_log_b = 2.0 * log_b12
    if two_log_b < 0:
        return NEGATIVE_LABEL
    for upper, label in EVIDENCE_BANDS:
        if two_log_b < upper:
            return label
    return EVIDENCE_BANDS[-1][1]


@dataclass(frozen=True)
class BayesDecision:
    log_b12: float
    threshold: float
    verdict: Verdict
    evidence_label: str


def bayes_test(
    ml1: MarginalLikelihood,
    ml2: MarginalLikelihood,
    k1: float = 1.0,
    k2: float = 3.0,
    p1: float = 0.5,
    p2: float = 0.5,
) -> BayesDecision:
    """Accept M1 iff B12 > k2 P(H2) / (k1 P(H1)); ties keep M2.

    The default losses give the threshold B12 > 3.
    """
    if not (k1 > 0 and k2 > 0 and 0 < p1 < 1 and 0 < p2 < 1):
        raise DomainError("losses must be positive and probabilities in (0, 1)")
    if not math.isclose(p1 + p2, 1.0, abs_tol=1e-12):
        raise DomainError("p1 + p2 must equal 1")
    log_b12 = ml1.log_value - ml2.log_value
    threshold = k2 * p2 / (k1 * p1)
    verdict = Verdict.ACCEPT_M1 if log_b12 > math.log(threshold) else Verdict.ACCEPT_M2
    return BayesDecision(log_b12, threshold, verdict, evidence_label(log_b12))
