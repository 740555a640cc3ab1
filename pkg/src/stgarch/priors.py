"""Prior densities, the likelihood pathology check and the joint log-posterior."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .model import (
    ModelSpec,
    ParamState,
    gaussian_loglik,
    in_support,
    mixture_variance,
    residuals,
)
from .special import jeffreys_bracket


class NuPrior(str, Enum):
    JEFFREYS = "jeffreys"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class PriorConfig:
    """Prior settings.

    ``bounds`` optionally truncates the flat priors to boxes, keyed by
    parameter name (``phi``, ``theta``, ``delta``, ``mu``, ``omega``,
    ``alpha``, ``beta``, ``lambda``, ``gamma``, ``nu``).  Vector parameters
    share one interval.  Truncation makes every prior proper, which the
    simulation-based sampler checks rely on.
    """

    gamma0: float = 5.0
    nu_prior: NuPrior = NuPrior.JEFFREYS
    nu_rate: float = 0.1
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nu_prior", NuPrior(self.nu_prior))
        if not self.gamma0 > 0:
            raise DomainError("gamma0 must be positive")
        if self.nu_prior is NuPrior.EXPONENTIAL and not self.nu_rate > 0:
            raise DomainError("nu_rate must be positive")


def log_jeffreys_nu(nu: float) -> float:
    """Unnormalised log-density of the independent Jeffreys prior for nu > 2.

    Returns -inf if the bracket term is not positive in floating point.
    """
    if not nu > 2:
        raise DomainError("nu must exceed 2")
    b = jeffreys_bracket(nu)
    if not b > 0:
        return -math.inf
    return 0.5 * (math.log(nu / (nu + 3.0)) + math.log(b))


def log_exponential_nu(nu: float, rate: float) -> float:
    if not nu > 2:
        raise DomainError("nu must exceed 2")
    return math.log(rate) - rate * nu


def log_nu_prior(nu: float, cfg: PriorConfig) -> float:
    if cfg.nu_prior is NuPrior.JEFFREYS:
        return log_jeffreys_nu(nu)
    return log_exponential_nu(nu, cfg.nu_rate)


def log_gamma_prior(gamma: float, gamma0: float) -> float:
    """-log(1 + (gamma - gamma0)^2), the Cauchy-type kernel centred at gamma0."""
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    return -math.log1p((gamma - gamma0) ** 2)


def _within(values, bound) -> bool:
    lo, hi = bound
    values = np.atleast_1d(values)
    return bool(np.all(values > lo) and np.all(values < hi))


def flat_block_logprior(state: ParamState, spec: ModelSpec, bounds=None) -> float:
    """0 inside the support (and inside ``bounds`` if given), -inf outside."""
    if not in_support(spec, state):
        return -math.inf
    if bounds:
        fields = {
            "mu": state.mu,
            "phi": state.phi,
            "theta": state.theta,
            "delta": state.delta,
            "omega": state.omega0,
            "alpha": state.alpha,
            "beta": state.beta,
            "lambda": state.lam,
            "gamma": state.gamma,
            "nu": state.nu,
        }
        for name, bound in bounds.items():
            if not _within(fields[name], bound):
                return -math.inf
    return 0.0


class Verdict(str, Enum):
    ILL_BEHAVED = "ill-behaved"
    NO_EVIDENCE = "no-evidence"


def likelihood_wellbehaved_test(zhat) -> Verdict:
    """Flag a likelihood in nu that has no interior maximum.

    ``zhat`` are standardised residuals under normality; the likelihood is
    ill-behaved when sum((zhat^2 - 1)^2) < 2n.
    """
    z = np.asarray(zhat, dtype=float).ravel()
    if z.size < 1:
        raise DomainError("need at least one residual")
    stat = np.sum((z * z - 1.0) ** 2)
    return Verdict.ILL_BEHAVED if stat < 2 * z.size else Verdict.NO_EVIDENCE


def log_inverse_gamma(w, shape: float, scale: float):
    """Log-density of IG(shape, scale): scale^a / Gamma(a) w^-(a+1) exp(-scale/w)."""
    w = np.asarray(w, dtype=float)
    return shape * math.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(w) - scale / w


def log_mixing_prior(w, nu: float) -> float:
    return float(np.sum(log_inverse_gamma(w, 0.5 * nu, 0.5 * nu)))


def log_prior(state: ParamState, spec: ModelSpec, cfg: PriorConfig) -> float:
    """Sum of every prior term, including the mixing-variable density."""
    lp = flat_block_logprior(state, spec, cfg.bounds)
    if lp == -math.inf:
        return lp
    if spec.asymmetric:
        lp += log_gamma_prior(state.gamma, cfg.gamma0)
    if spec.is_t:
        lp += log_nu_prior(state.nu, cfg)
        if state.w is not None:
            lp += log_mixing_prior(state.w, state.nu)
    return lp


def log_posterior(y, spec: ModelSpec, state: ParamState, prior_cfg: PriorConfig) -> float:
    """Unnormalised joint log-posterior of (parameters, mixing variables).

    Never returns NaN: points outside the support or with a non-finite
    recursion give -inf.
    """
    lp = log_prior(state, spec, prior_cfg)
    if lp == -math.inf:
        return lp
    out = residuals(y, spec, state)
    if out is None:
        return -math.inf
    u, h, _ = out
    total = gaussian_loglik(u, mixture_variance(h, spec, state)) + lp
    return total if math.isfinite(total) else -math.inf
