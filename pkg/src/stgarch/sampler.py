"""Metropolis-within-Gibbs sampler for smooth-transition ARMA-GARCH-M models.

One sweep updates, in order: the AR block (with mu when present), the MA
block, the in-mean coefficient, the variance block (omega, alpha, beta,
lambda, gamma), the mixing variables and nu.

The three mean-equation blocks are drawn from their Gaussian regression
conditionals computed with the current H, A and Htilde held fixed.  Because
h_t and the lagged residuals themselves move with the mean coefficients,
each Gaussian draw is used as a Metropolis-Hastings proposal whose reverse
density is evaluated at the proposed state; this keeps the exact joint
posterior invariant.  The variance block and nu use random walks on
unconstrained transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gammaln

from .errors import DomainError, NotEnoughData, SingularDesign
from .model import (
    LOG_2PI,
    ModelSpec,
    ParamState,
    design_matrices,
    gaussian_loglik,
    in_support,
    lag_matrix,
    marginal_loglik,
    mixture_variance,
    param_names,
    residuals,
    state_to_vector,
    vector_to_state,
)
from .priors import (
    PriorConfig,
    flat_block_logprior,
    log_gamma_prior,
    log_mixing_prior,
    log_nu_prior,
)

MAX_CONDITION = 1e12
DEFAULT_SCALES = {"variance": 0.1, "nu": 0.5}
_ADAPT_CENTRE_WEIGHT = 0.6


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 5000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    proposal_scales: Mapping[str, float] = field(default_factory=dict)
    adapt_target: tuple[float, float] = (0.2, 0.4)
    adapt: bool = True
    keep_weights: bool = False

    def __post_init__(self):
        if self.iterations < 1 or self.thin < 1:
            raise DomainError("iterations and thin must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise DomainError("burn_in must lie in [0, iterations)")
        if any(not v > 0 for v in self.proposal_scales.values()):
            raise DomainError("proposal scales must be positive")

    def scales(self) -> dict:
        return {**DEFAULT_SCALES, **self.proposal_scales}


@dataclass(frozen=True)
class Chain:
    """Posterior draws after burn-in and thinning.

    ``params`` has one row per draw and one column per name in ``names``.
    ``logliks`` is the marginal log-likelihood (mixing variables integrated
    out) at each draw.
    """

    spec: ModelSpec
    names: tuple[str, ...]
    params: np.ndarray
    logliks: np.ndarray
    acceptance: dict
    seed: int
    w_mean: np.ndarray | None = None
    weights: np.ndarray | None = None
    scales: dict = field(default_factory=dict)
    final_state: ParamState | None = None

    def __len__(self):
        return self.params.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.params[:, self.names.index(name)]

    def state(self, i: int) -> ParamState:
        w = self.weights[i] if self.weights is not None else self.w_mean
        return vector_to_state(self.params[i], self.spec, w=w)

    @property
    def draws(self) -> Iterator[ParamState]:
        return (self.state(i) for i in range(len(self)))

    def posterior_mean(self) -> ParamState:
        return vector_to_state(self.params.mean(axis=0), self.spec, w=self.w_mean)


def metropolis_accept(log_ratio: float, rng: np.random.Generator) -> bool:
    """Standard MH acceptance; NaN and -inf ratios are rejected."""
    u = rng.random()
    if not log_ratio > -math.inf:
        return False
    return bool(math.log(u) < log_ratio) if u > 0 else True


# Gaussian regression blocks -------------------------------------------------


@dataclass(frozen=True)
class GaussianConditional:
    """N(mean, precision^-1) with ``chol`` the lower Cholesky factor of the precision."""

    mean: np.ndarray
    chol: np.ndarray

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(self.mean.shape[0])
        return self.mean + solve_triangular(self.chol, z, lower=True, trans="T")

    def logpdf(self, x) -> float:
        d = self.chol.T @ (np.asarray(x) - self.mean)
        return float(
            np.sum(np.log(np.diag(self.chol))) - 0.5 * d @ d - 0.5 * len(d) * LOG_2PI
        )

    @property
    def covariance(self) -> np.ndarray:
        return cho_solve((self.chol, True), np.eye(len(self.mean)))


def _condition(a) -> float:
    if a.shape == (1, 1):
        return 1.0 if a[0, 0] > 0 else math.inf
    return float(np.linalg.cond(a))


def regression_conditional(Z, target, hdiag) -> GaussianConditional:
    """Conditional of b in target = Z b + e, e ~ N(0, diag(hdiag)), flat prior on b."""
    Zw = Z / hdiag[:, None]
    precision = Z.T @ Zw
    if not np.all(np.isfinite(precision)) or _condition(precision) > MAX_CONDITION:
        raise SingularDesign("regression block precision is numerically singular")
    chol = np.linalg.cholesky(precision)
    mean = cho_solve((chol, True), Zw.T @ target)
    return GaussianConditional(mean=mean, chol=chol)


def _mean_parts(dm, spec: ModelSpec, state: ParamState):
    """Fitted contributions of each mean block: (mu, X phi, A theta, Htilde psi)."""
    mu = state.mu if spec.include_mu else 0.0
    ar = dm.X @ state.phi if spec.p else 0.0
    ma = dm.A @ state.theta if spec.q else 0.0
    m = state.delta * dm.htilde_diag if spec.include_m_term else 0.0
    return mu, ar, ma, m


def _block_conditional(block: str, y, spec, state, filtered, X=None) -> GaussianConditional:
    dm = design_matrices(y, spec, state, filtered, X)
    mu, ar, ma, m = _mean_parts(dm, spec, state)
    if block == "phi":
        Z = dm.X
        if spec.include_mu:
            Z = np.column_stack([np.ones(len(dm.y)), Z])
        target = dm.y - ma - m
    elif block == "theta":
        Z, target = dm.A, dm.y - mu - ar - m
    elif block == "psi":
        Z, target = dm.htilde_diag[:, None], dm.y - mu - ar - ma
    else:
        raise ValueError(block)
    return regression_conditional(Z, target, dm.h_diag)


def _block_values(block, spec, state) -> np.ndarray:
    if block == "phi":
        return np.concatenate([[state.mu], state.phi]) if spec.include_mu else state.phi
    if block == "theta":
        return state.theta
    return np.array([state.delta])


def _with_block(block, spec, state, values) -> ParamState:
    values = np.asarray(values, dtype=float)
    if block == "phi":
        if spec.include_mu:
            return state.replace(mu=float(values[0]), phi=values[1:].copy())
        return state.replace(phi=values.copy())
    if block == "theta":
        return state.replace(theta=values.copy())
    return state.replace(delta=float(values[0]))


def _conditional_draw(block, y, spec, state, rng, filtered=None):
    y = np.asarray(y, dtype=float)
    if filtered is None:
        filtered = residuals(y, spec, state)
    return _block_conditional(block, y, spec, state, filtered).draw(rng)


def draw_phi(y, spec: ModelSpec, state: ParamState, rng, filtered=None) -> np.ndarray:
    """Draw the AR coefficients from N(Phi_hat, (X'H^-1 X)^-1) at the current H, A, Htilde.

    When the model has a level mu, the returned vector is (mu, phi_1, ..., phi_p).
    """
    return _conditional_draw("phi", y, spec, state, rng, filtered)


def draw_theta(y, spec: ModelSpec, state: ParamState, rng, filtered=None) -> np.ndarray:
    """Draw the MA coefficients from N(mu_theta, (A'H^-1 A)^-1)."""
    return _conditional_draw("theta", y, spec, state, rng, filtered)


def draw_psi(y, spec: ModelSpec, state: ParamState, rng, filtered=None) -> float:
    """Draw the in-mean coefficient delta from N(mu_psi, (Htilde'H^-1 Htilde)^-1)."""
    return float(_conditional_draw("psi", y, spec, state, rng, filtered)[0])


# Variance block transform ----------------------------------------------------


def variance_to_unconstrained(spec: ModelSpec, state: ParamState) -> np.ndarray:
    """(log omega, additive log-ratios of (alpha, beta) against the slack, log lambda, log gamma)."""
    coefs = np.maximum(np.concatenate([state.alpha, state.beta]), 1e-12)
    slack = 1.0 - coefs.sum()
    parts = [[math.log(state.omega0)], np.log(coefs) - math.log(slack)]
    if spec.asymmetric:
        parts.append([math.log(state.lam), math.log(state.gamma)])
    return np.concatenate(parts)


def unconstrained_to_variance(spec: ModelSpec, state: ParamState, x) -> tuple[ParamState, float]:
    """Inverse transform; returns the new state and log|Jacobian| of the map x -> params."""
    k = spec.s + spec.r
    e = np.exp(x[1 : 1 + k])
    denom = 1.0 + e.sum()
    coefs = e / denom
    omega = math.exp(x[0])
    logjac = x[0] + float(np.sum(x[1 : 1 + k])) - (k + 1) * math.log(denom)
    kw = dict(omega0=omega, alpha=coefs[: spec.s], beta=coefs[spec.s :])
    if spec.asymmetric:
        kw["lam"] = math.exp(x[1 + k])
        kw["gamma"] = math.exp(x[2 + k])
        logjac += x[1 + k] + x[2 + k]
    return state.replace(**kw), logjac


# Sampler ---------------------------------------------------------------------


class GibbsSampler:
    """Holds the current state and cached filter output for one chain."""

    def __init__(
        self,
        y,
        spec: ModelSpec,
        prior_cfg: PriorConfig,
        state: ParamState,
        scales: Mapping[str, float] | None = None,
        variance_chol: np.ndarray | None = None,
    ):
        self.spec = spec
        self.prior = prior_cfg
        self.scales = {**DEFAULT_SCALES, **(scales or {})}
        self.state = state.copy()
        self._cached_nu, self._cached_w, self._cached_terms = None, None, 0.0
        dim = len(variance_to_unconstrained(spec, state))
        self.variance_chol = np.eye(dim) if variance_chol is None else variance_chol
        self.set_data(y)

    def set_data(self, y):
        self.y = np.ascontiguousarray(y, dtype=float)
        n = len(self.y) - self.spec.p
        if self.spec.is_t and (self.state.w is None or self.state.w.shape != (n,)):
            self.state.w = np.ones(n)
        self._X = lag_matrix(self.y, self.spec.p, self.spec.p)
        self._h0 = float(np.var(self.y)) if self.spec.h_init == "sample" else None
        self.filtered = self._residuals(self.state)
        self.logpost = self._log_posterior(self.state, self.filtered)
        if not math.isfinite(self.logpost):
            raise DomainError("initial state has zero posterior density")

    def _residuals(self, state):
        return residuals(self.y, self.spec, state, self._h0)

    def _nu_terms(self, state) -> float:
        # prior of nu plus the mixing density: fixed while (nu, w) are
        if state.nu != self._cached_nu or state.w is not self._cached_w:
            self._cached_nu, self._cached_w = state.nu, state.w
            self._cached_terms = log_nu_prior(state.nu, self.prior) + log_mixing_prior(state.w, state.nu)
        return self._cached_terms

    def _log_posterior(self, state, filtered) -> float:
        if filtered is None:
            return -math.inf
        spec = self.spec
        lp = flat_block_logprior(state, spec, self.prior.bounds)
        if lp == -math.inf:
            return lp
        if spec.asymmetric:
            lp += log_gamma_prior(state.gamma, self.prior.gamma0)
        if spec.is_t:
            lp += self._nu_terms(state)
        u, h, _ = filtered
        total = lp + gaussian_loglik(u, mixture_variance(h, self.spec, state))
        return total if math.isfinite(total) else -math.inf

    def _propose(self, proposal: ParamState, log_correction: float, rng, filtered=None) -> bool:
        if filtered is None:
            filtered = self._residuals(proposal) if in_support(self.spec, proposal) else None
        lp = self._log_posterior(proposal, filtered)
        if metropolis_accept(lp - self.logpost + log_correction, rng):
            self.state, self.filtered, self.logpost = proposal, filtered, lp
            return True
        return False

    def gaussian_block(self, block: str, rng) -> bool:
        y, spec = self.y, self.spec
        forward = _block_conditional(block, y, spec, self.state, self.filtered, self._X)
        new_values = forward.draw(rng)
        proposal = _with_block(block, spec, self.state, new_values)
        filtered = self._residuals(proposal)
        if filtered is None:
            rng.random()
            return False
        try:
            reverse = _block_conditional(block, y, spec, proposal, filtered, self._X)
        except SingularDesign:
            rng.random()
            return False
        correction = reverse.logpdf(_block_values(block, spec, self.state)) - forward.logpdf(new_values)
        return self._propose(proposal, correction, rng, filtered)

    def variance_block(self, rng) -> bool:
        x = variance_to_unconstrained(self.spec, self.state)
        _, logjac = unconstrained_to_variance(self.spec, self.state, x)
        step = self.scales["variance"] * (self.variance_chol @ rng.standard_normal(len(x)))
        x_new = x + step
        with np.errstate(over="ignore"):
            proposal, logjac_new = unconstrained_to_variance(self.spec, self.state, x_new)
        return self._propose(proposal, logjac_new - logjac, rng)

    def mixing_weights(self, rng):
        u, h, _ = self.filtered
        self.state.w = sample_mixing_weights(u, h, self.state.nu, rng)
        self.logpost = self._log_posterior(self.state, self.filtered)

    def nu_step(self, rng) -> bool:
        u, h, _ = self.filtered
        target = _NuTarget(u, h, self.state.w, self.prior)
        nu = self.state.nu
        x = math.log(nu - 2.0)
        x_new = x + self.scales["nu"] * rng.standard_normal()
        nu_new = 2.0 + math.exp(x_new)
        ratio = target(nu_new) + x_new - target(nu) - x
        if metropolis_accept(ratio, rng):
            self.state = self.state.replace(nu=nu_new)
            self.logpost = self._log_posterior(self.state, self.filtered)
            return True
        return False

    def sweep(self, rng) -> dict:
        spec = self.spec
        acc = {}
        if spec.p or spec.include_mu:
            acc["phi"] = self.gaussian_block("phi", rng)
        if spec.q:
            acc["theta"] = self.gaussian_block("theta", rng)
        if spec.include_m_term:
            acc["psi"] = self.gaussian_block("psi", rng)
        acc["variance"] = self.variance_block(rng)
        if spec.is_t:
            self.mixing_weights(rng)
            acc["nu"] = self.nu_step(rng)
        return acc

    def marginal_loglik(self) -> float:
        u, h, _ = self.filtered
        return marginal_loglik(u, h, self.spec, self.state.nu)


class _NuTarget:
    """log p(nu | w, u, h) up to a constant, from sufficient statistics."""

    def __init__(self, u, h, w, prior: PriorConfig):
        self.n = len(u)
        self.quad = float(np.sum(u * u / (w * h)))
        self.sum_log_w = float(np.sum(np.log(w)))
        self.sum_inv_w = float(np.sum(1.0 / w))
        self.prior = prior

    def __call__(self, nu: float) -> float:
        bound = self.prior.bounds.get("nu") if self.prior.bounds else None
        if not nu > 2 or (bound is not None and not bound[0] < nu < bound[1]):
            return -math.inf
        c = (nu - 2.0) / nu
        half = 0.5 * nu
        lik = -0.5 * self.n * math.log(c) - 0.5 * self.quad / c
        mix = self.n * (half * math.log(half) - gammaln(half)) - (half + 1.0) * self.sum_log_w - half * self.sum_inv_w
        return lik + mix + log_nu_prior(nu, self.prior)


def sample_mixing_weights(u, h, nu: float, rng) -> np.ndarray:
    """w_t ~ IG((nu+1)/2, (nu + u_t^2 nu / ((nu-2) h_t)) / 2), independently over t."""
    if not nu > 2:
        raise DomainError("nu must exceed 2")
    scale = 0.5 * (nu + u * u * nu / ((nu - 2.0) * h))
    return scale / rng.gamma(0.5 * (nu + 1.0), 1.0, size=len(u))


def draw_mixing_weights(y, spec: ModelSpec, state: ParamState, rng) -> np.ndarray:
    if not spec.is_t:
        raise DomainError("mixing variables exist only for Student-t errors")
    out = residuals(y, spec, state)
    if out is None:
        raise DomainError("state gives a non-finite recursion")
    return sample_mixing_weights(out[0], out[1], state.nu, rng)


def draw_variance_block(
    y, spec, state, rng, scale: float, prior_cfg: PriorConfig | None = None, chol=None
) -> tuple[ParamState, bool]:
    """One random-walk MH update of (omega, alpha, beta, lambda, gamma)."""
    sampler = GibbsSampler(y, spec, prior_cfg or PriorConfig(), state, {"variance": scale}, chol)
    accepted = sampler.variance_block(rng)
    return sampler.state, accepted


def draw_nu(y, spec, state, rng, scale: float, prior_cfg: PriorConfig | None = None) -> tuple[float, bool]:
    """One random-walk MH update of log(nu - 2) given the mixing variables."""
    if not spec.is_t:
        raise DomainError("nu exists only for Student-t errors")
    sampler = GibbsSampler(y, spec, prior_cfg or PriorConfig(), state, {"nu": scale})
    accepted = sampler.nu_step(rng)
    return sampler.state.nu, accepted


def initial_state(y, spec: ModelSpec, prior_cfg: PriorConfig | None = None) -> ParamState:
    """A crude but valid starting point: least-squares AR fit, moderate GARCH values."""
    prior_cfg = prior_cfg or PriorConfig()
    y = np.asarray(y, dtype=float)
    target = y[spec.p :]
    Z = lag_matrix(y, spec.p, spec.p)
    if spec.include_mu:
        Z = np.column_stack([np.ones(len(target)), Z])
    coef = np.linalg.lstsq(Z, target, rcond=None)[0] if Z.shape[1] else np.zeros(0)
    resid = target - Z @ coef if Z.shape[1] else target
    mu = float(coef[0]) if spec.include_mu else 0.0
    phi = coef[1:] if spec.include_mu else coef
    phi = np.clip(phi, -0.95, 0.95)
    var = float(np.var(resid)) or 1.0
    alpha = np.full(spec.s, 0.15 / max(spec.s, 1))
    beta = np.full(spec.r, 0.5 / max(spec.r, 1))
    persistence = alpha.sum() + beta.sum()
    state = ParamState(
        mu=mu,
        phi=phi,
        theta=np.zeros(spec.q),
        delta=0.0,
        omega0=var * (1.0 - persistence) * 0.5,
        alpha=alpha,
        beta=beta,
        lam=0.2,
        gamma=prior_cfg.gamma0,
        nu=10.0,
        w=np.ones(len(target)) if spec.is_t else None,
    )
    return _respect_bounds(state, prior_cfg)


def _respect_bounds(state: ParamState, prior_cfg: PriorConfig) -> ParamState:
    """Move scalar starting values to the middle of any truncation interval they violate."""
    b = prior_cfg.bounds or {}
    kw = {}
    for name, attr in (("omega", "omega0"), ("lambda", "lam"), ("gamma", "gamma"), ("nu", "nu"), ("delta", "delta"), ("mu", "mu")):
        if name in b:
            lo, hi = b[name]
            v = getattr(state, attr)
            if not lo < v < hi:
                kw[attr] = 0.5 * (lo + hi)
    for name in ("phi", "theta", "alpha", "beta"):
        if name in b:
            lo, hi = b[name]
            v = getattr(state, name)
            kw[name] = np.where((v > lo) & (v < hi), v, 0.5 * (lo + hi))
    return state.replace(**kw)


class _ScaleAdapter:
    """Robbins-Monro adaptation of a log proposal scale towards an acceptance rate."""

    def __init__(self, scale: float, target: float):
        self.log_scale = math.log(scale)
        self.target = target
        self.k = 0

    def update(self, accepted: bool) -> float:
        self.k += 1
        self.log_scale += (float(accepted) - self.target) / self.k**_ADAPT_CENTRE_WEIGHT
        return math.exp(self.log_scale)

    def reset(self, scale: float):
        self.log_scale = math.log(scale)
        self.k = 0


def run_chain(
    y,
    spec: ModelSpec,
    prior_cfg: PriorConfig | None = None,
    mcmc_cfg: McmcConfig | None = None,
    init: ParamState | None = None,
) -> Chain:
    """Run one chain; reproducible bit-for-bit from ``mcmc_cfg.seed``.

    During burn-in the random-walk scales follow a Robbins-Monro schedule
    towards the middle of ``adapt_target`` and the variance-block proposal
    covariance is re-estimated from the burn-in path; both are frozen after.
    """
    prior_cfg = prior_cfg or PriorConfig()
    cfg = mcmc_cfg or McmcConfig()
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) <= spec.p + 10:
        raise NotEnoughData(f"need more than p + 10 = {spec.p + 10} observations")
    rng = np.random.default_rng(cfg.seed)
    state = init.copy() if init is not None else initial_state(y, spec, prior_cfg)
    sampler = GibbsSampler(y, spec, prior_cfg, state, cfg.scales())

    target = 0.5 * (cfg.adapt_target[0] + cfg.adapt_target[1])
    adapters = {name: _ScaleAdapter(sampler.scales[name], target) for name in ("variance", "nu")}
    dim = sampler.variance_chol.shape[0]
    burn_path = []

    names = tuple(param_names(spec))
    n_keep = len(range(cfg.burn_in, cfg.iterations, cfg.thin))
    params = np.empty((n_keep, len(names)))
    logliks = np.empty(n_keep)
    weights = None
    w_sum = None
    if spec.is_t:
        w_sum = np.zeros(len(y) - spec.p)
        if cfg.keep_weights:
            weights = np.empty((n_keep, len(y) - spec.p))
    counts: dict[str, list[int]] = {}
    j = 0
    for it in range(cfg.iterations):
        acc = sampler.sweep(rng)
        if it < cfg.burn_in:
            if cfg.adapt:
                for name, adapter in adapters.items():
                    if name in acc:
                        sampler.scales[name] = adapter.update(acc[name])
                burn_path.append(variance_to_unconstrained(spec, sampler.state))
                if it + 1 >= 400 and (it + 1) % 200 == 0 and it + 1 <= cfg.burn_in - 100:
                    recent = np.array(burn_path[len(burn_path) // 2 :])
                    cov = np.atleast_2d(np.cov(recent, rowvar=False)) + 1e-10 * np.eye(dim)
                    try:
                        sampler.variance_chol = np.linalg.cholesky(cov)
                    except np.linalg.LinAlgError:
                        pass
                    else:
                        scale = 2.38 / math.sqrt(dim)
                        sampler.scales["variance"] = scale
                        adapters["variance"].reset(scale)
            continue
        for name, flag in acc.items():
            c = counts.setdefault(name, [0, 0])
            c[0] += flag
            c[1] += 1
        if (it - cfg.burn_in) % cfg.thin == 0:
            params[j] = state_to_vector(sampler.state, spec)
            logliks[j] = sampler.marginal_loglik()
            if spec.is_t:
                w_sum += sampler.state.w
                if weights is not None:
                    weights[j] = sampler.state.w
            j += 1
    acceptance = {k: c[0] / c[1] for k, c in counts.items()}
    return Chain(
        spec=spec,
        names=names,
        params=params,
        logliks=logliks,
        acceptance=acceptance,
        seed=cfg.seed,
        w_mean=None if w_sum is None else w_sum / n_keep,
        weights=weights,
        scales=dict(sampler.scales),
        final_state=sampler.state.copy(),
    )
