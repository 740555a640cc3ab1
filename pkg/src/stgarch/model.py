"""Model definition: specification, parameter state, filtering and densities.

The mean equation is an ARMA(p, q) with an optional in-mean term,

    y_t = mu + sum_j phi_j y_{t-j} + sum_j theta_j u_{t-j} + delta sqrt(h_t) + u_t,

and the conditional variance is a GARCH(r, s) recursion with a smooth
transition term acting on the previous residual,

    h_t = omega + lambda u_{t-1}^2 f(u_{t-1}, gamma)
          + sum_j beta_j h_{t-j} + sum_j alpha_j u_{t-j}^2.

Student-t errors are standardised so that h_t is the conditional variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

import numpy as np
from scipy.special import gammaln

from ._kernels import filter_kernel, transition_scalar
from .errors import DomainError, NonFiniteError

LOG_2PI = math.log(2.0 * math.pi)


class ErrorFamily(str, Enum):
    GAUSSIAN = "gaussian"
    STUDENT_T = "t"


class Transition(str, Enum):
    NONE = "none"
    EXPONENTIAL = "exponential"
    LOGISTIC = "logistic"
    LOGISTIC2 = "logistic2"

    @property
    def code(self) -> int:
        return _TRANSITION_CODES[self]


_TRANSITION_CODES = {
    Transition.NONE: 0,
    Transition.EXPONENTIAL: 1,
    Transition.LOGISTIC: 2,
    Transition.LOGISTIC2: 3,
}


@dataclass(frozen=True)
class ModelSpec:
    """Orders and structural options of an ARMA(p,q)-M / GARCH(r,s) model.

    ``h_init`` fixes the variance used for every pre-sample h and squared
    residual: ``"sample"`` (sample variance of y), ``"unconditional"``
    (omega / (1 - sum alpha - sum beta)) or a positive number.
    """

    p: int = 1
    q: int = 0
    r: int = 1
    s: int = 1
    error_family: ErrorFamily = ErrorFamily.GAUSSIAN
    transition: Transition = Transition.NONE
    include_m_term: bool = False
    include_mu: bool = False
    h_init: Union[str, float] = "sample"

    def __post_init__(self):
        object.__setattr__(self, "error_family", ErrorFamily(self.error_family))
        object.__setattr__(self, "transition", Transition(self.transition))
        for name in ("p", "q", "r", "s"):
            if int(getattr(self, name)) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.p + self.q + self.r + self.s < 1:
            raise DomainError("at least one of p, q, r, s must be positive")
        if self.transition is not Transition.NONE and self.s < 1:
            raise DomainError("a transition term requires s >= 1")
        if isinstance(self.h_init, str):
            if self.h_init not in ("sample", "unconditional"):
                raise DomainError(f"unknown h_init {self.h_init!r}")
        elif not self.h_init > 0:
            raise DomainError("numeric h_init must be positive")

    @property
    def is_t(self) -> bool:
        return self.error_family is ErrorFamily.STUDENT_T

    @property
    def asymmetric(self) -> bool:
        return self.transition is not Transition.NONE


@dataclass
class ParamState:
    """One point of the parameter space.

    ``w`` holds the latent mixing variables of the Student-t representation,
    one per observation t = p+1..N; it is ignored for Gaussian models.
    """

    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta: float = 0.0
    omega0: float = 1.0
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam: float = 1.0
    gamma: float = 1.0
    nu: float = 10.0
    mu: float = 0.0
    w: np.ndarray | None = None

    def __post_init__(self):
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if self.w is not None:
            self.w = np.asarray(self.w, dtype=float)

    def replace(self, **changes) -> "ParamState":
        return replace(self, **changes)

    def copy(self) -> "ParamState":
        return replace(
            self,
            phi=self.phi.copy(),
            theta=self.theta.copy(),
            alpha=self.alpha.copy(),
            beta=self.beta.copy(),
            w=None if self.w is None else self.w.copy(),
        )


def check_shapes(spec: ModelSpec, state: ParamState) -> None:
    for name, n in (("phi", spec.p), ("theta", spec.q), ("alpha", spec.s), ("beta", spec.r)):
        if getattr(state, name).shape != (n,):
            raise DomainError(f"{name} must have length {n}")


def in_support(spec: ModelSpec, state: ParamState) -> bool:
    """True when the state satisfies every constraint of the parameter space."""
    if not (state.omega0 > 0 and np.all(state.alpha >= 0) and np.all(state.beta >= 0)):
        return False
    if not state.alpha.sum() + state.beta.sum() < 1.0:
        return False
    if spec.asymmetric and not (state.lam > 0 and state.gamma > 0):
        return False
    if spec.is_t:
        if not state.nu > 2:
            return False
        if state.w is not None and not np.all(state.w > 0):
            return False
    values = np.concatenate([state.phi, state.theta, [state.delta, state.mu]])
    return bool(np.all(np.isfinite(values)))


def transition(kind, u, gamma):
    """Smooth transition weight in [0, 1] applied to the squared residual.

    Works elementwise on arrays; saturates to 0 or 1 instead of overflowing.
    """
    kind = Transition(kind)
    if kind is Transition.NONE:
        raise DomainError("transition kind must not be NONE")
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    u = np.asarray(u, dtype=float)
    z = gamma * u
    if kind is Transition.EXPONENTIAL:
        out = -np.expm1(-z * u)
    elif kind is Transition.LOGISTIC:
        out = _expit(z)
    else:
        out = _expit(-z)
    return float(out) if out.ndim == 0 else out


def _expit(z):
    # symmetric branches keep f(z) + f(-z) == 1 to the last bit
    e = np.exp(-np.abs(z))
    pos = 1.0 / (1.0 + e)
    return np.where(z >= 0, pos, e / (1.0 + e))


@dataclass(frozen=True)
class FilterOutput:
    u: np.ndarray
    h: np.ndarray
    loglik: float
    h_next: float = math.nan


def resolve_h_init(y, spec: ModelSpec, state: ParamState) -> float:
    if spec.h_init == "sample":
        return float(np.var(y))
    if spec.h_init == "unconditional":
        return state.omega0 / (1.0 - state.alpha.sum() - state.beta.sum())
    return float(spec.h_init)


def _run_kernel(y, spec, state, h0=None):
    y = np.ascontiguousarray(y, dtype=float)
    return filter_kernel(
        y,
        spec.p,
        float(state.mu) if spec.include_mu else 0.0,
        state.phi,
        state.theta,
        float(state.delta) if spec.include_m_term else 0.0,
        float(state.omega0),
        state.alpha,
        state.beta,
        float(state.lam),
        float(state.gamma),
        spec.transition.code,
        resolve_h_init(y, spec, state) if h0 is None else h0,
    )


def residuals(y, spec: ModelSpec, state: ParamState, h0: float | None = None):
    """(u, h, h_next) for the state, or None if the recursion is not finite.

    ``h0`` overrides the initial variance (callers filtering the same y many
    times pass the precomputed sample variance).
    """
    u, h, h_next, ok = _run_kernel(y, spec, state, h0)
    return (u, h, h_next) if ok else None


def filter(y, spec: ModelSpec, state: ParamState) -> FilterOutput:
    """Filter residuals and conditional variances, with the marginal log-likelihood.

    Raises
    ------
    NonFiniteError
        If any residual or variance overflows.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] <= spec.p:
        raise DomainError("y must be a 1-d series longer than p")
    check_shapes(spec, state)
    out = residuals(y, spec, state)
    if out is None:
        raise NonFiniteError("recursion produced a non-finite value")
    u, h, h_next = out
    return FilterOutput(u=u, h=h, loglik=marginal_loglik(u, h, spec, state.nu), h_next=h_next)


def marginal_loglik(u, h, spec: ModelSpec, nu: float) -> float:
    if spec.is_t:
        ll = np.sum(logpdf_student_t(u, nu, h))
    else:
        ll = np.sum(logpdf_gaussian(u, h))
    return float(ll) if np.isfinite(ll) else -math.inf


def logpdf_gaussian(u, h):
    """Normal log-density with mean zero and variance h."""
    h = np.asarray(h, dtype=float)
    if np.any(~(h > 0)):
        raise DomainError("variance must be positive")
    u = np.asarray(u, dtype=float)
    out = -0.5 * (LOG_2PI + np.log(h) + u * u / h)
    return float(out) if out.ndim == 0 else out


def logpdf_student_t(u, nu, h):
    """Log-density of the Student-t standardised to variance h (nu > 2)."""
    if not nu > 2:
        raise DomainError("nu must exceed 2")
    h = np.asarray(h, dtype=float)
    if np.any(~(h > 0)):
        raise DomainError("variance must be positive")
    u = np.asarray(u, dtype=float)
    scale2 = (nu - 2.0) * h
    const = gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu) - 0.5 * math.log(math.pi)
    out = const - 0.5 * np.log(scale2) - 0.5 * (nu + 1.0) * np.log1p(u * u / scale2)
    return float(out) if out.ndim == 0 else out


def mixture_variance(h, spec: ModelSpec, state: ParamState):
    """Diagonal of H: w_t (nu-2)/nu h_t for Student-t, h_t for Gaussian."""
    if not spec.is_t:
        return np.asarray(h, dtype=float)
    w = np.ones_like(h) if state.w is None else state.w
    return w * ((state.nu - 2.0) / state.nu) * h


def gaussian_loglik(z, hdiag) -> float:
    """sum of N(z_t; 0, hdiag_t) log-densities."""
    ll = -0.5 * np.sum(LOG_2PI + np.log(hdiag) + z * z / hdiag)
    return float(ll) if np.isfinite(ll) else -math.inf


def conditional_loglik(y, spec: ModelSpec, state: ParamState) -> float:
    """Log-likelihood given the mixing variables: -1/2 log|H| - 1/2 z'H^-1 z - n/2 log 2pi.

    H is diagonal, so the quadratic form is a plain sum.  Returns -inf when the
    recursion is not finite.
    """
    if spec.is_t:
        if not state.nu > 2:
            raise DomainError("nu must exceed 2")
        if state.w is not None and state.w.shape != (len(y) - spec.p,):
            raise DomainError("w must have length N - p")
    out = residuals(y, spec, state)
    if out is None:
        return -math.inf
    u, h, _ = out
    return gaussian_loglik(u, mixture_variance(h, spec, state))


@dataclass(frozen=True)
class DesignMatrices:
    """Regression form y = X phi + A theta + Htilde psi + u of the mean equation.

    Diagonal matrices are stored by their diagonals; ``Htilde`` and ``H``
    materialise them when a dense form is wanted.
    """

    y: np.ndarray
    X: np.ndarray
    A: np.ndarray
    htilde_diag: np.ndarray
    h_diag: np.ndarray

    @property
    def Htilde(self) -> np.ndarray:
        return np.diag(self.htilde_diag)

    @property
    def H(self) -> np.ndarray:
        return np.diag(self.h_diag)


def lag_matrix(x, lags: int, start: int, pre_sample=None) -> np.ndarray:
    """Rows t = start..len(x)-1 of (x_{t-1}, ..., x_{t-lags}).

    Indices before 0 take ``pre_sample`` (only used for residual lags).
    """
    n = len(x) - start
    out = np.empty((n, lags))
    for j in range(lags):
        lo = start - j - 1
        if lo >= 0:
            out[:, j] = x[lo : lo + n]
        else:
            out[:, j] = pre_sample
            out[-lo:, j] = x[: n + lo]
    return out


def design_matrices(y, spec: ModelSpec, state: ParamState, filtered=None, X=None) -> DesignMatrices:
    y = np.asarray(y, dtype=float)
    if filtered is None:
        filtered = residuals(y, spec, state)
        if filtered is None:
            raise NonFiniteError("recursion produced a non-finite value")
    u, h = filtered[0], filtered[1]
    return DesignMatrices(
        y=y[spec.p :],
        X=lag_matrix(y, spec.p, spec.p) if X is None else X,
        A=lag_matrix(u, spec.q, 0, pre_sample=0.0),
        htilde_diag=np.sqrt(h),
        h_diag=mixture_variance(h, spec, state),
    )


def transition_value(spec: ModelSpec, u: float, gamma: float) -> float:
    """Scalar transition weight using the compiled kernel (0 when symmetric)."""
    if not spec.asymmetric:
        return 0.0
    return transition_scalar(spec.transition.code, float(u), float(gamma))


def param_names(spec: ModelSpec) -> list[str]:
    """Names of the scalar parameters, in the column order used for chains."""
    names = ["mu"] if spec.include_mu else []
    names += [f"phi_{j + 1}" for j in range(spec.p)]
    names += [f"theta_{j + 1}" for j in range(spec.q)]
    if spec.include_m_term:
        names.append("delta")
    names.append("omega")
    names += [f"alpha_{j + 1}" for j in range(spec.s)]
    names += [f"beta_{j + 1}" for j in range(spec.r)]
    if spec.asymmetric:
        names += ["lambda", "gamma"]
    if spec.is_t:
        names.append("nu")
    return names


def state_to_vector(state: ParamState, spec: ModelSpec) -> np.ndarray:
    parts = [[state.mu]] if spec.include_mu else []
    parts += [state.phi, state.theta]
    if spec.include_m_term:
        parts.append([state.delta])
    parts += [[state.omega0], state.alpha, state.beta]
    if spec.asymmetric:
        parts.append([state.lam, state.gamma])
    if spec.is_t:
        parts.append([state.nu])
    return np.concatenate([np.asarray(x, dtype=float) for x in parts])


def vector_to_state(vec, spec: ModelSpec, w=None, template: ParamState | None = None) -> ParamState:
    vec = np.asarray(vec, dtype=float)
    i = 0

    def take(n):
        nonlocal i
        out = vec[i : i + n]
        i += n
        return out

    base = template.copy() if template is not None else ParamState()
    kw = {}
    if spec.include_mu:
        kw["mu"] = float(take(1)[0])
    kw["phi"] = take(spec.p).copy()
    kw["theta"] = take(spec.q).copy()
    if spec.include_m_term:
        kw["delta"] = float(take(1)[0])
    kw["omega0"] = float(take(1)[0])
    kw["alpha"] = take(spec.s).copy()
    kw["beta"] = take(spec.r).copy()
    if spec.asymmetric:
        kw["lam"], kw["gamma"] = (float(x) for x in take(2))
    if spec.is_t:
        kw["nu"] = float(take(1)[0])
    kw["w"] = w if w is not None else base.w
    return base.replace(**kw)
