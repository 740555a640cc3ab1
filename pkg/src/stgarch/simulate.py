"""Data-generating processes and the Monte Carlo study harness."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from ._kernels import simulate_kernel
from .errors import DomainError, ExplosivePath
from .model import ErrorFamily, ModelSpec, ParamState, Transition, check_shapes, in_support
from .priors import PriorConfig
from .sampler import McmcConfig, run_chain
from .selection import Estimator, MarginalLikelihood, Verdict, bayes_test, newton_raftery, shifted_gamma

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 10


def default_true_state() -> ParamState:
    """Parameter values of the reference simulation design."""
    return ParamState(
        phi=[0.8], theta=[0.1], delta=0.0, omega0=0.25, alpha=[0.5], beta=[0.1], lam=1.0, gamma=5.0, nu=3.0
    )


def default_spec(family=ErrorFamily.STUDENT_T, transition=Transition.EXPONENTIAL) -> ModelSpec:
    return ModelSpec(
        p=1, q=1, r=1, s=1, error_family=ErrorFamily(family), transition=Transition(transition), include_m_term=True
    )


@dataclass(frozen=True)
class SimulatedPath:
    y: np.ndarray
    u: np.ndarray
    h: np.ndarray
    w: np.ndarray | None


def _h_init(spec: ModelSpec, state: ParamState) -> float:
    if isinstance(spec.h_init, str):
        # a sample variance cannot seed a simulation; use the unconditional level
        return state.omega0 / (1.0 - state.alpha.sum() - state.beta.sum())
    return float(spec.h_init)


def simulate_path(
    spec: ModelSpec,
    state: ParamState,
    T: int,
    rng: np.random.Generator,
    burn_in: int = 200,
    y0=None,
    attempts: int = MAX_ATTEMPTS,
) -> SimulatedPath:
    """Simulate T observations, discarding ``burn_in`` leading ones.

    The first p values of the full path are the fixed pre-sample ``y0``
    (zeros by default); with ``burn_in=0`` they are part of the output, so
    filtering the returned y with ``h_init`` equal to the simulator's initial
    variance reproduces u exactly.
    """
    check_shapes(spec, state)
    if not in_support(spec, state):
        raise DomainError("true state is outside the parameter space")
    total = burn_in + T
    if total <= spec.p:
        raise DomainError("T + burn_in must exceed p")
    n = total - spec.p
    y0 = np.zeros(spec.p) if y0 is None else np.asarray(y0, dtype=float)
    for _ in range(attempts):
        eps = rng.standard_normal(n)
        w = None
        if spec.is_t:
            nu = state.nu
            w = (0.5 * nu) / rng.gamma(0.5 * nu, 1.0, size=n)
            eps = eps * np.sqrt((nu - 2.0) / nu * w)
        y = np.empty(total)
        y[: spec.p] = y0
        u, h, ok = simulate_kernel(
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
            _h_init(spec, state),
            eps,
        )
        if ok:
            k0 = max(burn_in - spec.p, 0)
            return SimulatedPath(
                y=y[burn_in:], u=u[k0:], h=h[k0:], w=None if w is None else w[k0:]
            )
        logger.debug("simulated path overflowed; redrawing")
    raise ExplosivePath(f"path overflowed in {attempts} attempts")


def simulate_dataset(
    spec: ModelSpec, true_state: ParamState, T: int, seed=None, rng=None, burn_in: int = 200
) -> np.ndarray:
    """T observations from the model.  With ``seed``, attempt k uses the
    stream seeded by (seed, k), so re-draws after an overflow are reproducible."""
    if rng is not None:
        return simulate_path(spec, true_state, T, rng, burn_in).y
    for attempt in range(MAX_ATTEMPTS):
        try:
            sub = np.random.default_rng([int(seed or 0), attempt])
            return simulate_path(spec, true_state, T, sub, burn_in, attempts=1).y
        except ExplosivePath:
            continue
    raise ExplosivePath("no finite path for any sub-seed")


class Dgp(str, Enum):
    GAUSSIAN = "gaussian"
    T3 = "t3"
    T6 = "t6"

    @property
    def family(self) -> ErrorFamily:
        return ErrorFamily.GAUSSIAN if self is Dgp.GAUSSIAN else ErrorFamily.STUDENT_T

    @property
    def nu(self) -> float | None:
        return {Dgp.GAUSSIAN: None, Dgp.T3: 3.0, Dgp.T6: 6.0}[self]


STUDY_PARAMS = ("alpha", "beta", "lambda", "gamma")
MODELS = ("gaussian", "t")
MAX_FAILED_FRACTION = 0.2


@dataclass(frozen=True)
class StudyConfig:
    """Monte Carlo design.  The default of 20 replications is desk scale;
    ``full_scale()`` gives the 100-replication design."""

    n_reps: int = 20
    sample_sizes: tuple = (150, 500)
    dgps: tuple = (Dgp.GAUSSIAN, Dgp.T3, Dgp.T6)
    true_params: ParamState = field(default_factory=default_true_state)
    seed: int = 0
    workers: int = 1
    estimator: str = "newton_raftery"
    burn_in: int = 200
    transition: Transition = Transition.LOGISTIC

    def __post_init__(self):
        if self.n_reps < 1:
            raise DomainError("n_reps must be at least 1")
        if any(int(n) <= 20 for n in self.sample_sizes):
            raise DomainError("sample sizes must exceed 20")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be a uint64")
        if self.estimator not in ("newton_raftery", "shifted_gamma"):
            raise DomainError(f"unknown estimator {self.estimator!r}")
        object.__setattr__(self, "sample_sizes", tuple(sorted({int(n) for n in self.sample_sizes})))
        object.__setattr__(self, "dgps", tuple(Dgp(d) for d in self.dgps))
        object.__setattr__(self, "transition", Transition(self.transition))

    def full_scale(self) -> "StudyConfig":
        return replace(self, n_reps=100)


@dataclass
class ReplicationResult:
    dgp: Dgp
    n: int
    rep: int
    estimates: dict = field(default_factory=dict)
    log_ml: dict = field(default_factory=dict)
    selected: str | None = None
    correct: bool | None = None
    pred_sq_error: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class StudyReport:
    """Cell-level summaries keyed by (dgp, n, ...)."""

    mse_tables: dict = field(default_factory=dict)
    decision_rates: dict = field(default_factory=dict)
    pred_mse: dict = field(default_factory=dict)
    pred_median: dict = field(default_factory=dict)
    nu_median: dict = field(default_factory=dict)
    estimator_rates: dict = field(default_factory=dict)
    replications: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    failed_cells: list = field(default_factory=list)

    def to_rows(self) -> list[dict]:
        rows = []
        for (dgp, n, model, par), v in sorted(self.mse_tables.items()):
            rows.append({"dgp": dgp, "n": n, "model": model, "quantity": f"mse_{par}", "value": v})
        for (dgp, n, model), v in sorted(self.pred_mse.items()):
            rows.append({"dgp": dgp, "n": n, "model": model, "quantity": "pred_mse", "value": v})
        for (dgp, n, model), v in sorted(self.pred_median.items()):
            rows.append({"dgp": dgp, "n": n, "model": model, "quantity": "pred_median_sq_error", "value": v})
        for (dgp, n), v in sorted(self.nu_median.items()):
            rows.append({"dgp": dgp, "n": n, "model": "t", "quantity": "nu_median_mean", "value": v})
        for (dgp, n), v in sorted(self.decision_rates.items()):
            rows.append({"dgp": dgp, "n": n, "model": "", "quantity": "correct_selection_rate", "value": v})
        for (dgp, n, est), v in sorted(self.estimator_rates.items()):
            rows.append({"dgp": dgp, "n": n, "model": "", "quantity": f"selection_rate_{est}", "value": v})
        for (dgp, n), v in sorted(self.replications.items()):
            rows.append({"dgp": dgp, "n": n, "model": "", "quantity": "replications", "value": v})
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, ["dgp", "n", "model", "quantity", "value"], lineterminator="\n")
        writer.writeheader()
        for row in self.to_rows():
            writer.writerow({**row, "value": repr(float(row["value"]))})
        return buf.getvalue()

    def to_json(self) -> dict:
        def keyed(d):
            return {"|".join(str(k) for k in key): v for key, v in sorted(d.items())}

        return {
            "mse_tables": keyed(self.mse_tables),
            "decision_rates": keyed(self.decision_rates),
            "pred_mse": keyed(self.pred_mse),
            "pred_median": keyed(self.pred_median),
            "nu_median": keyed(self.nu_median),
            "estimator_rates": keyed(self.estimator_rates),
            "replications": keyed(self.replications),
            "failures": keyed(self.failures),
            "failed_cells": ["|".join(map(str, c)) for c in self.failed_cells],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _rep_seed(seed: int, dgp: Dgp, n: int, rep: int) -> list[int]:
    # independent of execution order and of which other cells are run
    return [int(seed), ["gaussian", "t3", "t6"].index(dgp.value), int(n), int(rep)]


def _true_state_for(dgp: Dgp, base: ParamState) -> ParamState:
    state = base.copy()
    if dgp.nu is not None:
        state.nu = dgp.nu
    return state


def _estimate(chain, spec) -> dict:
    out = {
        "alpha": float(chain.column("alpha_1").mean()),
        "beta": float(chain.column("beta_1").mean()),
    }
    if spec.asymmetric:
        out["lambda"] = float(chain.column("lambda").mean())
        out["gamma"] = float(chain.column("gamma").mean())
    if spec.is_t:
        out["nu"] = float(np.median(chain.column("nu")))
    return out


def _log_ml(chain) -> dict:
    return {
        "newton_raftery": newton_raftery(chain.logliks).log_value,
        "shifted_gamma": shifted_gamma(chain.logliks, len(chain.names)).log_value,
    }


def _select(log_ml: dict, estimator: str) -> str:
    ml = {m: MarginalLikelihood(v[estimator], Estimator(estimator), 0.0, 0) for m, v in log_ml.items()}
    decision = bayes_test(ml["t"], ml["gaussian"])
    return "t" if decision.verdict is Verdict.ACCEPT_M1 else "gaussian"


def run_replication(
    dgp: Dgp,
    n: int,
    rep: int,
    cfg: StudyConfig,
    mcmc_cfg: McmcConfig | None = None,
    prior_cfg: PriorConfig | None = None,
) -> ReplicationResult:
    """Simulate one dataset of n + 1 points, fit both models on the first n and
    score parameter estimates, the Bayes test and the one-step forecast."""
    from .forecast import predict_variance

    mcmc_cfg = mcmc_cfg or McmcConfig()
    result = ReplicationResult(dgp, n, rep)
    true_state = _true_state_for(dgp, cfg.true_params)
    try:
        rng = np.random.default_rng(_rep_seed(cfg.seed, dgp, n, rep))
        y_all = simulate_path(default_spec(dgp.family, cfg.transition), true_state, n + 1, rng, cfg.burn_in).y
        y, y_next = y_all[:n], float(y_all[n])
        chains = {}
        for k, model in enumerate(MODELS):
            family = ErrorFamily.GAUSSIAN if model == "gaussian" else ErrorFamily.STUDENT_T
            spec = default_spec(family, cfg.transition)
            run_cfg = replace(mcmc_cfg, seed=int(rng.integers(2**63)) + k)
            chain = run_chain(y, spec, prior_cfg, run_cfg)
            chains[model] = chain
            result.estimates[model] = _estimate(chain, spec)
            result.log_ml[model] = _log_ml(chain)
            h_hat = predict_variance(chain, y, spec)
            result.pred_sq_error[model] = (h_hat - y_next**2) ** 2
        result.selected = _select(result.log_ml, cfg.estimator)
        result.correct = result.selected == ("gaussian" if dgp is Dgp.GAUSSIAN else "t")
    except Exception as exc:  # recorded per replication; the cell decides
        logger.warning("replication %s/%d/%d failed: %s", dgp.value, n, rep, exc)
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def _true_value(state: ParamState, par: str) -> float:
    return {
        "alpha": float(state.alpha[0]),
        "beta": float(state.beta[0]),
        "lambda": float(state.lam),
        "gamma": float(state.gamma),
    }[par]


def assemble_report(results: Sequence[ReplicationResult], cfg: StudyConfig) -> StudyReport:
    report = StudyReport()
    cells: dict = {}
    for r in results:
        cells.setdefault((r.dgp, r.n), []).append(r)
    for (dgp, n), reps in sorted(cells.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        key = (dgp.value, n)
        ok = [r for r in sorted(reps, key=lambda r: r.rep) if r.error is None]
        failed = [(r.rep, r.error) for r in reps if r.error is not None]
        report.failures[key] = failed
        report.replications[key] = len(ok)
        if not ok or len(failed) > MAX_FAILED_FRACTION * len(reps):
            report.failed_cells.append(key)
            continue
        truth = _true_state_for(dgp, cfg.true_params)
        for model in MODELS:
            for par in STUDY_PARAMS:
                errs = [(r.estimates[model][par] - _true_value(truth, par)) ** 2 for r in ok]
                report.mse_tables[(dgp.value, n, model, par)] = float(np.mean(errs))
            pe = [r.pred_sq_error[model] for r in ok]
            report.pred_mse[(dgp.value, n, model)] = float(np.mean(pe))
            report.pred_median[(dgp.value, n, model)] = float(np.median(pe))
        report.nu_median[key] = float(np.mean([r.estimates["t"]["nu"] for r in ok]))
        report.decision_rates[key] = float(np.mean([r.correct for r in ok]))
        truth_model = "gaussian" if dgp is Dgp.GAUSSIAN else "t"
        for est in ("newton_raftery", "shifted_gamma"):
            hits = [_select(r.log_ml, est) == truth_model for r in ok]
            report.estimator_rates[(dgp.value, n, est)] = float(np.mean(hits))
    return report


def _run_one(args):
    return run_replication(*args)


def run_study(
    cfg: StudyConfig, mcmc_cfg: McmcConfig | None = None, prior_cfg: PriorConfig | None = None
) -> StudyReport:
    """Run every (dgp, n, rep) replication and summarise each cell."""
    jobs = [
        (dgp, n, rep, cfg, mcmc_cfg, prior_cfg)
        for dgp in cfg.dgps
        for n in cfg.sample_sizes
        for rep in range(cfg.n_reps)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    return assemble_report(results, cfg)
