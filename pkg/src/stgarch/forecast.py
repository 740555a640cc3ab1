"""One-step-ahead variance prediction, rolling re-estimation and MSE ratios."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DomainError, NonFiniteError, StgarchError, ZeroDenominator
from .model import ModelSpec, residuals
from .priors import PriorConfig
from .sampler import Chain, McmcConfig, run_chain

logger = logging.getLogger(__name__)

MAX_SKIPPED_FRACTION = 0.05


@dataclass(frozen=True)
class ForecastRecord:
    t: int
    h_hat: float
    realized_proxy: float
    model_tag: str
    error: str | None = None


def predict_variance(chain: Chain, y, spec: ModelSpec | None = None) -> float:
    """Posterior mean of the one-step-ahead conditional variance h_{T+1}.

    Each draw is filtered through y and the variance recursion is advanced
    one step.  Draws whose recursion overflows are skipped; more than 5%
    skipped is an error.
    """
    spec = spec or chain.spec
    if len(chain) == 0:
        raise DomainError("chain is empty")
    y = np.ascontiguousarray(y, dtype=float)
    h0 = float(np.var(y)) if spec.h_init == "sample" else None
    preds = []
    for i in range(len(chain)):
        out = residuals(y, spec, chain.state(i), h0)
        if out is not None:
            preds.append(out[2])
    skipped = len(chain) - len(preds)
    if skipped > MAX_SKIPPED_FRACTION * len(chain):
        raise NonFiniteError(f"{skipped} of {len(chain)} draws gave a non-finite forecast")
    return float(np.mean(preds))


def rolling_forecast(
    y_full,
    split: int,
    spec: ModelSpec,
    prior_cfg: PriorConfig | None = None,
    mcmc_cfg: McmcConfig | None = None,
    refit: str = "full",
    warm_iterations: int | None = None,
    warm_burn_in: int | None = None,
    model_tag: str | None = None,
) -> list[ForecastRecord]:
    """Fit on y[:t] and predict h at index t, for t = split, ..., len(y_full) - 1.

    ``refit="full"`` runs a fresh chain at every step.  ``refit="warm"``
    starts each step after the first from the previous chain's final state
    and adapted scales, with ``warm_iterations`` / ``warm_burn_in`` (default
    a quarter of the configured run).  Step t uses seed ``mcmc_cfg.seed + t``.
    A failing step yields a record with ``h_hat = nan`` and the error text.
    """
    y_full = np.asarray(y_full, dtype=float)
    if split <= spec.p + 30:
        raise DomainError("split must exceed p + 30")
    if split >= len(y_full):
        raise DomainError("split leaves nothing to forecast")
    if refit not in ("full", "warm"):
        raise DomainError(f"unknown refit strategy {refit!r}")
    mcmc_cfg = mcmc_cfg or McmcConfig()
    tag = model_tag or f"{spec.error_family.value}-{spec.transition.value}"
    warm_cfg = replace(
        mcmc_cfg,
        iterations=warm_iterations or max(mcmc_cfg.iterations // 4, 2),
        burn_in=warm_burn_in if warm_burn_in is not None else mcmc_cfg.burn_in // 4,
    )
    records = []
    previous: Chain | None = None
    for t in range(split, len(y_full)):
        y = y_full[:t]
        init = None
        cfg = replace(mcmc_cfg, seed=mcmc_cfg.seed + t)
        if refit == "warm" and previous is not None and previous.final_state is not None:
            init = previous.final_state.copy()
            if init.w is not None:
                init.w = np.append(init.w, 1.0)[-(t - spec.p) :]
            cfg = replace(warm_cfg, seed=mcmc_cfg.seed + t, proposal_scales=dict(previous.scales))
        try:
            chain = run_chain(y, spec, prior_cfg, cfg, init=init)
            h_hat = predict_variance(chain, y, spec)
        except StgarchError as exc:
            logger.warning("forecast step t=%d failed: %s", t, exc)
            records.append(ForecastRecord(t, math.nan, float(y_full[t] ** 2), tag, error=str(exc)))
            continue
        previous = chain
        records.append(ForecastRecord(t, h_hat, float(y_full[t] ** 2), tag))
    return records


def mse_ratio(records_g: Sequence[ForecastRecord], records_t: Sequence[ForecastRecord], window: int = 5) -> np.ndarray:
    """Sliding ratio of Gaussian to Student-t squared forecast errors.

    Element i covers records i..i+window-1.  Values above 1 favour the
    Student-t model.  A window where the Student-t error is exactly zero gives
    +inf (or 1 when the Gaussian error is zero too).
    """
    if len(records_g) != len(records_t):
        raise DomainError("record sequences must have equal length")
    if len(records_g) < window:
        raise DomainError("need at least `window` records")
    if any(a.t != b.t for a, b in zip(records_g, records_t)):
        raise DomainError("records are not aligned in time")
    proxy = np.array([r.realized_proxy for r in records_g])
    eg = (np.array([r.h_hat for r in records_g]) - proxy) ** 2
    et = (np.array([r.h_hat for r in records_t]) - proxy) ** 2
    # direct window sums; a running cumsum would break the exact identities
    n_windows = len(eg) - window + 1
    num = np.array([eg[i : i + window].sum() for i in range(n_windows)])
    den = np.array([et[i : i + window].sum() for i in range(n_windows)])
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    zero = den == 0.0
    out[zero & (num == 0.0)] = 1.0
    out[zero & (num > 0.0)] = math.inf
    return out


def mse_ratio_strict(records_g, records_t, window: int = 5) -> np.ndarray:
    """As :func:`mse_ratio` but raises ZeroDenominator instead of returning +inf."""
    out = mse_ratio(records_g, records_t, window)
    if np.any(np.isinf(out)):
        raise ZeroDenominator("a Student-t window has zero squared error")
    return out


def ratio_proxy_correlation(ratios, records: Sequence[ForecastRecord], window: int = 5) -> float:
    """Correlation between each window's MSE ratio and its mean realized proxy."""
    proxy = np.array([r.realized_proxy for r in records])
    means = np.array([proxy[i : i + window].mean() for i in range(len(proxy) - window + 1)])
    ratios = np.asarray(ratios, dtype=float)
    ok = np.isfinite(ratios)
    return float(np.corrcoef(ratios[ok], means[ok])[0, 1])


CSV_COLUMNS = ("t", "model_tag", "h_hat", "realized_proxy")


def records_to_csv(records: Sequence[ForecastRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([r.t, r.model_tag, repr(r.h_hat), repr(r.realized_proxy)])
    return buf.getvalue()


def records_from_csv(text: str) -> list[ForecastRecord]:
    rows = csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#"))
    return [
        ForecastRecord(int(r["t"]), float(r["h_hat"]), float(r["realized_proxy"]), r["model_tag"])
        for r in rows
    ]
