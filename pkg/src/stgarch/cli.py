"""Command-line interface, data ingestion, serialisation and the likelihood surface.

Every command resolves one flat configuration (built-in defaults, then an
optional ``--config`` file, then ``--spec`` and the other flags), echoes it as
the run manifest and embeds it in every file it writes.  Feeding a written
``manifest.json`` back through ``--config`` reproduces the outputs byte for
byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateSample,
    DomainError,
    NonPositivePrice,
    NotEnoughData,
    ParseError,
    StgarchError,
)
from .forecast import mse_ratio, ratio_proxy_correlation, records_to_csv, rolling_forecast
from .model import (
    ErrorFamily,
    ModelSpec,
    ParamState,
    Transition,
    logpdf_student_t,
    param_names,
    residuals,
    vector_to_state,
)
from .priors import PriorConfig, Verdict, likelihood_wellbehaved_test
from .sampler import Chain, McmcConfig, run_chain
from .selection import MarginalLikelihood, bayes_test, newton_raftery, shifted_gamma
from .simulate import Dgp, StudyConfig, default_true_state, run_study, simulate_dataset

SCHEMA_VERSION = "1.0"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

COMMANDS = ("fit", "simulate", "study", "compare", "forecast", "surface")

DEFAULTS = {
    "seed": "0",
    "output": "out",
    "spec.p": "1",
    "spec.q": "1",
    "spec.r": "1",
    "spec.s": "1",
    "spec.family": "t",
    "spec.transition": "exponential",
    "spec.m_term": "true",
    "spec.mu": "false",
    "spec.h_init": "sample",
    "prior.gamma0": "5.0",
    "prior.nu_prior": "jeffreys",
    "prior.nu_rate": "0.1",
    "mcmc.iterations": "5000",
    "mcmc.burn_in": "2000",
    "mcmc.thin": "1",
    "mcmc.chains": "1",
    "data.input": "",
    "data.column": "",
    "data.transform": "none",
    "simulate.T": "500",
    "simulate.burn_in": "200",
    "truth.phi": "0.8",
    "truth.theta": "0.1",
    "truth.delta": "0.0",
    "truth.mu": "0.0",
    "truth.omega": "0.25",
    "truth.alpha": "0.5",
    "truth.beta": "0.1",
    "truth.lambda": "1.0",
    "truth.gamma": "5.0",
    "truth.nu": "3.0",
    "study.reps": "20",
    "study.sizes": "150,500",
    "study.dgps": "gaussian,t3,t6",
    "study.transition": "logistic",
    "study.estimator": "newton_raftery",
    "study.workers": "1",
    "compare.estimator": "newton_raftery",
    "compare.summaries": "",
    "forecast.split": "",
    "forecast.refit": "warm",
    "forecast.window": "5",
    "forecast.warm_iterations": "",
    "forecast.warm_burn_in": "",
    "surface.gamma": "lin:0.5:20:40",
    "surface.nu": "log:2.2:200:40",
    "surface.base": "",
}

# flags that map onto a single config key
FLAG_KEYS = {
    "input": "data.input",
    "column": "data.column",
    "transform": "data.transform",
    "output": "output",
    "seed": "seed",
    "reps": "study.reps",
    "sizes": "study.sizes",
    "chains": "mcmc.chains",
}

SUMMARY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": [
        "schema_version",
        "command",
        "seed",
        "manifest",
        "n_obs",
        "n_draws",
        "parameters",
        "acceptance",
        "marginal_likelihood",
    ],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "command": {"const": "fit"},
        "seed": {"type": "integer", "minimum": 0},
        "manifest": {"type": "object"},
        "n_obs": {"type": "integer", "minimum": 1},
        "n_draws": {"type": "integer", "minimum": 1},
        "chains": {"type": "integer", "minimum": 1},
        "parameters": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["mean", "median", "q025", "q975"],
                "properties": {k: {"type": "number"} for k in ("mean", "median", "q025", "q975")},
            },
        },
        "acceptance": {
            "type": "object",
            "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1},
        },
        "marginal_likelihood": {
            "type": "object",
            "required": ["newton_raftery", "shifted_gamma"],
            "additionalProperties": {
                "type": "object",
                "required": ["log_value", "estimator", "d_or_lambda", "iterations_used", "converged"],
            },
        },
        "likelihood_test": {"enum": [v.value for v in Verdict]},
    },
}


class UsageError(StgarchError):
    """Bad command-line arguments or configuration values."""


# ----------------------------------------------------------------- config


def parse_config_text(text: str, source: str = "config") -> dict:
    """Parse a flat ``key = value`` file (``#`` comments) or a JSON manifest."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        cfg = data.get("config", data)
        return {str(k): str(v) for k, v in cfg.items()}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{source} line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise UsageError(f"{source} line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def parse_spec_flag(text: str) -> dict:
    """``--spec p=1,q=1,family=t`` -> {"spec.p": "1", ...}."""
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise UsageError(f"--spec item {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        full = f"spec.{key}"
        if full not in DEFAULTS:
            raise UsageError(f"unknown spec field {key!r}")
        out[full] = value
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        loaded = parse_config_text(path.read_text(encoding="utf-8"), str(path))
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    if args.spec:
        cfg.update(parse_spec_flag(args.spec))
    if getattr(args, "summaries", None):
        cfg["compare.summaries"] = ",".join(str(p) for p in args.summaries)
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[key] = str(value)
    return cfg


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _grid(text: str) -> np.ndarray:
    """``lin:a:b:n``, ``log:a:b:n`` or an explicit comma list."""
    parts = text.split(":")
    if parts[0] in ("lin", "log") and len(parts) == 4:
        a, b, n = float(parts[1]), float(parts[2]), int(parts[3])
        return np.linspace(a, b, n) if parts[0] == "lin" else np.geomspace(a, b, n)
    return np.array(_floats(text))


def build_spec(cfg: dict) -> ModelSpec:
    h_init = cfg["spec.h_init"]
    if h_init not in ("sample", "unconditional"):
        h_init = float(h_init)
    family = {"t": ErrorFamily.STUDENT_T, "student_t": ErrorFamily.STUDENT_T}.get(
        cfg["spec.family"], cfg["spec.family"]
    )
    return ModelSpec(
        p=int(cfg["spec.p"]),
        q=int(cfg["spec.q"]),
        r=int(cfg["spec.r"]),
        s=int(cfg["spec.s"]),
        error_family=ErrorFamily(family),
        transition=Transition(cfg["spec.transition"]),
        include_m_term=_bool(cfg["spec.m_term"]),
        include_mu=_bool(cfg["spec.mu"]),
        h_init=h_init,
    )


def build_prior(cfg: dict) -> PriorConfig:
    return PriorConfig(
        gamma0=float(cfg["prior.gamma0"]), nu_prior=cfg["prior.nu_prior"], nu_rate=float(cfg["prior.nu_rate"])
    )


def build_mcmc(cfg: dict, seed_offset: int = 0) -> McmcConfig:
    return McmcConfig(
        iterations=int(cfg["mcmc.iterations"]),
        burn_in=int(cfg["mcmc.burn_in"]),
        thin=int(cfg["mcmc.thin"]),
        seed=int(cfg["seed"]) + seed_offset,
    )


def build_truth(cfg: dict, spec: ModelSpec) -> ParamState:
    def vec(key, n):
        v = _floats(cfg[key])
        if len(v) == 1 and n > 1:
            v = v * n
        if len(v) != n:
            raise UsageError(f"{key} needs {n} values")
        return np.array(v)

    return ParamState(
        phi=vec("truth.phi", spec.p) if spec.p else np.zeros(0),
        theta=vec("truth.theta", spec.q) if spec.q else np.zeros(0),
        delta=float(cfg["truth.delta"]),
        mu=float(cfg["truth.mu"]),
        omega0=float(cfg["truth.omega"]),
        alpha=vec("truth.alpha", spec.s) if spec.s else np.zeros(0),
        beta=vec("truth.beta", spec.r) if spec.r else np.zeros(0),
        lam=float(cfg["truth.lambda"]),
        gamma=float(cfg["truth.gamma"]),
        nu=float(cfg["truth.nu"]),
    )


def make_manifest(command: str, cfg: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "seed": int(cfg["seed"]), "config": dict(sorted(cfg.items()))}


# --------------------------------------------------------------- file io


def atomic_write(path, text: str) -> None:
    """Write the whole file to a temporary sibling, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def ingest_returns(path, column: str | None = None, transform: str = "none") -> np.ndarray:
    """Read one numeric column of a headed CSV file.

    ``transform="log_return"`` turns prices into 100 log(P_t / P_{t-1}).
    Line numbers in errors are 1-based file lines.
    """
    if transform not in ("none", "log_return"):
        raise UsageError(f"unknown transform {transform!r}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    # leading '#' comment lines (such as a manifest) are skipped
    first = 0
    while first < len(lines) and lines[first].startswith("#"):
        first += 1
    if first >= len(lines):
        raise ParseError(1, "file is empty")
    header = [h.strip() for h in next(csv.reader([lines[first]]))]
    if column:
        if column not in header:
            raise ParseError(first + 1, f"column {column!r} not in header {header}")
        idx = header.index(column)
    elif len(header) == 1:
        idx = 0
    else:
        raise UsageError("the file has several columns; choose one with --column")
    values = []
    for lineno, line in enumerate(lines[first + 1 :], start=first + 2):
        row = next(csv.reader([line]), [])
        cell = row[idx].strip() if idx < len(row) else ""
        if not cell:
            raise ParseError(lineno, "blank cell")
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(lineno, f"non-numeric value {cell!r}") from None
        if not math.isfinite(v):
            raise ParseError(lineno, f"non-finite value {cell!r}")
        if transform == "log_return" and v <= 0:
            raise NonPositivePrice(lineno, f"price {cell} is not positive")
        values.append(v)
    x = np.array(values, dtype=float)
    if transform == "log_return":
        if x.size < 2:
            raise NotEnoughData("need at least two prices")
        return 100.0 * np.diff(np.log(x))
    return x


def chain_to_csv(chains: Sequence[Chain], manifest: dict) -> str:
    """One row per draw: chain index, draw index, log-likelihood, parameters."""
    names = chains[0].names
    buf = io.StringIO()
    buf.write("# manifest " + json.dumps(manifest, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["chain", "draw", "loglik", *names])
    for c, chain in enumerate(chains):
        for i in range(len(chain)):
            writer.writerow([c, i, repr(float(chain.logliks[i])), *(repr(float(v)) for v in chain.params[i])])
    return buf.getvalue()


def chain_from_csv(text: str) -> tuple[list[Chain], dict]:
    """Inverse of :func:`chain_to_csv`: the chains' draws and the manifest."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# manifest "):
        raise ParseError(1, "missing manifest line")
    manifest = json.loads(lines[0][len("# manifest ") :])
    cfg = {**DEFAULTS, **manifest["config"]}
    spec = build_spec(cfg)
    reader = csv.reader(lines[1:])
    header = next(reader)
    names = tuple(header[3:])
    rows: dict[int, list] = {}
    for lineno, row in enumerate(reader, start=3):
        try:
            rows.setdefault(int(row[0]), []).append([float(v) for v in row[2:]])
        except (ValueError, IndexError):
            raise ParseError(lineno, "malformed chain row") from None
    seed = int(cfg["seed"])
    chains = []
    for c in sorted(rows):
        arr = np.array(rows[c])
        chains.append(Chain(spec=spec, names=names, params=arr[:, 1:], logliks=arr[:, 0], acceptance={}, seed=seed + c))
    return chains, manifest


# ----------------------------------------------------------- computations


def pool(chains: Sequence[Chain]) -> Chain:
    if len(chains) == 1:
        return chains[0]
    acc = {k: float(np.mean([c.acceptance[k] for c in chains])) for k in chains[0].acceptance}
    return Chain(
        spec=chains[0].spec,
        names=chains[0].names,
        params=np.vstack([c.params for c in chains]),
        logliks=np.concatenate([c.logliks for c in chains]),
        acceptance=acc,
        seed=chains[0].seed,
        w_mean=None if chains[0].w_mean is None else np.mean([c.w_mean for c in chains], axis=0),
    )


def summarize_chain(chain: Chain, y, manifest: dict, n_chains: int = 1) -> dict:
    params = {}
    for j, name in enumerate(chain.names):
        col = chain.params[:, j]
        params[name] = {
            "mean": float(col.mean()),
            "median": float(np.median(col)),
            "q025": float(np.quantile(col, 0.025)),
            "q975": float(np.quantile(col, 0.975)),
        }
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "seed": int(manifest["seed"]),
        "manifest": manifest,
        "n_obs": int(len(y)),
        "n_draws": int(len(chain)),
        "chains": int(n_chains),
        "parameters": params,
        "acceptance": {k: float(v) for k, v in sorted(chain.acceptance.items())},
        "marginal_likelihood": {
            "newton_raftery": newton_raftery(chain.logliks).to_dict(),
            "shifted_gamma": shifted_gamma(chain.logliks, len(chain.names)).to_dict(),
        },
    }
    out = residuals(y, chain.spec, chain.posterior_mean())
    if out is not None:
        u, h, _ = out
        summary["likelihood_test"] = likelihood_wellbehaved_test(u / np.sqrt(h)).value
    return summary


def validate_summary(summary: dict) -> None:
    import jsonschema

    jsonschema.validate(summary, SUMMARY_SCHEMA)


@dataclass(frozen=True)
class LikelihoodSurface:
    """Marginal log-likelihood on a (gamma, nu) grid; rows follow ``grid_gamma``.

    Cells whose recursion overflows are nan.
    """

    grid_gamma: np.ndarray
    grid_nu: np.ndarray
    loglik: np.ndarray
    verdict: Verdict

    def nu_profile(self) -> np.ndarray:
        """Maximum over gamma for each nu."""
        with np.errstate(all="ignore"):
            return np.nanmax(np.where(np.isnan(self.loglik), -np.inf, self.loglik), axis=0)

    def nu_argmax_at_upper_edge(self) -> bool:
        return int(np.argmax(self.nu_profile())) == len(self.grid_nu) - 1

    def nu_interior_max(self) -> bool:
        k = int(np.argmax(self.nu_profile()))
        return 0 < k < len(self.grid_nu) - 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["gamma\\nu", *(repr(float(v)) for v in self.grid_nu)])
        for g, row in zip(self.grid_gamma, self.loglik):
            writer.writerow([repr(float(g)), *("" if math.isnan(v) else repr(float(v)) for v in row)])
        return buf.getvalue()


def likelihood_surface(y, spec: ModelSpec, base_state: ParamState, grid_gamma, grid_nu) -> LikelihoodSurface:
    """Student-t log-likelihood over (gamma, nu) with the other parameters fixed.

    The verdict of the likelihood test uses the standardised residuals at
    ``base_state``.
    """
    grid_gamma = np.asarray(grid_gamma, dtype=float)
    grid_nu = np.asarray(grid_nu, dtype=float)
    if grid_gamma.size < 1 or grid_nu.size < 1:
        raise DomainError("grids must be non-empty")
    if np.any(np.diff(grid_gamma) <= 0) or np.any(np.diff(grid_nu) <= 0):
        raise DomainError("grids must be strictly increasing")
    if grid_nu[0] <= 2 or grid_gamma[0] <= 0:
        raise DomainError("need nu > 2 and gamma > 0")
    y = np.asarray(y, dtype=float)
    surface = np.full((grid_gamma.size, grid_nu.size), np.nan)
    for i, g in enumerate(grid_gamma):
        out = residuals(y, spec, base_state.replace(gamma=float(g)))
        if out is None:
            continue
        u, h, _ = out
        for j, nu in enumerate(grid_nu):
            v = float(np.sum(logpdf_student_t(u, nu, h)))
            surface[i, j] = v if math.isfinite(v) else np.nan
    base = residuals(y, spec, base_state)
    if base is None:
        raise DegenerateSample("base state gives a non-finite filter")
    verdict = likelihood_wellbehaved_test(base[0] / np.sqrt(base[1]))
    return LikelihoodSurface(grid_gamma, grid_nu, surface, verdict)


# ---------------------------------------------------------------- commands


def _load_series(cfg: dict) -> np.ndarray:
    if not cfg["data.input"]:
        raise UsageError("this command needs --input")
    return ingest_returns(cfg["data.input"], cfg["data.column"] or None, cfg["data.transform"])


def _echo(manifest: dict, out) -> None:
    out.write(dump_json(manifest))


def cmd_fit(cfg: dict, args, out) -> int:
    y = _load_series(cfg)
    spec, prior = build_spec(cfg), build_prior(cfg)
    n_chains = int(cfg["mcmc.chains"])
    if n_chains < 1:
        raise UsageError("--chains must be positive")
    manifest = make_manifest("fit", cfg)
    chains = [run_chain(y, spec, prior, build_mcmc(cfg, k)) for k in range(n_chains)]
    pooled = pool(chains)
    summary = summarize_chain(pooled, y, manifest, n_chains)
    validate_summary(summary)
    outdir = Path(cfg["output"])
    atomic_write(outdir / "chain.csv", chain_to_csv(chains, manifest))
    atomic_write(outdir / "summary.json", dump_json(summary))
    atomic_write(outdir / "manifest.json", dump_json(manifest))
    return EXIT_OK


def cmd_simulate(cfg: dict, args, out) -> int:
    spec = build_spec(cfg)
    truth = build_truth(cfg, spec)
    manifest = make_manifest("simulate", cfg)
    y = simulate_dataset(spec, truth, int(cfg["simulate.T"]), seed=int(cfg["seed"]), burn_in=int(cfg["simulate.burn_in"]))
    buf = io.StringIO()
    buf.write("# manifest " + json.dumps(manifest, sort_keys=True) + "\n")
    buf.write("y\n")
    buf.writelines(repr(float(v)) + "\n" for v in y)
    outdir = Path(cfg["output"])
    atomic_write(outdir / "data.csv", buf.getvalue())
    atomic_write(outdir / "manifest.json", dump_json(manifest))
    return EXIT_OK


def cmd_study(cfg: dict, args, out) -> int:
    manifest = make_manifest("study", cfg)
    study_cfg = StudyConfig(
        n_reps=int(cfg["study.reps"]),
        sample_sizes=tuple(_ints(cfg["study.sizes"])),
        dgps=tuple(Dgp(d.strip()) for d in cfg["study.dgps"].split(",") if d.strip()),
        true_params=build_truth(cfg, ModelSpec(p=1, q=1, r=1, s=1)),
        seed=int(cfg["seed"]),
        workers=int(cfg["study.workers"]),
        estimator=cfg["study.estimator"],
        transition=Transition(cfg["study.transition"]),
        burn_in=int(cfg["simulate.burn_in"]),
    )
    report = run_study(study_cfg, build_mcmc(cfg), build_prior(cfg))
    outdir = Path(cfg["output"])
    payload = {"schema_version": SCHEMA_VERSION, "manifest": manifest, "report": report.to_json()}
    atomic_write(outdir / "study.json", dump_json(payload))
    atomic_write(outdir / "study.csv", "# manifest " + json.dumps(manifest, sort_keys=True) + "\n" + report.to_csv())
    atomic_write(outdir / "manifest.json", dump_json(manifest))
    return EXIT_OK


def compare_summaries(s1: dict, s2: dict, estimator: str = "newton_raftery"):
    ml1 = MarginalLikelihood.from_dict(s1["marginal_likelihood"][estimator])
    ml2 = MarginalLikelihood.from_dict(s2["marginal_likelihood"][estimator])
    return bayes_test(ml1, ml2)


def cmd_compare(cfg: dict, args, out) -> int:
    paths = [p.strip() for p in cfg["compare.summaries"].split(",") if p.strip()]
    if len(paths) != 2:
        raise UsageError("compare needs exactly two summary files (M1 then M2)")
    manifest = make_manifest("compare", cfg)
    loaded = []
    for p in paths:
        try:
            loaded.append(json.loads(Path(p).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, f"{p}: {exc.msg}") from None
    decision = compare_summaries(*loaded, estimator=cfg["compare.estimator"])
    result = {
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest,
        "summaries": paths,
        "log_b12": decision.log_b12,
        "two_log_b12": 2.0 * decision.log_b12,
        "threshold": decision.threshold,
        "verdict": decision.verdict.value,
        "evidence": decision.evidence_label,
    }
    out.write(f"{decision.evidence_label}\n")
    out.write(f"2 ln B12 = {2.0 * decision.log_b12:.4f}; decision: {decision.verdict.value}\n")
    outdir = Path(cfg["output"])
    atomic_write(outdir / "compare.json", dump_json(result))
    atomic_write(outdir / "manifest.json", dump_json(manifest))
    return EXIT_OK


def cmd_forecast(cfg: dict, args, out) -> int:
    y = _load_series(cfg)
    spec = build_spec(cfg)
    if not cfg["forecast.split"]:
        raise UsageError("forecast needs forecast.split")
    split = int(cfg["forecast.split"])
    window = int(cfg["forecast.window"])
    manifest = make_manifest("forecast", cfg)
    mcmc = build_mcmc(cfg)
    kw = dict(
        refit=cfg["forecast.refit"],
        warm_iterations=int(cfg["forecast.warm_iterations"]) if cfg["forecast.warm_iterations"] else None,
        warm_burn_in=int(cfg["forecast.warm_burn_in"]) if cfg["forecast.warm_burn_in"] else None,
    )
    records = {}
    for family in (ErrorFamily.GAUSSIAN, ErrorFamily.STUDENT_T):
        s = replace(spec, error_family=family)
        records[family] = rolling_forecast(y, split, s, build_prior(cfg), mcmc, model_tag=family.value, **kw)
    rg, rt = records[ErrorFamily.GAUSSIAN], records[ErrorFamily.STUDENT_T]
    outdir = Path(cfg["output"])
    head = "# manifest " + json.dumps(manifest, sort_keys=True) + "\n"
    atomic_write(outdir / "forecasts.csv", head + records_to_csv(rg + rt))
    result = {"schema_version": SCHEMA_VERSION, "manifest": manifest, "window": window}
    if len(rg) >= window:
        ratios = mse_ratio(rg, rt, window)
        rows = io.StringIO()
        rows.write(head + "t_end,ratio\n")
        for k, v in enumerate(ratios):
            rows.write(f"{rg[k + window - 1].t},{float(v)!r}\n")
        atomic_write(outdir / "ratios.csv", rows.getvalue())
        ok = np.isfinite(ratios)
        result["ratio_proxy_correlation"] = (
            ratio_proxy_correlation(ratios, rg, window) if ok.sum() > 2 else None
        )
        result["fraction_ratio_above_one"] = float(np.mean(ratios > 1))
    result["failed_steps"] = [r.t for r in rg + rt if r.error is not None]
    atomic_write(outdir / "forecast.json", dump_json(result))
    atomic_write(outdir / "manifest.json", dump_json(manifest))
    return EXIT_OK


def cmd_surface(cfg: dict, args, out) -> int:
    y = _load_series(cfg)
    spec = build_spec(cfg)
    if not spec.is_t or not spec.asymmetric:
        raise UsageError("surface needs a Student-t spec with a transition")
    manifest = make_manifest("surface", cfg)
    if cfg["surface.base"]:
        summary = json.loads(Path(cfg["surface.base"]).read_text(encoding="utf-8"))
        vec = [summary["parameters"][n]["mean"] for n in param_names(spec)]
        base = vector_to_state(np.array(vec), spec)
    else:
        base = build_truth(cfg, spec)
    surf = likelihood_surface(y, spec, base, _grid(cfg["surface.gamma"]), _grid(cfg["surface.nu"]))
    outdir = Path(cfg["output"])
    atomic_write(outdir / "surface.csv", "# manifest " + json.dumps(manifest, sort_keys=True) + "\n" + surf.to_csv())
    result = {
        "schema_version": SCHEMA_VERSION,
        "manifest": manifest,
        "verdict": surf.verdict.value,
        "nu_profile_argmax": float(surf.grid_nu[int(np.argmax(surf.nu_profile()))]),
        "nu_max_at_upper_edge": surf.nu_argmax_at_upper_edge(),
    }
    atomic_write(outdir / "surface.json", dump_json(result))
    atomic_write(outdir / "manifest.json", dump_json(manifest))
    out.write(f"likelihood test: {surf.verdict.value}\n")
    return EXIT_OK


HANDLERS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "study": cmd_study,
    "compare": cmd_compare,
    "forecast": cmd_forecast,
    "surface": cmd_surface,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stgarch", description="Bayesian smooth-transition GARCH models.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("summaries", nargs="*", help="summary files for compare (M1 then M2)")
    parser.add_argument("--spec", help="model fields, e.g. p=1,q=1,family=t,transition=logistic")
    parser.add_argument("--config", help="flat key = value file or a manifest.json")
    parser.add_argument("--input", help="CSV data file")
    parser.add_argument("--column", help="column of the data file")
    parser.add_argument("--transform", choices=("none", "log_return"))
    parser.add_argument("--output", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--reps", type=int, help="study replications per cell")
    parser.add_argument("--sizes", help="study sample sizes, comma separated")
    parser.add_argument("--chains", type=int, help="independent chains for fit")
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (UsageError, DomainError)):
        return EXIT_USAGE
    if isinstance(exc, (ParseError, NotEnoughData, DegenerateSample, OSError, json.JSONDecodeError)):
        return EXIT_DATA
    return EXIT_NUMERIC


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise UsageError("--seed must be non-negative")
        cfg = resolve_config(args)
        _echo(make_manifest(args.command, cfg), out)
        return HANDLERS[args.command](cfg, args, out)
    except (StgarchError, OSError, ValueError) as exc:
        code = _exit_code(exc)
        if not isinstance(exc, StgarchError) and isinstance(exc, ValueError):
            code = EXIT_USAGE
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
