import io
import json
import math

import numpy as np
import pytest

from stgarch.cli import (
    DEFAULTS,
    EXIT_DATA,
    EXIT_OK,
    EXIT_USAGE,
    UsageError,
    _grid,
    build_spec,
    chain_from_csv,
    chain_to_csv,
    ingest_returns,
    likelihood_surface,
    main,
    parse_config_text,
    parse_spec_flag,
    validate_summary,
)
from stgarch.errors import NonPositivePrice, ParseError
from stgarch.model import filter as run_filter
from stgarch.sampler import McmcConfig, run_chain
from stgarch.simulate import default_spec, default_true_state, simulate_dataset

FAST = "mcmc.iterations = 300\nmcmc.burn_in = 100\n"


def run(argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


@pytest.fixture
def series(tmp_path):
    y = simulate_dataset(default_spec(), default_true_state(), 50, seed=1)
    path = tmp_path / "y.csv"
    path.write_text("r\n" + "".join(f"{float(v)!r}\n" for v in y))
    return path, y


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text("# short chains\n" + FAST)
    return path


# ------------------------------------------------------------------ ingest


def test_ingest_flat_prices(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("close\n100\n100\n")
    np.testing.assert_array_equal(ingest_returns(p, transform="log_return"), [0.0])


def test_ingest_exact_log_return(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text(f"date,close\nd1,100\nd2,{100 * math.exp(0.01)!r}\n")
    r = ingest_returns(p, column="close", transform="log_return")
    assert r.shape == (1,)
    assert abs(r[0] - 1.0) < 1e-12


def test_ingest_blank_cell_cites_row(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("a,close\n1,100\n2,\n")
    with pytest.raises(ParseError) as info:
        ingest_returns(p, column="close")
    assert info.value.line == 3


def test_ingest_non_numeric_and_non_positive(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("close\n100\nabc\n")
    with pytest.raises(ParseError, match="line 3"):
        ingest_returns(p)
    p.write_text("close\n100\n0\n101\n")
    with pytest.raises(NonPositivePrice) as info:
        ingest_returns(p, transform="log_return")
    assert info.value.line == 3
    # zero is a fine return value
    np.testing.assert_array_equal(ingest_returns(p), [100.0, 0.0, 101.0])


def test_ingest_column_errors(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(UsageError):
        ingest_returns(p)
    with pytest.raises(ParseError):
        ingest_returns(p, column="c")
    with pytest.raises(FileNotFoundError):
        ingest_returns(tmp_path / "missing.csv")


# ------------------------------------------------------------------ config


def test_config_parsing():
    cfg = parse_config_text("spec.p = 2  # lags\n\nmcmc.iterations=10\n")
    assert cfg == {"spec.p": "2", "mcmc.iterations": "10"}
    with pytest.raises(UsageError, match="line 1"):
        parse_config_text("spec.colour = red\n")
    with pytest.raises(UsageError):
        parse_config_text("spec.p 2\n")
    assert parse_spec_flag("p=0, family=gaussian") == {"spec.p": "0", "spec.family": "gaussian"}
    with pytest.raises(UsageError):
        parse_spec_flag("depth=3")


def test_manifest_is_a_config():
    manifest = {"schema_version": "1.0", "config": {"spec.p": "3", "seed": "4"}}
    assert parse_config_text(json.dumps(manifest)) == {"spec.p": "3", "seed": "4"}


def test_grid_forms():
    np.testing.assert_allclose(_grid("lin:1:3:3"), [1, 2, 3])
    np.testing.assert_allclose(_grid("log:1:100:3"), [1, 10, 100])
    np.testing.assert_allclose(_grid("2.5,4"), [2.5, 4])


def test_default_spec_builds():
    spec = build_spec(DEFAULTS)
    assert spec.is_t and spec.p == 1 and spec.r == 1 and spec.s == 1


# ---------------------------------------------------------------- commands


def test_fit_writes_valid_outputs(tmp_path, series, fast_config):
    path, y = series
    out = tmp_path / "fit"
    code, text = run(["fit", "--input", path, "--config", fast_config, "--output", out, "--seed", 3])
    assert code == EXIT_OK
    echoed = json.loads(text)
    assert echoed["command"] == "fit" and echoed["seed"] == 3
    summary = json.loads((out / "summary.json").read_text())
    validate_summary(summary)
    assert summary["n_obs"] == 50 and summary["n_draws"] == 200
    assert set(summary["parameters"]) >= {"alpha_1", "beta_1", "lambda", "gamma", "nu"}
    for p in summary["parameters"].values():
        assert p["q025"] <= p["median"] <= p["q975"]
    chains, manifest = chain_from_csv((out / "chain.csv").read_text())
    assert manifest == json.loads((out / "manifest.json").read_text())
    assert len(chains) == 1 and chains[0].params.shape == (200, len(summary["parameters"]))


def test_fit_multiple_chains(tmp_path, series, fast_config):
    path, _ = series
    out = tmp_path / "fit"
    code, _ = run(["fit", "--input", path, "--config", fast_config, "--output", out, "--chains", 2])
    assert code == EXIT_OK
    chains, _ = chain_from_csv((out / "chain.csv").read_text())
    assert len(chains) == 2
    assert not np.array_equal(chains[0].params, chains[1].params)
    assert json.loads((out / "summary.json").read_text())["n_draws"] == 400


def test_chain_csv_round_trip(series):
    _, y = series
    spec = build_spec(DEFAULTS)
    chain = run_chain(y, spec, None, McmcConfig(iterations=150, burn_in=20, seed=2))
    manifest = {"schema_version": "1.0", "command": "fit", "seed": 2, "config": dict(DEFAULTS, seed="2")}
    back, m = chain_from_csv(chain_to_csv([chain], manifest))
    assert m == manifest
    np.testing.assert_array_equal(back[0].params, chain.params)
    np.testing.assert_array_equal(back[0].logliks, chain.logliks)
    assert back[0].names == chain.names
    with pytest.raises(ParseError):
        chain_from_csv("chain,draw\n")


def test_simulate_command(tmp_path):
    out = tmp_path / "sim"
    code, _ = run(["simulate", "--output", out, "--seed", 5, "--spec", "transition=logistic"])
    assert code == EXIT_OK
    y = ingest_returns(out / "data.csv", column="y")
    assert y.shape == (500,)
    spec = build_spec({**DEFAULTS, "spec.transition": "logistic"})
    np.testing.assert_array_equal(y, simulate_dataset(spec, default_true_state(), 500, seed=5))


def _summary(path, log_ml):
    doc = {"marginal_likelihood": {"newton_raftery": {"log_value": log_ml, "estimator": "newton_raftery",
                                                      "d_or_lambda": 0.01, "iterations_used": 3}}}
    path.write_text(json.dumps(doc))
    return path


def test_compare_strong(tmp_path):
    s1 = _summary(tmp_path / "m1.json", -100.0 + math.log(25))
    s2 = _summary(tmp_path / "m2.json", -100.0)
    code, text = run(["compare", s1, s2, "--output", tmp_path / "cmp"])
    assert code == EXIT_OK
    lines = text.splitlines()
    assert "Strong" in lines
    result = json.loads((tmp_path / "cmp" / "compare.json").read_text())
    assert result["evidence"] == "Strong" and result["verdict"] == "accept_m1"
    assert result["log_b12"] == pytest.approx(math.log(25))


def test_compare_needs_two_files(tmp_path):
    s1 = _summary(tmp_path / "m1.json", 0.0)
    code, _ = run(["compare", s1, "--output", tmp_path / "cmp"])
    assert code == EXIT_USAGE


def test_study_two_replications_per_cell(tmp_path, fast_config):
    out = tmp_path / "study"
    code, _ = run(["study", "--reps", 2, "--sizes", 150, "--config", fast_config, "--output", out])
    assert code == EXIT_OK
    report = json.loads((out / "study.json").read_text())["report"]
    assert report["replications"] == {"gaussian|150": 2, "t3|150": 2, "t6|150": 2}
    assert (out / "study.csv").read_text().startswith("# manifest ")


def test_forecast_command(tmp_path, fast_config):
    y = simulate_dataset(default_spec(), default_true_state(), 45, seed=8)
    data = tmp_path / "y.csv"
    data.write_text("r\n" + "".join(f"{float(v)!r}\n" for v in y))
    cfg = tmp_path / "f.cfg"
    cfg.write_text(FAST + "forecast.split = 38\nforecast.window = 3\n")
    out = tmp_path / "fc"
    code, _ = run(["forecast", "--input", data, "--config", cfg, "--output", out])
    assert code == EXIT_OK
    rows = (out / "forecasts.csv").read_text().splitlines()
    assert rows[1] == "t,model_tag,h_hat,realized_proxy"
    assert len(rows) == 2 + 2 * 7
    ratios = (out / "ratios.csv").read_text().splitlines()
    assert ratios[1] == "t_end,ratio" and len(ratios) == 2 + 5
    assert "fraction_ratio_above_one" in json.loads((out / "forecast.json").read_text())


def test_surface_single_cell_matches_loglik(series):
    _, y = series
    spec = build_spec(DEFAULTS)
    state = default_true_state()
    surf = likelihood_surface(y, spec, state, [state.gamma], [state.nu])
    assert surf.loglik.shape == (1, 1)
    assert surf.loglik[0, 0] == pytest.approx(run_filter(y, spec, state).loglik, rel=1e-12)


def test_surface_command(tmp_path, series):
    path, _ = series
    out = tmp_path / "surf"
    cfg = tmp_path / "s.cfg"
    cfg.write_text("surface.gamma = lin:1:9:3\nsurface.nu = 3,6,12,24\n")
    code, text = run(["surface", "--input", path, "--config", cfg, "--output", out])
    assert code == EXIT_OK
    assert "likelihood test:" in text
    lines = (out / "surface.csv").read_text().splitlines()
    assert lines[1].startswith("gamma\\nu,") and len(lines) == 2 + 3
    assert len(lines[2].split(",")) == 5


# -------------------------------------------------------------- exit codes


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("r\n1\nx\n")
    assert run(["fit", "--input", bad, "--output", tmp_path / "o"])[0] == EXIT_DATA
    assert run(["fit", "--input", tmp_path / "none.csv", "--output", tmp_path / "o"])[0] == EXIT_DATA
    assert run(["fit", "--output", tmp_path / "o"])[0] == EXIT_USAGE
    assert run(["fit", "--spec", "colour=blue"])[0] == EXIT_USAGE
    assert run(["fit", "--config", tmp_path / "missing.cfg"])[0] == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["explode"])
    assert info.value.code == EXIT_USAGE


# ------------------------------------------------------------- determinism


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_fit_rerun_from_manifest_is_byte_identical(tmp_path, series, fast_config):
    path, _ = series
    first = tmp_path / "a"
    assert run(["fit", "--input", path, "--config", fast_config, "--output", first, "--seed", 9])[0] == EXIT_OK
    again = _snapshot(first)
    assert run(["fit", "--config", first / "manifest.json"])[0] == EXIT_OK
    assert _snapshot(first) == again
