import csv
import os
import stat

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftflow import cli
from driftflow.config import (SCHEMA, TYPE_NAMES, ConfigError, bundled, bundled_names, format_config, load_config,
                              parse_config, validate, write_config)
from driftflow.grid import read_csv

BUNDLED = ["aligned_1d", "competitive_1d", "competitive_2d", "competitive_fastrho", "competitive_fastx",
           "naive_vs_gd", "pure_relaxation", "sampled_n4", "sampled_n40", "two_populations"]


def test_bundled_set():
    assert bundled_names() == BUNDLED


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_load_and_round_trip(name, tmp_path):
    cfg = load_config(bundled(name))
    write_config(cfg, tmp_path / "c.cfg")
    assert load_config(tmp_path / "c.cfg") == cfg
    cfg.model()
    cfg.regime()


def test_competitive_config_constants():
    cfg = load_config(bundled("competitive_1d"))
    assert cfg.kind == "competitive_coupled"
    assert (cfg.alpha, cfg.beta, cfg.slope) == (0.1, 0.05, 3.0)


def test_scenario_constants():
    a = load_config(bundled("aligned_1d"))
    assert (a.alpha, a.beta, a["time.dt"]) == (0.1, 1.0, 0.01)
    assert a.model().grid.dz == pytest.approx(0.1)
    c2 = load_config(bundled("competitive_2d"))
    assert (c2.alpha, c2.beta, c2["time.dt"], c2["time.T"]) == (0.5, 1.0, 0.005, 4.0)
    assert c2.model().grid.widths == pytest.approx((0.2, 0.2))
    assert load_config(bundled("sampled_n4"))["regime.samples"] == 4
    assert load_config(bundled("sampled_n40"))["regime.samples"] == 40
    assert load_config(bundled("naive_vs_gd"))["regime.fixed_x"] == (2.2,)


def _text(**over):
    base = (bundled("pure_relaxation")).read_text()
    lines = [ln for ln in base.splitlines() if ln.split("=")[0].strip() not in over]
    lines += [f"{k} = {v}" for k, v in over.items()]
    return "\n".join(lines)


def test_range_error_names_key():
    with pytest.raises(ConfigError, match=r"time\.dt"):
        parse_config(_text(**{"time.dt": "0"}))
    with pytest.raises(ConfigError, match=r"model\.alpha"):
        parse_config(_text(**{"model.alpha": "-1"}))


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(_text() + "\nalpha2 = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        validate({"model.alpha2": 1.0})


def test_type_error_names_key_and_type():
    with pytest.raises(ConfigError, match=r"time\.stride: expected integer"):
        parse_config(_text(**{"time.stride": "ten"}))
    with pytest.raises(ConfigError, match=r"regime\.best_response: expected true/false"):
        parse_config(_text(**{"regime.best_response": "maybe"}))


def test_missing_required_key():
    text = "\n".join(ln for ln in _text().splitlines() if not ln.startswith("model.beta"))
    with pytest.raises(ConfigError, match=r"model\.beta: missing"):
        parse_config(text)


def test_cross_checks():
    with pytest.raises(ConfigError, match="grid.n"):
        parse_config(_text(**{"grid.n": "2"}))
    with pytest.raises(ConfigError, match="fixed_x"):
        parse_config(_text(**{"regime.kind": "naive"}))
    with pytest.raises(ConfigError, match="model.x0"):
        parse_config(_text(**{"model.x0": "0, 1"}))
    with pytest.raises(ConfigError, match="file"):
        parse_config(_text(**{"initial.file": "missing.csv"}), base="/nonexistent")
    with pytest.raises(ConfigError, match="line"):
        parse_config(_text() + "\njust words\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(_text() + "\ntime.T = 3\n")


def test_density_from_file(tmp_path):
    cfg = load_config(bundled("pure_relaxation"))
    from driftflow.grid import gaussian_density, write_csv
    rho = gaussian_density(cfg.grid(), 1.0, 0.5)
    write_csv(rho, tmp_path / "init.csv")
    text = _text(**{"initial.file": "init.csv"})
    text = "\n".join(ln for ln in text.splitlines() if not ln.startswith(("initial.mean", "initial.var")))
    (tmp_path / "s.cfg").write_text(text)
    loaded = load_config(tmp_path / "s.cfg")
    np.testing.assert_array_equal(loaded.initial_density().values, rho.values)
    write_config(loaded, tmp_path / "again.cfg")
    assert load_config(tmp_path / "again.cfg") == loaded


finite = st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 6))
positive = st.floats(1e-3, 10).map(lambda v: round(v, 6) or 1e-3)


@given(alpha=positive, beta=positive, slope=positive, x0=finite, mean=finite, var=positive,
       dt=positive, stride=st.integers(1, 100), seed=st.integers(0, 2**31),
       kind=st.sampled_from(["aligned", "competitive_coupled", "competitive_fastx", "naive"]))
@settings(max_examples=60, deadline=None)
def test_round_trip_property(tmp_path_factory, alpha, beta, slope, x0, mean, var, dt, stride, seed, kind):
    base = load_config(bundled("competitive_1d"))
    cfg = base.replace(model__alpha=alpha, model__beta=beta, model__slope=slope, model__x0=(x0,),
                       reference__mean=(mean,), reference__var=(var,), time__dt=dt, time__stride=stride,
                       run__seed=seed, regime__kind=kind, regime__fixed_x=(x0,))
    assert parse_config(format_config(cfg)) == cfg


def test_every_schema_key_documented_type():
    for kind, *_ in SCHEMA.values():
        assert kind in TYPE_NAMES


# --- commands ------------------------------------------------------------------

def _small(tmp_path, name="pure_relaxation", **over):
    cfg = load_config(bundled(name)).replace(**over)
    path = tmp_path / f"{name}.cfg"
    write_config(cfg, path)
    return path


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_outputs(tmp_path, capsys):
    cfg = _small(tmp_path, time__T=0.5, time__stride=20)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    snaps = sorted(out.glob("density_t*.csv"))
    assert len(snaps) == 6
    assert _read(snaps[0])[0] == ["z", "rho"]
    rows = _read(out / "energy.csv")
    assert rows[0] == ["t", "energy", "relative_energy", "dissipation", "x", "modes"]
    t = [float(r[0]) for r in rows[1:]]
    assert np.all(np.diff(t) > 0)
    summary = (out / "summary.txt").read_text()
    assert "steady_state_residual" in summary and "fitted_rate" in summary


def test_run_stride_flag(tmp_path):
    cfg = _small(tmp_path, time__T=0.5, time__stride=20)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o"), "--stride", "50"]) == 0
    assert len(list((tmp_path / "o").glob("density_t*.csv"))) == 3


def test_zero_time_run_single_snapshot(tmp_path):
    cfg = _small(tmp_path, time__T=0.0)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    snaps = list(out.glob("density_t*.csv"))
    assert len(snaps) == 1
    loaded = load_config(cfg)
    np.testing.assert_array_equal(read_csv(snaps[0], loaded.grid()).values, loaded.initial_density().values)


def test_run_is_deterministic(tmp_path):
    cfg = _small(tmp_path, "sampled_n4", time__T=0.3)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["run", str(cfg), "--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_2d_run_csv_header(tmp_path):
    cfg = _small(tmp_path, "competitive_2d", time__T=0.05)
    out = tmp_path / "o"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    assert _read(sorted(out.glob("density_t*.csv"))[0])[0] == ["z1", "z2", "rho"]
    assert _read(out / "energy.csv")[0][4:6] == ["x1", "x2"]


def test_two_population_run_writes_tau(tmp_path):
    cfg = _small(tmp_path, "two_populations", time__T=0.2)
    out = tmp_path / "o"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    assert len(list(out.glob("tau_t*.csv"))) == len(list(out.glob("density_t*.csv"))) == 3


def test_aligned_energy_column_non_increasing(tmp_path):
    cfg = _small(tmp_path, "aligned_1d", time__T=5.0)
    out = tmp_path / "o"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    e = np.array([float(r[1]) for r in _read(out / "energy.csv")[1:]])
    assert np.all(np.diff(e) <= 1e-10)


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(_text(**{"time.dt": "0"}))
    assert cli.main(["run", str(bad)]) == cli.EXIT_CONFIG
    assert "time.dt" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = _small(tmp_path, time__T=0.0)
    assert cli.main(["run", str(cfg), "--out", str(blocker / "sub")]) == cli.EXIT_IO


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_output_dir(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(stat.S_IRUSR | stat.S_IXUSR)
    cfg = _small(tmp_path, time__T=0.0)
    assert cli.main(["run", str(cfg), "--out", str(ro / "x")]) == cli.EXIT_IO


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    import driftflow.dynamics as dyn

    def boom(*a, **k):
        raise dyn.SolverError("Gibbs fixed point did not converge", 1e-3)

    monkeypatch.setattr(dyn, "best_response_rho", boom)
    cfg = _small(tmp_path, "competitive_fastrho", time__T=0.05)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_SOLVER


def test_check_pure_relaxation(tmp_path, capsys):
    cfg = _small(tmp_path)
    out = tmp_path / "o"
    assert cli.main(["check", str(cfg), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "FAIL" not in text and "PASS log_sobolev" in text
    assert (out / "inequality.csv").is_file()
    assert '"decay_rate": true' in (out / "summary.txt").read_text()


def test_check_from_steady_state(tmp_path):
    cfg = _small(tmp_path, initial__mean=(0.0,), time__T=1.0)
    out = tmp_path / "o"
    assert cli.main(["check", str(cfg), "--out", str(out)]) in (0, cli.EXIT_CHECK)
    rows = _read(out / "inequality.csv")[1:]
    margins = np.array([[float(v) for v in r[4:]] for r in rows])
    assert np.all(np.abs(margins) <= 1e-8)


def test_check_fast_classifier_not_applicable(tmp_path, capsys):
    cfg = _small(tmp_path, "competitive_fastx", time__T=2.0)
    assert cli.main(["check", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert "not applicable" in capsys.readouterr().out


def test_check_reports_failure(tmp_path, capsys, monkeypatch):
    # claim a rate far above the true one: the rate and log-Sobolev checks must fail
    from driftflow import diagnostics

    monkeypatch.setattr(diagnostics, "rate_constant", lambda m, r: (10.0, True))
    cfg = _small(tmp_path, time__T=5.0)
    assert cli.main(["check", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_CHECK
    assert "FAIL decay_rate" in capsys.readouterr().out


def test_compare_identical(tmp_path, capsys):
    cfg = _small(tmp_path, "competitive_1d", time__T=0.5)
    out = tmp_path / "cmp"
    assert cli.main(["compare", str(cfg), str(cfg), "--out", str(out)]) == 0
    rows = _read(out / "compare.csv")
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    np.testing.assert_array_equal(body[:, 1], body[:, 2])
    np.testing.assert_array_equal(body[:, 3], body[:, 4])


def test_compare_rejects_mismatched_grids(tmp_path, capsys):
    a = _small(tmp_path, "competitive_1d", time__T=0.1)
    b = tmp_path / "b.cfg"
    write_config(load_config(a).replace(grid__n=(100,)), b)
    assert cli.main(["compare", str(a), str(b)]) == cli.EXIT_CONFIG
    assert "grid" in capsys.readouterr().err
