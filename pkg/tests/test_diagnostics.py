import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftflow import diagnostics as dg
from driftflow.config import bundled, load_config
from driftflow.dynamics import Regime, best_response_rho, run, simulate
from driftflow.grid import Density, Grid, gaussian_density
from driftflow.model import ALIGNED, first_variation_rho

from conftest import random_density, zero_model

G = Grid.uniform(-6.0, 7.0, 260)


def spike(grid, i):
    v = np.zeros(grid.n[0])
    v[i] = 1.0 / grid.dz
    return Density(grid, v)


def test_w2_identical_is_zero():
    rho = gaussian_density(G, 0.3, 0.8)
    assert dg.wasserstein2_1d(rho, rho) == 0.0


def test_w2_spikes():
    g = Grid.uniform(0.0, 10.0, 100)
    for i, j in [(10, 30), (0, 99), (50, 51)]:
        s = (j - i) * g.dz
        assert dg.wasserstein2_1d(spike(g, i), spike(g, j)) == pytest.approx(s, abs=g.dz)


def test_w2_gaussians_closed_form():
    p = gaussian_density(G, 0.0, 1.0)
    q = gaussian_density(G, 1.0, 1.0)
    assert dg.wasserstein2_1d(p, q) == pytest.approx(1.0, abs=1e-2)
    r = gaussian_density(G, 0.5, 2.25)
    # sqrt(dm^2 + dsigma^2)
    assert dg.wasserstein2_1d(p, r) == pytest.approx(np.hypot(0.5, 0.5), abs=1e-2)


def test_w2_one_cell_shift():
    g = Grid.uniform(-8.0, 8.0, 320)
    v = gaussian_density(g, 0.0, 1.0).values
    shifted = Density(g, np.concatenate([[0.0], v[:-1]]), normalize=True)
    assert dg.wasserstein2_1d(Density(g, v), shifted) == pytest.approx(g.dz, rel=1e-3)


def test_w2_metric_properties():
    rng = np.random.default_rng(0)
    g = Grid.uniform(-3.0, 3.0, 60)
    for _ in range(30):
        a, b, c = (random_density(g, rng, smooth=rng.random() < 0.5) for _ in range(3))
        ab, ba = dg.wasserstein2_1d(a, b), dg.wasserstein2_1d(b, a)
        assert abs(ab - ba) <= 1e-12
        assert dg.wasserstein2_1d(a, c) <= ab + dg.wasserstein2_1d(b, c) + 1e-8


def test_w2_rejects_2d():
    g = Grid((0.0, 0.0), (1.0, 1.0), (4, 4))
    rho = Density(g, np.ones((4, 4)))
    with pytest.raises(NotImplementedError):
        dg.wasserstein2_1d(rho, rho)


def test_joint_metric():
    g = Grid.uniform(0.0, 10.0, 100)
    rho = gaussian_density(g, 5.0, 1.0)
    assert dg.joint_metric(rho, [1.0], rho, [1.0]) == 0.0
    assert dg.joint_metric(rho, [1.0], rho, [4.0]) == pytest.approx(3.0)
    a, b = spike(g, 20), spike(g, 50)
    assert dg.joint_metric(a, [0.0], b, [3.0]) == pytest.approx(3.0 * np.sqrt(2), abs=g.dz)


def test_dissipation_vanishes_at_steady_state():
    m = zero_model(G)
    ref = m.reference_density
    for stencil in ("face", "centered"):
        assert dg.dissipation(ref, m.x0, m, Regime("aligned"), stencil) <= 1e-8
    assert dg.steady_state_residual(ref, m.x0, m, Regime("aligned")) <= 1e-10


def test_dissipation_pure_relaxation_scalar_oracle():
    m = zero_model(G, alpha=0.1)
    rho = gaussian_density(G, 0.7, 1.5)
    ref = m.reference_density
    h = G.dz
    n = G.n[0]
    log_ratio = [np.log(rho.values[i]) - np.log(ref.values[i]) for i in range(n)]
    total = 0.0
    for i in range(n):
        lo, hi = max(i - 1, 0), min(i + 1, n - 1)
        grad = (log_ratio[hi] - log_ratio[lo]) / ((hi - lo) * h)
        total += 0.1**2 * grad**2 * rho.values[i] * h
    d = dg.dissipation(rho, m.x0, m, Regime("aligned"), stencil="centered")
    assert d == pytest.approx(total, rel=1e-9)


def test_dissipation_nonnegative_and_positive_off_equilibrium(competitive_model):
    rng = np.random.default_rng(1)
    m = competitive_model
    for kind in ("aligned", "competitive_coupled", "competitive_fastx", "competitive_fastrho"):
        reg = Regime(kind)
        for _ in range(3):
            rho = random_density(m.grid, rng)
            x = rng.uniform(0.5, 2.5, 1)
            d = dg.dissipation(rho, x, m, reg)
            assert d > 0
            assert dg.steady_state_residual(rho, x, m, reg) > 1e-6


def test_dissipation_rejects_unknown_stencil(competitive_model, rho0):
    with pytest.raises(ValueError):
        dg.dissipation(rho0, [1.5], competitive_model, Regime("aligned"), stencil="spectral")


def test_energy_balance_aligned():
    cfg = load_config(bundled("aligned_1d")).replace(time__T=10.0, time__stride=5)
    m = cfg.model()
    reg = cfg.regime()
    tr = run(cfg)
    t, rate, diss = dg.energy_balance(tr, m, reg)
    np.testing.assert_allclose(rate, diss, rtol=0.1)


def test_fit_decay_rate_exact_exponential():
    t = np.linspace(0, 5, 50)
    assert dg.fit_decay_rate(t, 3.0 * np.exp(-2 * t)) == pytest.approx(1.0, abs=1e-6)


def test_fit_decay_rate_constant():
    t = np.linspace(0, 5, 50)
    assert dg.fit_decay_rate(t, np.full(50, 0.3)) == pytest.approx(0.0, abs=1e-12)


def test_fit_decay_rate_needs_points():
    with pytest.raises(ValueError):
        dg.fit_decay_rate([0, 1, 2, 3], [1.0, 0.5, 0.25, 0.125])
    t = np.arange(10.0)
    with pytest.raises(ValueError):
        dg.fit_decay_rate(t, np.exp(-t) * (t < 3), floor=1e-13)
    with pytest.raises(ValueError):
        dg.fit_decay_rate(t, np.exp(-t), window=0.0)


def test_fit_decay_rate_drops_floor_and_uses_window():
    t = np.arange(40.0)
    e = np.exp(-t)
    e[30:] = 0.0
    assert dg.fit_decay_rate(t, e, window=0.5, floor=1e-13) == pytest.approx(0.5, rel=1e-9)
    # a change of rate is picked up by the trailing window only
    e = np.where(t < 20, np.exp(-4 * t), np.exp(-80) * np.exp(-2 * (t - 20)))
    assert dg.fit_decay_rate(t, e, window=0.4, floor=1e-300) == pytest.approx(1.0, rel=1e-9)


@given(st.floats(-100, 100), st.floats(1e-6, 1e6), st.floats(0.05, 3.0))
@settings(max_examples=50, deadline=None)
def test_fit_decay_rate_shift_and_scale_invariant(shift, scale, lam):
    t = np.linspace(0, 4, 30)
    rng = np.random.default_rng(0)
    e = np.exp(-2 * lam * t + 0.05 * rng.standard_normal(30))
    base = dg.fit_decay_rate(t, e, floor=0.0)
    assert dg.fit_decay_rate(t + shift, scale * e, floor=0.0) == pytest.approx(base, rel=1e-8, abs=1e-10)


def test_residual_of_gibbs_best_response(competitive_model):
    m = competitive_model
    r = best_response_rho([1.8], m)
    assert dg.steady_state_residual(r, [1.8], m, Regime("competitive_coupled")) - np.linalg.norm(
        m.grad_x(r, [1.8])) <= 10 * 1e-9


@pytest.mark.slow
def test_residual_of_long_competitive_run():
    cfg = load_config(bundled("competitive_1d")).replace(time__T=200.0, time__stride=1000)
    tr = run(cfg)
    assert dg.steady_state_residual(tr.final_density, tr.final_x, cfg.model(), cfg.regime()) <= 1e-4


def test_count_modes_examples():
    assert dg.count_modes(gaussian_density(G, 0.0, 1.0)) == 1
    z = G.centers
    s = 0.3
    mix = np.exp(-(z + 2 * s) ** 2 / (2 * s**2)) + np.exp(-(z - 2 * s) ** 2 / (2 * s**2))
    assert dg.count_modes(Density(G, mix, normalize=True), 0.2) == 2
    # a shallow shoulder is not a separate mode
    bump = np.exp(-z**2 / 2) + 0.02 * np.exp(-(z - 3) ** 2 / 0.02)
    assert dg.count_modes(Density(G, bump, normalize=True), 0.2) == 1
    with pytest.raises(ValueError):
        dg.count_modes(gaussian_density(G, 0.0, 1.0), 0.0)


def test_count_modes_merges_close_peaks():
    # two peaks separated by a dip of only 5 percent count once
    z = G.centers
    v = np.exp(-z**2 / 8) * (1 + 0.05 * np.cos(6 * z)) * (np.abs(z) < 1) + np.exp(-z**2 / 8) * (np.abs(z) >= 1)
    assert dg.count_modes(Density(G, v, normalize=True), 0.2) == 1


def test_count_modes_2d_marginal():
    g = Grid((-3.0, -3.0), (3.0, 3.0), (30, 30))
    c = g.centers
    v = np.exp(-((c[0] - 1.2) ** 2 + c[1] ** 2) / 0.2) + np.exp(-((c[0] + 1.2) ** 2 + c[1] ** 2) / 0.2)
    assert dg.count_modes(Density(g, v, normalize=True)) == 2


def test_rate_constants(competitive_model):
    m = competitive_model
    lam, ok = dg.rate_constant(m, Regime("aligned"))
    assert ok and lam == pytest.approx(min(m.beta, m.alpha / 0.08))
    lam, ok = dg.rate_constant(m, Regime("competitive_fastx"))
    assert not ok and lam == pytest.approx(0.1 / 0.08 - 9 / 4)
    lam, ok = dg.rate_constant(m, Regime("competitive_fastrho"))
    assert ok and lam == m.beta
    assert not dg.rate_constant(m, Regime("competitive_coupled"))[1]


def test_inequality_report_stationary():
    g = Grid.uniform(-6.0, 6.0, 120)
    m = zero_model(g, alpha=0.1)
    tr = simulate(m.reference_density, m.x0, m, Regime("aligned"), 1.0, 0.01, stride=10)
    rep = dg.inequality_report(tr, m, Regime("aligned"), 0.1)
    assert rep.all_pass
    for margins in (rep.log_sobolev, rep.talagrand, rep.hwi):
        assert np.all(np.abs(margins) <= 1e-8)


def test_inequality_report_detects_violation():
    g = Grid.uniform(-6.0, 6.0, 120)
    m = zero_model(g, alpha=0.1)
    tr = simulate(gaussian_density(g, 0.5, 1.0), m.x0, m, Regime("aligned"), 5.0, 0.01, stride=10)
    # a claimed rate ten times the true one must break log-Sobolev
    rep = dg.inequality_report(tr, m, Regime("aligned"), 1.0)
    assert not rep.passed["log_sobolev"]


def test_inequality_report_csv(tmp_path):
    g = Grid.uniform(-6.0, 6.0, 120)
    m = zero_model(g, alpha=0.1)
    tr = simulate(gaussian_density(g, 0.5, 1.0), m.x0, m, Regime("aligned"), 2.0, 0.01, stride=20)
    rep = dg.inequality_report(tr, m, Regime("aligned"), 0.1)
    rep.write_csv(tmp_path / "ineq.csv")
    lines = (tmp_path / "ineq.csv").read_text().splitlines()
    assert lines[0].split(",") == ["t", "relative_energy", "dissipation", "distance",
                                   "log_sobolev_margin", "talagrand_margin", "hwi_margin"]
    assert len(lines) == len(tr.times) + 1
    assert set(rep.summary()) >= {"lambda", "log_sobolev", "talagrand", "hwi", "slack"}


def test_inequalities_on_aligned_run_without_kernel():
    cfg = load_config(bundled("aligned_1d")).replace(model__kernel="none", model__kernel_weight=0.0,
                                                     time__T=15.0)
    m = cfg.model()
    reg = cfg.regime()
    tr = run(cfg)
    lam, ok = dg.rate_constant(m, reg)
    assert ok
    assert dg.inequality_report(tr, m, reg, lam).all_pass
