"""Distances, dissipation, decay rates and functional-inequality checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fv_solver
from .dynamics import Regime, Trajectory, best_response_rho, best_response_x
from .grid import Density, cdf_1d
from .model import ALIGNED, COMPETITIVE, EnergyModel, as_params, first_variation_rho

QUANTILE_NODES = 1000
SUPPORT_CUTOFF = 1e-8


def quantiles(rho: Density, u: np.ndarray) -> np.ndarray:
    """Inverse of the piecewise-linear CDF of a 1D density at levels ``u``."""
    faces = rho.grid.axis_faces(0)
    cdf = cdf_1d(rho)
    # flat CDF stretches (empty cells) are skipped by searching the right edge
    idx = np.clip(np.searchsorted(cdf, u, side="left"), 1, cdf.size - 1)
    lo, hi = cdf[idx - 1], cdf[idx]
    w = np.where(hi > lo, (u - lo) / np.where(hi > lo, hi - lo, 1.0), 0.0)
    return faces[idx - 1] + w * (faces[idx] - faces[idx - 1])


def wasserstein2_1d(rho1: Density, rho2: Density, nodes: int = QUANTILE_NODES) -> float:
    """Quadratic Wasserstein distance via the quantile coupling.

    ``|F1^-1(u) - F2^-1(u)|^2`` is averaged over ``nodes`` midpoint levels.
    """
    if rho1.grid.dim != 1 or rho2.grid.dim != 1:
        raise NotImplementedError("Wasserstein distance is only available in 1D")
    u = (np.arange(nodes) + 0.5) / nodes
    d = quantiles(rho1, u) - quantiles(rho2, u)
    return float(np.sqrt(np.mean(d**2)))


def joint_metric(rho1: Density, x1, rho2: Density, x2) -> float:
    """``sqrt(W2(rho1, rho2)^2 + |x1 - x2|^2)`` for Dirac classifiers."""
    dx = as_params(x1) - as_params(x2)
    return float(np.sqrt(wasserstein2_1d(rho1, rho2) ** 2 + dx @ dx))


def _field(rho, x, model, regime: Regime):
    return first_variation_rho(rho, x, model, regime.energy_kind)


def _cell_gradient(xi: np.ndarray, grid) -> list:
    if grid.dim == 1:
        return [np.gradient(xi, grid.widths[0])]
    return list(np.gradient(xi, *grid.widths))


def _face_dissipation(rho: Density, xi: np.ndarray, sign: int) -> float:
    # sum over faces of u^2 times the upwind cell value: the rate at which
    # the upwind scheme itself dissipates energy
    g = rho.grid
    u = fv_solver.face_velocities(xi, g, sign)
    v = rho.values
    if g.dim == 1:
        uu = u[1:-1]
        up = np.where(uu > 0, v[:-1], v[1:])
        return float(np.sum(uu**2 * up) * g.cell_volume)
    uu, vv = u[0][1:-1], u[1][:, 1:-1]
    up_u = np.where(uu > 0, v[:-1], v[1:])
    up_v = np.where(vv > 0, v[:, :-1], v[:, 1:])
    return float((np.sum(uu**2 * up_u) + np.sum(vv**2 * up_v)) * g.cell_volume)


def dissipation(rho: Density, x, model: EnergyModel, regime: Regime, stencil: str = "face") -> float:
    """Energy dissipation ``int |grad xi|^2 drho`` plus the classifier part.

    ``xi`` is the population's first variation.  With ``stencil="face"``
    the squared face velocities are weighted by the upwind cell values,
    which is exactly what the finite-volume scheme dissipates; with
    ``"centered"`` the gradient is taken by centred differences at the cell
    centres.  The classifier contributes ``|grad_x|^2`` whenever it moves
    by gradient descent.  For the fast-population regime only the
    classifier part is present, evaluated at ``r(x)``.
    """
    if stencil not in ("face", "centered"):
        raise ValueError("stencil must be 'face' or 'centered'")
    kind = regime.kind
    if kind == "competitive_fastrho":
        rb = best_response_rho(x, model, init=rho)
        g = model.grad_x(rb, x)
        return float(g @ g)
    if kind == "competitive_fastx":
        x = best_response_x(rho, model, x_init=x)
    xi = _field(rho, x, model, regime)
    if stencil == "face":
        d = _face_dissipation(rho, xi, regime.sign)
    else:
        grads = _cell_gradient(xi, rho.grid)
        d = model.grid.integrate(sum(gr**2 for gr in grads) * rho.values)
    if kind in ("aligned", "competitive_coupled", "competitive_2d"):
        g = model.grad_x(rho, x)
        d += float(g @ g)
    return float(d)


def steady_state_residual(rho: Density, x, model: EnergyModel, regime: Regime) -> float:
    """Largest face gradient of the first variation on the support of ``rho``.

    Faces count when both neighbours exceed ``1e-8``.  Adds ``|grad_x|`` when
    the regime moves ``x`` by gradient descent.  The fast-classifier regime
    uses ``b(rho)``; the fast-population regime uses ``r(x)``.
    """
    kind = regime.kind
    if kind == "competitive_fastx":
        x = best_response_x(rho, model, x_init=x)
    if kind == "competitive_fastrho":
        rho = best_response_rho(x, model, init=rho)
    xi = _field(rho, x, model, regime)
    g = rho.grid
    v = rho.values
    worst = 0.0
    for axis in range(g.dim):
        dif = np.abs(np.diff(xi, axis=axis)) / g.widths[axis]
        sl_lo = [slice(None)] * g.dim
        sl_hi = [slice(None)] * g.dim
        sl_lo[axis] = slice(None, -1)
        sl_hi[axis] = slice(1, None)
        mask = (v[tuple(sl_lo)] >= SUPPORT_CUTOFF) & (v[tuple(sl_hi)] >= SUPPORT_CUTOFF)
        if np.any(mask):
            worst = max(worst, float(np.max(dif[mask])))
    if kind in ("aligned", "competitive_coupled", "competitive_2d", "competitive_fastrho"):
        worst += float(np.linalg.norm(model.grad_x(rho, x)))
    return worst


def fit_decay_rate(times, energies, window: float = 1.0, floor: float = 1e-13) -> float:
    """Exponential rate ``lam`` in ``E(t) ~ C exp(-2 lam t)``.

    Points at or below ``floor`` (and everything after the first such point)
    are discarded; the least-squares slope of ``log E`` over the trailing
    ``window`` fraction of the rest is negated and halved.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    if not 0 < window <= 1:
        raise ValueError("window must be in (0, 1]")
    below = np.nonzero(e <= floor)[0]
    stop = below[0] if below.size else e.size
    t, e = t[:stop], e[:stop]
    k = int(np.ceil(window * t.size))
    t, e = t[t.size - k:], e[e.size - k:]
    if t.size < 5:
        raise ValueError(f"need at least 5 usable points, got {t.size}")
    slope = np.polyfit(t, np.log(e), 1)[0]
    return float(-slope / 2)


def _peaks_1d(v: np.ndarray, prominence: float) -> int:
    n = v.size
    vmax = float(np.max(v))
    if vmax <= 0:
        return 0
    peaks = []
    i = 0
    while i < n:
        # plateau [i, j]
        j = i
        while j + 1 < n and v[j + 1] == v[i]:
            j += 1
        left = v[i - 1] if i > 0 else -np.inf
        right = v[j + 1] if j + 1 < n else -np.inf
        if v[i] > left and v[i] > right and v[i] > prominence * vmax:
            peaks.append((i + j) // 2)
        i = j + 1
    merged = []
    for p in peaks:
        if merged:
            q = merged[-1]
            valley = float(np.min(v[q:p + 1]))
            if valley >= (1 - prominence) * min(v[q], v[p]):
                if v[p] > v[q]:
                    merged[-1] = p
                continue
        merged.append(p)
    return len(merged)


def count_modes(rho: Density, prominence: float = 0.2) -> int:
    """Number of well-separated local maxima.

    A maximum counts if it exceeds ``prominence * max(rho)`` and the minimum
    separating it from its neighbouring counted peak falls below
    ``(1 - prominence)`` times the lower of the two peaks.  In 2D the rule
    is applied to the marginal along the first axis.
    """
    if not prominence > 0:
        raise ValueError("prominence must be positive")
    v = rho.values
    if rho.grid.dim == 2:
        v = v.sum(axis=1)
    return _peaks_1d(np.asarray(v, dtype=float), prominence)


def rate_constant(model: EnergyModel, regime: Regime) -> tuple[float, bool]:
    """Theoretical decay constant for the regime and whether it applies.

    Aligned: ``min(beta, alpha lam_ref)`` (logistic costs have zero
    curvature floor).  Fast classifier: ``alpha lam_ref - Lambda_1``, not
    applicable when nonpositive.  Fast population: ``beta``.
    """
    lam_ref = model.log_concavity
    if regime.kind == "aligned":
        return min(model.beta, model.alpha * lam_ref), True
    if regime.kind == "competitive_fastx":
        lam = model.alpha * lam_ref - model.cost.max_hess_z_f1(model.grid)
        return lam, lam > 0
    if regime.kind == "competitive_fastrho":
        return model.beta, True
    return float("nan"), False


@dataclass
class InequalityReport:
    """Per-sample margins of the log-Sobolev, Talagrand and HWI inequalities.

    Margins are ``rhs - lhs`` of each inequality written as ``lhs <= rhs``;
    a sample passes when the margin is at least ``-(rel * scale + abs_slack)``.
    """

    times: np.ndarray
    relative_energy: np.ndarray
    dissipation: np.ndarray
    distance: np.ndarray
    log_sobolev: np.ndarray
    talagrand: np.ndarray
    hwi: np.ndarray
    lam: float
    rel_slack: float = 0.05
    abs_slack: float = 1e-6
    passed: dict = field(default_factory=dict)

    def rows(self):
        for i in range(self.times.size):
            yield {
                "t": self.times[i],
                "relative_energy": self.relative_energy[i],
                "dissipation": self.dissipation[i],
                "distance": self.distance[i],
                "log_sobolev_margin": self.log_sobolev[i],
                "talagrand_margin": self.talagrand[i],
                "hwi_margin": self.hwi[i],
            }

    @property
    def all_pass(self) -> bool:
        return all(self.passed.values())

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            cols = ["t", "relative_energy", "dissipation", "distance",
                    "log_sobolev_margin", "talagrand_margin", "hwi_margin"]
            w.writerow(cols)
            for row in self.rows():
                w.writerow([repr(float(row[c])) for c in cols])

    def summary(self) -> dict:
        return {"lambda": self.lam, **{k: bool(v) for k, v in self.passed.items()},
                "slack": f"{self.rel_slack:g} rel + {self.abs_slack:g} abs"}


def _check(lhs, rhs, rel, abs_):
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    margin = rhs - lhs
    return margin, bool(np.all(margin >= -(rel * scale + abs_)))


def _regime_distance(rho, x, rho_end, x_end, kind):
    # the reduced energies live on one species only
    if kind == "competitive_fastx":
        return wasserstein2_1d(rho, rho_end)
    if kind == "competitive_fastrho":
        return float(np.linalg.norm(as_params(x) - as_params(x_end)))
    return joint_metric(rho, x, rho_end, x_end)


def inequality_report(traj: Trajectory, model: EnergyModel, regime: Regime, lam: float,
                      rel_slack: float = 0.05, abs_slack: float = 1e-6) -> InequalityReport:
    """Check the functional inequalities along a 1D trajectory.

    The terminal sample stands in for the minimizer.  Relative energy,
    dissipation and the distance to the terminal state are computed per
    sample.  The distance is the joint metric, except for the reduced
    energies: ``W2`` alone for ``G_b(rho)`` and ``|x - x_end|`` for
    ``G_d(x)``.  Then

    * log-Sobolev: ``2 lam dG <= D``
    * Talagrand: ``Wbar^2 <= (2 / lam) dG``
    * HWI: ``dG <= Wbar sqrt(D) - (lam / 2) Wbar^2``
    """
    times = np.asarray(traj.times)
    energies = np.asarray(traj.energies)
    rho_end, x_end = traj.densities[-1], traj.xs[-1]
    sgn = -1.0 if regime.kind == "competitive_fastx" else 1.0
    rel = sgn * (energies - energies[-1])
    diss = np.array([dissipation(r, x, model, regime) for r, x in zip(traj.densities, traj.xs)])
    dist = np.array([_regime_distance(r, x, rho_end, x_end, regime.kind)
                     for r, x in zip(traj.densities, traj.xs)])
    ls, ok_ls = _check(2 * lam * rel, diss, rel_slack, abs_slack)
    ta, ok_ta = _check(dist**2, (2 / lam) * rel, rel_slack, abs_slack)
    hw, ok_hw = _check(rel, dist * np.sqrt(diss) - 0.5 * lam * dist**2, rel_slack, abs_slack)
    rep = InequalityReport(times, rel, diss, dist, ls, ta, hw, lam, rel_slack, abs_slack)
    rep.passed = {"log_sobolev": ok_ls, "talagrand": ok_ta, "hwi": ok_hw}
    return rep


def energy_balance(traj: Trajectory, model: EnergyModel, regime: Regime, skip: float = 0.05):
    """Compare ``-dG/dt`` (centred differences in time) with the dissipation.

    Returns ``(times, -dG/dt, D)`` for samples after the first ``skip``
    fraction, excluding the end points.
    """
    t = np.asarray(traj.times)
    e = np.asarray(traj.energies)
    rate = -np.gradient(e, t)
    diss = np.array([dissipation(r, x, model, regime) for r, x in zip(traj.densities, traj.xs)])
    start = max(1, int(np.ceil(skip * t.size)))
    sl = slice(start, t.size - 1)
    return t[sl], rate[sl], diss[sl]
