"""Coupled population/classifier evolution in all timescale regimes.

The population density is advanced with the upwind solver; the classifier
parameters follow explicit gradient descent, or are replaced by a best
response when they are the fast species.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import fv_solver
from .grid import Density, sample
from .model import (ALIGNED, COMPETITIVE, EnergyModel, as_params, energy_aligned,
                    energy_competitive, first_variation_rho)

log = logging.getLogger(__name__)

KINDS = ("aligned", "competitive_coupled", "competitive_fastx", "competitive_fastrho",
         "naive", "sampled", "two_populations", "competitive_2d")

NEWTON_TOL = 1e-10
GIBBS_TOL = 1e-9
GIBBS_DAMPING = 0.5


class SolverError(RuntimeError):
    """An inner solver failed; ``residual`` holds its last residual."""

    def __init__(self, message, residual=float("nan"), step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.residual = residual
        self.step = step


@dataclass(frozen=True)
class Regime:
    """Which species moves and how.

    ``ratio`` multiplies the population velocity relative to the classifier
    (coupled regimes only).  ``fixed_x`` is the frozen classifier of the naive
    strategy.  ``samples`` and ``seed`` configure the sampled gradient, which
    with ``best_response`` set is minimized outright instead of followed.
    """

    kind: str
    ratio: float = 1.0
    fixed_x: Optional[tuple] = None
    samples: int = 0
    seed: int = 0
    best_response: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regime {self.kind!r}; expected one of {KINDS}")
        if not self.ratio > 0:
            raise ValueError("timescale ratio must be positive")
        if self.kind == "naive" and self.fixed_x is None:
            raise ValueError("naive regime needs fixed_x")
        if self.kind == "sampled" and self.samples < 1:
            raise ValueError("sampled regime needs samples >= 1")
        if self.fixed_x is not None:
            object.__setattr__(self, "fixed_x", tuple(float(v) for v in np.atleast_1d(self.fixed_x)))

    @property
    def energy_kind(self) -> str:
        return ALIGNED if self.kind == "aligned" else COMPETITIVE

    @property
    def sign(self) -> int:
        """+1: population descends its field; -1: it ascends."""
        return 1 if self.kind == "aligned" else -1

    @property
    def evolves_x(self) -> bool:
        return self.kind not in ("naive",)


@dataclass
class Trajectory:
    """Sampled time series of a run."""

    times: list = field(default_factory=list)
    densities: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    classifier_loss: list = field(default_factory=list)
    population_loss: list = field(default_factory=list)
    second: list = field(default_factory=list)
    steps: int = 0
    max_step_drift: float = 0.0
    min_value: float = float("inf")
    substeps: int = 0
    mass_initial: float = 1.0
    mass_final: float = 1.0
    stride: int = 1

    @property
    def cumulative_drift(self) -> float:
        return abs(self.mass_final - self.mass_initial)

    def record(self, t, rho, x, energy, closs, ploss, second=None):
        if self.times and not t > self.times[-1]:
            raise ValueError("trajectory times must increase strictly")
        self.times.append(float(t))
        self.densities.append(rho)
        self.xs.append(np.array(x, dtype=float))
        self.energies.append(float(energy))
        self.classifier_loss.append(float(closs))
        self.population_loss.append(float(ploss))
        if second is not None:
            self.second.append(second)

    @property
    def final_density(self) -> Density:
        return self.densities[-1]

    @property
    def final_x(self) -> np.ndarray:
        return self.xs[-1]

    def as_arrays(self):
        return np.array(self.times), np.array(self.energies), np.array(self.xs)


# --- inner solvers ---------------------------------------------------------

def best_response_x(rho: Density, model: EnergyModel, tol: float = NEWTON_TOL,
                    x_init=None, max_iter: int = 100, check_bound: bool = True) -> np.ndarray:
    """Classifier best response ``argmin_x G_c(rho, x)`` by damped Newton.

    The Newton matrix is ``beta Id + int hess_x f1 drho + int hess_x f2 dstatic``,
    shifted to stay at least ``beta``-positive for nonconvex costs.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = as_params(model.x0 if x_init is None else x_init).copy()
    obj = model.classifier_loss(rho, x)
    g = model.grad_x(rho, x)
    for _ in range(max_iter):
        res = float(np.linalg.norm(g))
        if res <= tol:
            break
        h = model.hess_x(rho, x)
        lam_min = float(np.min(np.linalg.eigvalsh(h)))
        if lam_min < model.beta:
            h = h + (model.beta - lam_min) * np.eye(x.size)
        d = -np.linalg.solve(h, g)
        t = 1.0
        while True:
            x_new = x + t * d
            obj_new = model.classifier_loss(rho, x_new)
            # rounding slack: near the optimum the objective change is below eps
            if obj_new <= obj + 1e-4 * t * float(g @ d) + 1e-13 * (1 + abs(obj)) or t < 1e-10:
                break
            t *= 0.5
        x, obj = x_new, obj_new
        g = model.grad_x(rho, x)
    else:
        res = float(np.linalg.norm(g))
        if res > tol:
            raise SolverError(f"Newton best response did not converge (residual {res:.3e})", res)
    if check_bound:
        a1, a2 = model.x_grad_bounds
        bound = float(x @ x) <= float(model.x0 @ model.x0) + 2 * (a1 + a2) / model.beta + 1e-9
        if not bound:
            raise SolverError("best response violates the uniform bound", float(np.linalg.norm(x)))
    return x


def gibbs_map(rho: Density, x, model: EnergyModel) -> Density:
    """``normalize(ref * exp((f1(., x) - W*rho) / alpha))`` computed in log space."""
    expo = model.cost.f1(model.points, as_params(x))
    if not model.kernel.is_zero:
        expo = expo - model.convolve(rho)
    logv = model.log_reference + expo / model.alpha
    return Density(model.grid, np.exp(logv - np.max(logv)), normalize=True)


def best_response_rho(x, model: EnergyModel, tol: float = GIBBS_TOL, max_iter: int = 2000,
                      damping: float = GIBBS_DAMPING, init: Optional[Density] = None) -> Density:
    """Population best response ``argmax_rho G_c(rho, x)`` (Gibbs fixed point).

    Without interactions the Gibbs density is explicit and returned after
    one evaluation; otherwise a damped fixed-point iteration runs until the
    L1 change drops below ``tol``.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must be in (0, 1]")
    rho = model.reference_density if init is None else init
    if model.kernel.is_zero:
        return gibbs_map(rho, x, model)
    dv = model.grid.cell_volume
    change = float("inf")
    for _ in range(max_iter):
        target = gibbs_map(rho, x, model)
        new_vals = (1 - damping) * rho.values + damping * target.values
        change = float(np.sum(np.abs(new_vals - rho.values)) * dv)
        rho = Density(model.grid, new_vals, normalize=True)
        if change <= tol:
            return rho
    raise SolverError(f"Gibbs fixed point did not converge after {max_iter} iterations "
                      f"(L1 change {change:.3e})", change)


def sampled_gradient(rho: Density, static: Density, x, model: EnergyModel, n: int, seed,
                     return_stderr: bool = False):
    """Monte Carlo estimate of ``grad_x G_c`` from ``n`` draws of each population."""
    if n < 1:
        raise ValueError("need at least one sample")
    x = as_params(x)
    s1, s2 = np.random.SeedSequence(seed).generate_state(2)
    z = sample(rho, n, int(s1)).reshape(n, -1)
    zb = sample(static, n, int(s2)).reshape(n, -1)
    terms = model.cost.grad_x_f1(z, x) + model.cost.grad_x_f2(zb, x)
    g = terms.mean(axis=0) + model.beta * (x - model.x0)
    if return_stderr:
        se = terms.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(x.shape, np.inf)
        return g, se
    return g


def sampled_best_response(rho: Density, static: Density, x, model: EnergyModel, n: int, seed,
                          tol: float = NEWTON_TOL) -> np.ndarray:
    """Minimizer of the empirical classifier loss built from ``n`` draws."""
    s1, s2 = np.random.SeedSequence(seed).generate_state(2)
    z = sample(rho, n, int(s1)).reshape(n, -1)
    zb = sample(static, n, int(s2)).reshape(n, -1)
    c = model.cost
    xk = as_params(x).copy()
    for _ in range(100):
        g = (c.grad_x_f1(z, xk) + c.grad_x_f2(zb, xk)).mean(axis=0) + model.beta * (xk - model.x0)
        if np.linalg.norm(g) <= tol:
            return xk
        h = (c.hess_x_f1(z, xk) + c.hess_x_f2(zb, xk)).mean(axis=0) + model.beta * np.eye(xk.size)
        lam = float(np.min(np.linalg.eigvalsh(h)))
        if lam < model.beta:
            h = h + (model.beta - lam) * np.eye(xk.size)
        xk = xk - np.linalg.solve(h, g)
    raise SolverError("sampled best response did not converge", float(np.linalg.norm(g)))


# --- energies along the regimes -------------------------------------------

def population_loss(rho: Density, x, model: EnergyModel, kind: str) -> float:
    """Cost the strategic population minimizes.

    Aligned: ``int f1 drho + alpha KL + interaction``; competitive:
    ``-int f1 drho + alpha KL + interaction``.
    """
    f1 = model.grid.integrate(model.cost.f1(model.points, as_params(x)) * rho.values)
    reg = model.alpha * model.relative_entropy(rho) + model.interaction(rho)
    return (f1 if kind == ALIGNED else -f1) + reg


def energy_fast_x(rho: Density, model: EnergyModel, x_init=None):
    """``G_b(rho) = G_c(rho, b(rho))`` together with the best response."""
    x = best_response_x(rho, model, x_init=x_init)
    return energy_competitive(rho, x, model), x


def energy_fast_rho(x, model: EnergyModel, init: Optional[Density] = None, tol: float = GIBBS_TOL):
    """``G_d(x) = G_c(r(x), x)`` together with the population best response."""
    rho = best_response_rho(x, model, tol=tol, init=init)
    return energy_competitive(rho, x, model), rho


def competitive_equilibrium(model: EnergyModel, x_init=None, tol: float = 1e-11):
    """Saddle point ``(rho*, x*)`` of ``G_c`` via the root of ``grad G_d``.

    Each residual evaluation solves the population best response exactly,
    so the result is independent of any time stepping.
    """
    from scipy.optimize import root

    cache = {}

    def resid(xv):
        rho = best_response_rho(xv, model, tol=1e-13, init=cache.get("rho"))
        cache["rho"] = rho
        return model.grad_x(rho, xv)

    x_start = as_params(model.x0 if x_init is None else x_init)
    sol = root(resid, x_start, method="hybr", tol=tol)
    if not sol.success or np.linalg.norm(sol.fun) > 1e-8:
        raise SolverError(f"equilibrium search failed: {sol.message}", float(np.linalg.norm(sol.fun)))
    x = as_params(sol.x)
    return best_response_rho(x, model, tol=1e-13, init=cache.get("rho")), x


def aligned_equilibrium(model: EnergyModel, x_init=None, tol: float = 1e-11):
    """Minimizer of ``G_a`` for interaction-free models.

    The density is the Gibbs profile ``ref * exp(-f1/alpha)`` and ``x``
    solves the first-order condition.
    """
    from scipy.optimize import root

    if not model.kernel.is_zero:
        raise ValueError("closed-form aligned equilibrium needs W = 0")

    def profile(xv):
        logv = model.log_reference - model.cost.f1(model.points, as_params(xv)) / model.alpha
        return Density(model.grid, np.exp(logv - np.max(logv)), normalize=True)

    sol = root(lambda xv: model.grad_x(profile(xv), xv),
               as_params(model.x0 if x_init is None else x_init), method="hybr", tol=tol)
    if not sol.success:
        raise SolverError(f"aligned equilibrium search failed: {sol.message}")
    x = as_params(sol.x)
    return profile(x), x


# --- time stepping ----------------------------------------------------------

def _advance_population(rho, x, model, regime, dt, cfl, static=None):
    kind = regime.energy_kind
    if regime.kind == "competitive_fastx":
        state = {"x": as_params(x)}

        def potential(r):
            state["x"] = best_response_x(r, model, x_init=state["x"])
            return first_variation_rho(r, state["x"], model, kind)
    else:
        def potential(r):
            return first_variation_rho(r, x, model, kind)
    speed = regime.ratio if regime.kind in ("competitive_coupled", "competitive_2d", "sampled") else 1.0
    return fv_solver.advance(rho, potential, dt, sign=regime.sign, speed=speed, cfl=cfl)


def step_coupled(state, model: EnergyModel, regime: Regime, dt: float,
                 cfl: float = fv_solver.DEFAULT_CFL, step_index: int = 0):
    """Advance ``(rho, x)`` by one explicit step of length ``dt``.

    Returns ``((rho, x), report)``.  Both species are updated from the
    state at the start of the step.
    """
    rho, x = state
    x = as_params(x)
    kind = regime.kind
    if kind == "competitive_fastrho":
        rho = best_response_rho(x, model, init=rho)
        x_new = x - dt * model.grad_x(rho, x)
        return (rho, x_new), fv_solver.StepReport(dt, 0.0, float(np.min(rho.values)), 0.0, 0)
    if kind == "competitive_fastx":
        x = best_response_x(rho, model, x_init=x)
    if kind == "naive":
        x = as_params(regime.fixed_x)
    rho_new, report = _advance_population(rho, x, model, regime, dt, cfl)
    if kind in ("aligned", "competitive_coupled", "competitive_2d"):
        x_new = x - dt * model.grad_x(rho, x)
    elif kind == "sampled":
        seed = [regime.seed, step_index]
        if regime.best_response:
            x_new = sampled_best_response(rho, model.static, x, model, regime.samples, seed)
        else:
            x_new = x - dt * sampled_gradient(rho, model.static, x, model, regime.samples, seed)
    elif kind == "competitive_fastx":
        x_new = best_response_x(rho_new, model, x_init=x)
    else:
        x_new = x
    return (rho_new, x_new), report


def _observe(rho, x, model, regime):
    """State as recorded in the trajectory, with its regime energy."""
    kind = regime.kind
    if kind == "aligned":
        return rho, x, energy_aligned(rho, x, model)
    if kind == "competitive_fastx":
        g, xb = energy_fast_x(rho, model, x_init=x)
        return rho, xb, g
    if kind == "competitive_fastrho":
        g, rb = energy_fast_rho(x, model, init=rho)
        return rb, x, g
    return rho, x, energy_competitive(rho, x, model)


def simulate(rho0: Density, x_init, model: EnergyModel, regime: Regime, T: float, dt: float,
             cfl: float = fv_solver.DEFAULT_CFL, stride: int = 10) -> Trajectory:
    """Run ``regime`` from ``(rho0, x_init)`` up to time ``T``.

    Samples are taken every ``stride`` steps and at the final time.  For the
    fast-population regime the recorded density is the best response
    ``r(x)``; for the fast-classifier regime the recorded ``x`` is ``b(rho)``.
    """
    if regime.kind == "two_populations":
        raise ValueError("use simulate_two_populations for two dynamic populations")
    if T < 0 or not dt > 0:
        raise ValueError("need T >= 0 and dt > 0")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    x = as_params(regime.fixed_x if regime.kind == "naive" else x_init)
    rho = rho0
    traj = Trajectory(stride=stride, mass_initial=rho0.mass)
    nsteps = int(round(T / dt))
    if nsteps * dt < T - 1e-12:
        nsteps += 1

    def observe(t, rho, x):
        r_obs, x_obs, g = _observe(rho, x, model, regime)
        traj.record(t, r_obs, x_obs, g, model.classifier_loss(r_obs, x_obs),
                    population_loss(r_obs, x_obs, model, regime.energy_kind))

    observe(0.0, rho, x)
    t = 0.0
    for k in range(nsteps):
        h = min(dt, T - t) if k == nsteps - 1 else dt
        try:
            (rho, x), rep = step_coupled((rho, x), model, regime, h, cfl, step_index=k)
        except (SolverError, fv_solver.CFLError, FloatingPointError) as exc:
            res = getattr(exc, "residual", float("nan"))
            raise SolverError(str(exc), res, step=k) from exc
        t = (k + 1) * dt if k < nsteps - 1 else T
        traj.steps += 1
        traj.substeps += rep.substeps
        traj.max_step_drift = max(traj.max_step_drift, rep.mass_drift)
        traj.min_value = min(traj.min_value, float(np.min(rho.values)))
        if (k + 1) % stride == 0 or k == nsteps - 1:
            observe(t, rho, x)
    traj.min_value = min(traj.min_value, float(np.min(rho.values)))
    traj.mass_final = rho.mass
    return traj


def simulate_two_populations(rho0: Density, tau0: Density, tau_reference, x_init, model: EnergyModel,
                             T: float, dt: float, cfl: float = fv_solver.DEFAULT_CFL,
                             stride: int = 10) -> Trajectory:
    """Competitive ``rho``, aligned ``tau`` and a shared classifier ``x``.

    ``rho`` ascends ``f1 - alpha log(rho/ref) - W*rho``, ``tau`` descends
    ``f2 + alpha log(tau/tau_ref) + W*tau`` and ``x`` descends the classifier
    loss with ``tau`` in place of the static population.  ``tau_reference``
    is a :class:`~driftflow.model.ReferenceDistribution`.
    """
    tau_model = model.replace(reference=tau_reference, static=tau0)
    x = as_params(x_init)
    rho, tau = rho0, tau0
    traj = Trajectory(stride=stride, mass_initial=rho0.mass)
    nsteps = int(round(T / dt))

    def tau_potential(tv, xv):
        xi = (model.cost.f2(model.points, xv)
              + model.alpha * (tv.log() - tau_model.log_reference))
        if not model.kernel.is_zero:
            xi = xi + model.convolve(tv)
        return xi

    def observe(t):
        g = energy_competitive(rho, x, model.replace(static=tau))
        traj.record(t, rho, x, g, model.classifier_loss(rho, x, static=tau),
                    population_loss(rho, x, model, COMPETITIVE), second=tau)

    observe(0.0)
    for k in range(nsteps):
        xk = x
        rho_new, r1 = fv_solver.advance(rho, lambda r: first_variation_rho(r, xk, model, COMPETITIVE),
                                        dt, sign=-1, cfl=cfl)
        tau_new, r2 = fv_solver.advance(tau, lambda tv: tau_potential(tv, xk), dt, sign=1, cfl=cfl)
        x = x - dt * model.grad_x(rho, x, static=tau)
        rho, tau = rho_new, tau_new
        traj.steps += 1
        traj.substeps += r1.substeps + r2.substeps
        traj.max_step_drift = max(traj.max_step_drift, r1.mass_drift, r2.mass_drift)
        traj.min_value = min(traj.min_value, r1.min_value, r2.min_value)
        if (k + 1) % stride == 0 or k == nsteps - 1:
            observe((k + 1) * dt)
    traj.mass_final = rho.mass
    traj.tau_mass = (tau0.mass, tau.mass)
    return traj


# --- configuration entry points ---------------------------------------------

def run(config) -> Trajectory:
    """Run a validated :class:`~driftflow.config.ScenarioConfig`."""
    if config.kind == "two_populations":
        return run_two_populations(config)
    model = config.model()
    return simulate(config.initial_density(model.grid), config["initial.x"], model, config.regime(),
                    config["time.T"], config["time.dt"], config["time.cfl"], config["time.stride"])


def run_two_populations(config) -> Trajectory:
    """Run a two-population scenario; ``tau`` snapshots land in ``Trajectory.second``."""
    model = config.model()
    g = model.grid
    return simulate_two_populations(config.initial_density(g), config.tau_initial(g),
                                    config.tau_reference(), config["initial.x"], model,
                                    config["time.T"], config["time.dt"], config["time.cfl"],
                                    config["time.stride"])
