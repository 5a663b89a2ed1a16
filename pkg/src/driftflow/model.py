"""Costs, interaction kernels, reference measures and the coupled energies.

Points ``z`` are arrays of shape ``(..., d)`` and classifier parameters ``x``
are vectors of shape ``(d,)``.  Scalar-valued cost functions return arrays
of shape ``z.shape[:-1]``; gradients append one trailing axis of length d
and Hessians two.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit, log_expit

from . import kernels
from .grid import MASS_FLOOR, Density, Grid, discretize_log, gaussian_logpdf

ALIGNED = "aligned"
COMPETITIVE = "competitive"


def softplus(s):
    """``log(1 + exp(s))`` without overflow."""
    return -log_expit(-s)


class LogisticCost:
    """Logistic classifier costs ``f1 = -log(1 - q)`` and ``f2 = -log q``.

    One-dimensional variant with ``q(z, x) = sigmoid(b z - x)``, so that
    ``f1 = softplus(b z - x)`` and ``f2 = softplus(x - b z)``.
    """

    def __init__(self, slope: float = 3.0):
        if not slope > 0:
            raise ValueError("logistic slope b must be positive")
        self.slope = float(slope)
        self.dim = 1

    def __repr__(self):
        return f"LogisticCost(slope={self.slope})"

    def _arg(self, z, x):
        return self.slope * z[..., 0] - x[0]

    def f1(self, z, x):
        return softplus(self._arg(z, x))

    def f2(self, z, x):
        return softplus(-self._arg(z, x))

    def grad_x_f1(self, z, x):
        return -expit(self._arg(z, x))[..., None]

    def grad_x_f2(self, z, x):
        return expit(-self._arg(z, x))[..., None]

    def grad_z_f1(self, z, x):
        return self.slope * expit(self._arg(z, x))[..., None]

    def grad_z_f2(self, z, x):
        return -self.slope * expit(-self._arg(z, x))[..., None]

    def _curv(self, z, x):
        s = self._arg(z, x)
        return expit(s) * expit(-s)

    def hess_x_f1(self, z, x):
        return self._curv(z, x)[..., None, None]

    hess_x_f2 = hess_x_f1

    def hess_z_f1(self, z, x):
        return self.slope**2 * self._curv(z, x)[..., None, None]

    def hess_z_f2(self, z, x):
        return self.hess_z_f1(z, x)

    def max_hess_z_f1(self, grid: Grid) -> float:
        # sigmoid' peaks at 1/4 for any x
        return self.slope**2 / 4.0

    def lower_bound_x_grad(self, grid: Grid, x_box: float = 50.0):
        """Grid-box infima of ``x . grad_x f_i`` over ``|x| <= x_box``."""
        z = grid.points
        xs = np.linspace(-x_box, x_box, 2001)
        a1 = min(float(np.min(x * self.grad_x_f1(z, np.array([x]))[..., 0])) for x in xs)
        a2 = min(float(np.min(x * self.grad_x_f2(z, np.array([x]))[..., 0])) for x in xs)
        return -a1, -a2


class LogisticCost2D:
    """Bounded two-dimensional classifier costs.

    ``f1 = sigmoid(x.z) / 2`` and ``f2 = sigmoid(-x.z) / 2`` so that
    ``f1 + f2 = 1/2`` everywhere.
    """

    dim = 2

    def __repr__(self):
        return "LogisticCost2D()"

    @staticmethod
    def _arg(z, x):
        return z @ x

    def f1(self, z, x):
        return 0.5 * expit(self._arg(z, x))

    def f2(self, z, x):
        return 0.5 * expit(-self._arg(z, x))

    def _d1(self, z, x):
        s = self._arg(z, x)
        return 0.5 * expit(s) * expit(-s)

    def _d2(self, z, x):
        s = self._arg(z, x)
        p = expit(s)
        return 0.5 * p * (1 - p) * (1 - 2 * p)

    def grad_x_f1(self, z, x):
        return self._d1(z, x)[..., None] * z

    def grad_x_f2(self, z, x):
        return -self.grad_x_f1(z, x)

    def grad_z_f1(self, z, x):
        return self._d1(z, x)[..., None] * np.broadcast_to(x, z.shape)

    def grad_z_f2(self, z, x):
        return -self.grad_z_f1(z, x)

    def hess_x_f1(self, z, x):
        return self._d2(z, x)[..., None, None] * z[..., :, None] * z[..., None, :]

    def hess_x_f2(self, z, x):
        return -self.hess_x_f1(z, x)

    def hess_z_f1(self, z, x):
        xx = np.outer(x, x)
        return self._d2(z, x)[..., None, None] * xx

    def hess_z_f2(self, z, x):
        return -self.hess_z_f1(z, x)

    def max_hess_z_f1(self, grid: Grid) -> float:
        # sigma'' is bounded by 1/(6 sqrt 3); scales with |x|^2, report per unit |x|
        return 0.5 / (6 * np.sqrt(3))

    def lower_bound_x_grad(self, grid: Grid, x_box: float = 50.0):
        # |x . grad_x f_i| <= |x.z| sigma'(x.z) / 2 <= 0.224 / 2
        return 0.1120, 0.1120


class ZeroCost:
    """Cost family that vanishes identically; used for pure relaxation."""

    def __init__(self, dim: int = 1):
        self.dim = dim

    def __repr__(self):
        return f"ZeroCost(dim={self.dim})"

    def _zeros(self, z, *trail):
        return np.zeros(z.shape[:-1] + trail)

    def f1(self, z, x):
        return self._zeros(z)

    f2 = f1

    def grad_x_f1(self, z, x):
        return self._zeros(z, self.dim)

    grad_x_f2 = grad_z_f1 = grad_z_f2 = grad_x_f1

    def hess_x_f1(self, z, x):
        return self._zeros(z, self.dim, self.dim)

    hess_x_f2 = hess_z_f1 = hess_z_f2 = hess_x_f1

    def max_hess_z_f1(self, grid):
        return 0.0

    def lower_bound_x_grad(self, grid, x_box=50.0):
        return 0.0, 0.0


@dataclass(frozen=True)
class InteractionKernel:
    """Radial interaction potential ``W``.

    kind ``"none"`` evaluates to zero, ``"quadratic"`` is ``weight |z|^2 / 2``
    and ``"consensus"`` is ``weight / (1 + |z|)``.
    """

    kind: str = "none"
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "quadratic", "consensus"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def __call__(self, z):
        """Evaluate at displacements ``z`` of shape ``(..., d)``."""
        z = np.asarray(z, dtype=float)
        r2 = np.sum(z**2, axis=-1)
        if self.kind == "none":
            return np.zeros_like(r2)
        if self.kind == "quadratic":
            return 0.5 * self.weight * r2
        return self.weight / (1.0 + np.sqrt(r2))

    @property
    def is_zero(self) -> bool:
        return self.kind == "none" or self.weight == 0.0

    def table(self, grid: Grid) -> np.ndarray:
        """Kernel at all cell-centre offsets, indexed by ``i - j + n - 1``."""
        offs = [np.arange(-(k - 1), k) * h for k, h in zip(grid.n, grid.widths)]
        if grid.dim == 1:
            return self(offs[0][:, None])
        d = np.stack(np.meshgrid(*offs, indexing="ij"), axis=-1)
        return self(d)


def convolve(kernel: InteractionKernel, rho: Density, table: Optional[np.ndarray] = None) -> np.ndarray:
    """``(W * rho)(z_i) = sum_j W(z_i - z_j) rho_j dV`` by direct summation."""
    g = rho.grid
    if kernel.is_zero:
        return np.zeros(g.shape)
    if table is None:
        table = kernel.table(g)
    if g.dim == 1:
        return kernels.convolve_1d(rho.values, table, g.cell_volume)
    return kernels.convolve_2d(rho.values, table, g.cell_volume)


@dataclass(frozen=True)
class ReferenceDistribution:
    """Diagonal Gaussian reference measure."""

    mean: tuple[float, ...]
    var: tuple[float, ...]

    def __post_init__(self):
        mean = tuple(float(v) for v in np.atleast_1d(self.mean))
        var = tuple(float(v) for v in np.atleast_1d(self.var))
        if len(mean) != len(var):
            raise ValueError("mean and variance must have the same length")
        if any(v <= 0 for v in var):
            raise ValueError("reference variance must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def log_concavity(self) -> float:
        """Largest ``lam`` with ``Hess log rho_ref <= -lam Id``."""
        return 1.0 / max(self.var)

    def logpdf(self, points):
        return gaussian_logpdf(points, self.mean, self.var)

    def on_grid(self, grid: Grid) -> Density:
        return discretize_log(self.logpdf(grid.points), grid)


def kl(rho: Density, ref: Density, floor: float = MASS_FLOOR) -> float:
    """Relative entropy ``sum rho log(rho / ref) dV``; ``inf`` on support violation."""
    rho._check_partner(ref)
    r, q = rho.values, ref.values
    pos = r > 0
    if np.any(q[pos] <= 0):
        return float("inf")
    return _kl_from_log(rho, np.log(np.where(pos, q, 1.0)), floor)


def _kl_from_log(rho: Density, log_ref: np.ndarray, floor: float = MASS_FLOOR) -> float:
    r = rho.values
    terms = np.where(r > 0, r * (np.log(np.maximum(r, floor)) - log_ref), 0.0)
    return float(np.sum(terms) * rho.grid.cell_volume)


@dataclass(frozen=True, eq=False)
class EnergyModel:
    """Everything needed to evaluate the aligned and competitive energies.

    Parameters
    ----------
    grid : Grid
    cost : LogisticCost, LogisticCost2D or ZeroCost
    kernel : InteractionKernel
    reference : ReferenceDistribution
        Gaussian reference; its log is used analytically (normalized on the grid).
    static : Density
        The non-strategic population.
    alpha, beta : float
        Weights of the relative entropy and of the anchor penalty.
    x0 : array_like
        Anchor of the classifier parameters.
    """

    grid: Grid
    cost: object
    kernel: InteractionKernel
    reference: ReferenceDistribution
    static: Density
    alpha: float
    beta: float
    x0: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.alpha > 0 or not self.beta > 0:
            raise ValueError("alpha and beta must be positive")
        if self.static.grid != self.grid:
            raise ValueError("static population must live on the model grid")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float)).copy()
        if x0.shape != (self.cost.dim,):
            raise ValueError(f"x0 must have {self.cost.dim} entries")
        if len(self.reference.mean) != self.grid.dim or self.cost.dim != self.grid.dim:
            raise ValueError("reference, cost and grid dimensions disagree")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)

    def replace(self, **changes) -> "EnergyModel":
        fields = dict(grid=self.grid, cost=self.cost, kernel=self.kernel, reference=self.reference,
                      static=self.static, alpha=self.alpha, beta=self.beta, x0=self.x0)
        fields.update(changes)
        return EnergyModel(**fields)

    @property
    def log_reference(self) -> np.ndarray:
        """Analytic log of the reference, normalized to unit mass on the grid."""
        if "log_ref" not in self._cache:
            lp = self.reference.logpdf(self.grid.points)
            m = np.max(lp)
            lp = lp - (m + np.log(np.sum(np.exp(lp - m)) * self.grid.cell_volume))
            lp.setflags(write=False)
            self._cache["log_ref"] = lp
        return self._cache["log_ref"]

    @property
    def reference_density(self) -> Density:
        if "ref" not in self._cache:
            self._cache["ref"] = Density(self.grid, np.exp(self.log_reference), normalize=True)
        return self._cache["ref"]

    @property
    def kernel_table(self):
        if "table" not in self._cache:
            self._cache["table"] = None if self.kernel.is_zero else self.kernel.table(self.grid)
        return self._cache["table"]

    @property
    def points(self) -> np.ndarray:
        if "points" not in self._cache:
            self._cache["points"] = self.grid.points
        return self._cache["points"]

    @property
    def log_concavity(self) -> float:
        return self.reference.log_concavity

    @property
    def x_grad_bounds(self) -> tuple[float, float]:
        """Constants ``a_i`` with ``x . grad_x f_i >= -a_i`` on the grid box."""
        if "a" not in self._cache:
            self._cache["a"] = self.cost.lower_bound_x_grad(self.grid)
        return self._cache["a"]

    def convolve(self, rho: Density) -> np.ndarray:
        return convolve(self.kernel, rho, self.kernel_table)

    def relative_entropy(self, rho: Density) -> float:
        return _kl_from_log(rho, self.log_reference)

    def interaction(self, rho: Density) -> float:
        if self.kernel.is_zero:
            return 0.0
        return 0.5 * self.grid.integrate(rho.values * self.convolve(rho))

    def classifier_loss(self, rho: Density, x, static: Optional[Density] = None) -> float:
        """``int f1 drho + int f2 dstatic + beta/2 |x - x0|^2``."""
        x = as_params(x)
        static = self.static if static is None else static
        z = self.points
        return (self.grid.integrate(self.cost.f1(z, x) * rho.values)
                + self.grid.integrate(self.cost.f2(z, x) * static.values)
                + 0.5 * self.beta * float(np.sum((x - self.x0) ** 2)))

    def grad_x(self, rho: Density, x, static: Optional[Density] = None) -> np.ndarray:
        x = as_params(x)
        static = self.static if static is None else static
        z = self.points
        dv = self.grid.cell_volume
        g1 = np.tensordot(rho.values, self.cost.grad_x_f1(z, x), axes=rho.values.ndim) * dv
        g2 = np.tensordot(static.values, self.cost.grad_x_f2(z, x), axes=rho.values.ndim) * dv
        return g1 + g2 + self.beta * (x - self.x0)

    def hess_x(self, rho: Density, x, static: Optional[Density] = None) -> np.ndarray:
        """Newton matrix ``beta Id + int hess_x f1 drho + int hess_x f2 dstatic``."""
        x = as_params(x)
        static = self.static if static is None else static
        z = self.points
        dv = self.grid.cell_volume
        h1 = np.tensordot(rho.values, self.cost.hess_x_f1(z, x), axes=rho.values.ndim) * dv
        h2 = np.tensordot(static.values, self.cost.hess_x_f2(z, x), axes=rho.values.ndim) * dv
        return self.beta * np.eye(x.size) + h1 + h2


def as_params(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def energy_aligned(rho: Density, x, model: EnergyModel) -> float:
    """Joint energy minimized along the aligned dynamics."""
    return (model.classifier_loss(rho, x)
            + model.alpha * model.relative_entropy(rho)
            + model.interaction(rho))


def energy_competitive(rho: Density, x, model: EnergyModel) -> float:
    """Saddle energy: minimized over ``x``, maximized over ``rho``."""
    return (model.classifier_loss(rho, x)
            - model.alpha * model.relative_entropy(rho)
            - model.interaction(rho))


def first_variation_rho(rho: Density, x, model: EnergyModel, regime: str = ALIGNED) -> np.ndarray:
    """First variation of the aligned or competitive energy in ``rho``, per cell.

    Aligned: ``f1 + alpha log(rho/ref) + W*rho``.  Competitive:
    ``f1 - alpha log(rho/ref) - W*rho``.  Additive constants are dropped.
    """
    x = as_params(x)
    f1 = model.cost.f1(model.points, x)
    rest = model.alpha * (rho.log() - model.log_reference)
    if not model.kernel.is_zero:
        rest = rest + model.convolve(rho)
    if regime == ALIGNED:
        return f1 + rest
    if regime == COMPETITIVE:
        return f1 - rest
    raise ValueError(f"unknown regime {regime!r}")


def grad_x_energy(rho: Density, x, model: EnergyModel) -> np.ndarray:
    """``int grad_x f1 drho + int grad_x f2 dstatic + beta (x - x0)``."""
    return model.grad_x(rho, x)
