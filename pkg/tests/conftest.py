import numpy as np
import pytest

from driftflow.config import bundled, load_config
from driftflow.grid import Grid, gaussian_density
from driftflow.model import EnergyModel, InteractionKernel, LogisticCost, ReferenceDistribution, ZeroCost


@pytest.fixture(scope="session")
def competitive_cfg():
    return load_config(bundled("competitive_1d"))


@pytest.fixture(scope="session")
def competitive_model(competitive_cfg):
    return competitive_cfg.model()


@pytest.fixture(scope="session")
def rho0(competitive_cfg, competitive_model):
    return competitive_cfg.initial_density(competitive_model.grid)


@pytest.fixture
def consensus_model():
    g = Grid.uniform(-4.0, 6.0, 100)
    return EnergyModel(g, LogisticCost(3.0), InteractionKernel("consensus", 0.05),
                       ReferenceDistribution((0.0,), (0.0625,)), gaussian_density(g, 1.0, 0.0625),
                       alpha=0.1, beta=1.0, x0=np.array([1.5]))


def zero_model(grid, alpha=0.1, beta=1.0, mean=0.0, var=1.0):
    """Costs and interaction switched off, Gaussian reference."""
    return EnergyModel(grid, ZeroCost(grid.dim), InteractionKernel(),
                       ReferenceDistribution((mean,) * grid.dim, (var,) * grid.dim),
                       gaussian_density(grid, [mean] * grid.dim, [var] * grid.dim),
                       alpha=alpha, beta=beta, x0=np.zeros(grid.dim))


def random_density(grid, rng, smooth=True):
    """Strictly positive random density, optionally a perturbed Gaussian."""
    if smooth:
        base = gaussian_density(grid, rng.uniform(-0.5, 1.5), rng.uniform(0.1, 0.5)).values
        vals = base * np.exp(0.3 * rng.standard_normal(grid.shape)) + 1e-6
    else:
        vals = rng.random(grid.shape) + 0.01
    from driftflow.grid import Density
    return Density(grid, vals, normalize=True)
