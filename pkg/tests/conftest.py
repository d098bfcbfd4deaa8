import numpy as np
import pytest

from carleman_lab.grids import Grid1D, TimeGrid
from carleman_lab.model import CouplingMatrix, PotentialSet, SourcePair


def fit_order(spacings, errors) -> float:
    """Least-squares slope of log error against log spacing."""
    return float(np.polyfit(np.log(spacings), np.log(errors), 1)[0])


def pairwise_orders(spacings, errors):
    spacings = np.asarray(spacings, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return np.log(errors[:-1] / errors[1:]) / np.log(spacings[:-1] / spacings[1:])


@pytest.fixture
def grid() -> Grid1D:
    return Grid1D(1.0, 63)


@pytest.fixture
def tgrid() -> TimeGrid:
    return TimeGrid(1.0, 64)


def default_coupling(grid: Grid1D) -> CouplingMatrix:
    return CouplingMatrix(grid, 2.0, 1.0, 1.0, 2.0)


def default_potentials(grid: Grid1D, a=None) -> PotentialSet:
    # a and c vanish on the boundary so the constant-in-time Dirichlet data
    # is first-order compatible with the initial slice (no corner layer)
    x = grid.nodes
    if a is None:
        a = 0.5 * np.sin(np.pi * x)
    return PotentialSet(
        grid,
        a=a,
        b=0.2 * np.cos(np.pi * x),
        c=0.1 * np.sin(np.pi * x),
        d=np.full_like(x, 0.15),
        y10=1.0 + 0.5 * np.sin(np.pi * x),
        y20=0.5 * np.sin(np.pi * x),
    )


def zero_sources(grid: Grid1D, tgrid: TimeGrid) -> SourcePair:
    return SourcePair.zero(grid, tgrid)
