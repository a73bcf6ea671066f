import numpy as np
import pytest

from nsdamp.config import InitialCondition, build_ic
from nsdamp.spectral import Grid


@pytest.fixture(scope="session")
def grid2d():
    return Grid(2, 32)


@pytest.fixture(scope="session")
def grid3d():
    return Grid(3, 16)


def random_divfree(grid, seed=0, amplitude=1.0):
    """Seeded smooth random divergence-free field on `grid`."""
    ic = InitialCondition(
        kind="random_divfree",
        amplitude=amplitude,
        spectrum_slope=2.0,
        peak_wavenumber=grid.n / 6.0,
        seed=seed,
    )
    return build_ic(ic, grid)


def random_hermitian(grid, seed=0, ncomp=None):
    """Random Hermitian-symmetric coefficients (not divergence-free)."""
    from nsdamp.spectral import PhysicalField, forward_transform

    rng = np.random.default_rng(seed)
    ncomp = grid.dim if ncomp is None else ncomp
    vals = rng.standard_normal((ncomp,) + grid.shape)
    return forward_transform(PhysicalField(grid, vals))
