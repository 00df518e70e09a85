import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vortexsheet.euler_core import GasModel
from vortexsheet.geometry import HalfSpaceGrid
from vortexsheet.linearized import Background
from vortexsheet.stability import reference_sheet

settings.register_profile("pkg", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")

ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str):
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def sheet():
    return reference_sheet()


@pytest.fixture(scope="session")
def gas():
    return GasModel(1.0, 2.0)


def curved_background(sheet, grid: HalfSpaceGrid, eps: float = 0.05) -> Background:
    """
    Planar states with curved fronts Psi = +-y + eps sin(2 pi z/Z) x e^{-y}
    and v chosen so the discrete eikonal identity holds exactly.
    """
    X, Y, Zc = grid.mesh()
    bump = eps * np.sin(2 * np.pi * Zc / grid.Z) * X * np.exp(-Y)
    Psi = np.stack([Y + bump, -Y + bump])
    U = np.empty((2, 4) + grid.shape)
    for s, (u, w) in enumerate(((sheet.u_r, sheet.w_r), (sheet.u_l, sheet.w_l))):
        U[s, 0], U[s, 2], U[s, 3] = u, w, sheet.p_bar
    U[:, 0] += 0.05 * np.cos(2 * np.pi * Zc / grid.Z) * np.exp(-Y)
    U[:, 1] = grid.dx(Psi) * U[:, 0] + grid.dz(Psi) * U[:, 2]
    return Background(U, Psi, grid, sheet.gas)


@pytest.fixture
def small_grid():
    return HalfSpaceGrid(X=0.5, Nx=16, Ymax=1.0, Ny=9, Z=1.0, Nz=8)
