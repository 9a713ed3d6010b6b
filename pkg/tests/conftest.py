import numpy as np
import pytest

from bmlab.spectral_core import GridSpec, PhysicalField, fft_array, ifft_array, leray_array

_ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    """Print and remember one acceptance verdict line."""
    line = f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
    print(line)
    _ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def random_field(grid, rng, comps=1, sigma=None, truncate=True, zero_mean=True, div_free=False):
    """Smooth random field; ``truncate`` applies the 2/3 rule."""
    sigma = grid.k_nyquist / 3 if sigma is None else sigma
    c = fft_array(rng.standard_normal((comps,) + grid.shape), grid) * np.exp(-grid.ksq() / (2 * sigma ** 2))
    if truncate:
        c = c * grid.dealias_mask()
    if zero_mean:
        c[(slice(None),) + (0,) * grid.n] = 0
    if div_free:
        c = leray_array(c, grid)
    v = ifft_array(c, grid)
    return PhysicalField(grid, v / np.abs(v).max())


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def grid2():
    return GridSpec(2, 32)


@pytest.fixture(scope="session")
def grid3():
    return GridSpec(3, 16)
