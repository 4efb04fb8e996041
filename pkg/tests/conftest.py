import numpy as np
import pytest

from metastat.boundary import EmissionProfile
from metastat.growth import GrowthParams
from metastat.renewal import build_lattice


def rk4_reference(x0, th0, t_end, params, n_steps):
    """Classical fixed-step RK4 for the growth field, written out independently of the library."""
    a, c, d = params.a, params.c, params.d

    def g(y):
        x, th = y
        return np.array([a * x * np.log(th / x), c * x - d * th * x ** (2.0 / 3.0)])

    y = np.array([x0, th0], dtype=float)
    if t_end == 0:
        return y
    h = t_end / n_steps
    for _ in range(n_steps):
        k1 = g(y)
        k2 = g(y + 0.5 * h * k1)
        k3 = g(y + 0.5 * h * k2)
        k4 = g(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


@pytest.fixture(scope="session")
def params():
    return GrowthParams()


@pytest.fixture(scope="session")
def lattice(params):
    """Biological birth rate on a moderate lattice (default tau_max)."""
    return build_lattice(params, EmissionProfile.hat(params.b), I=128, J=32)


@pytest.fixture(scope="session")
def const_lattice(params):
    """Constant birth rate 0.7 (alpha = 0)."""
    return build_lattice(params, I=128, J=32, m=0.7, alpha=0.0, tau_max=20.0)


@pytest.fixture(scope="session")
def spectral(lattice):
    from metastat.spectral import solve_spectral
    return solve_spectral(lattice)


@pytest.fixture(scope="session")
def const_spectral(const_lattice):
    from metastat.spectral import solve_spectral
    return solve_spectral(const_lattice)


def gaussian(cx=1.8, cth=1.5, w=0.15):
    return lambda x, th: np.exp(-((x - cx) ** 2 + (th - cth) ** 2) / (2 * w * w))


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record ``(number, passed, detail)`` for the acceptance summary printed at the end of the run."""
    table = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        table[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_ACCEPTANCE, {})
    if table:
        terminalreporter.section("acceptance criteria")
        for number in sorted(table):
            terminalreporter.write_line(table[number])
