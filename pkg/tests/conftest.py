import numpy as np
import pytest

from fractal_energy import get_fractal, make_dirichlet, make_p_edge, make_perturbed, quadratic_eigen


@pytest.fixture(scope="session")
def gasket():
    return get_fractal("gasket")


@pytest.fixture(scope="session")
def interval():
    return get_fractal("interval")


@pytest.fixture(scope="session")
def vicsek():
    return get_fractal("vicsek")


@pytest.fixture(scope="session")
def gasket_form(gasket):
    return quadratic_eigen(gasket, make_dirichlet(size=3)).form


@pytest.fixture(scope="session")
def interval_form(interval):
    return quadratic_eigen(interval, make_dirichlet(size=2)).form


@pytest.fixture(scope="session")
def vicsek_form(vicsek):
    return quadratic_eigen(vicsek, make_dirichlet(size=4)).form


@pytest.fixture(scope="session")
def quartic(gasket):
    return make_p_edge(None, 4, 3)


@pytest.fixture(scope="session")
def perturbed(gasket_form):
    return make_perturbed(gasket_form, make_p_edge(None, 4, 3, name="bump"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
