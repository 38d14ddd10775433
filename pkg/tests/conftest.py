import numpy as np
import pytest

from bpre.env import EnvironmentPath, EnvironmentProcess, explicit, geometric, sample_path

# linear-fractional oracle for geometric(0.6) offspring: m = 1.5, q = 2/3
GEO_P = 0.6
GEO_Q = 2 / 3
GEO_A = 1 - GEO_Q


def geo_psi(t):
    return GEO_Q + GEO_A**2 / (GEO_A - 1j * np.asarray(t, dtype=float))


def geo_density(x):
    return GEO_A**2 * np.exp(-GEO_A * np.asarray(x, dtype=float))


@pytest.fixture(scope="session")
def geo_path():
    return EnvironmentPath.constant(geometric(GEO_P), 200)


@pytest.fixture(scope="session")
def doubling_path():
    return EnvironmentPath.constant(explicit({2: 1.0}), 200)


@pytest.fixture(scope="session")
def gw_path():
    return EnvironmentPath.constant(explicit({0: 0.25, 2: 0.75}), 200)


@pytest.fixture(scope="session")
def iid_proc():
    return EnvironmentProcess("iid", (explicit({2: 1.0}), explicit({0: 0.25, 2: 0.75})), weights=[0.5, 0.5])


@pytest.fixture(scope="session")
def iid_path(iid_proc):
    return sample_path(iid_proc, 400, 2024)


@pytest.fixture(scope="session")
def markov_proc():
    return EnvironmentProcess("markov", (explicit({0: 0.25, 2: 0.75}), explicit({1: 0.5, 3: 0.5})),
                              transition=[[0.7, 0.3], [0.4, 0.6]])


# acceptance results, printed as one line per criterion at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
