import numpy as np
import pytest

from magnetocontrol.manufactured import CONTROL, DOMAIN, manufactured_data, mu
from magnetocontrol.mesh import Box, Mesh, build_structured_cube

UNIT = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def reference_tet(**kw) -> Mesh:
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    return Mesh(verts, np.array([[0, 1, 2, 3]]), **kw)


@pytest.fixture
def unit_cube():
    return build_structured_cube(UNIT, 1, control=UNIT)


@pytest.fixture(scope="session")
def omega_mesh3():
    return build_structured_cube(DOMAIN, 3, control=CONTROL, mu=mu)


@pytest.fixture(scope="session")
def omega_mesh6():
    return build_structured_cube(DOMAIN, 6, control=CONTROL, mu=mu)


@pytest.fixture(scope="session")
def data():
    return manufactured_data()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ----------------------------------------------------------------------
# acceptance summary: one line per criterion in the terminal summary

ACCEPTANCE: dict = {}
N_CRITERIA = 7


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_collection_finish(session):
    import re
    picked = set()
    for item in session.items:
        m = re.search(r"test_criterion_(\d+)_", item.name)
        if m:
            picked.add(int(m.group(1)))
    session.config._acceptance_selected = picked


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    picked = getattr(config, "_acceptance_selected", set())
    if not picked:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        if k not in picked:
            tr.write_line(f"criterion {k}: SKIP  not selected")
            continue
        ok, detail = ACCEPTANCE.get(k, (False, "did not complete"))
        tr.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
