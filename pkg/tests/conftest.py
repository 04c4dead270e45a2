import numpy as np
import pytest

from devrate.decompose import DecompositionContext
from devrate.grid import Mesh, assemble_generator
from devrate.model import builtin_model, langevin, nonreversible_rotational, ornstein_uhlenbeck


def x_of(X):
    return X[:, 0]


@pytest.fixture(scope="session")
def ou():
    return ornstein_uhlenbeck(1.0, 1)


@pytest.fixture(scope="session")
def ou_mesh():
    return Mesh.box(-8, 8, 401, 1)


@pytest.fixture(scope="session")
def ou_gen(ou, ou_mesh):
    return assemble_generator(ou, ou_mesh)


@pytest.fixture(scope="session")
def ou_ctx(ou, ou_mesh):
    return DecompositionContext.build(ou, ou_mesh)


@pytest.fixture(scope="session")
def langevin_mesh():
    return Mesh.box(-8, 8, 161, 2)


@pytest.fixture(scope="session")
def langevin_ctx(langevin_mesh):
    return DecompositionContext.build(langevin(None, 1.0, 1), langevin_mesh)


@pytest.fixture(scope="session")
def rot_ctx():
    return DecompositionContext.build(nonreversible_rotational(1.0, 1.0), Mesh.box(-6, 6, 121, 2))


BUILTIN_CASES = [
    ("ou", {}, Mesh.box(-8, 8, 201, 1)),
    ("quartic", {}, Mesh.box(-4, 4, 201, 1)),
    ("power_law", {"q": 3.0}, Mesh.box(-6, 6, 201, 1)),
    ("rotational", {}, Mesh.box(-6, 6, 61, 2)),
    ("langevin", {"gamma": 1.0}, Mesh.box(-6, 6, 61, 2)),
]


@pytest.fixture(scope="session", params=BUILTIN_CASES, ids=[c[0] for c in BUILTIN_CASES])
def builtin_gen(request):
    name, params, mesh = request.param
    return assemble_generator(builtin_model(name, **params), mesh)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.summary_line(k))
