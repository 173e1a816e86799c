import numpy as np
import pytest
from hypothesis import settings

from spls.mesh import unit_cube_mesh, unit_square_mesh
from spls.problems import CoefficientField, ProblemSpec

settings.register_profile("spls", max_examples=40, deadline=None)
settings.load_profile("spls")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def laplace_problem(mesh_fn, coef=None, f=None, dim=2):
    """Synthetic problem with no exact solution, for assembly/solver plumbing."""
    if coef is None:
        coef = CoefficientField.constant(1.0, tags=(1, 2, 3, 4))
    if f is None:
        def f(x, tags):
            return np.ones(len(x))
    return ProblemSpec("synthetic", dim, coef, f, mesh_fn)


@pytest.fixture
def square4():
    return unit_square_mesh(4, "none")


@pytest.fixture
def cross4():
    return unit_square_mesh(4, "cross-at-half")


@pytest.fixture
def cube2():
    return unit_cube_mesh(2)


# -- acceptance reporting ---------------------------------------------------------------

def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance_log(request):
    """Append ``CRITERION k: PASS|FAIL ...`` lines; they are printed at the end of the run."""
    return request.config.acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
