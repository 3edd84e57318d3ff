import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rdrot import GroupPartition, validate_problem, normalize_cost
from rdrot.oracle import affine_project
from rdrot.regularizers import Forbidden, GroupLasso, Hypentropic, Quadratic, WeightedL1, Zero

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_problem(rng, m, n, zero_mass=False):
    C = rng.random((m, n))
    p = rng.random(m) + 0.1
    q = rng.random(n) + 0.1
    if zero_mass and m > 1:
        p[0] = 0.0
    return normalize_cost(validate_problem(C, p / p.sum(), q / q.sum()))


def all_regularizers(rng, m, n):
    """One instance of every penalty, sized for an m x n plan."""
    labels = np.arange(m) % 2
    return [
        Zero(),
        Quadratic(0.3),
        GroupLasso(0.05, GroupPartition.class_blocks(labels, n)),
        WeightedL1(0.2 * rng.random((m, n))),
        Forbidden(rng.random((m, n)) < 0.2),
        Hypentropic(0.5),
    ]


def reference_dr(problem, reg, rho, Y0, iters):
    """Textbook DR with the exact affine projection; returns the Y iterates."""
    C = problem.cost
    Y = Y0.copy()
    out = []
    for _ in range(iters):
        x = reg.prox(np.maximum(Y - rho * C, 0.0), rho)
        z = affine_project(2 * x - Y, problem.p, problem.q)
        Y = Y + z - x
        out.append(Y.copy())
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
