import numpy as np
import pytest

from lcfshape.config import benchmark_config, merged, parse_material, parse_problem
from lcfshape.material import MaterialParams
from lcfshape.shapeopt import CostSpec, evaluate_cost


def steel(**kw):
    """E = 200000, nu = 0.3 with the reference cyclic constants."""
    base = dict(K=1000.0, n_prime=0.1, sigma_f=2000.0, eps_f=0.5, b=-0.1, c=-0.6)
    base.update(kw)
    return MaterialParams.from_engineering(200000.0, 0.3, **base)


@pytest.fixture(scope="session")
def params():
    return steel()


@pytest.fixture(scope="session")
def bench_cfg():
    return benchmark_config()


@pytest.fixture(scope="session")
def bench_problem():
    cfg = merged(benchmark_config())
    problem, basis, alpha = parse_problem(cfg)
    return problem, basis, alpha


@pytest.fixture(scope="session")
def bench_eval(bench_problem):
    problem, _, alpha = bench_problem
    return evaluate_cost(alpha, CostSpec(), problem)


@pytest.fixture(scope="session")
def bench_material():
    return parse_material(benchmark_config())


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
