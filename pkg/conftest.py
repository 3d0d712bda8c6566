"""Shared fixtures; living at the repository root also puts the flat modules on sys.path"""

import numpy as np
import pytest

from multiplier_eq import Splitting
from objective import ObjectiveFunction, make_log_sum_exp, make_nonconvex_pl, make_quadratic


@pytest.fixture
def half_square() -> ObjectiveFunction:
    """f(x) = x^2 / 2 in one dimension: L = mu = 1, f* = 0"""
    return make_quadratic(1, seed=None, eigenvalues=np.array([1.0]), b=np.array([0.0])).objective()


@pytest.fixture
def small_quadratic():
    return make_quadratic(20, seed=1)


@pytest.fixture
def small_nonconvex():
    return make_nonconvex_pl(10, seed=2)


@pytest.fixture
def small_lse():
    return make_log_sum_exp(10, 40, rho=20.0, seed=3)


@pytest.fixture
def quartic_splitting() -> Splitting:
    """V(x) = x^2/2 + x^4/4 split as Q = [1], E = x^4/4"""
    return Splitting(
        Q=np.array([[1.0]]),
        D=np.array([[1.0]]),
        E_value=lambda x: float(0.25 * x[0] ** 4),
        E_gradient=lambda x: x ** 3,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def orthogonal_state():
    """
    Q = diag(1, 0), E(x) = <c, x> + ||x||^4 / 4 at x = (1, 1): grad E = (-1/2, 1/2)
    is orthogonal to grad V = (1/2, 1/2)
    """
    c = np.array([-2.5, -1.5])
    splitting = Splitting(
        Q=np.diag([1.0, 0.0]),
        D=np.eye(2),
        E_value=lambda x: float(c @ x + 0.25 * (x @ x) ** 2),
        E_gradient=lambda x: c + (x @ x) * x,
    )
    return splitting, np.array([1.0, 1.0])
