import numpy as np
import pytest

from fcnar.model import CoefficientSet, Exogenous, FcnarSpec, Lagged
from fcnar.simulate import SimConfig, banded_weight_matrix, simulate
from fcnar.splinebasis import CoefficientFunction, SplineBasis


def spline_coeffs(N, q1, q2, basis, rng, scale=0.15):
    """Random spline coefficient functions small enough for a stable recursion."""
    def one():
        c = rng.uniform(-scale, scale, basis.dimension)
        return CoefficientFunction(basis, c)
    return CoefficientSet([[one() for _ in range(q1)] for _ in range(N)],
                          [[one() for _ in range(q2)] for _ in range(N)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def exo_spline_panel(rng):
    """Exogenous-threshold FCNAR(1,1) with known spline coefficients, N=4."""
    basis = SplineBasis(2, [0.0])
    spec = FcnarSpec(N=4, q1=1, q2=1, threshold=Exogenous(), W=banded_weight_matrix(4, 1),
                     order=2, n_knots=1, knots=[[0.0]] * 4)
    coeffs = spline_coeffs(4, 1, 1, basis, rng)
    cfg = SimConfig(spec=spec, coeffs=coeffs, T=300, seed=7, allow_unstable=True)
    return cfg, simulate(cfg)


@pytest.fixture
def lagged_panel():
    spec = FcnarSpec(N=5, q1=2, q2=1, threshold=Lagged(2), W=banded_weight_matrix(5, 2),
                     order=3, n_knots=2)
    a = [lambda u: 0.2 + 0.1 * np.tanh(u), lambda u: 0.1 * np.ones_like(u)]
    b = [lambda u: 0.3 - 0.1 * np.tanh(u)]
    cfg = SimConfig(spec=spec, coeffs=CoefficientSet.homogeneous(5, a, b), T=400, seed=3,
                    u_range=(-10, 10))
    return cfg, simulate(cfg)
