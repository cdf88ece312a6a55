import numpy as np
import pytest

from fcnar import _kernels
from fcnar._kernels import _fallback
from fcnar.simulate import _csr_arrays, banded_weight_matrix

compiled = pytest.importorskip("fcnar._kernels._core")


def csr(N, bw):
    return _csr_arrays(banded_weight_matrix(N, bw).W)


def test_backend_reported():
    assert _kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("q", [1, 3])
def test_network_recursion_agrees(q, rng):
    N, L, s = 12, 200, q
    A = np.ascontiguousarray(rng.uniform(-0.2, 0.2, (q, N, L)))
    B = np.ascontiguousarray(rng.uniform(-0.2, 0.2, (q, N, L)))
    X0 = rng.normal(size=(N, L))
    X1, X2 = X0.copy(), X0.copy()
    r1 = compiled.network_recursion(A, B, *csr(N, 2), X1, s)
    r2 = _fallback.network_recursion(A, B, *csr(N, 2), X2, s)
    assert r1 == r2 == -1
    np.testing.assert_allclose(X1, X2, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("order,K,d", [(1, 3, 1), (2, 0, 1), (4, 5, 2)])
def test_spline_recursion_agrees(order, K, d, rng):
    N, L, q = 9, 150, 2
    s = max(q, d)
    P = order + K
    ca = np.ascontiguousarray(rng.uniform(-0.05, 0.05, (q, N, P)))
    cb = np.ascontiguousarray(rng.uniform(-0.05, 0.05, (q, N, P)))
    knots = np.ascontiguousarray(np.sort(rng.uniform(-1, 1, (N, K)), axis=1))
    X0 = rng.normal(size=(N, L))
    X1, X2 = X0.copy(), X0.copy()
    U1, U2 = np.full((N, L), np.nan), np.full((N, L), np.nan)
    r1 = compiled.spline_recursion(ca, cb, knots, order, d, *csr(N, 1), X1, U1, s)
    r2 = _fallback.spline_recursion(ca, cb, knots, order, d, *csr(N, 1), X2, U2, s)
    # an explosive draw is fine as long as both stop at the same step
    assert r1 == r2
    stop = L if r1 < 0 else r1
    np.testing.assert_allclose(X1[:, :stop], X2[:, :stop], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(U1[:, s:stop], U2[:, s:stop], rtol=1e-12, atol=1e-12)


def test_non_finite_step_reported(rng):
    N, L = 3, 40
    A = np.full((1, N, L), 1e200)
    B = np.zeros((1, N, L))
    X1 = rng.normal(size=(N, L))
    X2 = X1.copy()
    r1 = compiled.network_recursion(A, B, *csr(N, 1), X1, 1)
    r2 = _fallback.network_recursion(A, B, *csr(N, 1), X2, 1)
    assert r1 == r2 and r1 > 0
