"""Pure numpy versions of the compiled recursions (same signatures)."""
import numpy as np
import scipy.sparse


def _csr(w_indptr, w_indices, w_data, N):
    return scipy.sparse.csr_matrix((w_data, w_indices, w_indptr), shape=(N, N))


def _node_basis(u, knots, order):
    """Row i is the basis of node i (own knots) at u[i]."""
    phi = np.empty((u.size, order + knots.shape[1]))
    phi[:, 0] = 1.0
    for p in range(1, order):
        phi[:, p] = phi[:, p - 1] * u
    hinge = u[:, None] - knots
    if order == 1:
        phi[:, order:] = hinge > 0
    else:
        phi[:, order:] = np.maximum(hinge, 0.0) ** (order - 1)
    return phi


def network_recursion(A, B, w_indptr, w_indices, w_data, X, start):
    with np.errstate(over="ignore", invalid="ignore"):
        return _network_recursion(A, B, w_indptr, w_indices, w_data, X, start)


def _network_recursion(A, B, w_indptr, w_indices, w_data, X, start):
    q = A.shape[0]
    N, L = X.shape
    W = _csr(w_indptr, w_indices, w_data, N)
    WX = np.zeros_like(X)
    WX[:, :start] = W @ X[:, :start]
    for t in range(start, L):
        v = X[:, t].copy()
        for j in range(q):
            v += A[j, :, t] * X[:, t - j - 1] + B[j, :, t] * WX[:, t - j - 1]
        X[:, t] = v
        if not np.all(np.isfinite(v)):
            return t
        WX[:, t] = W @ v
    return -1


def spline_recursion(coef_a, coef_b, knots, order, d, w_indptr, w_indices, w_data, X, U, start):
    with np.errstate(over="ignore", invalid="ignore"):
        return _spline_recursion(coef_a, coef_b, knots, order, d, w_indptr, w_indices, w_data, X, U, start)


def _spline_recursion(coef_a, coef_b, knots, order, d, w_indptr, w_indices, w_data, X, U, start):
    q = coef_a.shape[0]
    N, L = X.shape
    W = _csr(w_indptr, w_indices, w_data, N)
    WX = np.zeros_like(X)
    WX[:, :start] = W @ X[:, :start]
    for t in range(start, L):
        u = X[:, t - d]
        U[:, t] = u
        phi = _node_basis(u, knots, order)
        v = X[:, t].copy()
        for j in range(q):
            ca = np.einsum("ip,ip->i", coef_a[j], phi)
            cb = np.einsum("ip,ip->i", coef_b[j], phi)
            v += ca * X[:, t - j - 1] + cb * WX[:, t - j - 1]
        X[:, t] = v
        if not np.all(np.isfinite(v)):
            return t
        WX[:, t] = W @ v
    return -1
