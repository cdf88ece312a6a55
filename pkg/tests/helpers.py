"""Synthetic designs with exactly known algebra."""
import numpy as np

from fcnar.design import NodeDesign
from fcnar.model import Exogenous, FcnarSpec
from fcnar.simulate import banded_weight_matrix


def synthetic_spec(N=1, q1=1, q2=1, order=2, n_knots=1):
    W = [[1.0]] if N == 1 else banded_weight_matrix(N, 1)
    return FcnarSpec(N=N, q1=q1, q2=q2, threshold=Exogenous(), W=W, order=order,
                     n_knots=n_knots, knots=[np.linspace(-1, 1, n_knots)] * N)


def synthetic_design(Z, y, node=0, excluded=None):
    Z = np.asarray(Z, dtype=float)
    excluded = np.zeros(Z.shape[1], bool) if excluded is None else np.asarray(excluded, bool)
    return NodeDesign(node, Z, np.asarray(y, dtype=float), np.arange(1, Z.shape[0] + 1), excluded)


def orthogonal_rows(rng, T, P, scale=None):
    """T x P design with Z'Z = diag(scale) * T (identity scale by default)."""
    Q, _ = np.linalg.qr(rng.normal(size=(T, P)))
    scale = np.ones(P) if scale is None else np.asarray(scale, dtype=float)
    return Q * np.sqrt(T * scale)
