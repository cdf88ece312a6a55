import numpy as np
import pytest

from fcnar.design import (
    InsufficientSampleError,
    build_designs,
    build_node_design,
    design_rows,
    excluded_columns,
    prepare_spec,
    stack_designs,
    threshold_values,
)
from fcnar.model import Exogenous, FcnarSpec, Lagged
from fcnar.simulate import PanelSeries, banded_weight_matrix
from fcnar.splinebasis import CoefficientFunction, SplineBasis

SWAP = [[0.0, 1.0], [1.0, 0.0]]

# Hand-written N=2, T=6 panel with an exogenous threshold.
GOLDEN_X = np.array([[1.0, 2.0, -1.0, 0.5, 3.0, -2.0],
                     [0.0, 1.0, 1.0, -1.0, 2.0, 1.0]])
GOLDEN_U = np.array([[0.5, -1.0, 2.0, -0.5, 1.0, 0.25],
                     [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]])
# Node 0, q=1, M=2, K=1 with knot at 0: basis [1, u, (u)_+]; row t is
# [phi(U_0t) X_0,t-1, phi(U_0t) X_1,t-1], worked out by hand for t=1..5.
GOLDEN_Z0 = np.array([
    [1.0, -1.0, 0.0, 0.0, 0.0, 0.0],
    [2.0, 4.0, 4.0, 1.0, 2.0, 2.0],
    [-1.0, 0.5, 0.0, 1.0, -0.5, 0.0],
    [0.5, 0.5, 0.5, -1.0, -1.0, -1.0],
    [3.0, 0.75, 0.75, 2.0, 0.5, 0.5],
])


def golden_spec():
    return FcnarSpec(N=2, q1=1, q2=1, threshold=Exogenous(), W=SWAP, order=2, n_knots=1,
                     knots=[[0.0], [0.0]])


def test_golden_rows():
    data = PanelSeries(GOLDEN_X, GOLDEN_U)
    Z = design_rows(data, golden_spec(), 0, np.arange(1, 6))
    np.testing.assert_array_equal(Z, GOLDEN_Z0)


def test_golden_panel_too_short_for_estimation():
    # five rows cannot identify six coefficients plus a variance
    with pytest.raises(InsufficientSampleError):
        build_node_design(PanelSeries(GOLDEN_X, GOLDEN_U), golden_spec(), 0)


def test_plain_nar_layout(exo_spline_panel):
    _, data = exo_spline_panel
    spec = FcnarSpec(N=4, q1=1, q2=1, threshold=Exogenous(), W=banded_weight_matrix(4, 1),
                     order=1, n_knots=0)
    d = build_node_design(data, prepare_spec(data, spec), 2)
    t = d.t_index
    np.testing.assert_array_equal(d.rows[:, 0], data.X[2, t - 1])
    np.testing.assert_allclose(d.rows[:, 1], spec.W.W[2] @ data.X[:, t - 1], rtol=1e-15)
    np.testing.assert_array_equal(d.response, data.X[2, t])


def test_linear_basis_layout(exo_spline_panel):
    _, data = exo_spline_panel
    spec = FcnarSpec(N=4, q1=1, q2=1, threshold=Exogenous(), W=banded_weight_matrix(4, 1),
                     order=2, n_knots=0)
    d = build_node_design(data, prepare_spec(data, spec), 1)
    t = d.t_index
    x, u = data.X[1, t - 1], data.U[1, t]
    wx = spec.W.W[1] @ data.X[:, t - 1]
    np.testing.assert_allclose(d.rows, np.column_stack([x, u * x, wx, u * wx]), rtol=1e-15)


def test_padding_columns_flagged():
    spec = FcnarSpec(N=2, q1=2, q2=1, threshold=Exogenous(), W=SWAP, order=1, n_knots=0)
    np.testing.assert_array_equal(excluded_columns(spec), [False, False, False, True])
    rng = np.random.default_rng(0)
    data = PanelSeries(rng.normal(size=(2, 20)), rng.normal(size=(2, 20)))
    d = build_node_design(data, prepare_spec(data, spec), 0)
    assert np.all(d.rows[:, 3] == 0)


def test_shared_t_index_and_lagged_start(lagged_panel):
    cfg, data = lagged_panel
    spec = prepare_spec(PanelSeries(data.X), cfg.spec.with_(knots=None))
    designs = build_designs(PanelSeries(data.X), spec)
    assert spec.start == 2
    for d in designs:
        np.testing.assert_array_equal(d.t_index, np.arange(2, data.T))


def test_threshold_values_lagged():
    X = np.arange(12.0).reshape(2, 6)
    spec = FcnarSpec(N=2, q1=1, q2=1, threshold=Lagged(2), W=SWAP, order=1, n_knots=0)
    U = threshold_values(PanelSeries(X), spec)
    assert np.all(np.isnan(U[:, :2]))
    np.testing.assert_array_equal(U[:, 2:], X[:, :-2])


def test_exogenous_requires_thresholds():
    spec = golden_spec()
    with pytest.raises(ValueError):
        build_node_design(PanelSeries(np.zeros((2, 40))), spec, 0)


def test_nan_input_rejected():
    with pytest.raises(ValueError):
        PanelSeries(np.array([[1.0, np.nan]]))


@pytest.mark.parametrize("q1,q2", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_reconstruction_identity(q1, q2, lagged_panel, rng):
    _, data = lagged_panel
    N = data.N
    spec = FcnarSpec(N=N, q1=q1, q2=q2, threshold=Lagged(1), W=banded_weight_matrix(N, 2),
                     order=3, n_knots=2)
    spec = prepare_spec(data, spec)
    L = spec.dimension
    for node in (0, 3):
        d = build_node_design(data, spec, node)
        beta = rng.normal(size=spec.n_params) * d.active
        basis = SplineBasis(spec.order, spec.knots[node])
        t = d.t_index
        u = data.X[node, t - 1]
        wx = spec.W.W[node] @ data.X
        direct = np.zeros(t.size)
        for j in range(spec.q):
            a = CoefficientFunction(basis, beta[2 * L * j:2 * L * j + L])
            b = CoefficientFunction(basis, beta[2 * L * j + L:2 * L * (j + 1)])
            direct += a(u) * data.X[node, t - j - 1] + b(u) * wx[t - j - 1]
        np.testing.assert_allclose(d.rows @ beta, direct, rtol=1e-10, atol=1e-10)


def test_block_diagonal_stack(exo_spline_panel):
    cfg, data = exo_spline_panel
    designs = build_designs(data, prepare_spec(data, cfg.spec))
    Z, y = stack_designs(designs)
    P = cfg.spec.n_params
    assert Z.shape == (4 * designs[0].n_obs, 4 * P)
    joint = np.linalg.lstsq(Z, y, rcond=None)[0]
    per_node = np.concatenate([np.linalg.lstsq(d.rows, d.response, rcond=None)[0] for d in designs])
    np.testing.assert_allclose(joint, per_node, rtol=1e-9, atol=1e-12)


def test_start_override_pushes_sample(exo_spline_panel):
    cfg, data = exo_spline_panel
    designs = build_designs(data, prepare_spec(data, cfg.spec), start=5)
    assert designs[0].t_index[0] == 5
