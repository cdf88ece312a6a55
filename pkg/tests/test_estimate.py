import dataclasses
import warnings

import numpy as np
import pytest

from fcnar.design import build_designs, prepare_spec
from fcnar.estimate import (
    SingularDesignError,
    cross_validate_lambda,
    fit,
    fit_ls,
    fit_ridge,
    forward_folds,
)
from fcnar.model import Exogenous, FcnarSpec
from fcnar.simulate import PanelSeries, make_scenario, simulate

from helpers import synthetic_design, synthetic_spec

SWAP = [[0.0, 1.0], [1.0, 0.0]]


def test_cramer_oracle():
    X = np.array([[1.0, 2.0, 0.5, -1.0], [3.0, -1.0, 2.0, 1.0]])
    spec = FcnarSpec(N=2, q1=1, q2=1, threshold=Exogenous(), W=SWAP, order=1, n_knots=0,
                     knots=[[], []])
    data = PanelSeries(X, np.zeros_like(X))
    result = fit(data, spec)
    assert result.T_eff == 3
    # node 0: columns x = X_0,t-1 and w = X_1,t-1, response X_0,t
    x, w, y = X[0, :3], X[1, :3], X[0, 1:]
    sxx, sxw, sww, sxy, swy = x @ x, x @ w, w @ w, x @ y, w @ y
    det = sxx * sww - sxw ** 2
    a = (sxy * sww - sxw * swy) / det
    b = (sxx * swy - sxw * sxy) / det
    np.testing.assert_allclose(result.beta[0], [a, b], rtol=1e-12)


def test_noiseless_recovery(rng):
    spec = synthetic_spec(N=3)
    beta = rng.normal(size=(3, spec.n_params))
    designs = []
    for i in range(3):
        Z = rng.normal(size=(80, spec.n_params))
        designs.append(synthetic_design(Z, Z @ beta[i], node=i))
    result = fit_ls(designs, spec)
    np.testing.assert_allclose(result.beta, beta, atol=1e-8)
    assert result.sigma2 < 1e-16


def test_sigma2_denominators(rng):
    spec = synthetic_spec(N=2)
    designs = [synthetic_design(rng.normal(size=(50, 6)), rng.normal(size=50), node=i) for i in range(2)]
    plain = fit_ls(designs, spec)
    corrected = fit_ls(designs, spec, dof_correct=True)
    assert abs(plain.sigma2 - plain.rss.sum() / (2 * 50)) < 1e-15
    assert abs(corrected.sigma2 - plain.rss.sum() / (2 * 44)) < 1e-15


def test_gram_symmetric_psd(exo_spline_panel):
    cfg, data = exo_spline_panel
    result = fit(data, cfg.spec)
    for G in result.gram:
        np.testing.assert_allclose(G, G.T, atol=1e-12)
        assert np.linalg.eigvalsh(G).min() > -1e-9
    assert result.sigma2 >= 0


def test_normal_equations(exo_spline_panel):
    cfg, data = exo_spline_panel
    spec = prepare_spec(data, cfg.spec)
    designs = build_designs(data, spec)
    result = fit_ls(designs, spec)
    for d, b in zip(designs, result.beta):
        score = d.rows.T @ (d.response - d.rows @ b)
        scale = np.linalg.norm(d.rows, axis=0) * np.linalg.norm(d.response)
        assert np.all(np.abs(score) <= 1e-8 * scale)


def test_block_diagonal_equivalence(exo_spline_panel):
    cfg, data = exo_spline_panel
    spec = prepare_spec(data, cfg.spec)
    designs = build_designs(data, spec)
    joint = fit_ls(designs, spec).beta
    for i, d in enumerate(designs):
        alone = fit_ls([d], spec.with_(N=1, W=[[1.0]], knots=[spec.knots[i]])).beta[0]
        np.testing.assert_allclose(joint[i], alone, rtol=1e-12)


def test_singular_design_names_node(rng):
    spec = synthetic_spec(N=2)
    Z = rng.normal(size=(40, 6))
    Z[:, 5] = Z[:, 4]
    good = synthetic_design(rng.normal(size=(40, 6)), rng.normal(size=40), node=0)
    bad = synthetic_design(Z, rng.normal(size=40), node=1)
    with pytest.raises(SingularDesignError, match="node 1"):
        fit_ls([good, bad], spec)


def test_qr_fallback_agrees_with_cholesky(exo_spline_panel):
    cfg, data = exo_spline_panel
    chol = fit(data, cfg.spec)
    qr = fit(data, cfg.spec, cond_cap=1.0)
    np.testing.assert_allclose(chol.beta, qr.beta, rtol=1e-8, atol=1e-10)


def test_minimum_norm_matches_pinv(rng):
    spec = synthetic_spec(N=1)
    Z = rng.normal(size=(30, 6))
    Z[:, 5] = 2 * Z[:, 4]
    y = rng.normal(size=30)
    result = fit_ls([synthetic_design(Z, y)], spec, minimum_norm=True)
    # minimum norm is taken over unit-norm columns; fitted values are unique
    scale = np.linalg.norm(Z, axis=0)
    np.testing.assert_allclose(result.beta[0] * scale, np.linalg.pinv(Z / scale) @ y,
                               rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(Z @ result.beta[0], Z @ np.linalg.pinv(Z) @ y, atol=1e-10)
    assert result.factors[0].rank == 5
    assert result.method == "ls-minnorm"


def test_padded_lags_are_exact_zeros(lagged_panel):
    cfg, data = lagged_panel
    result = fit(data, cfg.spec)
    L = cfg.spec.dimension
    # q1=2, q2=1: the lag-2 network block is padding
    assert np.all(result.beta[:, 3 * L:4 * L] == 0)


def test_ridge_zero_equals_ls(exo_spline_panel):
    cfg, data = exo_spline_panel
    np.testing.assert_allclose(fit(data, cfg.spec, lam=0.0).beta, fit(data, cfg.spec).beta,
                               rtol=1e-10, atol=1e-12)


def test_ridge_huge_penalty_shrinks(exo_spline_panel):
    cfg, data = exo_spline_panel
    with pytest.warns(UserWarning, match="lambda"):
        result = fit(data, cfg.spec, lam=1e8)
    penalized = np.ones(cfg.spec.n_params, bool)
    penalized[::cfg.spec.dimension] = False
    assert np.all(np.abs(result.beta[:, penalized]) < 1e-3)


def test_ridge_two_column_closed_form(rng):
    spec = synthetic_spec(N=1, q1=1, q2=0, order=2, n_knots=0)
    T = 25
    Z = np.zeros((T, 4))
    Z[:, :2] = rng.normal(size=(T, 2))
    y = rng.normal(size=T)
    lam = 0.03
    result = fit_ridge([synthetic_design(Z, y, excluded=[False, False, True, True])], spec, lam)
    G, g = Z[:, :2].T @ Z[:, :2], Z[:, :2].T @ y
    (g11, g12), (_, g22) = G + lam * T * np.diag([0.0, 1.0])
    det = g11 * g22 - g12 ** 2
    expected = np.array([g22 * g[0] - g12 * g[1], g11 * g[1] - g12 * g[0]]) / det
    np.testing.assert_allclose(result.beta[0, :2], expected, rtol=1e-12)
    assert np.all(result.beta[0, 2:] == 0)


def test_ridge_seminorm_monotone(exo_spline_panel):
    cfg, data = exo_spline_panel
    psi = np.ones(cfg.spec.n_params)
    psi[::cfg.spec.dimension] = 0
    norms = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for lam in [0, 1e-4, 1e-3, 1e-2, 1e-1, 1, 10]:
            beta = fit(data, cfg.spec, lam=lam).beta
            norms.append(np.sum(beta ** 2 * psi))
    assert np.all(np.diff(norms) <= 1e-12 * max(norms))


def test_ridge_negative_lambda(exo_spline_panel):
    cfg, data = exo_spline_panel
    with pytest.raises(ValueError):
        fit(data, cfg.spec, lam=-1.0)


def test_forward_folds_chain():
    folds = forward_folds(100, 4)
    assert [f[0].stop for f in folds] == [f[1].start for f in folds]
    assert folds[-1][1].stop == 100
    assert all(f[0].start == 0 for f in folds)


def test_cv_singleton_grid(exo_spline_panel):
    cfg, data = exo_spline_panel
    spec = prepare_spec(data, cfg.spec)
    lam, scores = cross_validate_lambda(build_designs(data, spec), spec, [0.0])
    assert lam == 0.0 and scores.shape == (1,)


def test_cv_noiseless_prefers_zero(rng):
    spec = synthetic_spec(N=2)
    beta = rng.normal(size=(2, 6))
    designs = []
    for i in range(2):
        Z = rng.normal(size=(120, 6))
        designs.append(synthetic_design(Z, Z @ beta[i], node=i))
    lam, _ = cross_validate_lambda(designs, spec, [0.0, 0.1, 1.0])
    assert lam == 0.0


def test_cv_ties_go_to_larger_lambda(rng):
    spec = synthetic_spec(N=1, order=1, n_knots=0)
    Z = rng.normal(size=(60, 2))
    # constant-only basis: the penalty touches nothing, so every lambda ties
    lam, scores = cross_validate_lambda([synthetic_design(Z, rng.normal(size=60))], spec, [0.0, 0.5, 2.0])
    assert lam == 2.0
    assert np.ptp(scores) < 1e-12


def test_cv_all_folds_degenerate(rng):
    spec = synthetic_spec(N=1)
    d = synthetic_design(rng.normal(size=(7, 6)), rng.normal(size=7))
    with pytest.raises(ValueError):
        cross_validate_lambda([d], spec, [0.0, 1.0])
    with pytest.raises(ValueError):
        cross_validate_lambda([d], spec, [])


def test_cv_collinear_network_regression():
    # Wide-band network: neighbourhood averages are nearly collinear; the
    # forward-chained criterion picked a positive penalty when this fixture
    # was recorded.
    cfg = make_scenario("B1", bandwidth=50, seed=0)
    data = simulate(cfg)
    spec = prepare_spec(data, cfg.spec)
    lam, _ = cross_validate_lambda(build_designs(data, spec), spec, np.logspace(-6, -1, 11))
    assert lam > 0


def test_predict_clamps_to_knots(exo_spline_panel):
    cfg, data = exo_spline_panel
    result = fit(data, cfg.spec)
    extreme = dataclasses.replace(data, U=np.where(data.U > 0, 50.0, data.U))
    hi = result.clamp_bounds("knots")[:, 1]
    at_knot = dataclasses.replace(data, U=np.where(data.U > 0, hi[:, None], data.U))
    t = np.arange(5, 50)
    np.testing.assert_allclose(result.predict(extreme, t), result.predict(at_knot, t))
    assert not np.allclose(result.predict(extreme, t, clamp=None), result.predict(at_knot, t))
