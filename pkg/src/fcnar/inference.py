"""Covariances, pointwise confidence intervals and F-tests for fitted models."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.stats

from .estimate import FitResult, SingularDesignError
from .model import FcnarSpec
from .splinebasis import truncated_power_basis


def _inv_psd(G: np.ndarray, what: str) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via Cholesky on its unit-diagonal scaling."""
    d = np.sqrt(np.diag(G))
    if np.any(~(d > 0)):
        raise SingularDesignError(f"{what} is singular")
    try:
        c = scipy.linalg.cho_factor(G / np.outer(d, d))
    except np.linalg.LinAlgError:
        raise SingularDesignError(f"{what} is numerically singular; refit with fewer knots or a narrower knot range") from None
    return scipy.linalg.cho_solve(c, np.eye(G.shape[0])) / np.outer(d, d)


def beta_covariance(fit: FitResult, node: int) -> np.ndarray:
    """Finite-sample covariance sigma^2 P_i^{-1} / T_eff of a node's coefficients.

    Structurally-zero (padded) coefficients get zero rows and columns. Fits
    made with ``minimum_norm`` use their stored SVD factors, i.e. the
    pseudo-inverse, which is valid only for estimable functions.
    """
    act = fit.active
    cov = np.zeros_like(fit.gram[node])
    info = fit.factors.get(node)
    if info is not None:
        cov[np.ix_(act, act)] = fit.sigma2 * info.factor @ info.factor.T
    else:
        P_inv = _inv_psd(fit.gram[node][np.ix_(act, act)], f"Gram matrix of node {node}")
        cov[np.ix_(act, act)] = fit.sigma2 * P_inv / fit.T_eff
    return 0.5 * (cov + cov.T)


def estimable(fit: FitResult, node: int, C: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Whether each row c of ``C`` (last axis = coefficients) gives an estimable c'beta."""
    C = np.asarray(C, dtype=float)
    info = fit.factors.get(node)
    if info is None or info.null.shape[1] == 0:
        return np.ones(C.shape[:-1], dtype=bool)
    Cs = C[..., fit.active] / info.scale
    resid = np.abs(Cs @ info.null).max(axis=-1, initial=0.0)
    return resid <= tol * np.maximum(np.abs(Cs).max(axis=-1), 1e-300)


def evaluation_map(spec: FcnarSpec, node: int, u) -> np.ndarray:
    """(I_2q kron Phi_i(u)) for each u: shape (len(u), 2q, 2(M+K)q).

    Row 2j gives a_{i,j+1}(u), row 2j+1 gives b_{i,j+1}(u).
    """
    phi = truncated_power_basis(np.atleast_1d(u), spec.knots[node], spec.order)
    eye = np.eye(2 * spec.q)
    return np.einsum("ab,np->nabp", eye, phi).reshape(phi.shape[0], 2 * spec.q, -1)


def coefficient_values(fit: FitResult, node: int, u) -> np.ndarray:
    """beta_i(u) = [a_1(u), b_1(u), ..., a_q(u), b_q(u)] for each u (n x 2q)."""
    return evaluation_map(fit.spec, node, u) @ fit.beta[node]


@dataclass
class FunctionCI:
    u_grid: np.ndarray
    estimate: np.ndarray
    half_width: np.ndarray
    level: float
    kind: str = "a"
    lag: int = 1
    node: int = 0

    @property
    def lower(self) -> np.ndarray:
        return self.estimate - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.estimate + self.half_width

    def covers(self, truth) -> np.ndarray:
        truth = np.asarray(truth, dtype=float)
        return (self.lower <= truth) & (truth <= self.upper)


def function_ci(fit: FitResult, node: int, u_grid, level: float = 0.95,
                lag: int = 1) -> tuple[FunctionCI, FunctionCI]:
    """Pointwise normal CIs for a_{i,lag}(u) and b_{i,lag}(u) on ``u_grid``.

    For nodes fitted by minimum norm on a rank-deficient design, points
    where a function value is not estimable get NaN estimates and widths.
    """
    if not 0 < level < 1:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    if not 1 <= lag <= fit.spec.q:
        raise ValueError(f"lag must lie in 1..{fit.spec.q}")
    u_grid = np.asarray(u_grid, dtype=float).reshape(-1)
    K = evaluation_map(fit.spec, node, u_grid)
    cov = beta_covariance(fit, node)
    values = K @ fit.beta[node]
    var = np.einsum("nap,pq,naq->na", K, cov, K)
    se = np.sqrt(np.maximum(var, 0.0))
    if node in fit.factors:
        ok = estimable(fit, node, K)
        values = np.where(ok, values, np.nan)
        se = np.where(ok, se, np.nan)
    z = scipy.stats.norm.ppf(0.5 * (1 + level))
    ia, ib = 2 * (lag - 1), 2 * (lag - 1) + 1
    return (
        FunctionCI(u_grid, values[:, ia], z * se[:, ia], level, "a", lag, node),
        FunctionCI(u_grid, values[:, ib], z * se[:, ib], level, "b", lag, node),
    )


def joint_subvector_covariance(fit: FitResult, nodes: Sequence[int]) -> np.ndarray:
    """Block-diagonal covariance of the stacked coefficients of ``nodes``."""
    return scipy.linalg.block_diag(*[beta_covariance(fit, i) for i in nodes])


def joint_evaluation_map(fit: FitResult, nodes: Sequence[int], u: float) -> np.ndarray:
    """Direct sum of the per-node evaluation maps at a single threshold value."""
    return scipy.linalg.block_diag(*[evaluation_map(fit.spec, i, u)[0] for i in nodes])


@dataclass
class TestReport:
    D: np.ndarray
    r: np.ndarray
    F: float
    df: tuple
    p_value: float
    noncentrality: Optional[float] = None
    scope: str = "global"

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {
            "scope": self.scope,
            "F": self.F,
            "df": list(self.df),
            "p_value": self.p_value,
            "noncentrality": self.noncentrality,
            "n_constraints": int(self.D.shape[0]),
            "D": self.D.tolist(),
            "r": self.r.tolist(),
        }


Scope = Union[str, tuple]


def _quadratic_form(D, G_inv, sigma2, diff, p):
    middle = sigma2 * D @ G_inv @ D.T
    middle = 0.5 * (middle + middle.T)
    try:
        c = scipy.linalg.cho_factor(middle)
    except np.linalg.LinAlgError:
        raise ValueError("constraint covariance D G^-1 D' is not positive definite") from None
    return float(diff @ scipy.linalg.cho_solve(c, diff))


def f_test(fit: FitResult, D, r=None, scope: Scope = "global", *,
           beta_true=None, sigma2_true: Optional[float] = None,
           check_rank: bool = True, variance: str = "residual_df") -> TestReport:
    """F-test of ``D beta = r``.

    ``scope="global"`` tests constraints on the stacked coefficients of all
    nodes with the pooled sigma^2; ``scope=("node", i, j)`` tests a
    constraint on the lag-j block [a_ij., b_ij.] of node i using that
    block's own Gram matrix and the node's residual variance. Passing the
    true coefficients gives the non-centrality of the alternative.

    ``variance="residual_df"`` divides the residual sum of squares by the
    denominator degrees of freedom (the classical F construction);
    ``variance="fit"`` reuses the fit's RSS / T_eff estimate.
    """
    if variance not in ("residual_df", "fit"):
        raise ValueError(f"unknown variance estimator {variance!r}")
    spec = fit.spec
    D = np.atleast_2d(np.asarray(D, dtype=float))
    p = D.shape[0]
    r = np.zeros(p) if r is None else np.asarray(r, dtype=float).reshape(-1)
    if r.size != p:
        raise ValueError(f"target has {r.size} entries for {p} constraints")
    L = spec.dimension
    if scope == "global":
        active = np.tile(fit.active, fit.N)
        if D.shape[1] != fit.N * spec.n_params:
            raise ValueError(f"global constraints need {fit.N * spec.n_params} columns, got {D.shape[1]}")
        beta_hat = fit.beta.reshape(-1)
        G_inv = scipy.linalg.block_diag(*[
            _inv_psd(fit.T_eff * fit.gram[i][np.ix_(fit.active, fit.active)], f"Gram matrix of node {i}")
            for i in range(fit.N)
        ])
        df2 = fit.N * (fit.T_eff - fit.n_active)
        sigma2 = fit.rss.sum() / df2 if variance == "residual_df" and df2 > 0 else fit.sigma2
        label = "global"
    else:
        _, node, lag = scope
        if not 1 <= lag <= spec.q:
            raise ValueError(f"lag must lie in 1..{spec.q}")
        if D.shape[1] != 2 * L:
            raise ValueError(f"node-lag constraints need {2 * L} columns, got {D.shape[1]}")
        block = slice(2 * L * (lag - 1), 2 * L * lag)
        active = fit.active[block]
        beta_hat = fit.beta[node, block]
        G = fit.T_eff * fit.gram[node][block, block][np.ix_(active, active)]
        G_inv = _inv_psd(G, f"lag-{lag} Gram block of node {node}")
        df2 = fit.T_eff - fit.n_active
        sigma2 = fit.rss[node] / df2 if variance == "residual_df" and df2 > 0 else fit.node_sigma2(node)
        label = f"node {node}, lag {lag}"
    Da = D[:, active]
    if check_rank and np.linalg.matrix_rank(Da) < p:
        raise ValueError(f"constraint matrix must have full row rank {p}")
    if df2 <= 0:
        raise ValueError("no residual degrees of freedom")
    diff = Da @ beta_hat[active] - r
    F = max(_quadratic_form(Da, G_inv, sigma2, diff, p) / p, 0.0)
    p_value = float(scipy.stats.f.sf(F, p, df2))
    delta = None
    if beta_true is not None:
        bt = np.asarray(beta_true, dtype=float).reshape(-1)
        s2 = sigma2 if sigma2_true is None else sigma2_true
        delta = _quadratic_form(Da, G_inv, s2, Da @ bt[active] - r, p)
    return TestReport(D=D, r=r, F=F, df=(p, int(df2)), p_value=min(max(p_value, 0.0), 1.0),
                      noncentrality=delta, scope=label)


CONSTRAINT_KINDS = {
    "homogeneity_a": "homogeneity_a", "a": "homogeneity_a", "homogeneitya": "homogeneity_a",
    "homogeneity_b": "homogeneity_b", "b": "homogeneity_b", "homogeneityb": "homogeneity_b",
    "linearity_a": "linearity_a", "c1": "linearity_a", "linearityc1": "linearity_a",
    "linearity_b": "linearity_b", "c2": "linearity_b", "linearityc2": "linearity_b",
    "custom": "custom",
}


def make_constraints(kind: str, spec: FcnarSpec, lag: int = 1, D=None, r=None) -> tuple[np.ndarray, np.ndarray]:
    """Constraint matrices for the built-in hypotheses.

    Homogeneity (a or b) chains adjacent node pairs on the full stacked
    coefficient vector; linearity (a or b) zeroes every non-constant basis
    coefficient of one lag block and is used with a node-lag scope.
    """
    key = CONSTRAINT_KINDS.get(kind.lower().replace("-", "_").replace(".", ""))
    if key is None:
        raise ValueError(f"unknown constraint kind {kind!r}")
    if key == "custom":
        if D is None:
            raise ValueError("custom constraints need D")
        D = np.atleast_2d(np.asarray(D, dtype=float))
        r = np.zeros(D.shape[0]) if r is None else np.asarray(r, dtype=float).reshape(-1)
        return D, r
    if not 1 <= lag <= spec.q:
        raise ValueError(f"lag must lie in 1..{spec.q}")
    L = spec.dimension
    if key.startswith("linearity"):
        if L < 2:
            raise ValueError("a constant basis has no non-constant coefficients to test")
        shift = 0 if key == "linearity_a" else L
        D = np.zeros((L - 1, 2 * L))
        D[np.arange(L - 1), shift + 1 + np.arange(L - 1)] = 1.0
        return D, np.zeros(L - 1)
    if not same_bases(spec):
        warnings.warn(
            "nodes have different knots, so equal coefficient vectors do not mean equal "
            "functions; fit with shared knots for a homogeneity test of the functions"
        )
    N, P = spec.N, spec.n_params
    shift = 2 * L * (lag - 1) + (0 if key == "homogeneity_a" else L)
    D = np.zeros(((N - 1) * L, N * P))
    eye = np.eye(L)
    for i in range(N - 1):
        rows = slice(i * L, (i + 1) * L)
        D[rows, i * P + shift:i * P + shift + L] = eye
        D[rows, (i + 1) * P + shift:(i + 1) * P + shift + L] = -eye
    return D, np.zeros(D.shape[0])


def same_bases(spec: FcnarSpec) -> bool:
    """Whether every node uses the same knots (and hence the same basis)."""
    if spec.knots is None:
        return spec.shared_knots
    return all(np.array_equal(k, spec.knots[0]) for k in spec.knots)


def linearity_test(fit: FitResult, node: int, lag: int = 1, kind: str = "a", **kwargs) -> TestReport:
    D, r = make_constraints(f"linearity_{kind}", fit.spec, lag)
    return f_test(fit, D, r, ("node", node, lag), **kwargs)


def homogeneity_test(fit: FitResult, lag: int = 1, kind: str = "a", **kwargs) -> TestReport:
    D, r = make_constraints(f"homogeneity_{kind}", fit.spec, lag)
    kwargs.setdefault("check_rank", False)
    return f_test(fit, D, r, "global", **kwargs)
