"""Least-squares and ridge estimation of the spline coefficients."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .design import NodeDesign, build_designs, design_rows, prepare_spec, threshold_values
from .model import CoefficientSet, FcnarSpec
from .simulate import PanelSeries
from .splinebasis import CoefficientFunction, SplineBasis

log = logging.getLogger(__name__)

DEFAULT_COND_CAP = 1e12
DEFAULT_LAMBDA_GRID = np.logspace(-6, 0, 20)
MIN_NORM_RCOND = 1e-10


class SingularDesignError(np.linalg.LinAlgError):
    pass


@dataclass
class FitResult:
    """Per-node coefficient vectors and the quantities inference needs.

    ``gram[i]`` is the averaged Gram matrix Z_i'Z_i / T_eff of node i
    (unpenalised, also for ridge fits); ``beta`` is N x 2(M+K)q with
    structurally-zero entries for padded lags.
    """

    spec: FcnarSpec
    beta: np.ndarray
    gram: np.ndarray
    sigma2: float
    rss: np.ndarray
    T_eff: int
    start: int
    excluded: np.ndarray
    u_range: Optional[np.ndarray] = None
    method: str = "ls"
    lam: float = 0.0
    tag: str = "FCNAR"
    dof_correct: bool = False
    meta: dict = field(default_factory=dict)
    factors: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.beta.shape[0]

    @property
    def active(self) -> np.ndarray:
        return ~self.excluded

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def node_sigma2(self, node: int) -> float:
        return float(self.rss[node] / self.T_eff)

    def coefficient_function(self, node: int, lag: int, kind: str) -> CoefficientFunction:
        """Fitted ``a`` (kind="a") or ``b`` function of a node at lag 1..q."""
        L = self.spec.dimension
        off = 2 * L * (lag - 1) + (0 if kind == "a" else L)
        basis = self.spec.bases[node]
        return CoefficientFunction(basis, self.beta[node, off:off + L])

    def coefficients(self) -> CoefficientSet:
        spec = self.spec
        a = [[self.coefficient_function(i, j + 1, "a") for j in range(spec.q1)] for i in range(spec.N)]
        b = [[self.coefficient_function(i, j + 1, "b") for j in range(spec.q2)] for i in range(spec.N)]
        return CoefficientSet(a, b)

    def clamp_bounds(self, clamp: Optional[str]) -> Optional[np.ndarray]:
        """Per-node (lo, hi) threshold limits used when predicting.

        ``"knots"`` holds each function constant beyond its outer knots
        (falling back to the training range with fewer than two knots),
        ``"range"`` beyond the training range, ``None`` extrapolates.
        """
        if clamp is None:
            return None
        if clamp == "knots" and self.spec.n_knots >= 2:
            return np.array([[k[0], k[-1]] for k in self.spec.knots])
        if clamp in ("knots", "range"):
            return self.u_range
        raise ValueError(f"unknown clamp mode {clamp!r}")

    def predict(self, data: PanelSeries, t_index, clamp: Optional[str] = "knots") -> np.ndarray:
        """One-step plug-in predictions (N x len(t_index)) from observed history."""
        t_index = np.asarray(t_index, dtype=int)
        bounds = self.clamp_bounds(clamp)
        rows = []
        for i in range(self.N):
            clip = None if bounds is None else tuple(bounds[i])
            rows.append(design_rows(data, self.spec, i, t_index, u_clip=clip) @ self.beta[i])
        return np.stack(rows)


def _penalty_diag(spec: FcnarSpec) -> np.ndarray:
    """Ridge penalty: zero on the first coefficient of every basis block, one elsewhere."""
    psi = np.ones(spec.n_params)
    psi[::spec.dimension] = 0.0
    return psi


def scaled_condition(G: np.ndarray) -> float:
    """Condition number of G after unit-diagonal scaling (inf if singular)."""
    diag = np.diag(G)
    if np.any(diag <= 0):
        return np.inf
    s = 1.0 / np.sqrt(diag)
    ev = np.linalg.eigvalsh(G * s[:, None] * s[None, :])
    return np.inf if ev[0] <= 0 else float(ev[-1] / ev[0])


def _qr_solve(Z: np.ndarray, y: np.ndarray, node: int) -> np.ndarray:
    """Pivoted-QR least squares on unit-norm columns, so rank detection is scale free."""
    norms = np.linalg.norm(Z, axis=0)
    norms[norms == 0] = 1.0
    scaled, _, rank, _ = scipy.linalg.lstsq(Z / norms, y, cond=MIN_NORM_RCOND, lapack_driver="gelsy")
    if rank < Z.shape[1]:
        raise SingularDesignError(
            f"node {node}: design has numerical rank {rank} < {Z.shape[1]} coefficients; "
            "use ridge or fewer knots"
        )
    return scaled / norms


@dataclass
class SvdFactors:
    """Truncated-SVD pieces of a node design (active columns only).

    ``factor @ factor.T`` equals (Z'Z)^+ in the original coordinates and
    ``null`` spans the null space of the column-scaled design (empty at full
    rank), so c'beta is estimable iff ``(c / scale) @ null`` vanishes.
    """

    rank: int
    factor: np.ndarray
    null: np.ndarray
    scale: np.ndarray


def _min_norm_solve(Z: np.ndarray, y: np.ndarray, rcond: float = MIN_NORM_RCOND):
    """SVD least squares on unit-norm columns, truncating tiny singular values."""
    scale = np.linalg.norm(Z, axis=0)
    scale[scale == 0] = 1.0
    U, sv, Vt = np.linalg.svd(Z / scale, full_matrices=False)
    rank = int(np.sum(sv > rcond * sv[0]))
    coef = (Vt[:rank].T @ ((U[:, :rank].T @ y) / sv[:rank])) / scale
    factor = Vt[:rank].T / sv[:rank] / scale[:, None]
    return coef, SvdFactors(rank, factor, Vt[rank:].T, scale)


def _solve_node(design: NodeDesign, penalty: Optional[np.ndarray], cond_cap: Optional[float]) -> np.ndarray:
    """Cholesky solve of the (penalised) normal equations.

    Falls back to column-pivoted QR when the scaled condition number exceeds
    ``cond_cap`` or the factorisation fails; rank deficiency is an error.
    """
    act = design.active
    Z = design.rows[:, act]
    y = design.response
    if penalty is not None and np.any(penalty[act] > 0):
        Z_aug = np.vstack([Z, np.diag(np.sqrt(penalty[act]))])
        y_aug = np.concatenate([y, np.zeros(act.sum())])
    else:
        penalty, Z_aug, y_aug = None, Z, y
    G = Z.T @ Z
    if penalty is not None:
        G = G + np.diag(penalty[act])
    coef = np.zeros(design.rows.shape[1])
    if cond_cap is not None:
        cond = scaled_condition(G)
        if cond > cond_cap:
            log.info("node %d: scaled condition number %.3g above cap, using pivoted QR",
                     design.node, cond)
            coef[act] = _qr_solve(Z_aug, y_aug, design.node)
            return coef
    try:
        coef[act] = scipy.linalg.cho_solve(scipy.linalg.cho_factor(G), Z.T @ y)
    except np.linalg.LinAlgError:
        log.info("node %d: Cholesky failed, using pivoted QR", design.node)
        coef[act] = _qr_solve(Z_aug, y_aug, design.node)
    return coef


def _assemble(designs: Sequence[NodeDesign], spec: FcnarSpec, betas, method, lam,
              dof_correct, tag, u_range=None) -> FitResult:
    T_eff = designs[0].n_obs
    P = spec.n_params
    N = len(designs)
    gram = np.empty((N, P, P))
    rss = np.empty(N)
    for i, d in enumerate(designs):
        gram[i] = d.rows.T @ d.rows / T_eff
        r = d.response - d.rows @ betas[i]
        rss[i] = r @ r
    excluded = designs[0].excluded.copy()
    denom = N * T_eff
    if dof_correct:
        denom = N * (T_eff - int((~excluded).sum()))
    return FitResult(
        spec=spec, beta=np.asarray(betas), gram=gram, sigma2=float(rss.sum() / denom),
        rss=rss, T_eff=T_eff, start=int(designs[0].t_index[0]), excluded=excluded,
        u_range=u_range, method=method, lam=float(lam), tag=tag, dof_correct=dof_correct,
    )


def fit_ls(designs: Sequence[NodeDesign], spec: FcnarSpec, *, cond_cap: float = DEFAULT_COND_CAP,
           dof_correct: bool = False, tag: str = "FCNAR", minimum_norm: bool = False) -> FitResult:
    """Node-wise least squares; sigma^2 = RSS / (N T_eff) unless ``dof_correct``.

    ``minimum_norm=True`` solves every node by a truncated SVD of the
    column-scaled design and accepts rank deficiency: such nodes get the
    minimum-norm solution. The ``SvdFactors`` of every node are kept in
    ``result.factors`` for inference. Only estimable functions of deficient
    nodes' coefficients (e.g. a(u) at thresholds well inside the data) are
    meaningful.
    """
    if not minimum_norm:
        betas = [_solve_node(d, None, cond_cap) for d in designs]
        return _assemble(designs, spec, betas, "ls", 0.0, dof_correct, tag)
    betas, factors = [], {}
    for d in designs:
        coef = np.zeros(d.rows.shape[1])
        coef[d.active], info = _min_norm_solve(d.rows[:, d.active], d.response)
        betas.append(coef)
        if info.null.shape[1]:
            log.info("node %d: rank %d < %d, using the minimum-norm solution",
                     d.node, info.rank, int(d.active.sum()))
        factors[d.node] = info
    result = _assemble(designs, spec, betas, "ls-minnorm", 0.0, dof_correct, tag)
    result.factors = factors
    return result


def fit_ridge(designs: Sequence[NodeDesign], spec: FcnarSpec, lam: float, *,
              dof_correct: bool = False, tag: str = "FCNAR") -> FitResult:
    """Ridge solve of (Z'Z + lam T_eff Psi) beta = Z'y per node."""
    if lam < 0:
        raise ValueError(f"ridge penalty must be nonnegative, got {lam}")
    T_eff = designs[0].n_obs
    if lam * np.sqrt(T_eff) > 1:
        warnings.warn(
            f"lambda*sqrt(T_eff) = {lam * np.sqrt(T_eff):.3g} > 1; the asymptotic "
            "covariance assumes lambda shrinks faster than 1/sqrt(T)"
        )
    penalty = lam * T_eff * _penalty_diag(spec)
    betas = [_solve_node(d, penalty, None) for d in designs]
    return _assemble(designs, spec, betas, "ridge", lam, dof_correct, tag)


def threshold_range(data: PanelSeries, spec: FcnarSpec, designs: Sequence[NodeDesign]) -> np.ndarray:
    """Per-node (min, max) of the thresholds in the estimation sample."""
    U = threshold_values(data, spec)
    t_index = designs[0].t_index
    return np.stack([U[:, t_index].min(axis=1), U[:, t_index].max(axis=1)], axis=1)


def fit(data: PanelSeries, spec: FcnarSpec, *, lam: Optional[float] = None,
        start: Optional[int] = None, **kwargs) -> FitResult:
    """Resolve knots, build designs and fit by LS (``lam=None``) or ridge."""
    spec = prepare_spec(data, spec, start)
    designs = build_designs(data, spec, start)
    if lam is None:
        result = fit_ls(designs, spec, **kwargs)
    else:
        result = fit_ridge(designs, spec, lam, **kwargs)
    result.u_range = threshold_range(data, spec, designs)
    return result


def forward_folds(n_obs: int, n_folds: int) -> list[tuple[slice, slice]]:
    """Forward-chained splits: train on blocks 0..k, validate on block k+1."""
    edges = np.linspace(0, n_obs, n_folds + 2).round().astype(int)
    return [(slice(0, edges[k + 1]), slice(edges[k + 1], edges[k + 2])) for k in range(n_folds)]


def cross_validate_lambda(designs: Sequence[NodeDesign], spec: FcnarSpec,
                          grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                          n_folds: int = 5) -> tuple[float, np.ndarray]:
    """Pick the ridge penalty with the lowest forward-chained one-step RMSE.

    Returns ``(lam_star, scores)``; scores holds the fold-averaged RMSE per
    grid value (NaN where every fold failed). Ties go to the larger lambda.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    psi = _penalty_diag(spec)
    n_obs = designs[0].n_obs
    n_coef = int(designs[0].active.sum())
    scores = np.full(grid.size, np.nan)
    for g, lam in enumerate(grid):
        fold_rmse = []
        for train, test in forward_folds(n_obs, n_folds):
            n_train = train.stop - train.start
            if n_train <= n_coef or test.stop <= test.start:
                continue
            sq, count = 0.0, 0
            try:
                for d in designs:
                    sub = NodeDesign(d.node, d.rows[train], d.response[train], d.t_index[train], d.excluded)
                    pen = None if lam == 0 else lam * n_train * psi
                    beta = _solve_node(sub, pen, None)
                    r = d.response[test] - d.rows[test] @ beta
                    sq += r @ r
                    count += r.size
            except np.linalg.LinAlgError:
                continue
            fold_rmse.append(np.sqrt(sq / count))
        if fold_rmse:
            scores[g] = np.mean(fold_rmse)
    if np.all(np.isnan(scores)):
        raise ValueError("every cross-validation fold was degenerate")
    best = np.nanmin(scores)
    ties = np.flatnonzero(scores <= best * (1 + 1e-12))
    return float(grid[ties[np.argmax(grid[ties])]]), scores
