"""AIC model selection, one-step forecasts and baseline models."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .design import InsufficientSampleError, build_designs, prepare_spec
from .estimate import FitResult, _assemble, fit, threshold_range
from .model import Exogenous, FcnarSpec, Lagged
from .simulate import PanelSeries

log = logging.getLogger(__name__)


def aic(result: FitResult, penalty: str = "node", allow_degenerate: bool = False) -> float:
    """N log(sigma^2) plus a parameter penalty.

    ``penalty="node"`` counts the coefficients of a single node,
    2(K+M)(q1+q2)/T_eff; ``"full"`` counts every node's coefficients,
    2N(K+M)(q1+q2)/T_eff.
    """
    spec = result.spec
    if result.sigma2 <= 0:
        if allow_degenerate:
            return -np.inf
        raise ValueError("sigma^2 is zero, AIC is -inf; pass allow_degenerate=True to accept it")
    count = spec.dimension * (spec.q1 + spec.q2)
    if penalty == "node":
        pen = 2.0 * count / result.T_eff
    elif penalty == "full":
        pen = 2.0 * result.N * count / result.T_eff
    else:
        raise ValueError(f"unknown AIC penalty {penalty!r}")
    return result.N * np.log(result.sigma2) + pen


@dataclass
class SelectionGrid:
    q1: Sequence[int] = (1,)
    q2: Sequence[int] = (1,)
    order: Sequence[int] = (2, 3, 4)
    n_knots: Sequence[int] = (3, 5, 10)
    d: Sequence[int] = (1,)

    def __post_init__(self):
        for name in ("q1", "q2", "order", "n_knots", "d"):
            values = tuple(int(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"selection grid has no values for {name}")
            setattr(self, name, values)
        if min(self.order) < 1 or min(self.n_knots) < 0 or min(self.q1) < 0 or min(self.q2) < 0:
            raise ValueError("grid values out of range")

    def candidates(self, exogenous: bool):
        lags = (None,) if exogenous else self.d
        for q1, q2, m, k, d in itertools.product(self.q1, self.q2, self.order, self.n_knots, lags):
            if max(q1, q2) >= 1:
                yield q1, q2, m, k, d

    def max_start(self, exogenous: bool) -> int:
        q = max(max(self.q1), max(self.q2))
        return q if exogenous else max(q, max(self.d))


@dataclass
class SelectionResult:
    spec: FcnarSpec
    fit: FitResult
    aic: float
    trace: list = field(default_factory=list)


def select(data: PanelSeries, base: FcnarSpec, grid: SelectionGrid, *, penalty: str = "node",
           lam: Optional[float] = None) -> SelectionResult:
    """Exhaustive AIC search over (q1, q2, M, K, d).

    ``base`` supplies N, W, the threshold kind and the knot quantile range.
    All candidates share one estimation sample, starting after the largest
    lag or threshold delay in the grid, so their sigma^2 are comparable.
    Ties go to fewer parameters, then to the smaller threshold delay.
    """
    exogenous = isinstance(base.threshold, Exogenous)
    start = grid.max_start(exogenous)
    trace, best = [], None
    for q1, q2, m, k, d in grid.candidates(exogenous):
        spec = base.with_(q1=q1, q2=q2, order=m, n_knots=k, knots=None,
                          threshold=base.threshold if exogenous else Lagged(d))
        row = {"q1": q1, "q2": q2, "M": m, "K": k, "d": d if d is not None else 0}
        try:
            result = fit(data, spec, lam=lam, start=start)
            score = aic(result, penalty)
        except (np.linalg.LinAlgError, InsufficientSampleError, ValueError) as exc:
            log.info("candidate %s failed: %s", row, exc)
            trace.append({**row, "aic": np.nan, "sigma2": np.nan, "status": f"failed: {exc}"})
            continue
        trace.append({**row, "aic": score, "sigma2": result.sigma2, "status": "ok"})
        key = (score, (m + k) * (q1 + q2), row["d"])
        if best is None or _better(key, best[0]):
            best = (key, result)
    if best is None:
        raise ValueError("every candidate in the selection grid failed to fit")
    result = best[1]
    return SelectionResult(result.spec, result, best[0][0], trace)


def _better(key, incumbent, rtol: float = 1e-12) -> bool:
    a, b = key[0], incumbent[0]
    if abs(a - b) <= rtol * max(abs(a), abs(b), 1.0):
        return key[1:] < incumbent[1:]
    return a < b


@dataclass
class ForecastReport:
    predictions: np.ndarray
    truth: np.ndarray
    t_index: np.ndarray
    rmse: float
    per_node_rmse: np.ndarray
    model_tag: str
    horizon: int = 1

    def to_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "horizon": self.horizon,
            "rmse": self.rmse,
            "per_node_rmse": self.per_node_rmse.tolist(),
            "t_start": int(self.t_index[0]),
            "t_stop": int(self.t_index[-1]) + 1,
        }


def predicted_rmse(truth, predictions) -> float:
    diff = np.asarray(truth, dtype=float) - np.asarray(predictions, dtype=float)
    return float(np.sqrt(np.mean(diff ** 2)))


def forecast_one_step(result: FitResult, data: PanelSeries, t_range: tuple, *,
                      clamp: Optional[str] = "knots", model_tag: Optional[str] = None) -> ForecastReport:
    """One-step-ahead predictions over ``t_range = (start, stop)`` of ``data``.

    ``data`` must contain the history preceding the window (typically the
    training sample followed by the test sample).
    """
    start, stop = t_range
    if start < result.spec.start:
        raise ValueError(
            f"window starts at {start} but the model needs {result.spec.start} observations of history"
        )
    if stop > data.T or stop <= start:
        raise ValueError(f"invalid forecast window {t_range} for a panel of length {data.T}")
    t_index = np.arange(start, stop)
    pred = result.predict(data, t_index, clamp=clamp)
    truth = data.X[:, t_index]
    per_node = np.sqrt(np.mean((truth - pred) ** 2, axis=1))
    return ForecastReport(pred, truth, t_index, predicted_rmse(truth, pred), per_node,
                          model_tag or result.tag)


BASELINES = ("NAR", "HomogeneousNAR", "FAR", "NodeAR")


def fit_baseline(kind: str, data: PanelSeries, spec: FcnarSpec, lags: int = 1,
                 start: Optional[int] = None) -> FitResult:
    """Fit a comparison model on the same sample conventions as ``spec``.

    NAR: constant coefficient functions (M=1, K=0) at ``lags`` own and
    network lags. HomogeneousNAR: one (a_j, b_j) pair per lag pooled across
    nodes. FAR: ``spec`` without network terms. NodeAR: per-node AR(lags).
    """
    if kind == "NAR":
        return _tagged(fit(data, spec.with_(order=1, n_knots=0, q1=lags, q2=lags, knots=None), start=start), "NAR")
    if kind == "FAR":
        return _tagged(fit(data, spec.with_(q2=0, q1=spec.q1 or lags, knots=None), start=start), "FAR")
    if kind == "NodeAR":
        return _tagged(fit(data, spec.with_(order=1, n_knots=0, q1=lags, q2=0, knots=None), start=start), "AR")
    if kind == "HomogeneousNAR":
        return _pooled_nar(data, spec.with_(order=1, n_knots=0, q1=lags, q2=lags, knots=None), start)
    raise ValueError(f"unknown baseline {kind!r}; choose from {', '.join(BASELINES)}")


def _tagged(result: FitResult, tag: str) -> FitResult:
    result.tag = tag
    return result


def _pooled_nar(data: PanelSeries, spec: FcnarSpec, start: Optional[int]) -> FitResult:
    spec = prepare_spec(data, spec, start)
    designs = build_designs(data, spec, start)
    Z = np.vstack([d.rows for d in designs])
    y = np.concatenate([d.response for d in designs])
    coef = np.linalg.lstsq(Z, y, rcond=None)[0]
    result = _assemble(designs, spec, [coef] * len(designs), "pooled", 0.0, False, "HomogeneousNAR")
    result.u_range = threshold_range(data, spec, designs)
    return result
