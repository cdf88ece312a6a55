"""Regression design for the compact form X_t = Z_{t-1} beta + eps_t.

Each node's row at time t is ``[Z_{i(t-1)}, ..., Z_{i(t-q)}]`` where the
lag-j block is ``[Phi_i(U_it) X_{i,t-j}, Phi_i(U_it) w_i'X_{t-j}]``; the
coefficient vector of a lag is therefore ``[a_ij1..a_ijL, b_ij1..b_ijL]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .model import Exogenous, FcnarSpec
from .simulate import PanelSeries
from .splinebasis import truncated_power_basis


class InsufficientSampleError(ValueError):
    pass


@dataclass
class NodeDesign:
    node: int
    rows: np.ndarray
    response: np.ndarray
    t_index: np.ndarray
    excluded: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.rows.shape[0]

    @property
    def active(self) -> np.ndarray:
        return ~self.excluded


def threshold_values(data: PanelSeries, spec: FcnarSpec) -> np.ndarray:
    """Threshold array (N x T); lagged thresholds are NaN where undefined."""
    if isinstance(spec.threshold, Exogenous):
        if data.U is None:
            raise ValueError("exogenous threshold requested but the panel has no threshold values")
        return data.U
    d = spec.threshold.d
    U = np.full_like(data.X, np.nan)
    U[:, d:] = data.X[:, :-d]
    return U


def prepare_spec(data: PanelSeries, spec: FcnarSpec, start: Optional[int] = None) -> FcnarSpec:
    """Resolve quantile knots from ``data`` when the spec has none."""
    if spec.knots is not None:
        return spec
    s = spec.start if start is None else start
    return spec.resolve_knots(threshold_values(data, spec), start=s)


def excluded_columns(spec: FcnarSpec) -> np.ndarray:
    L = spec.dimension
    mask = np.zeros(spec.n_params, dtype=bool)
    for j in range(spec.q):
        if j >= spec.q1:
            mask[2 * L * j:2 * L * j + L] = True
        if j >= spec.q2:
            mask[2 * L * j + L:2 * L * (j + 1)] = True
    return mask


def design_rows(data: PanelSeries, spec: FcnarSpec, node: int, t_index,
                u_clip: Optional[tuple] = None) -> np.ndarray:
    """Design rows of ``node`` at the given time indices.

    ``u_clip=(lo, hi)`` clamps the threshold before the basis is evaluated;
    forecasting uses it to hold the fitted functions constant outside the
    range seen in training.
    """
    if spec.knots is None:
        raise ValueError("spec has no knots; call prepare_spec(data, spec) first")
    t_index = np.asarray(t_index, dtype=int)
    if t_index.size and t_index.min() < spec.q:
        raise ValueError(f"time index {t_index.min()} has no full lag history (q={spec.q})")
    U = threshold_values(data, spec)
    u = U[node, t_index]
    if np.any(~np.isfinite(u)):
        raise ValueError(f"node {node}: threshold undefined at some requested times")
    if u_clip is not None:
        u = np.clip(u, u_clip[0], u_clip[1])
    phi = truncated_power_basis(u, spec.knots[node], spec.order)
    wx = spec.W.W[node] @ data.X
    L = spec.dimension
    Z = np.zeros((t_index.size, spec.n_params))
    for j in range(spec.q):
        lagged = t_index - (j + 1)
        if j < spec.q1:
            Z[:, 2 * L * j:2 * L * j + L] = phi * data.X[node, lagged][:, None]
        if j < spec.q2:
            Z[:, 2 * L * j + L:2 * L * (j + 1)] = phi * wx[lagged][:, None]
    return Z


def _check_sample(data: PanelSeries, spec: FcnarSpec, start: int) -> np.ndarray:
    if not np.all(np.isfinite(data.X)):
        raise ValueError("panel contains NaN or infinite values")
    if data.N != spec.N:
        raise ValueError(f"panel has {data.N} nodes, spec has N={spec.N}")
    t_index = np.arange(start, data.T)
    need = spec.n_params - int(excluded_columns(spec).sum()) + 1
    if t_index.size < need:
        raise InsufficientSampleError(
            f"effective sample {t_index.size} is below the {need} rows needed "
            f"for {need - 1} coefficients per node"
        )
    return t_index


def build_node_design(data: PanelSeries, spec: FcnarSpec, node: int,
                      start: Optional[int] = None) -> NodeDesign:
    s = spec.start if start is None else max(start, spec.start)
    t_index = _check_sample(data, spec, s)
    return NodeDesign(
        node=node,
        rows=design_rows(data, spec, node, t_index),
        response=data.X[node, t_index].copy(),
        t_index=t_index,
        excluded=excluded_columns(spec),
    )


def build_designs(data: PanelSeries, spec: FcnarSpec, start: Optional[int] = None) -> list[NodeDesign]:
    """Per-node designs sharing one effective sample ``t >= max(q, d)``.

    ``start`` can push the first retained time later, e.g. to put
    candidates with different lags on a common sample.
    """
    s = spec.start if start is None else max(start, spec.start)
    _check_sample(data, spec, s)
    return [build_node_design(data, spec, i, s) for i in range(spec.N)]


def stack_designs(designs: list[NodeDesign]) -> tuple[np.ndarray, np.ndarray]:
    """Block-diagonal joint design and stacked response (node-major)."""
    Z = scipy.linalg.block_diag(*[d.rows for d in designs])
    y = np.concatenate([d.response for d in designs])
    return Z, y
