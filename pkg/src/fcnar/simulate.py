"""Synthetic FCNAR trajectories and the built-in simulation scenarios."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse

from . import _kernels
from .model import (
    CoefficientSet,
    Exogenous,
    FcnarSpec,
    NetworkMatrix,
    stability_check,
)

DEFAULT_BURN_IN = 500


class UnstableModelError(ValueError):
    """The spectral-radius condition fails and no override was given."""


class SimulationError(RuntimeError):
    """The recursion produced a non-finite value."""


@dataclass(frozen=True)
class NoiseSpec:
    """Innovation law: ``"normal"`` or ``"t"`` (rescaled to variance ``sigma2``)."""

    kind: str = "normal"
    sigma2: float = 1.0
    df: float = 5.0

    def __post_init__(self):
        if self.kind not in ("normal", "t"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma2 < 0:
            raise ValueError("noise variance must be nonnegative")
        if self.kind == "t" and self.df < 5:
            raise ValueError("Student-t noise needs df >= 5 (finite fourth moment)")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "normal":
            return rng.standard_normal(size) * np.sqrt(self.sigma2)
        scale = np.sqrt(self.sigma2 * (self.df - 2.0) / self.df)
        return rng.standard_t(self.df, size) * scale


@dataclass(frozen=True)
class ThresholdSource:
    """I.i.d. law of an exogenous threshold: ``"normal"`` or ``"uniform"``."""

    kind: str = "normal"
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("normal", "uniform"):
            raise ValueError(f"unknown threshold source {self.kind!r}")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "normal":
            return self.loc + self.scale * rng.standard_normal(size)
        return self.loc + self.scale * rng.uniform(-1.0, 1.0, size)


@dataclass
class PanelSeries:
    """N x T observations with materialised threshold values.

    ``U`` may be ``None`` for data whose threshold is a lag of ``X``.
    """

    X: np.ndarray
    U: Optional[np.ndarray] = None
    spec: Optional[FcnarSpec] = None
    time: Optional[list] = None
    names: Optional[list] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError(f"panel must be N x T, got shape {self.X.shape}")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("panel contains non-finite values")
        if self.U is not None:
            self.U = np.asarray(self.U, dtype=float)
            if self.U.shape != self.X.shape:
                raise ValueError(f"threshold array shape {self.U.shape} != panel shape {self.X.shape}")

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def T(self) -> int:
        return self.X.shape[1]

    def window(self, start: int, stop: int) -> "PanelSeries":
        return PanelSeries(
            self.X[:, start:stop],
            None if self.U is None else self.U[:, start:stop],
            self.spec,
            None if self.time is None else self.time[start:stop],
            self.names,
        )


@dataclass
class SimConfig:
    spec: FcnarSpec
    coeffs: CoefficientSet
    T: int
    burn_in: int = DEFAULT_BURN_IN
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    threshold_source: ThresholdSource = field(default_factory=ThresholdSource)
    seed: int = 0
    allow_unstable: bool = False
    u_range: tuple = (-4.0, 4.0)
    x_init: Optional[np.ndarray] = None
    name: str = ""
    train: Optional[int] = None

    def __post_init__(self):
        if self.T < self.spec.q + 1:
            raise ValueError(f"T={self.T} must be at least q+1={self.spec.q + 1}")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        self.coeffs.check(self.spec)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


def _streams(seed: int, N: int) -> list[tuple[np.random.Generator, np.random.Generator]]:
    """Per-node (noise, threshold) Philox streams derived from one seed."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(N):
        noise_ss, thr_ss = child.spawn(2)
        out.append((np.random.Generator(np.random.Philox(noise_ss)),
                    np.random.Generator(np.random.Philox(thr_ss))))
    return out


def _csr_arrays(W: np.ndarray):
    csr = scipy.sparse.csr_matrix(W)
    return (csr.indptr.astype(np.intc), csr.indices.astype(np.intc),
            csr.data.astype(float))


def _spline_tables(coeffs: CoefficientSet, q: int):
    """Pack spline coefficient functions into (q, N, P) tables plus knots."""
    N = coeffs.N
    first = coeffs.a[0][0] if coeffs.q1 else coeffs.b[0][0]
    order, P = first.basis.order, first.basis.dimension
    knots = np.zeros((N, first.basis.n_knots))
    ca = np.zeros((q, N, P))
    cb = np.zeros((q, N, P))
    for i in range(N):
        fns = list(coeffs.a[i]) + list(coeffs.b[i])
        basis = fns[0].basis
        for f in fns:
            if f.basis != basis:
                return None
        if basis.order != order or basis.dimension != P:
            return None
        knots[i] = basis.knots
        for j, f in enumerate(coeffs.a[i]):
            ca[j, i] = f.coeffs
        for j, f in enumerate(coeffs.b[i]):
            cb[j, i] = f.coeffs
    return ca, cb, knots, order


def simulate(config: SimConfig) -> PanelSeries:
    """Run the FCNAR recursion for ``burn_in + T`` steps and keep the last T.

    The first ``max(q, d)`` states are drawn from the noise law unless
    ``x_init`` (N x max(q, d)) is supplied.
    """
    spec, coeffs = config.spec, config.coeffs
    if not config.allow_unstable:
        report = stability_check(spec, coeffs=coeffs, u_range=config.u_range)
        if not report.stable:
            raise UnstableModelError(
                f"spectral radius of the bound matrix is {report.rho:.4g} >= 1; "
                "set allow_unstable to simulate anyway"
            )
    N, q = spec.N, spec.q
    s = spec.start
    total = s + config.burn_in + config.T

    X = np.empty((N, total))
    U = np.full((N, total), np.nan)
    exogenous = isinstance(spec.threshold, Exogenous)
    for i, (noise_rng, thr_rng) in enumerate(_streams(config.seed, N)):
        X[i] = config.noise.draw(noise_rng, total)
        if exogenous:
            U[i] = config.threshold_source.draw(thr_rng, total)
    if config.x_init is not None:
        x0 = np.asarray(config.x_init, dtype=float).reshape(N, -1)
        if x0.shape[1] != s:
            raise ValueError(f"x_init must have {s} columns per node, got {x0.shape[1]}")
        X[:, :s] = x0

    indptr, indices, data = _csr_arrays(spec.W.W)
    if exogenous:
        A, B = coeffs.evaluate(U, q)
        A[..., :s] = 0.0
        B[..., :s] = 0.0
        bad = _kernels.network_recursion(
            np.ascontiguousarray(A), np.ascontiguousarray(B), indptr, indices, data, X, s)
    else:
        d = spec.threshold.d
        tables = _spline_tables(coeffs, q) if coeffs.is_spline() else None
        if tables is not None:
            ca, cb, knots, order = tables
            bad = _kernels.spline_recursion(ca, cb, np.ascontiguousarray(knots), order, d,
                                            indptr, indices, data, X, U, s)
        else:
            bad = _callable_recursion(coeffs, spec.W.W, X, U, s, d, q)
    if bad >= 0:
        raise SimulationError(f"non-finite value at step {bad - s} of the recursion")

    keep = slice(s + config.burn_in, total)
    return PanelSeries(X[:, keep].copy(), U[:, keep].copy(), spec)


def _callable_recursion(coeffs, W, X, U, start, d, q) -> int:
    WX = np.zeros_like(X)
    WX[:, :start] = W @ X[:, :start]
    for t in range(start, X.shape[1]):
        U[:, t] = X[:, t - d]
        A, B = coeffs.evaluate(U[:, t], q)
        v = X[:, t].copy()
        for j in range(q):
            v += A[j] * X[:, t - j - 1] + B[j] * WX[:, t - j - 1]
        X[:, t] = v
        if not np.all(np.isfinite(v)):
            return t
        WX[:, t] = W @ v
    return -1


def banded_weight_matrix(N: int, bandwidth: int) -> NetworkMatrix:
    """Uniform weights on the ``bandwidth`` nearest indices on each side."""
    if not 1 <= bandwidth <= N - 1:
        raise ValueError(f"bandwidth must lie in [1, {N - 1}], got {bandwidth}")
    idx = np.arange(N)
    gap = np.abs(idx[:, None] - idx[None, :])
    A = ((gap > 0) & (gap <= bandwidth)).astype(float)
    return NetworkMatrix(A / A.sum(axis=1, keepdims=True))


# Closed-form coefficient functions of the simulation study.

def exp_a(u):
    u = np.asarray(u, dtype=float)
    return 0.138 + (0.316 + 0.982 * u) * np.exp(-3.89 * u ** 2)


def exp_b(u):
    u = np.asarray(u, dtype=float)
    return -0.437 - (0.659 + 1.260 * u) * np.exp(-3.89 * u ** 2)


def step_a(u):
    u = np.asarray(u, dtype=float)
    return np.where(u <= 1.0, 0.3, -0.7)


def step_b(u):
    u = np.asarray(u, dtype=float)
    return np.where(u <= 1.0, -0.6, 0.2)


def smooth_a(u):
    u = np.asarray(u, dtype=float)
    return 0.138 + (0.316 + 0.682 * u) * np.exp(-0.5 * u ** 2)


def smooth_b(u):
    u = np.asarray(u, dtype=float)
    return -0.437 - (0.259 + 0.560 * u) * np.exp(-0.5 * u ** 2)


SCENARIO_FUNCTIONS = {
    "A1": (exp_a, exp_b),
    "A2": (exp_a, exp_b),
    "A3": (exp_a, exp_b),
    "A4": (exp_a, exp_b),
    "B1": (exp_a, exp_b),
    "B2": (step_a, step_b),
    "B3": (smooth_a, smooth_b),
}

_SCENARIO_DEFAULTS = {
    "A1": dict(T=200, order=4, n_knots=10, bandwidth=2),
    "A2": dict(T=400, order=4, n_knots=10, bandwidth=2),
    "A3": dict(T=400, order=4, n_knots=10, bandwidth=2),
    "A4": dict(T=400, order=4, n_knots=10, bandwidth=2),
    "B1": dict(T=1600, order=4, n_knots=10, bandwidth=2, train=1550),
    "B2": dict(T=1600, order=4, n_knots=10, bandwidth=2, train=1550),
    "B3": dict(T=1600, order=4, n_knots=10, bandwidth=2, train=1550),
}

SCENARIOS = tuple(_SCENARIO_DEFAULTS)


def make_scenario(name: str, **overrides) -> SimConfig:
    """Configuration of a named simulation scenario.

    Every scenario is an FCNAR(1,1) with N=100 nodes, a banded weight matrix
    of bandwidth 2, standard normal innovations and an i.i.d. standard
    normal exogenous threshold. Accepted overrides: ``N``, ``T``, ``order``,
    ``n_knots``, ``bandwidth``, ``seed``, ``burn_in``, ``sigma2``,
    ``train``, ``W``.

    The scenario functions do not satisfy the sufficient spectral-radius
    condition (their sup-norm bounds give rho > 1), yet the recursions are
    stable in practice, so the configs carry ``allow_unstable=True``.
    """
    key = name.upper().replace(".", "")
    if key not in _SCENARIO_DEFAULTS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    params = dict(N=100, seed=0, burn_in=DEFAULT_BURN_IN, sigma2=1.0, train=None)
    params.update(_SCENARIO_DEFAULTS[key])
    unknown = set(overrides) - set(params) - {"W"}
    if unknown:
        raise ValueError(f"unsupported scenario overrides: {sorted(unknown)}")
    params.update(overrides)
    W = overrides.get("W")
    if W is None:
        W = banded_weight_matrix(params["N"], params["bandwidth"])
    elif not isinstance(W, NetworkMatrix):
        W = NetworkMatrix(W)
    spec = FcnarSpec(
        N=params["N"], q1=1, q2=1, threshold=Exogenous(), W=W,
        order=params["order"], n_knots=params["n_knots"],
    )
    fa, fb = SCENARIO_FUNCTIONS[key]
    return SimConfig(
        spec=spec,
        coeffs=CoefficientSet.homogeneous(params["N"], [fa], [fb]),
        T=params["T"],
        burn_in=params["burn_in"],
        noise=NoiseSpec("normal", params["sigma2"]),
        seed=params["seed"],
        allow_unstable=True,
        name=key,
        train=params["train"],
    )
