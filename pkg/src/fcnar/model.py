"""Model description, companion form and the spectral-radius stability check."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .splinebasis import CoefficientFunction, SplineBasis, knots_from_quantiles

ROW_SUM_TOL = 1e-10
DENSE_EIG_LIMIT = 2000
SUP_GRID_POINTS = 2001
SUP_INFLATION = 1.01


class ConvergenceError(RuntimeError):
    """Raised when an iterative eigenvalue computation does not converge."""


@dataclass(frozen=True)
class NetworkMatrix:
    """Row-normalised, nonnegative N x N weight matrix."""

    W: np.ndarray

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {W.shape}")
        if not np.all(np.isfinite(W)):
            raise ValueError("weight matrix has non-finite entries")
        if np.any(W < 0):
            raise ValueError("weight matrix has negative entries")
        sums = W.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise ValueError(
                f"weight matrix rows must sum to 1; row {bad[0]} sums to {sums[bad[0]]!r}"
            )
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def N(self) -> int:
        return self.W.shape[0]

    @classmethod
    def from_adjacency(cls, adjacency) -> "NetworkMatrix":
        A = np.asarray(adjacency, dtype=float)
        sums = A.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise ValueError("adjacency has a row with zero total weight")
        return cls(A / sums)


@dataclass(frozen=True)
class Lagged:
    """Threshold U_it = X_{i,t-d}."""

    d: int = 1

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"threshold lag must be a positive integer, got {self.d}")

    @property
    def lag(self) -> int:
        return self.d

    def to_dict(self) -> dict:
        return {"kind": "lagged", "d": self.d}


@dataclass(frozen=True)
class Exogenous:
    """Threshold values supplied alongside the data."""

    @property
    def lag(self) -> int:
        return 0

    def to_dict(self) -> dict:
        return {"kind": "exogenous"}


Threshold = Union[Lagged, Exogenous]


def threshold_from_dict(d: dict) -> Threshold:
    if d["kind"] == "lagged":
        return Lagged(int(d["d"]))
    if d["kind"] == "exogenous":
        return Exogenous()
    raise ValueError(f"unknown threshold kind {d['kind']!r}")


@dataclass(frozen=True)
class FcnarSpec:
    """Shape of an FCNAR(q1, q2) model.

    ``knots`` holds one knot array per node once resolved; while it is
    ``None`` the knots are placed from the observed threshold values
    between the ``knot_range`` quantiles (see ``resolve_knots``), per node
    or, with ``shared_knots``, from all nodes' thresholds pooled.
    """

    N: int
    q1: int
    q2: int
    threshold: Threshold
    W: NetworkMatrix
    order: int = 4
    n_knots: int = 10
    knots: Optional[tuple] = None
    knot_range: tuple = (0.01, 0.99)
    shared_knots: bool = False

    def __post_init__(self):
        if not isinstance(self.W, NetworkMatrix):
            object.__setattr__(self, "W", NetworkMatrix(self.W))
        if self.W.N != self.N:
            raise ValueError(f"weight matrix is {self.W.N}x{self.W.N} but N={self.N}")
        if self.q1 < 0 or self.q2 < 0 or max(self.q1, self.q2) < 1:
            raise ValueError(f"need q1, q2 >= 0 and max(q1, q2) >= 1, got ({self.q1}, {self.q2})")
        if self.order < 1 or self.n_knots < 0:
            raise ValueError("spline order must be >= 1 and knot count >= 0")
        if self.knots is not None:
            knots = tuple(np.asarray(k, dtype=float).reshape(-1) for k in self.knots)
            if len(knots) != self.N:
                raise ValueError(f"expected knots for {self.N} nodes, got {len(knots)}")
            for k in knots:
                if k.size != self.n_knots:
                    raise ValueError(f"every node needs {self.n_knots} knots, got {k.size}")
            object.__setattr__(self, "knots", knots)

    @property
    def q(self) -> int:
        return max(self.q1, self.q2)

    @property
    def dimension(self) -> int:
        """Basis dimension M + K."""
        return self.order + self.n_knots

    @property
    def n_params(self) -> int:
        """Length of each per-node coefficient vector, 2(M+K)q."""
        return 2 * self.dimension * self.q

    @property
    def start(self) -> int:
        """Number of leading observations without a full lag history."""
        return max(self.q, self.threshold.lag)

    @property
    def bases(self) -> list[SplineBasis]:
        if self.knots is None:
            raise ValueError("knots are not resolved; call resolve_knots first")
        return [SplineBasis(self.order, k) for k in self.knots]

    def resolve_knots(self, U, start: Optional[int] = None) -> "FcnarSpec":
        """Place quantile knots from threshold values ``U`` (N x T)."""
        U = np.asarray(U, dtype=float)
        s = self.start if start is None else start
        lo, hi = self.knot_range
        if self.shared_knots:
            pooled = knots_from_quantiles(U[:, s:].reshape(-1), self.n_knots, lo, hi)
            knots = tuple(pooled.copy() for _ in range(self.N))
        else:
            knots = tuple(knots_from_quantiles(U[i, s:], self.n_knots, lo, hi) for i in range(self.N))
        return replace(self, knots=knots)

    def with_(self, **changes) -> "FcnarSpec":
        return replace(self, **changes)

    def to_dict(self, include_weights: bool = True) -> dict:
        d = {
            "N": self.N,
            "q1": self.q1,
            "q2": self.q2,
            "order": self.order,
            "n_knots": self.n_knots,
            "threshold": self.threshold.to_dict(),
            "knot_range": list(self.knot_range),
            "knots": None if self.knots is None else [k.tolist() for k in self.knots],
            "shared_knots": self.shared_knots,
        }
        if include_weights:
            d["W"] = self.W.W.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict, W=None) -> "FcnarSpec":
        W = d["W"] if W is None else W
        return cls(
            N=int(d["N"]),
            q1=int(d["q1"]),
            q2=int(d["q2"]),
            threshold=threshold_from_dict(d["threshold"]),
            W=W if isinstance(W, NetworkMatrix) else NetworkMatrix(np.asarray(W, dtype=float)),
            order=int(d["order"]),
            n_knots=int(d["n_knots"]),
            knots=None if d.get("knots") is None else tuple(np.asarray(k, dtype=float) for k in d["knots"]),
            knot_range=tuple(d.get("knot_range", (0.01, 0.99))),
            shared_knots=bool(d.get("shared_knots", False)),
        )


CoefFn = Callable[[np.ndarray], np.ndarray]


def zero_function(u):
    return np.zeros_like(np.asarray(u, dtype=float))


@dataclass
class CoefficientSet:
    """Coefficient functions ``a[i][j]`` (j < q1) and ``b[i][j]`` (j < q2).

    Entries are any vectorised callables; spline ``CoefficientFunction``
    objects and closed-form functions are both accepted.
    """

    a: list
    b: list

    @property
    def N(self) -> int:
        return len(self.a)

    @property
    def q1(self) -> int:
        return len(self.a[0]) if self.a else 0

    @property
    def q2(self) -> int:
        return len(self.b[0]) if self.b else 0

    def check(self, spec: FcnarSpec) -> None:
        if len(self.a) != spec.N or len(self.b) != spec.N:
            raise ValueError(f"coefficient set has {len(self.a)} nodes, spec has N={spec.N}")
        for i in range(spec.N):
            if len(self.a[i]) != spec.q1 or len(self.b[i]) != spec.q2:
                raise ValueError(
                    f"node {i}: expected {spec.q1} a-lags and {spec.q2} b-lags, "
                    f"got {len(self.a[i])} and {len(self.b[i])}"
                )

    @classmethod
    def homogeneous(cls, N: int, a_funcs: Sequence[CoefFn], b_funcs: Sequence[CoefFn]) -> "CoefficientSet":
        return cls([list(a_funcs) for _ in range(N)], [list(b_funcs) for _ in range(N)])

    def is_spline(self) -> bool:
        return all(
            isinstance(f, CoefficientFunction) for row in (*self.a, *self.b) for f in row
        )

    def evaluate(self, U, q: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
        """Coefficient values at thresholds ``U`` (shape (N, ...)).

        Returns ``(A, B)`` with shape ``(q,) + U.shape``; lags beyond q1 or
        q2 are zero-padded. Nodes sharing a function object are evaluated
        in one call.
        """
        U = np.asarray(U, dtype=float)
        q = max(self.q1, self.q2) if q is None else q
        A = np.zeros((q,) + U.shape)
        B = np.zeros((q,) + U.shape)
        for out, table in ((A, self.a), (B, self.b)):
            for j in range(q):
                groups: dict[int, tuple] = {}
                for i, row in enumerate(table):
                    if j < len(row):
                        f = row[j]
                        groups.setdefault(id(f), (f, []))[1].append(i)
                for f, nodes in groups.values():
                    out[j, nodes] = f(U[nodes])
        return A, B

    def sup_bounds(self, u_range: tuple, n_grid: int = SUP_GRID_POINTS,
                   inflation: float = SUP_INFLATION) -> tuple[np.ndarray, np.ndarray]:
        """Grid sup-norm bounds ``(a_bounds (N, q1), b_bounds (N, q2))``."""
        grid = np.linspace(u_range[0], u_range[1], n_grid)
        cache: dict[int, float] = {}

        def sup(f):
            key = id(f)
            if key not in cache:
                cache[key] = float(np.max(np.abs(f(grid)))) * inflation
            return cache[key]

        a_b = np.array([[sup(f) for f in row] for row in self.a]).reshape(self.N, self.q1)
        b_b = np.array([[sup(f) for f in row] for row in self.b]).reshape(self.N, self.q2)
        return a_b, b_b


def _as_bound_array(bounds, N: int, lags: int, name: str) -> np.ndarray:
    arr = np.asarray(bounds, dtype=float)
    if arr.ndim == 0:
        arr = np.full((N, lags), float(arr))
    elif arr.ndim == 1 and lags == 1 and arr.size == N:
        arr = arr.reshape(N, 1)
    if arr.shape != (N, lags):
        raise ValueError(f"{name} bounds must have shape ({N}, {lags}), got {arr.shape}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} bounds must be finite and nonnegative")
    return arr


def companion_matrix(G_blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Stack lag blocks ``[G_1 ... G_q]`` over identity subdiagonal blocks."""
    q = len(G_blocks)
    N = G_blocks[0].shape[0]
    C = np.zeros((N * q, N * q))
    for j, G in enumerate(G_blocks):
        C[:N, j * N:(j + 1) * N] = G
    for j in range(1, q):
        C[j * N:(j + 1) * N, (j - 1) * N:j * N] = np.eye(N)
    return C


def companion_bound_matrix(spec: FcnarSpec, a_bounds, b_bounds) -> np.ndarray:
    """The Nq x Nq bound matrix with top block row ``diag(a~_j) + diag(b~_j) W``."""
    N, q = spec.N, spec.q
    a_arr = _as_bound_array(a_bounds, N, spec.q1, "a") if spec.q1 else np.zeros((N, 0))
    b_arr = _as_bound_array(b_bounds, N, spec.q2, "b") if spec.q2 else np.zeros((N, 0))
    W = spec.W.W
    blocks = []
    for j in range(q):
        a_j = a_arr[:, j] if j < spec.q1 else np.zeros(N)
        b_j = b_arr[:, j] if j < spec.q2 else np.zeros(N)
        blocks.append(np.diag(a_j) + b_j[:, None] * W)
    return companion_matrix(blocks)


def spectral_radius(C: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Largest eigenvalue modulus.

    Dense eigensolver up to ``DENSE_EIG_LIMIT`` rows; above that, power
    iteration on ``C + I``. The shift assumes a nonnegative matrix (as the
    bound matrix always is), where it turns the Perron root into the unique
    dominant eigenvalue even for periodic patterns.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if n == 0:
        return 0.0
    if n <= DENSE_EIG_LIMIT:
        return float(np.max(np.abs(scipy.linalg.eigvals(C))))
    if np.any(C < 0):
        raise ValueError("power iteration path requires a nonnegative matrix")
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    for _ in range(max_iter):
        w = C @ v + v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        w /= norm
        new = float(w @ (C @ w) + 1.0)
        if abs(new - lam) <= tol * max(abs(new), 1.0):
            return new - 1.0
        lam, v = new, w
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


@dataclass(frozen=True)
class StabilityReport:
    rho: float
    stable: bool

    def to_dict(self) -> dict:
        return {"rho": self.rho, "stable": self.stable}


def stability_check(spec: FcnarSpec, a_bounds=None, b_bounds=None, *,
                    coeffs: Optional[CoefficientSet] = None,
                    u_range: Optional[tuple] = None) -> StabilityReport:
    """Spectral radius of the bound matrix and whether it is below one.

    Pass either explicit bounds or a ``CoefficientSet`` plus the threshold
    range over which to take grid sup-norms.
    """
    if coeffs is not None:
        if u_range is None:
            raise ValueError("u_range is required to bound coefficient functions")
        coeffs.check(spec)
        a_bounds, b_bounds = coeffs.sup_bounds(u_range)
    elif a_bounds is None or b_bounds is None:
        raise ValueError("pass both a_bounds and b_bounds, or coeffs")
    rho = spectral_radius(companion_bound_matrix(spec, a_bounds, b_bounds))
    return StabilityReport(rho=rho, stable=bool(rho < 1.0))
