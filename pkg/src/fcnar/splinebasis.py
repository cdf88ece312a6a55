"""Truncated-power spline bases used to expand the coefficient functions.

A basis of order ``M`` with knots ``k_1 < ... < k_K`` spans

    1, u, ..., u^(M-1), (u - k_1)_+^(M-1), ..., (u - k_K)_+^(M-1)

so a coefficient function is a dot product of ``M + K`` coefficients with
this vector.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


def truncated_power_basis(u, knots, order: int) -> np.ndarray:
    """Evaluate the truncated-power basis at every entry of ``u``.

    Returns an array of shape ``u.shape + (order + len(knots),)``.
    """
    u = np.asarray(u, dtype=float)
    knots = np.asarray(knots, dtype=float).reshape(-1)
    out = np.empty(u.shape + (order + knots.size,))
    out[..., 0] = 1.0
    for p in range(1, order):
        out[..., p] = out[..., p - 1] * u
    if knots.size:
        hinge = np.maximum(u[..., None] - knots, 0.0)
        if order == 1:
            # (x)_+^0 is taken as the step 1{x > 0}
            out[..., order:] = (hinge > 0).astype(float)
        else:
            out[..., order:] = hinge ** (order - 1)
    return out


@dataclass(frozen=True)
class SplineBasis:
    order: int
    knots: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"spline order must be a positive integer, got {self.order}")
        knots = np.array(self.knots, dtype=float).reshape(-1)
        if not np.all(np.isfinite(knots)):
            raise ValueError("knots must be finite")
        if knots.size > 1 and np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        knots.setflags(write=False)
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "knots", knots)

    @property
    def n_knots(self) -> int:
        return self.knots.size

    @property
    def dimension(self) -> int:
        return self.order + self.knots.size

    def eval(self, u) -> np.ndarray:
        """Basis vector(s) at ``u``; trailing axis has length ``dimension``."""
        return truncated_power_basis(u, self.knots, self.order)

    def to_dict(self) -> dict:
        return {"order": self.order, "knots": [float(k) for k in self.knots]}

    @classmethod
    def from_dict(cls, d: dict) -> "SplineBasis":
        return cls(order=int(d["order"]), knots=np.asarray(d.get("knots", []), dtype=float))

    def __eq__(self, other):
        if not isinstance(other, SplineBasis):
            return NotImplemented
        return self.order == other.order and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash((self.order, self.knots.tobytes()))


@dataclass(frozen=True)
class CoefficientFunction:
    """A spline-expanded coefficient function ``u -> coeffs . basis(u)``."""

    basis: SplineBasis
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        if coeffs.size != self.basis.dimension:
            raise ValueError(
                f"expected {self.basis.dimension} coefficients, got {coeffs.size}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def value(self, u):
        return self.basis.eval(u) @ self.coeffs

    __call__ = value


def make_strictly_increasing(knots) -> tuple[np.ndarray, int]:
    """Nudge tied or decreasing knots upward by the smallest float steps.

    Returns the adjusted knots and the number of knots that were moved.
    """
    knots = np.array(knots, dtype=float).reshape(-1)
    moved = 0
    for j in range(1, knots.size):
        if knots[j] <= knots[j - 1]:
            knots[j] = np.nextafter(knots[j - 1], np.inf)
            moved += 1
    return knots, moved


def knots_from_quantiles(samples, n_knots: int, lo: float = 0.01, hi: float = 0.99) -> np.ndarray:
    """Place ``n_knots`` knots evenly between the ``lo`` and ``hi`` sample quantiles.

    For two or more knots the end knots sit on the quantiles themselves; a
    single knot goes to their midpoint. Quantiles use linear interpolation
    (type 7). Ties are broken by ``make_strictly_increasing`` with a warning.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise ValueError("cannot place knots from an empty sample")
    if not (0.0 <= lo < hi <= 1.0):
        raise ValueError(f"need 0 <= lo < hi <= 1, got lo={lo}, hi={hi}")
    if n_knots < 0:
        raise ValueError("number of knots must be non-negative")
    if n_knots == 0:
        return np.empty(0)
    samples = samples[np.isfinite(samples)]
    if samples.size == 0:
        raise ValueError("no finite samples to place knots")
    q_lo, q_hi = np.quantile(samples, [lo, hi], method="linear")
    if n_knots == 1:
        return np.array([0.5 * (q_lo + q_hi)])
    if q_hi <= q_lo:
        raise ValueError(
            f"degenerate threshold support: {lo}- and {hi}-quantiles coincide at {q_lo}"
        )
    knots, moved = make_strictly_increasing(np.linspace(q_lo, q_hi, n_knots))
    if moved:
        warnings.warn(f"perturbed {moved} tied knot(s) to keep knots strictly increasing")
    return knots
