"""Axis-aligned input boxes and affine half-space constraints.

Boxes are stored as (lower, upper) coordinate vectors.  A constraint is the
half-space ``g . x + h <= 0``.  Everything downstream (bound concretization,
clipping, branch and bound) reduces to a handful of primitives on these two
shapes, collected here.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

# Coefficients below this magnitude are treated as exact zeros when a
# division by the coefficient would otherwise occur.
ZERO_COEFF_TOL = 1e-15


class GeometryError(ValueError):
    """A geometric operation was called outside its contract."""


class EmptyBoxError(GeometryError):
    """The operation requires a nonempty box."""


class FeasibilityStatus(Enum):
    """How a half-space relates to a box.

    INFEASIBLE: no point of the box satisfies the constraint.
    REDUNDANT:  every point of the box satisfies it.
    ACTIVE:     the constraint cuts through the box.
    """

    INFEASIBLE = "infeasible"
    REDUNDANT = "redundant"
    ACTIVE = "active"


@dataclass
class BoxDomain:
    """Hyper-rectangle ``{x : lower <= x <= upper}``.

    The box is empty exactly when ``lower[i] > upper[i]`` for some i.  Empty
    boxes are legal values (clipping produces them to signal infeasibility)
    but most queries on them raise :class:`EmptyBoxError`.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.ndim != 1 or self.upper.ndim != 1:
            raise GeometryError("box bounds must be one-dimensional")
        if self.lower.shape != self.upper.shape:
            raise GeometryError("box bounds must have matching shapes")
        if self.lower.size == 0:
            raise GeometryError("box must have at least one dimension")
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise GeometryError("box bounds must be finite")

    @classmethod
    def empty(cls, dim: int) -> "BoxDomain":
        """Canonical empty box of the given dimension."""
        return cls(np.zeros(dim), np.full(dim, -1.0))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def is_empty(self) -> bool:
        return bool(np.any(self.lower > self.upper))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radius(self) -> np.ndarray:
        """Per-coordinate half-width (nonnegative iff the box is nonempty)."""
        return 0.5 * (self.upper - self.lower)

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != self.lower.shape:
            raise GeometryError("point dimension does not match box")
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def copy(self) -> "BoxDomain":
        return BoxDomain(self.lower.copy(), self.upper.copy())


@dataclass
class LinearConstraint:
    """Half-space ``normal . x + offset <= 0``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        self.normal = np.atleast_1d(np.asarray(self.normal, dtype=float))
        self.offset = float(self.offset)
        if self.normal.ndim != 1:
            raise GeometryError("constraint normal must be one-dimensional")
        if not (np.isfinite(self.normal).all() and np.isfinite(self.offset)):
            raise GeometryError("constraint coefficients must be finite")

    @property
    def dim(self) -> int:
        return self.normal.size

    def value(self, x: np.ndarray) -> float:
        return float(self.normal @ np.asarray(x, dtype=float) + self.offset)


def _check_box(box: BoxDomain, dim: int | None = None) -> None:
    if box.is_empty:
        raise EmptyBoxError("operation requires a nonempty box")
    if dim is not None and box.dim != dim:
        raise GeometryError(f"dimension mismatch: box has {box.dim}, expected {dim}")


def concretize(a: np.ndarray, c, box: BoxDomain, direction: str):
    """Extreme value of the affine function ``a . x + c`` over a box.

    Closed form via the center / half-width split of the box:
    min = a . center - |a| . radius + c, max = a . center + |a| . radius + c.

    Parameters
    ----------
    a : array, shape (n,) or (rows, n)
        Coefficient vector, or a stack of row vectors handled at once.
    c : float or array, shape (rows,)
        Constant term, one per row of `a`.
    box : BoxDomain
        Nonempty box to optimize over.
    direction : str
        Either ``"min"`` or ``"max"``.

    Returns
    -------
    float or ndarray
        Scalar for a single row, vector of extremes for a stack.
    """
    a = np.asarray(a, dtype=float)
    _check_box(box, a.shape[-1])
    if direction not in ("min", "max"):
        raise GeometryError(f"direction must be 'min' or 'max', got {direction!r}")
    mid = a @ box.center
    span = np.abs(a) @ box.radius
    if direction == "min":
        out = mid - span + np.asarray(c, dtype=float)
    else:
        out = mid + span + np.asarray(c, dtype=float)
    if a.ndim == 1:
        return float(out)
    return out


def classify_constraint(box: BoxDomain, cons: LinearConstraint) -> FeasibilityStatus:
    """Classify a half-space against a box.

    The extreme values of ``g . x + h`` over the box decide the status:
    a positive minimum means no box point satisfies the constraint, a
    nonpositive maximum means all of them do.
    """
    _check_box(box, cons.dim)
    mid = float(cons.normal @ box.center) + cons.offset
    span = float(np.abs(cons.normal) @ box.radius)
    if mid - span > 0.0:
        return FeasibilityStatus.INFEASIBLE
    if mid + span <= 0.0:
        return FeasibilityStatus.REDUNDANT
    return FeasibilityStatus.ACTIVE


def centroid_distance(box: BoxDomain, cons: LinearConstraint) -> float:
    """Euclidean distance from the box center to the constraint hyperplane.

    Used to order constraints so that planes cutting closest to the bulk of
    the box are applied first.  Undefined for a zero normal.
    """
    _check_box(box, cons.dim)
    norm = float(np.linalg.norm(cons.normal))
    if norm <= ZERO_COEFF_TOL:
        raise GeometryError("centroid distance undefined for zero normal")
    return abs(float(cons.normal @ box.center) + cons.offset) / norm
