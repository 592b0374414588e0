"""Constraint-driven tightening of linear bounds and boxes.

Two mechanisms, both driven by half-space constraints ``g . x + h <= 0``
known to hold on the region of interest:

* Complete clipping: sharpen the minimum of an affine objective over
  box-and-constraints by Lagrangian duality.  For a single constraint the
  dual is an exactly solvable concave piecewise-linear line search; several
  constraints are handled by coordinate ascent over their multipliers.
  The single-constraint solve is equivalent to a continuous knapsack
  problem, exposed through :func:`to_knapsack` / :func:`greedy_knapsack`.

* Relaxed clipping: shrink the box itself.  For one constraint the tightest
  axis-aligned enclosure of box-intersect-half-space has a closed form, one
  independent clip per coordinate.  Multiple constraints are applied either
  in parallel against the original box or sequentially with recomputed
  centers (order-dependent, usually tighter).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import (
    ZERO_COEFF_TOL,
    BoxDomain,
    FeasibilityStatus,
    GeometryError,
    LinearConstraint,
    centroid_distance,
    classify_constraint,
)


class DualStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE_PRIMAL = "infeasible_primal"


@dataclass
class DualSolution:
    """Outcome of a dual bound-tightening solve.

    ``bound`` is a valid bound on the constrained optimum (exact for a
    single constraint; a lower bound of the constrained minimum otherwise).
    ``beta`` holds the multiplier(s).  ``INFEASIBLE_PRIMAL`` means some
    constraint excludes the whole box, i.e. the subproblem is vacuous; the
    bound is then +inf for minima (-inf for maxima).  ``trace`` records the
    dual objective after every multiplier update.
    """

    bound: float
    beta: float | np.ndarray
    status: DualStatus
    trace: list = field(default_factory=list)


@dataclass
class ConstraintSet:
    """Stacked half-spaces ``normals @ x + offsets <= 0`` (conjunction)."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=float)
        self.offsets = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if self.normals.ndim == 1 and self.normals.size == 0:
            self.normals = self.normals.reshape(0, 1)
        if self.normals.ndim != 2:
            raise GeometryError("constraint normals must form a 2-D array")
        if self.offsets.shape != (self.normals.shape[0],):
            raise GeometryError("offsets length does not match constraint count")
        if self.normals.size and not np.isfinite(self.normals).all():
            raise GeometryError("constraint normals must be finite")
        if self.offsets.size and not np.isfinite(self.offsets).all():
            raise GeometryError("constraint offsets must be finite")

    @classmethod
    def empty(cls, dim: int) -> "ConstraintSet":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def from_constraints(cls, constraints, dim: int | None = None) -> "ConstraintSet":
        constraints = list(constraints)
        if not constraints:
            if dim is None:
                raise GeometryError("cannot infer dimension of an empty set")
            return cls.empty(dim)
        return cls(
            np.stack([c.normal for c in constraints]),
            np.array([c.offset for c in constraints]),
        )

    @property
    def size(self) -> int:
        return self.normals.shape[0]

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def row(self, k: int) -> LinearConstraint:
        return LinearConstraint(self.normals[k], self.offsets[k])

    def __iter__(self):
        return (self.row(k) for k in range(self.size))

    def appended(self, cons: LinearConstraint, budget: int | None = None) -> "ConstraintSet":
        """New set with ``cons`` added, keeping only the most recent ``budget``."""
        normals = np.vstack([self.normals, cons.normal[None, :]]) if self.size else cons.normal[None, :].copy()
        offsets = np.append(self.offsets, cons.offset)
        if budget is not None and normals.shape[0] > budget:
            normals = normals[-budget:]
            offsets = offsets[-budget:]
        return ConstraintSet(normals, offsets)

    def extended(self, other: "ConstraintSet", budget: int | None = None) -> "ConstraintSet":
        if other.size == 0:
            return self
        normals = np.vstack([self.normals, other.normals]) if self.size else other.normals.copy()
        offsets = np.concatenate([self.offsets, other.offsets])
        if budget is not None and normals.shape[0] > budget:
            normals = normals[-budget:]
            offsets = offsets[-budget:]
        return ConstraintSet(normals, offsets)

    def satisfied(self, x: np.ndarray, tol: float = 0.0) -> bool:
        if self.size == 0:
            return True
        return bool(np.all(self.normals @ np.asarray(x, dtype=float) + self.offsets <= tol))


@dataclass
class KnapsackInstance:
    """Continuous knapsack ``max r . y  s.t.  s . y <= t,  y in [0, 1]^n``."""

    gains: np.ndarray
    loads: np.ndarray
    capacity: float

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=float)
        self.loads = np.asarray(self.loads, dtype=float)
        self.capacity = float(self.capacity)
        if self.gains.shape != self.loads.shape or self.gains.ndim != 1:
            raise GeometryError("gains and loads must be matching 1-D arrays")


def dual_value(a, c, box: BoxDomain, cset: ConstraintSet, beta) -> float:
    """Lagrangian dual objective at multipliers ``beta`` (all >= 0).

    For the constrained minimum of ``a . x + c`` this is the box minimum of
    ``(a + beta @ G) . x + c + beta . h``; any nonnegative beta yields a
    valid lower bound of the constrained optimum.
    """
    a = np.asarray(a, dtype=float)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    shifted = a + beta @ cset.normals if cset.size else a
    mid = float(shifted @ box.center) - float(np.abs(shifted) @ box.radius)
    return mid + float(c) + float(beta @ cset.offsets)


def _line_search(a: np.ndarray, box: BoxDomain, g: np.ndarray, h: float) -> float:
    """Maximizer of the concave 1-D dual along one constraint's multiplier.

    The dual objective ``beta -> min_box (a + beta g) . x + beta h + const``
    is piecewise linear with kinks where a coordinate of ``a + beta g``
    changes sign, i.e. at ``beta = -a_j / g_j``.  Its slope on each piece is
    ``g . center + h`` minus/plus the half-width terms whose sign has
    settled, which decreases monotonically across sorted kinks; the maximum
    sits at the first kink where the slope becomes nonpositive.  The caller
    guarantees the constraint is ACTIVE for the box, which makes the start
    slope positive and the end slope nonpositive.
    """
    nz = g != 0.0
    q = -a[nz] / g[nz]
    order = np.argsort(q, kind="stable")
    spans = (np.abs(g[nz]) * box.radius[nz])[order]
    settled = np.cumsum(spans)
    pending = settled[-1] - settled
    slope_base = float(g @ box.center) + h
    grads = slope_base + pending - settled
    idx = int(np.argmax(grads <= 0.0))
    return max(float(q[order[idx]]), 0.0)


def tighten_lower_single(a, c, box: BoxDomain, cons: LinearConstraint) -> DualSolution:
    """Exact lower bound of ``a . x + c`` over box intersect one half-space.

    Solves the single-multiplier dual to optimality, which by strong duality
    (linear program over a compact box) equals the true constrained minimum.
    A constraint infeasible for the box yields ``INFEASIBLE_PRIMAL`` with a
    +inf bound (minimum over an empty set); a redundant one collapses to the
    plain box minimum at multiplier zero.
    """
    a = np.asarray(a, dtype=float)
    cset = ConstraintSet(cons.normal[None, :], np.array([cons.offset]))
    status = classify_constraint(box, cons)
    if status is FeasibilityStatus.INFEASIBLE:
        return DualSolution(np.inf, np.inf, DualStatus.INFEASIBLE_PRIMAL, [np.inf])
    if status is FeasibilityStatus.REDUNDANT:
        bound = dual_value(a, c, box, cset, 0.0)
        return DualSolution(bound, 0.0, DualStatus.OPTIMAL, [bound])
    beta = _line_search(a, box, cons.normal, cons.offset)
    bound = dual_value(a, c, box, cset, beta)
    return DualSolution(bound, beta, DualStatus.OPTIMAL, [bound])


def tighten_upper_single(a, c, box: BoxDomain, cons: LinearConstraint) -> DualSolution:
    """Exact upper counterpart: max over box intersect one half-space."""
    sol = tighten_lower_single(-np.asarray(a, dtype=float), -float(c), box, cons)
    return DualSolution(-sol.bound, sol.beta, sol.status, [-v for v in sol.trace])


def coordinate_ascent(a, c, box: BoxDomain, cset: ConstraintSet, passes: int = 1) -> DualSolution:
    """Lower-bound ``a . x + c`` over box intersect several half-spaces.

    Cycles over the constraints, solving each multiplier's 1-D dual exactly
    while the others stay fixed (the current multiplier's own contribution
    is removed from the effective objective before its line search).  Every
    update can only raise the concave dual objective, so the result is a
    monotone sequence of valid lower bounds; with one constraint and one
    pass it reproduces :func:`tighten_lower_single`.

    Constraints redundant for the box keep multiplier zero.  Any constraint
    infeasible for the box on its own makes the subproblem vacuous and
    short-circuits to ``INFEASIBLE_PRIMAL``.
    """
    a = np.asarray(a, dtype=float)
    if passes < 1:
        raise ValueError("passes must be at least 1")
    m = cset.size
    if m == 0:
        bound = dual_value(a, c, box, cset, np.zeros(0))
        return DualSolution(bound, np.zeros(0), DualStatus.OPTIMAL, [bound])

    active = []
    for k in range(m):
        status = classify_constraint(box, cset.row(k))
        if status is FeasibilityStatus.INFEASIBLE:
            return DualSolution(np.inf, np.full(m, np.inf), DualStatus.INFEASIBLE_PRIMAL, [np.inf])
        if status is FeasibilityStatus.ACTIVE:
            active.append(k)

    beta = np.zeros(m)
    trace = [dual_value(a, c, box, cset, beta)]
    for _ in range(passes):
        for k in active:
            rest = a + beta @ cset.normals - beta[k] * cset.normals[k]
            beta[k] = _line_search(rest, box, cset.normals[k], float(cset.offsets[k]))
            trace.append(dual_value(a, c, box, cset, beta))
    return DualSolution(trace[-1], beta, DualStatus.OPTIMAL, trace)


def to_knapsack(a, c, box: BoxDomain, cons: LinearConstraint) -> KnapsackInstance:
    """Rewrite the single-constraint minimum as a continuous knapsack.

    Substituting ``x = lower + 2 * radius * y`` with ``y in [0, 1]^n`` turns
    ``min a . x + c`` subject to ``g . x + h <= 0`` into ``a . lower + c -
    max r . y`` subject to ``s . y <= t`` with the returned coefficients.
    The greedy efficiency ratios ``r_j / s_j`` coincide with the kink
    locations of the dual line search.
    """
    a = np.asarray(a, dtype=float)
    if box.is_empty:
        raise GeometryError("knapsack reformulation requires a nonempty box")
    if a.shape != (box.dim,) or cons.dim != box.dim:
        raise GeometryError("dimension mismatch in knapsack reformulation")
    two_radius = 2.0 * box.radius
    gains = -two_radius * a
    loads = two_radius * cons.normal
    capacity = -(float(cons.normal @ box.lower) + cons.offset)
    return KnapsackInstance(gains, loads, capacity)


def greedy_knapsack(inst: KnapsackInstance) -> float:
    """Optimal value of a continuous knapsack with arbitrary-sign data.

    Start from the unconstrained maximizer (pick everything with positive
    gain), then, if the load exceeds capacity, buy back slack from the
    cheapest sources first: fractionally drop picked items with positive
    load, or fractionally add unpicked items with negative load.  Both move
    types cost ``gain / load`` per unit of slack, so one ascending sweep by
    that ratio is optimal.  Returns -inf when no assignment fits.
    """
    gains, loads, capacity = inst.gains, inst.loads, inst.capacity
    picked = gains > 0.0
    value = float(gains[picked].sum())
    load = float(loads[picked].sum())
    if load <= capacity:
        return value
    drop = picked & (loads > 0.0)
    add = ~picked & (loads < 0.0)
    excess = load - capacity
    # The deepest reachable load keeps only the negative-load items, so
    # infeasibility is decided up front rather than by loop fallthrough.
    if float(np.minimum(loads, 0.0).sum()) > capacity:
        return -np.inf
    idx = np.flatnonzero(drop | add)
    ratios = gains[idx] / loads[idx]
    order = idx[np.argsort(ratios, kind="stable")]
    for j in order:
        relief = abs(float(loads[j]))
        # Dropping a picked item loses its gain; adding an unpicked one
        # loses |gain| too (the gain is nonpositive).
        if excess <= relief:
            value -= (excess / relief) * abs(float(gains[j]))
            return value
        value -= abs(float(gains[j]))
        excess -= relief
    return value


def relaxed_clip_single(box: BoxDomain, cons: LinearConstraint) -> BoxDomain:
    """Tightest axis-aligned enclosure of box intersect one half-space.

    Per coordinate i with a nonzero coefficient, the extreme value of x_i
    over the intersection is reached when every other coordinate sits at its
    constraint-friendliest corner; solving ``g . x + h = 0`` there gives the
    clip level ``(-sum_{j != i} (g_j * center_j - |g_j| * radius_j) - h) /
    g_i``, an upper bound for ``g_i > 0`` and a lower bound for ``g_i < 0``.
    Zero coefficients leave their coordinate untouched.  The result can be
    empty; a constraint infeasible for the box always yields an empty box.
    """
    if box.is_empty:
        return box
    if cons.dim != box.dim:
        raise GeometryError("constraint dimension does not match box")
    status = classify_constraint(box, cons)
    if status is FeasibilityStatus.INFEASIBLE:
        return BoxDomain.empty(box.dim)
    if status is FeasibilityStatus.REDUNDANT:
        return box.copy()
    g = cons.normal
    terms = g * box.center - np.abs(g) * box.radius
    total = float(terms.sum())
    lower = box.lower.copy()
    upper = box.upper.copy()
    for i in range(box.dim):
        if abs(g[i]) < ZERO_COEFF_TOL:
            continue
        clip = (-(total - terms[i]) - cons.offset) / g[i]
        if g[i] > 0.0:
            upper[i] = min(upper[i], clip)
        else:
            lower[i] = max(lower[i], clip)
    return BoxDomain(lower, upper)


def relaxed_clip_parallel(box: BoxDomain, cset: ConstraintSet) -> BoxDomain:
    """Apply every constraint's closed-form clip against the original box.

    Equals the per-coordinate intersection of all single-constraint results,
    so the outcome does not depend on constraint order.
    """
    if box.is_empty or cset.size == 0:
        return box.copy()
    lower = box.lower.copy()
    upper = box.upper.copy()
    for cons in cset:
        clipped = relaxed_clip_single(box, cons)
        if clipped.is_empty:
            return BoxDomain.empty(box.dim)
        lower = np.maximum(lower, clipped.lower)
        upper = np.minimum(upper, clipped.upper)
    return BoxDomain(lower, upper)


def relaxed_clip_sequential(box: BoxDomain, cset: ConstraintSet, order: str = "given") -> BoxDomain:
    """Apply the constraints one at a time, re-centering after each clip.

    Later constraints see the already-shrunk box, so the result depends on
    the processing order and is never looser than the parallel variant on
    the same set.  ``order="given"`` keeps the stored order;
    ``order="centroid"`` sorts by ascending distance between the initial box
    center and each constraint plane (zero-normal rows go last).
    """
    if order not in ("given", "centroid"):
        raise GeometryError(f"unknown order {order!r}")
    if box.is_empty or cset.size == 0:
        return box.copy()
    indices = list(range(cset.size))
    if order == "centroid":
        dists = []
        for k in indices:
            row = cset.row(k)
            if np.abs(row.normal).max(initial=0.0) <= ZERO_COEFF_TOL:
                dists.append(np.inf)
            else:
                dists.append(centroid_distance(box, row))
        indices = list(np.argsort(np.asarray(dists), kind="stable"))
    current = box.copy()
    for k in indices:
        current = relaxed_clip_single(current, cset.row(k))
        if current.is_empty:
            return BoxDomain.empty(box.dim)
    return current
