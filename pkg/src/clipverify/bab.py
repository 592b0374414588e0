"""Branch and bound drivers coupling bound propagation with clipping.

Two refinement strategies over the canonical problem "every output row
nonnegative over the box":

* input splitting: bisect the widest box coordinate.  Each bounding pass
  leaves behind the final-layer lower planes of rows it could not verify;
  the half-space where such a plane is negative is the only part of the
  subdomain that can still hide a counterexample, so children are clipped
  against those planes and critical neurons are re-tightened against them.

* activation splitting: pin the unstable ReLU with the highest branching
  score to each of its two sides.  Every pin yields a sound input-space
  half-space (from the neuron's cached bounding planes) that feeds the same
  clipping machinery.

Subdomains live in a worst-bound-first queue; work proceeds in batches with
a wall-clock timeout between batches.  Candidate counterexamples are checked
by exact forward evaluation, so a "falsified" verdict is always certified.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from heapq import heappop, heappush

import numpy as np

from .clipping import (
    ConstraintSet,
    DualStatus,
    coordinate_ascent,
    relaxed_clip_parallel,
    relaxed_clip_sequential,
)
from .crown import (
    AlphaPolicy,
    BoundingPlanes,
    BoundsResult,
    InfeasibleSplitError,
    compute_bounds,
)
from .geometry import BoxDomain, LinearConstraint
from .network import CanonicalProblem

# Split constraints kept per subdomain in activation mode (most recent win).
CONSTRAINT_BUDGET = 16
# Random points (plus the center) evaluated per surviving child domain.
FALSIFY_SAMPLES = 8
# Boxes narrower than this in every coordinate are treated as points.
POINT_RADIUS_TOL = 1e-14


@dataclass(frozen=True)
class SplitAssignment:
    """One ReLU pin: neuron (layer, index) forced to a side of split_point.

    Polarity +1 keeps the active side (pre-activation >= split_point), -1
    the inactive side.  Only split_point 0.0 is supported by the engine.
    """

    layer: int
    neuron: int
    polarity: int
    split_point: float = 0.0

    def __post_init__(self):
        if self.polarity not in (-1, 1):
            raise ValueError("polarity must be +1 or -1")


@dataclass
class BabConfig:
    mode: str = "input"  # "input" | "activation"
    clip: str = "both"  # "none" | "relaxed" | "complete" | "both"
    sequential_clip: bool = False
    reorder: bool = False
    topk: int = 20
    batch: int = 8
    passes: int = 1
    timeout: float = 60.0
    alpha: AlphaPolicy = field(default_factory=AlphaPolicy.fixed)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("input", "activation"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.clip not in ("none", "relaxed", "complete", "both"):
            raise ValueError(f"unknown clip setting {self.clip!r}")
        if self.topk < 1 or self.batch < 1 or self.passes < 1:
            raise ValueError("topk, batch and passes must be positive")
        if self.timeout < 0:
            raise ValueError("timeout must be nonnegative")


@dataclass
class Subdomain:
    """One open region of the search: a box plus everything known about it.

    ``splits`` maps (layer, neuron) to the pinned polarity.  ``constraints``
    are input-space half-spaces valid for any counterexample inside the box.
    ``planes`` caches the most recent bounding pass touching this region
    (the parent's until the node is bounded itself).  ``overrides`` carries
    accumulated neuron-interval tightenings (NaN entries mean untouched).
    """

    box: BoxDomain
    splits: dict
    constraints: ConstraintSet
    bound: float
    depth: int = 0
    planes: BoundsResult | None = None
    overrides: list | None = None
    path: tuple = ()


@dataclass
class BabStats:
    domains_visited: int = 0
    max_depth: int = 0
    wall_time: float = 0.0
    bound_history: list = field(default_factory=list)


@dataclass
class VerificationOutcome:
    status: str  # "verified" | "falsified" | "unknown"
    counterexample: np.ndarray | None
    value: float | None
    bound: float | None
    stats: BabStats


@dataclass
class BranchProbe:
    """Test instrumentation: record or replay branching decisions.

    ``decisions`` maps a node's path (tuple of child indices from the root)
    to the branching choice taken there; input mode records the cut as a
    (dimension, coordinate) pair.  ``intervals`` maps paths to the
    per-layer (lower, upper) bound arrays seen when the node was bounded.
    When ``replay`` is set, input-mode runs take the recorded cut instead
    of their own choice wherever the path is present, so two runs explore
    nested regions and their bounds become directly comparable.
    """

    replay: dict | None = None
    decisions: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)

    def record_bounds(self, path, res: BoundsResult):
        self.intervals[path] = [
            (lb.lower.copy(), lb.upper.copy()) for lb in res.layer_bounds
        ]


def babsr_intercept_score(lower, upper, mean_coeff) -> np.ndarray:
    """Branching priority of each neuron in a layer.

    Estimates how much of the relaxation's slack at a neuron the final
    objective actually feels: the upper-envelope intercept ``max(0, -l) *
    max(0, u) / (u - l)`` weighted by the (clamped) mean backward
    coefficient the objective places on the neuron.  Stable neurons and
    zero-width intervals score zero.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if mean_coeff is None:
        mean_coeff = np.zeros_like(lower)
    mean_coeff = np.asarray(mean_coeff, dtype=float)
    width = upper - lower
    safe = np.where(width > 0.0, width, 1.0)
    intercept = np.maximum(0.0, -lower) * np.maximum(0.0, upper) / safe
    score = intercept * np.maximum(0.0, -mean_coeff)
    return np.where(width > 0.0, score, 0.0)


def select_topk(scores: np.ndarray, k: int, eligible=None) -> np.ndarray:
    """Indices of the k best-scoring eligible neurons, ties to lower index."""
    scores = np.asarray(scores, dtype=float)
    idx = np.arange(scores.size) if eligible is None else np.flatnonzero(eligible)
    if idx.size == 0 or k <= 0:
        return np.zeros(0, dtype=int)
    order = idx[np.lexsort((idx, -scores[idx]))]
    return order[: min(k, order.size)]


def final_plane_to_constraint(planes: BoundingPlanes, row: int) -> LinearConstraint:
    """Half-space containing every point where an output row can be negative.

    The row's lower plane satisfies ``plane(x) <= row(x)``, so ``row(x) < 0``
    forces ``plane(x) < 0``; the returned constraint ``plane(x) <= 0`` keeps
    all potential counterexamples of that row.
    """
    return LinearConstraint(planes.a_low[row].copy(), float(planes.c_low[row]))


def split_constraint_to_input(planes: BoundingPlanes, assignment: SplitAssignment) -> LinearConstraint:
    """Sound input-space condition implied by a ReLU pin.

    Pinning active means the pre-activation is >= 0, which its cached upper
    plane must allow; pinning inactive likewise needs the lower plane <= 0.
    Both are necessary conditions, so clipping with them never removes a
    point of the pinned region.
    """
    if assignment.split_point != 0.0:
        raise ValueError("only split_point 0.0 is supported")
    j = assignment.neuron
    if assignment.polarity > 0:
        return LinearConstraint(-planes.a_up[j].copy(), -float(planes.c_up[j]))
    return LinearConstraint(planes.a_low[j].copy(), float(planes.c_low[j]))


def branch_input(sub: Subdomain, dim: int | None = None, at: float | None = None):
    """Bisect the box along ``dim`` (default: widest, ties to lowest index)
    at ``at`` (default: the midpoint, clamped into the box when given).

    Children inherit splits, constraints, cached planes and overrides.
    """
    radius = sub.box.radius
    if float(radius.max()) <= 0.0:
        raise ValueError("cannot branch a zero-volume box")
    if dim is None:
        dim = int(np.argmax(radius))
    if at is None:
        mid = float(sub.box.center[dim])
    else:
        mid = float(min(max(at, sub.box.lower[dim]), sub.box.upper[dim]))
    lo_box = sub.box.copy()
    lo_box.upper[dim] = mid
    hi_box = sub.box.copy()
    hi_box.lower[dim] = mid
    children = []
    for side, box in enumerate((lo_box, hi_box)):
        children.append(
            replace(
                sub,
                box=box,
                splits=dict(sub.splits),
                depth=sub.depth + 1,
                path=sub.path + (side,),
            )
        )
    return children[0], children[1], (dim, mid)


def branch_activation(sub: Subdomain, pick: tuple):
    """Split a subdomain on one unstable neuron; returns (active, inactive).

    Each child pins the neuron to one side, records the pin in ``splits``
    and appends the implied input half-space (from the subdomain's cached
    planes) to its constraint set under the recency budget.
    """
    layer, neuron = pick
    if (layer, neuron) in sub.splits:
        raise ValueError(f"neuron ({layer}, {neuron}) is already assigned")
    if sub.planes is None:
        raise ValueError("subdomain has no cached bounding planes to split with")
    lb = sub.planes.layer_bounds[layer]
    if not (lb.lower[neuron] < 0.0 < lb.upper[neuron]):
        raise ValueError(f"neuron ({layer}, {neuron}) is not unstable here")
    children = []
    for side, polarity in enumerate((1, -1)):
        assignment = SplitAssignment(layer, neuron, polarity)
        cons = split_constraint_to_input(sub.planes.planes[layer], assignment)
        children.append(
            replace(
                sub,
                splits={**sub.splits, (layer, neuron): polarity},
                constraints=sub.constraints.appended(cons, budget=CONSTRAINT_BUDGET),
                depth=sub.depth + 1,
                path=sub.path + (side,),
            )
        )
    return children[0], children[1]


def _worker_count(batch: int) -> int:
    env = os.environ.get("CLIPVERIFY_THREADS", "")
    try:
        cap = int(env) if env else (os.cpu_count() or 1)
    except ValueError:
        cap = 1
    return max(1, min(cap, batch))


def _map_ordered(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _critical_neurons(problem, cfg: BabConfig, info: BoundsResult | None, splits: dict):
    """Top-k unstable, unassigned neurons per layer by branching score."""
    if info is None:
        return {}
    out = {}
    for i in range(problem.model.num_layers - 1):
        lb = info.layer_bounds[i]
        unstable = (lb.lower < 0.0) & (lb.upper > 0.0)
        for (li, j), _ in splits.items():
            if li == i:
                unstable[j] = False
        if not unstable.any():
            continue
        scores = babsr_intercept_score(lb.lower, lb.upper, info.objective_coeffs[i])
        idx = select_topk(scores, cfg.topk, unstable)
        if idx.size:
            out[i] = idx
    return out


def _bound_node(problem, cfg: BabConfig, box, splits, cset: ConstraintSet, overrides, score_info):
    """One bounding pass over a region, with in-pass complete clipping.

    When complete clipping is enabled and constraints exist, each layer's
    freshly computed bounds are tightened for the critical neurons by
    coordinate ascent over the constraint set before the layer's relaxation
    is built (the final layer tightens its still-unverified rows).  Returns
    the pass result plus the per-layer refinements applied (NaN = none).
    Raises InfeasibleSplitError when the region is provably empty.
    """
    refinements = {}
    refine = None
    last = problem.model.num_layers - 1
    if cfg.clip in ("complete", "both") and cset.size:
        criticals = _critical_neurons(problem, cfg, score_info, splits)

        def refine(i, planes, lower, upper):
            if i == last:
                idxs = np.flatnonzero(lower < 0.0)
            else:
                idxs = criticals.get(i, np.zeros(0, dtype=int))
            if idxs.size == 0:
                return lower, upper
            lower = lower.copy()
            upper = upper.copy()
            lo_ref = np.full(lower.size, np.nan)
            hi_ref = np.full(upper.size, np.nan)
            for j in idxs:
                sol = coordinate_ascent(
                    planes.a_low[j], float(planes.c_low[j]), box, cset, cfg.passes
                )
                if sol.status is DualStatus.INFEASIBLE_PRIMAL:
                    raise InfeasibleSplitError("constraints exclude the whole box")
                if sol.bound > lower[j]:
                    lower[j] = lo_ref[j] = sol.bound
                if i != last:
                    sol_up = coordinate_ascent(
                        -planes.a_up[j], -float(planes.c_up[j]), box, cset, cfg.passes
                    )
                    new_up = -sol_up.bound
                    if new_up < upper[j]:
                        upper[j] = hi_ref[j] = new_up
            refinements[i] = (lo_ref, hi_ref)
            return lower, upper

    res = compute_bounds(problem.model, box, cfg.alpha, splits, overrides, refine)
    return res, refinements


def _merge_overrides(base, refinements, n_layers: int):
    """Fold refinement arrays into an override list (NaN entries inert)."""
    if not refinements:
        return base
    merged = list(base) if base is not None else [None] * n_layers
    while len(merged) < n_layers:
        merged.append(None)
    for i, (lo_ref, hi_ref) in refinements.items():
        if np.all(np.isnan(lo_ref)) and np.all(np.isnan(hi_ref)):
            continue
        if merged[i] is None:
            merged[i] = (lo_ref, hi_ref)
        else:
            old_lo, old_hi = merged[i]
            new_lo = lo_ref if old_lo is None else np.fmax(old_lo, lo_ref)
            new_hi = hi_ref if old_hi is None else np.fmin(old_hi, hi_ref)
            merged[i] = (new_lo, new_hi)
    return merged


def _clip_box(cfg: BabConfig, box: BoxDomain, cset: ConstraintSet) -> BoxDomain:
    if cfg.clip not in ("relaxed", "both") or cset.size == 0 or box.is_empty:
        return box
    if cfg.sequential_clip:
        return relaxed_clip_sequential(box, cset, "centroid" if cfg.reorder else "given")
    return relaxed_clip_parallel(box, cset)


def _try_falsify(problem: CanonicalProblem, box: BoxDomain, rng) -> tuple | None:
    """Evaluate the center plus a few random points; certify any hit."""
    pts = box.center[None, :]
    if float(box.radius.max()) > 0.0:
        pts = np.vstack(
            [pts, rng.uniform(box.lower, box.upper, size=(FALSIFY_SAMPLES, box.dim))]
        )
    vals = problem.model.evaluate(pts).min(axis=1)
    j = int(np.argmin(vals))
    if vals[j] < 0.0:
        return float(vals[j]), pts[j].copy()
    return None


def _quick_child_bound(planes: BoundingPlanes, box: BoxDomain) -> float:
    """Cheapest sound bound for a child: parent planes over the child box."""
    mid = planes.a_low @ box.center + planes.c_low
    span = np.abs(planes.a_low) @ box.radius
    return float((mid - span).min())


def _queue_min(heap) -> float:
    return heap[0][0] if heap else np.inf


def _outcome(status, stats, t0, counterexample=None, value=None, bound=None):
    stats.wall_time = time.perf_counter() - t0
    return VerificationOutcome(status, counterexample, value, bound, stats)


def input_bab(problem: CanonicalProblem, cfg: BabConfig, probe: BranchProbe | None = None) -> VerificationOutcome:
    """Verify by input splitting (see module docstring).

    Subdomains are popped worst bound first; each pop costs one bounding
    pass with complete clipping against the planes inherited from its
    ancestors, then the box is bisected and both children are clipped
    against those planes, screened by cheap plane bounds, and probed for
    counterexamples before entering the queue.
    """
    if cfg.mode != "input":
        raise ValueError("config mode is not 'input'")
    t0 = time.perf_counter()
    deadline = t0 + cfg.timeout
    rng = np.random.default_rng(cfg.seed)
    stats = BabStats()
    workers = _worker_count(cfg.batch)

    heap = []
    counter = 0
    root = Subdomain(
        problem.box, {}, ConstraintSet.empty(problem.box.dim), -np.inf, 0, None, None, ()
    )
    heappush(heap, (root.bound, counter, root))
    counter += 1
    verified_floor = np.inf

    def bound_one(sub: Subdomain):
        try:
            return _bound_node(
                problem, cfg, sub.box, {}, sub.constraints, sub.overrides, sub.planes
            )
        except InfeasibleSplitError:
            return None

    while heap:
        if time.perf_counter() >= deadline:
            qmin = _queue_min(heap)
            return _outcome(
                "unknown", stats, t0, bound=None if np.isinf(qmin) else float(qmin)
            )
        batch = [heappop(heap)[2] for _ in range(min(cfg.batch, len(heap)))]
        results = _map_ordered(bound_one, batch, workers)
        for sub, outcome in zip(batch, results):
            stats.domains_visited += 1
            stats.max_depth = max(stats.max_depth, sub.depth)
            if outcome is None:
                continue  # region proved empty: verified by infeasibility
            res, refinements = outcome
            if probe is not None:
                probe.record_bounds(sub.path, res)
            fresh = float(res.final_lower.min())
            node_bound = fresh if np.isinf(sub.bound) else max(sub.bound, fresh)
            if node_bound >= 0.0:
                verified_floor = min(verified_floor, node_bound)
                continue
            if float(sub.box.radius.max()) < POINT_RADIUS_TOL:
                val = problem.value(sub.box.center)
                if val < 0.0:
                    return _outcome(
                        "falsified", stats, t0, sub.box.center.copy(), float(val)
                    )
                verified_floor = min(verified_floor, val)
                continue
            # Planes of still-unverified rows describe where a counterexample
            # can hide.  With several rows open at once their half-spaces may
            # not be stacked (a point can violate one row while clearing
            # another), so harvest only a lone open row.
            unverified = np.flatnonzero(res.final_lower < 0.0)
            new_cset = sub.constraints
            if unverified.size == 1:
                new_cset = new_cset.appended(
                    final_plane_to_constraint(res.planes[-1], int(unverified[0]))
                )
            overrides = _merge_overrides(
                sub.overrides, refinements, problem.model.num_layers
            )
            carrier = replace(
                sub, constraints=new_cset, planes=res, overrides=overrides, bound=node_bound
            )
            forced_dim = forced_at = None
            if probe is not None and probe.replay is not None:
                recorded = probe.replay.get(sub.path)
                if recorded is not None:
                    forced_dim, forced_at = recorded
            lo_child, hi_child, cut = branch_input(carrier, forced_dim, forced_at)
            if probe is not None:
                probe.decisions[sub.path] = cut
            for child in (lo_child, hi_child):
                cbox = _clip_box(cfg, child.box, child.constraints)
                if cbox.is_empty:
                    continue  # verified by infeasibility
                cbound = max(node_bound, _quick_child_bound(res.planes[-1], cbox))
                if cbound >= 0.0:
                    verified_floor = min(verified_floor, cbound)
                    continue
                hit = _try_falsify(problem, cbox, rng)
                if hit is not None:
                    return _outcome("falsified", stats, t0, hit[1], hit[0])
                heappush(heap, (cbound, counter, replace(child, box=cbox, bound=cbound)))
                counter += 1
        if heap:
            stats.bound_history.append(float(_queue_min(heap)))
    bound = None if np.isinf(verified_floor) else float(verified_floor)
    return _outcome("verified", stats, t0, bound=bound)


def activation_bab(problem: CanonicalProblem, cfg: BabConfig, probe: BranchProbe | None = None) -> VerificationOutcome:
    """Verify by ReLU splitting (see module docstring).

    The root is bounded once; afterwards every popped subdomain branches on
    its best-scoring unstable neuron (falling back to an input bisection
    when none is left), children inherit the accumulated split constraints,
    are clipped and re-bounded immediately, and survivors enter the queue.
    """
    if cfg.mode != "activation":
        raise ValueError("config mode is not 'activation'")
    t0 = time.perf_counter()
    deadline = t0 + cfg.timeout
    rng = np.random.default_rng(cfg.seed)
    stats = BabStats()
    workers = _worker_count(2 * cfg.batch)

    if time.perf_counter() >= deadline:
        return _outcome("unknown", stats, t0)

    empty_cset = ConstraintSet.empty(problem.box.dim)
    res, _ = _bound_node(problem, cfg, problem.box, {}, empty_cset, None, None)
    stats.domains_visited = 1
    if probe is not None:
        probe.record_bounds((), res)
    root_bound = float(res.final_lower.min())
    if root_bound >= 0.0:
        return _outcome("verified", stats, t0, bound=root_bound)

    heap = []
    counter = 0
    root = Subdomain(problem.box, {}, empty_cset, root_bound, 0, res, None, ())
    heappush(heap, (root_bound, counter, root))
    counter += 1
    verified_floor = np.inf

    def expand(sub: Subdomain):
        """Branch one subdomain and bound its children (thread-safe part)."""
        pick = _pick_branch_neuron(sub)
        if pick is not None:
            children = list(branch_activation(sub, pick))
            decision = pick
        else:
            if float(sub.box.radius.max()) < POINT_RADIUS_TOL:
                return ("point", sub.box.center.copy())
            lo_child, hi_child, cut = branch_input(sub)
            children = [lo_child, hi_child]
            decision = ("input",) + cut
        records = []
        for child in children:
            cbox = _clip_box(cfg, child.box, child.constraints)
            if cbox.is_empty:
                records.append(("infeasible", None, False))
                continue
            try:
                child_res, refinements = _bound_node(
                    problem, cfg, cbox, child.splits, child.constraints,
                    child.overrides, sub.planes,
                )
            except InfeasibleSplitError:
                records.append(("infeasible", None, True))
                continue
            cbound = max(sub.bound, float(child_res.final_lower.min()))
            child = replace(
                child,
                box=cbox,
                bound=cbound,
                planes=child_res,
                overrides=_merge_overrides(
                    child.overrides, refinements, problem.model.num_layers
                ),
            )
            records.append(("bounded", child, True))
        return ("children", decision, records)

    while heap:
        if time.perf_counter() >= deadline:
            qmin = _queue_min(heap)
            return _outcome(
                "unknown", stats, t0, bound=None if np.isinf(qmin) else float(qmin)
            )
        batch = [heappop(heap)[2] for _ in range(min(cfg.batch, len(heap)))]
        expansions = _map_ordered(expand, batch, workers)
        for sub, result in zip(batch, expansions):
            if result[0] == "point":
                val = problem.value(result[1])
                if val < 0.0:
                    return _outcome("falsified", stats, t0, result[1], float(val))
                verified_floor = min(verified_floor, val)
                continue
            _, decision, records = result
            if probe is not None:
                probe.decisions[sub.path] = decision
            for kind, child, visited in records:
                if visited:
                    stats.domains_visited += 1
                    stats.max_depth = max(stats.max_depth, sub.depth + 1)
                if kind == "infeasible":
                    continue
                if probe is not None:
                    probe.record_bounds(child.path, child.planes)
                if child.bound >= 0.0:
                    verified_floor = min(verified_floor, child.bound)
                    continue
                hit = _try_falsify(problem, child.box, rng)
                if hit is not None:
                    return _outcome("falsified", stats, t0, hit[1], hit[0])
                heappush(heap, (child.bound, counter, child))
                counter += 1
        if heap:
            stats.bound_history.append(float(_queue_min(heap)))
    bound = None if np.isinf(verified_floor) else float(verified_floor)
    return _outcome("verified", stats, t0, bound=bound)


def _pick_branch_neuron(sub: Subdomain):
    """Highest-scoring unstable, unassigned neuron; ties to lowest (layer, j)."""
    info = sub.planes
    if info is None:
        return None
    best = None
    best_score = -np.inf
    for i in range(len(info.layer_bounds) - 1):
        lb = info.layer_bounds[i]
        unstable = (lb.lower < 0.0) & (lb.upper > 0.0)
        for (li, j) in sub.splits:
            if li == i:
                unstable[j] = False
        if not unstable.any():
            continue
        scores = babsr_intercept_score(lb.lower, lb.upper, info.objective_coeffs[i])
        for j in np.flatnonzero(unstable):
            if scores[j] > best_score:
                best_score = float(scores[j])
                best = (i, int(j))
    return best


def run_bab(problem: CanonicalProblem, cfg: BabConfig, probe: BranchProbe | None = None) -> VerificationOutcome:
    """Dispatch to the configured search mode."""
    if cfg.mode == "input":
        return input_bab(problem, cfg, probe)
    return activation_bab(problem, cfg, probe)
