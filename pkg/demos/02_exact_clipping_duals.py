"""
Exact single-constraint tightening and its knapsack twin
========================================================

Minimizing an affine objective over a box intersected with one half-space
has a closed-form dual: a concave piecewise-linear function of a single
multiplier whose kinks can be sorted and walked.  This script classifies
constraints against a box, solves the dual exactly, shows the equivalent
continuous knapsack, and runs coordinate ascent when several constraints
pile up.
"""

import numpy as np

from clipverify import (
    BoxDomain,
    ConstraintSet,
    DualStatus,
    FeasibilityStatus,
    LinearConstraint,
    classify_constraint,
    coordinate_ascent,
    dual_value,
    greedy_knapsack,
    lp_box_oracle,
    tighten_lower_single,
    to_knapsack,
)

box = BoxDomain(np.array([-1.0, -2.0]), np.array([2.0, 1.0]))
a = np.array([-7.0 / 18.0, -121.0 / 18.0])  # objective a @ x + c
c = 13.0 / 3.0

plain = float(a @ box.center) - float(np.abs(a) @ box.radius) + c
print("unconstrained box minimum:", plain)

# A constraint can be cut by the box three ways.
for g, h in [([1.0, -7.0], 6.0), ([0.0, 1.0], -3.0), ([0.0, -1.0], -3.0)]:
    cons = LinearConstraint(np.array(g), h)
    print(g, h, "->", classify_constraint(box, cons).value)

# Exact dual solve for the active constraint.  The optimal multiplier is
# found by walking the sorted kinks of the dual derivative.
cons = LinearConstraint(np.array([1.0, -7.0]), 6.0)
sol = tighten_lower_single(a, c, box, cons)
print("exact constrained bound:", sol.bound, " beta*:", sol.beta)
assert sol.status is DualStatus.OPTIMAL

# The dual is concave in beta; a grid scan peaks at beta*.
grid = np.linspace(0.0, 3.0, 13)
vals = [dual_value(a, c, box, ConstraintSet.from_constraints([cons]), np.array([b])) for b in grid]
for b, v in zip(grid, vals):
    marker = " <- best" if v == max(vals) else ""
    print(f"  beta={b:5.2f}  dual={v: .6f}{marker}")

# Same solve, rephrased: pick fractional items with positive gain subject
# to a capacity.  The greedy packing value equals the dual optimum.
inst = to_knapsack(a, c, box, cons)
lo = float(a @ box.lower) + c
packed = greedy_knapsack(inst)
print("knapsack gains:", inst.gains, " loads:", inst.loads, " capacity:", inst.capacity)
print("bound via knapsack:", lo - packed if np.isfinite(packed) else float("inf"))

# Cross-check against the exhaustive vertex-enumeration LP.
oracle = lp_box_oracle(a, c, box, ConstraintSet.from_constraints([cons]))
print("LP oracle:", oracle.value, "at", oracle.witness)
assert abs(oracle.value - sol.bound) < 1e-9

# With several constraints there is no closed form, but cycling the exact
# single-constraint solve over the multipliers climbs the joint dual.
cset = ConstraintSet.from_constraints(
    [
        cons,
        LinearConstraint(np.array([0.0, 1.0]), -0.9),  # x2 <= 0.9
        LinearConstraint(np.array([0.0, -1.0]), 0.0),  # x2 >= 0
    ]
)
multi = coordinate_ascent(a, c, box, cset, passes=3)
print("coordinate ascent trace:", [round(t, 6) for t in multi.trace])
print("joint dual bound:", multi.bound, " beta:", multi.beta)
assert all(s <= t + 1e-12 for s, t in zip(multi.trace, multi.trace[1:]))

joint = lp_box_oracle(a, c, box, cset)
print("joint LP optimum:", joint.value, " (ascent never exceeds it)")
assert multi.bound <= joint.value + 1e-9
