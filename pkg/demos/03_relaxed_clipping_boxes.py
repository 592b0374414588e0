"""
Shrinking a box against half-space constraints
==============================================

The relaxed clipping rule contracts one box coordinate at a time using
only interval arithmetic: for each coordinate of a constraint the other
coordinates are replaced by their worst case, which yields a closed-form
new bound.  Cheap, sound, and exact per coordinate for a single active
constraint.
"""

import numpy as np

from clipverify import (
    BoxDomain,
    ConstraintSet,
    LinearConstraint,
    lp_box_oracle,
    relaxed_clip_parallel,
    relaxed_clip_sequential,
    relaxed_clip_single,
)

box = BoxDomain(np.zeros(2), np.ones(2))
cons = LinearConstraint(np.array([1.0, 1.0]), -0.5)  # x1 + x2 <= 0.5

clipped = relaxed_clip_single(box, cons)
print("x1 + x2 <= 0.5 on the unit square ->", clipped.lower, clipped.upper)

# Per coordinate this is as tight as any box can be: compare with the
# exact extent of the feasible set along each axis.
cset = ConstraintSet.from_constraints([cons])
for i in range(2):
    e = np.zeros(2)
    e[i] = 1.0
    lo = lp_box_oracle(e, 0.0, box, cset, direction="min").value
    hi = lp_box_oracle(e, 0.0, box, cset, direction="max").value
    print(f"  axis {i}: exact extent [{lo}, {hi}]  clipped [{clipped.lower[i]}, {clipped.upper[i]}]")

# A constraint no box point satisfies produces an empty box, the signal
# that the subdomain can be discarded.
empty = relaxed_clip_single(box, LinearConstraint(np.array([1.0, 1.0]), 0.5))
print("infeasible constraint -> empty box:", empty.is_empty)

# With several constraints, parallel clipping intersects the single
# constraint boxes.  Sequential clipping applies them one at a time and
# works on the already-contracted box in between, which can only help,
# and the application order matters.
cset = ConstraintSet.from_constraints(
    [
        LinearConstraint(np.array([-1.0, 1.0]), -0.2),  # x2 <= x1 + 0.2
        LinearConstraint(np.array([1.0, 0.0]), -0.4),  # x1 <= 0.4
    ]
)
par = relaxed_clip_parallel(box, cset)
seq = relaxed_clip_sequential(box, cset, order="given")
cen = relaxed_clip_sequential(box, cset, order="centroid")
print("parallel        :", par.lower, par.upper)
print("sequential given:", seq.lower, seq.upper)
# centroid order applies the constraint cutting nearest the center first,
# here x1 <= 0.4, after which the other one can finally bite on x2
print("sequential near :", cen.lower, cen.upper)
assert np.all(seq.lower >= par.lower - 1e-12) and np.all(seq.upper <= par.upper + 1e-12)
assert np.all(cen.upper <= seq.upper + 1e-12)

# Soundness check: clipping never discards a feasible point.
rng = np.random.default_rng(1)
pts = rng.uniform(box.lower, box.upper, size=(50000, 2))
feas = pts[np.array([cset.satisfied(p) for p in pts])]
for name, cl in [("parallel", par), ("sequential", seq), ("centroid", cen)]:
    kept = np.all(feas >= cl.lower - 1e-12, axis=1) & np.all(feas <= cl.upper + 1e-12, axis=1)
    print(f"{name}: keeps {kept.sum()}/{feas.shape[0]} feasible samples")
    assert kept.all()
