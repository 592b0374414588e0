"""
Bounding a tiny ReLU network by hand-checkable steps
====================================================

A 2-2-1 network small enough to check by hand: propagate linear bounds
through it, read off the certified lower bound, compare with the exact
minimum, then watch a single half-space constraint shrink the input box
and tighten the recomputed bound.
"""

import numpy as np

from clipverify import (
    AffineLayer,
    BoxDomain,
    CanonicalProblem,
    LinearConstraint,
    NetworkModel,
    compute_bounds,
    exact_verify,
    relaxed_clip_single,
)

# The network: f(x) = relu(x W1^T + b1) w2^T.
model = NetworkModel(
    [
        AffineLayer(np.array([[1.0, -7.0], [5.0, -1.0]]), np.array([6.0, -7.0])),
        AffineLayer(np.array([[1.0, -1.0]]), np.array([0.0])),
    ]
)
box = BoxDomain(np.array([-1.0, -2.0]), np.array([2.0, 1.0]))
problem = CanonicalProblem(model, box, num_rows=1)

print("input box :", box.lower, "to", box.upper)

# Backward linear bound propagation gives, for every layer, a pair of
# affine planes in the input that sandwich the pre-activation values.
res = compute_bounds(model, box)
hidden = res.layer_bounds[0]
print("hidden pre-activation bounds:")
print("  lower:", hidden.lower)  # [-2, -13]
print("  upper:", hidden.upper)  # [22, 5]

# Both hidden neurons cross zero, so each gets a relaxed envelope and the
# final output plane is a sound under-approximation of f.
planes = res.planes[-1]
print("final lower plane: f(x) >=", planes.a_low[0], "@ x +", planes.c_low[0])
print("certified lower bound:", res.final_lower[0])  # -19/6

# The exhaustive oracle enumerates all activation patterns of the cell
# decomposition and minimizes exactly on each cell.
exact = exact_verify(problem)
print("exact minimum:", exact.min_value, "at", exact.witness)
print("patterns visited:", exact.patterns)
print("relaxation gap:", exact.min_value - res.final_lower[0])

# Now suppose search has learned the half-space x1 - 7 x2 + 6 <= 0 (the
# region where the first hidden neuron can be inactive).  Contracting the
# box against it removes the part of the domain that produced the slack.
cons = LinearConstraint(np.array([1.0, -7.0]), 6.0)
clipped = relaxed_clip_single(box, cons)
print("clipped box:", clipped.lower, "to", clipped.upper)

res2 = compute_bounds(model, clipped)
print("hidden upper bounds after clipping:", res2.layer_bounds[0].upper)
print("recomputed lower bound:", res2.final_lower[0])  # -2, up from -19/6

# Sanity: the bound stays below the true minimum restricted to the
# clipped region, and sampling cannot beat it.
rng = np.random.default_rng(0)
pts = rng.uniform(clipped.lower, clipped.upper, size=(20000, 2))
vals = model.evaluate(pts).min(axis=1)
print("worst sampled value on clipped box:", vals.min())
assert vals.min() >= res2.final_lower[0] - 1e-9
