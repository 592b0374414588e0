"""
Branch-and-bound verification with and without clipping
=======================================================

Runs the two search modes (input splitting and activation splitting) on a
property of a small random network, compares work done with clipping off
and on, checks the answer against the exhaustive oracle, and shows the
command-line equivalent.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from clipverify import (
    AffineLayer,
    BabConfig,
    BoxDomain,
    CanonicalProblem,
    NetworkModel,
    canonicalize,
    exact_verify,
    property_from_dict,
    run_bab,
)
from clipverify.cli import run as cli_run


def random_problem(seed, dim=2, width=6, rows=1):
    """A random two-hidden-layer net with the property centered to be hard."""
    rng = np.random.default_rng(seed)
    dims = [dim, width, width, rows]
    layers = [
        AffineLayer(rng.normal(size=(dims[i + 1], dims[i])), rng.normal(size=dims[i + 1]))
        for i in range(len(dims) - 1)
    ]
    model = NetworkModel(layers)
    box = BoxDomain(-np.ones(dim), np.ones(dim))
    # recenter the output at the box center so verified/falsified is close
    shift = model.evaluate(box.center) - 0.4
    last = model.layers[-1]
    model.layers[-1] = AffineLayer(last.weights, last.bias - shift)
    return CanonicalProblem(model, box, num_rows=rows)


problem = random_problem(seed=23)
truth = exact_verify(problem)
print("exact minimum:", truth.min_value, " (property holds iff >= 0)")

# Same verdict either way; clipping pays for itself in visited domains.
for mode in ("input", "activation"):
    for clip in ("none", "both"):
        cfg = BabConfig(mode=mode, clip=clip, timeout=30.0, seed=0)
        out = run_bab(problem, cfg)
        print(
            f"mode={mode:10s} clip={clip:4s} -> {out.status:9s}"
            f" visited={out.stats.domains_visited:5d}"
            f" depth={out.stats.max_depth}"
        )
        # agreement with ground truth
        assert out.status == ("verified" if truth.min_value >= 0 else "falsified")

# A falsified run hands back a concrete counterexample.
bad = random_problem(seed=23)
last = bad.model.layers[-1]
bad.model.layers[-1] = AffineLayer(last.weights, last.bias - 1.0)
out = run_bab(bad, BabConfig(mode="input", clip="both", timeout=30.0))
print("shifted problem:", out.status, " value:", out.value)
if out.counterexample is not None:
    print("counterexample:", out.counterexample)
    assert bad.value(out.counterexample) < 0.0

# The same run is available as a command line tool.  Model and property
# travel as JSON files; the verdict comes back as a JSON report and an
# exit code (0 verified, 1 falsified, 2 unknown).
tmp = Path(tempfile.mkdtemp())
model_json = {
    "layers": [
        {"weights": l.weights.tolist(), "bias": l.bias.tolist()}
        for l in problem.model.layers[:-1]
    ]
    + [{"weights": problem.model.layers[-1].weights.tolist(), "bias": problem.model.layers[-1].bias.tolist()}]
}
prop_json = {
    "input_lower": problem.box.lower.tolist(),
    "input_upper": problem.box.upper.tolist(),
    "spec_matrix": [[1.0]],
    "threshold": [0.0],
}
(tmp / "model.json").write_text(json.dumps(model_json))
(tmp / "prop.json").write_text(json.dumps(prop_json))
# sanity: the files round-trip into the same problem
assert canonicalize(
    NetworkModel([AffineLayer(l["weights"], l["bias"]) for l in model_json["layers"]]),
    property_from_dict(prop_json),
).value(problem.box.center) == problem.value(problem.box.center)

code = cli_run(
    [
        "--model", str(tmp / "model.json"),
        "--property", str(tmp / "prop.json"),
        "--mode", "activation",
        "--clip", "both",
        "--timeout", "30",
    ]
)
print("cli exit code:", code)
