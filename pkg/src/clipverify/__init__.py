"""Verification of feedforward ReLU networks by linear bound propagation,
constraint-driven clipping and branch and bound, with exhaustive oracles."""

from .bab import (
    BabConfig,
    BabStats,
    BranchProbe,
    SplitAssignment,
    Subdomain,
    VerificationOutcome,
    activation_bab,
    babsr_intercept_score,
    branch_activation,
    branch_input,
    final_plane_to_constraint,
    input_bab,
    run_bab,
    select_topk,
    split_constraint_to_input,
)
from .clipping import (
    ConstraintSet,
    DualSolution,
    DualStatus,
    KnapsackInstance,
    coordinate_ascent,
    dual_value,
    greedy_knapsack,
    relaxed_clip_parallel,
    relaxed_clip_sequential,
    relaxed_clip_single,
    tighten_lower_single,
    tighten_upper_single,
    to_knapsack,
)
from .crown import (
    AlphaPolicy,
    BoundingPlanes,
    BoundsResult,
    InfeasibleSplitError,
    LayerBounds,
    NeuronStatus,
    ReluRelaxation,
    backward_bound,
    classify_neurons,
    compute_bounds,
    neuron_status,
    relax_relu,
)
from .geometry import (
    BoxDomain,
    EmptyBoxError,
    FeasibilityStatus,
    GeometryError,
    LinearConstraint,
    centroid_distance,
    classify_constraint,
    concretize,
)
from .network import (
    AffineLayer,
    CanonicalProblem,
    ModelFormatError,
    NetworkModel,
    PropertySpec,
    canonicalize,
    load_model,
    load_property,
    model_from_dict,
    property_from_dict,
)
from .oracle import (
    BudgetError,
    ExactResult,
    OracleResult,
    PatternRegion,
    count_unstable,
    enumerate_pattern_regions,
    exact_verify,
    lp_box_oracle,
    sample_attack,
)

__version__ = "0.1.0"

__all__ = [
    "AffineLayer",
    "AlphaPolicy",
    "BabConfig",
    "BabStats",
    "BoundingPlanes",
    "BoundsResult",
    "BoxDomain",
    "BranchProbe",
    "BudgetError",
    "CanonicalProblem",
    "ConstraintSet",
    "DualSolution",
    "DualStatus",
    "EmptyBoxError",
    "ExactResult",
    "FeasibilityStatus",
    "GeometryError",
    "InfeasibleSplitError",
    "KnapsackInstance",
    "LayerBounds",
    "LinearConstraint",
    "ModelFormatError",
    "NetworkModel",
    "NeuronStatus",
    "OracleResult",
    "PatternRegion",
    "PropertySpec",
    "ReluRelaxation",
    "SplitAssignment",
    "Subdomain",
    "VerificationOutcome",
    "activation_bab",
    "babsr_intercept_score",
    "backward_bound",
    "branch_activation",
    "branch_input",
    "canonicalize",
    "centroid_distance",
    "classify_constraint",
    "classify_neurons",
    "compute_bounds",
    "concretize",
    "coordinate_ascent",
    "count_unstable",
    "dual_value",
    "enumerate_pattern_regions",
    "exact_verify",
    "final_plane_to_constraint",
    "greedy_knapsack",
    "input_bab",
    "load_model",
    "load_property",
    "lp_box_oracle",
    "model_from_dict",
    "neuron_status",
    "property_from_dict",
    "relax_relu",
    "relaxed_clip_parallel",
    "relaxed_clip_sequential",
    "relaxed_clip_single",
    "run_bab",
    "sample_attack",
    "select_topk",
    "split_constraint_to_input",
    "tighten_lower_single",
    "tighten_upper_single",
    "to_knapsack",
]
