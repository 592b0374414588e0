"""Feedforward ReLU networks, property specifications, and canonicalization.

Model files are JSON objects ``{"layers": [{"weights": [[...]], "bias":
[...]}, ...]}``.  A ReLU is applied between consecutive layers and never
after the last one.  Property files carry an input box plus a conjunction of
affine output conditions ``spec_matrix @ y >= threshold``; canonicalization
folds those rows into the network so the question becomes whether every
output of the rewritten network is nonnegative over the box.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .geometry import BoxDomain


class ModelFormatError(ValueError):
    """Malformed or inconsistent model / property data."""


def _as_matrix(obj, what: str) -> np.ndarray:
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"{what} is not a rectangular numeric array") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise ModelFormatError(f"{what} must be a nonempty 2-D array")
    if not np.isfinite(arr).all():
        raise ModelFormatError(f"{what} contains NaN or infinite entries")
    return arr


def _as_vector(obj, what: str) -> np.ndarray:
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"{what} is not a numeric vector") from exc
    if arr.ndim != 1 or arr.size == 0:
        raise ModelFormatError(f"{what} must be a nonempty 1-D array")
    if not np.isfinite(arr).all():
        raise ModelFormatError(f"{what} contains NaN or infinite entries")
    return arr


@dataclass
class AffineLayer:
    """One affine map ``z = weights @ x + bias``; weights has shape (out, in)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = _as_matrix(self.weights, "layer weights")
        self.bias = _as_vector(self.bias, "layer bias")
        if self.bias.size != self.weights.shape[0]:
            raise ModelFormatError(
                f"bias length {self.bias.size} does not match "
                f"{self.weights.shape[0]} output rows"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


class NetworkModel:
    """A stack of affine layers with implicit ReLUs between them."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ModelFormatError("model needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.in_dim != prev.out_dim:
                raise ModelFormatError(
                    f"layer input width {nxt.in_dim} does not match "
                    f"previous output width {prev.out_dim}"
                )
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Forward pass for a single point ``(n,)`` or a batch ``(m, n)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        z = np.atleast_2d(x)
        if z.shape[1] != self.input_dim:
            raise ModelFormatError(
                f"input dimension {z.shape[1]} does not match model "
                f"input {self.input_dim}"
            )
        for i, layer in enumerate(self.layers):
            if i > 0:
                z = np.maximum(z, 0.0)
            z = z @ layer.weights.T + layer.bias
        return z[0] if single else z


@dataclass
class PropertySpec:
    """Input box plus output conditions ``spec_matrix @ y >= threshold``."""

    input_lower: np.ndarray
    input_upper: np.ndarray
    spec_matrix: np.ndarray
    threshold: np.ndarray

    def __post_init__(self):
        self.input_lower = _as_vector(self.input_lower, "input_lower")
        self.input_upper = _as_vector(self.input_upper, "input_upper")
        self.spec_matrix = _as_matrix(self.spec_matrix, "spec_matrix")
        self.threshold = _as_vector(self.threshold, "threshold")
        if self.input_lower.size != self.input_upper.size:
            raise ModelFormatError("input_lower and input_upper lengths differ")
        if np.any(self.input_lower > self.input_upper):
            raise ModelFormatError("input_lower exceeds input_upper")
        if self.threshold.size != self.spec_matrix.shape[0]:
            raise ModelFormatError("threshold length does not match spec rows")

    @property
    def box(self) -> BoxDomain:
        return BoxDomain(self.input_lower.copy(), self.input_upper.copy())


@dataclass
class CanonicalProblem:
    """Verification task in canonical form.

    ``model`` ends with the property rows folded in, so the task is exactly
    "every output row of ``model`` is nonnegative over ``box``".  A point
    witnessing a negative row value is a counterexample.
    """

    model: NetworkModel
    box: BoxDomain
    num_rows: int

    def __post_init__(self):
        if self.num_rows != self.model.output_dim:
            raise ValueError(
                f"num_rows {self.num_rows} does not match model output "
                f"{self.model.output_dim}"
            )
        if self.box.dim != self.model.input_dim:
            raise ValueError(
                f"box dimension {self.box.dim} does not match model input "
                f"{self.model.input_dim}"
            )

    def row_values(self, x: np.ndarray) -> np.ndarray:
        return self.model.evaluate(x)

    def value(self, x: np.ndarray) -> float:
        """Worst row value at a point; negative means the property fails."""
        vals = self.model.evaluate(np.asarray(x, dtype=float))
        return float(np.min(vals, axis=-1))


def _reject_nonfinite(text_value: str):
    raise ModelFormatError(f"non-finite literal {text_value!r} not allowed")


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh, parse_constant=_reject_nonfinite)
    except OSError as exc:
        raise ModelFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelFormatError(f"{path}: top-level JSON value must be an object")
    return data


def model_from_dict(data: dict) -> NetworkModel:
    if "layers" not in data or not isinstance(data["layers"], list):
        raise ModelFormatError("model JSON needs a 'layers' list")
    layers = []
    for idx, entry in enumerate(data["layers"]):
        if not isinstance(entry, dict) or "weights" not in entry or "bias" not in entry:
            raise ModelFormatError(f"layer {idx} needs 'weights' and 'bias'")
        layers.append(AffineLayer(entry["weights"], entry["bias"]))
    return NetworkModel(layers)


def property_from_dict(data: dict) -> PropertySpec:
    for key in ("input_lower", "input_upper", "spec_matrix", "threshold"):
        if key not in data:
            raise ModelFormatError(f"property JSON is missing '{key}'")
    return PropertySpec(
        data["input_lower"], data["input_upper"], data["spec_matrix"], data["threshold"]
    )


def load_model(path) -> NetworkModel:
    """Read and validate a model JSON file."""
    return model_from_dict(_load_json(path))


def load_property(path) -> PropertySpec:
    """Read and validate a property JSON file."""
    return property_from_dict(_load_json(path))


def canonicalize(model: NetworkModel, prop: PropertySpec) -> CanonicalProblem:
    """Fold the property rows into the network's final affine layer.

    The conditions ``C @ f(x) >= t`` become the outputs ``C @ f(x) - t`` of a
    rewritten network.  Because an affine map composed with an affine map is
    affine, the rows merge exactly into the last layer: no relaxation is
    involved and evaluation of the canonical model reproduces
    ``C @ f(x) - t`` bit for bit up to float associativity.
    """
    if prop.input_lower.size != model.input_dim:
        raise ModelFormatError(
            f"property box dimension {prop.input_lower.size} does not match "
            f"model input {model.input_dim}"
        )
    if prop.spec_matrix.shape[1] != model.output_dim:
        raise ModelFormatError(
            f"spec_matrix has {prop.spec_matrix.shape[1]} columns, model has "
            f"{model.output_dim} outputs"
        )
    last = model.layers[-1]
    merged = AffineLayer(
        prop.spec_matrix @ last.weights,
        prop.spec_matrix @ last.bias - prop.threshold,
    )
    canon = NetworkModel(model.layers[:-1] + [merged])
    return CanonicalProblem(canon, prop.box, prop.spec_matrix.shape[0])
