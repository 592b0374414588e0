"""Shared fixtures: the hand-worked two-neuron network and random generators."""

import numpy as np
import pytest

from clipverify import (
    AffineLayer,
    BoxDomain,
    CanonicalProblem,
    LinearConstraint,
    NetworkModel,
)


def toy_model() -> NetworkModel:
    """2-2-1 ReLU net small enough to bound by hand."""
    return NetworkModel(
        [
            AffineLayer(np.array([[1.0, -7.0], [5.0, -1.0]]), np.array([6.0, -7.0])),
            AffineLayer(np.array([[1.0, -1.0]]), np.array([0.0])),
        ]
    )


def toy_box() -> BoxDomain:
    return BoxDomain(np.array([-1.0, -2.0]), np.array([2.0, 1.0]))


def toy_problem() -> CanonicalProblem:
    return CanonicalProblem(toy_model(), toy_box(), 1)


def toy_constraint() -> LinearConstraint:
    """Half-space where the toy's first hidden neuron can be inactive."""
    return LinearConstraint(np.array([1.0, -7.0]), 6.0)


@pytest.fixture
def model():
    return toy_model()


@pytest.fixture
def box():
    return toy_box()


@pytest.fixture
def problem():
    return toy_problem()


def random_box(rng, n, rad_lo=0.05, rad_hi=2.0):
    center = rng.normal(size=n)
    radius = rng.uniform(rad_lo, rad_hi, size=n)
    return BoxDomain(center - radius, center + radius)


def random_objective(rng, n):
    return rng.normal(size=n), float(rng.normal())


def random_halfspace(rng, n):
    return LinearConstraint(rng.normal(size=n), float(rng.normal()))


def random_network_problem(rng, dim_max=3, width_max=6, hidden=2, rows=1):
    """Small random ReLU net whose worst output hovers near zero.

    The final bias is recentred at a box-center evaluation plus noise, so a
    seeded stream yields a mix of verifiable and falsifiable instances.
    """
    n = int(rng.integers(1, dim_max + 1))
    widths = [n] + [int(rng.integers(2, width_max + 1)) for _ in range(hidden)] + [rows]
    layers = []
    for i in range(hidden + 1):
        weights = rng.normal(size=(widths[i + 1], widths[i])) / np.sqrt(widths[i])
        bias = rng.normal(size=widths[i + 1]) * 0.3
        layers.append(AffineLayer(weights, bias))
    center = rng.normal(size=n) * 0.4
    radius = rng.uniform(0.3, 1.2, size=n)
    box = BoxDomain(center - radius, center + radius)
    at_center = NetworkModel(layers).evaluate(center)
    last = layers[-1]
    layers[-1] = AffineLayer(
        last.weights, last.bias - at_center + rng.normal(size=rows) * 0.4
    )
    return CanonicalProblem(NetworkModel(layers), box, rows)
