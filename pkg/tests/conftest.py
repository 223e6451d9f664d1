import math

import numpy as np
import pytest

from semisplit import expr as ex
from semisplit.manifold import Identification, Interval, Loop, ManifoldSpec


def E(text, coords):
    return ex.parse(text, coords)


def make_manifold(coords, metric_rows, domain, identifications=(), loops=(),
                  leaf_function=None, name=""):
    parsed = tuple(
        tuple(E(entry, coords) for entry in row) for row in metric_rows
    )
    leaf = E(leaf_function, coords) if leaf_function else None
    return ManifoldSpec(
        coords=tuple(coords),
        metric=parsed,
        domain=domain,
        identifications=tuple(identifications),
        loops=tuple(loops),
        leaf_function=leaf,
        name=name,
    )


@pytest.fixture(scope="session")
def minkowski2():
    return make_manifold(
        ["t", "x"],
        [["-1", "0"], ["0", "1"]],
        {"t": Interval(-2.0, 2.0), "x": Interval(-2.0, 2.0)},
        name="minkowski2",
    )


@pytest.fixture(scope="session")
def euclidean2():
    return make_manifold(
        ["x", "y"],
        [["1", "0"], ["0", "1"]],
        {"x": Interval(-2.0, 2.0), "y": Interval(-2.0, 2.0)},
        name="euclidean2",
    )


@pytest.fixture(scope="session")
def sphere2():
    # unit round sphere away from the poles
    return make_manifold(
        ["psi", "phi"],
        [["1", "0"], ["0", "sin(psi)^2"]],
        {"psi": Interval(0.15, math.pi - 0.15), "phi": Interval(0.0, 2 * math.pi)},
        name="sphere2",
    )


@pytest.fixture(scope="session")
def expanding3():
    # -dt^2 + e^{2t}(dx^2 + dy^2); U = e^t d_t is irrotational and conformal
    coords = ["t", "x", "y"]
    return make_manifold(
        coords,
        [["-1", "0", "0"], ["0", "exp(2*t)", "0"], ["0", "0", "exp(2*t)"]],
        {"t": Interval(-1.0, 1.0), "x": Interval(-1.0, 1.0), "y": Interval(-1.0, 1.0)},
        name="expanding3",
    )


@pytest.fixture(scope="session")
def expanding2():
    # 2D slice: -dt^2 + e^{2t} ds^2 with the circle fiber
    coords = ["t", "s"]
    return make_manifold(
        coords,
        [["-1", "0"], ["0", "exp(2*t)"]],
        {
            "t": Interval(-math.inf, math.inf, sample_lo=-1.2, sample_hi=1.2),
            "s": Interval(0.0, 2 * math.pi),
        },
        identifications=[
            Identification("s_plus", (E("t", coords), E("s+2*pi", coords))),
            Identification("s_minus", (E("t", coords), E("s-2*pi", coords))),
        ],
        leaf_function="t",
        name="expanding2",
    )
