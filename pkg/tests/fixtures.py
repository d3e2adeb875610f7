"""Non-catalog submersions used only by the tests."""

import numpy as np

from fibershrink import jets
from fibershrink.geometry import Chart, MetricField
from fibershrink.submersion import ProjectionMap, SubmersionSpec


def _skew_metric(x):
    a = 0.3 * jets.sin(x[0] + 2.0 * x[2])
    b = 0.2 * jets.cos(x[1] * x[2])
    c = 0.25 * x[0] * x[1]
    return [
        [1.5 + a, c, 0.1 * x[2]],
        [c, 1.2 + b, 0.2 * x[0]],
        [0.1 * x[2], 0.2 * x[0], 1.0 + 0.1 * x[1] * x[1]],
    ]


def generic_submersion() -> SubmersionSpec:
    """A metric on a box in R^3 with no symmetries, fibered by a curved projection.

    The base metric is only a placeholder: projector identities depend on g and
    the projection alone, so it serves checks that never touch the base.
    """
    return SubmersionSpec(
        "generic-r3",
        MetricField(3, _skew_metric, (1, 1, 1), "generic"),
        MetricField(2, lambda y: [[1.0, 0.0], [0.0, 1.0]], (1, 1), "plane"),
        ProjectionMap(lambda x: [x[0], x[1] + 0.2 * x[2] * x[2]], 3, 2),
        Chart((-0.5,) * 3, (0.5,) * 3, ("interval",) * 3),
        Chart((-0.5,) * 2, (0.5,) * 2, ("interval",) * 2),
    )


def frozen_hopf_arguments():
    """Regression point and frame-vector choice for the Bianchi witness on Hopf."""
    return np.array([[1.0, 2.0, 0.6]]), (1, 2, 0)
