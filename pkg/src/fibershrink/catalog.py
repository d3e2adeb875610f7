"""Concrete submersions with explicit charts and, where the fiber is compact,
explicit trivializations.

Every metric and projection is written with ``jets`` functions so the same
formula serves plain float evaluation and Taylor-jet evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import jets
from .errors import CatalogError, ExampleConstructionError
from .geometry import Chart, MetricField
from .submersion import ProjectionMap, SubmersionSpec

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Trivialization:
    """Local product structure ``(base coords, fiber coords) -> M chart coords``.

    ``embed`` must satisfy ``pi(embed(y, f)) = y`` and be orientation preserving
    for the ordering (base coords, fiber coords) against the M chart.
    """

    base_chart: Chart
    fiber_chart: Chart
    embed: Callable[[Sequence, Sequence], Sequence]

    @property
    def b(self) -> int:
        return self.base_chart.dim

    @property
    def k(self) -> int:
        return self.fiber_chart.dim

    def points(self, base_points, fiber_points) -> np.ndarray:
        """M chart coordinates for every (base point, fiber point) pair, shape (Pb, Pf, n)."""
        y = np.atleast_2d(np.asarray(base_points, dtype=float))
        f = np.atleast_2d(np.asarray(fiber_points, dtype=float))
        yy = np.repeat(y[:, None, :], len(f), axis=1).reshape(len(y) * len(f), y.shape[-1])
        ff = np.repeat(f[None, :, :], len(y), axis=0).reshape(len(y) * len(f), f.shape[-1])
        out = self.embed([yy[:, i] for i in range(self.b)], [ff[:, i] for i in range(self.k)])
        out = np.stack([np.broadcast_to(np.asarray(v, dtype=float), len(yy)) for v in out], axis=-1)
        return out.reshape(len(y), len(f), -1)

    def jacobian(self, base_points, fiber_points) -> np.ndarray:
        """``d(M coords)/d(base coords, fiber coords)``, shape (Pb, Pf, n, n)."""
        y = np.atleast_2d(np.asarray(base_points, dtype=float))
        f = np.atleast_2d(np.asarray(fiber_points, dtype=float))
        yy = np.repeat(y[:, None, :], len(f), axis=1).reshape(len(y) * len(f), y.shape[-1])
        ff = np.repeat(f[None, :, :], len(y), axis=0).reshape(len(y) * len(f), f.shape[-1])
        joint = np.concatenate([yy, ff], axis=-1)
        coords = jets.lift_point(joint, order=1)
        out = self.embed(coords[: self.b], coords[self.b:])
        jac = jets.vector(out, like=coords[0]).grad().c0
        return jac.reshape(len(y), len(f), jac.shape[-2], jac.shape[-1])


def _round_sphere(theta, radius2=1.0):
    return [[radius2, 0.0], [0.0, radius2 * jets.sin(theta) ** 2]]


def _block_diag(*blocks):
    n = sum(len(b) for b in blocks)
    rows = [[0.0] * n for _ in range(n)]
    off = 0
    for blk in blocks:
        for i, r in enumerate(blk):
            for j, v in enumerate(r):
                rows[off + i][off + j] = v
        off += len(blk)
    return rows


SPHERE_CHART = Chart((0.0, 0.0), (np.pi, TWO_PI), ("polar", "periodic"))
POINT_CHART = Chart((), (), ())


def euclidean_product() -> SubmersionSpec:
    metric = MetricField(4, lambda x: np.eye(4).tolist(), (1, 1, 1, 1), "euclidean R2xR2")
    base = MetricField(2, lambda y: np.eye(2).tolist(), (1, 1), "euclidean R2")
    proj = ProjectionMap(lambda x: [x[2], x[3]], 4, 2)
    chart = Chart((-2.0,) * 4, (2.0,) * 4, ("interval",) * 4)
    return SubmersionSpec(
        "euclidean-product", metric, base, proj, chart,
        base_chart=Chart((-2.0,) * 2, (2.0,) * 2, ("interval",) * 2),
        description="R^2 x R^2 -> R^2, flat product",
    )


def flat_torus_bundle(shear: float = 0.3) -> SubmersionSpec:
    """Flat torus with sheared metric ``(ds + a dt)^2 + dt^2`` over the circle ``t``."""
    a = float(shear)
    metric = MetricField(2, lambda x: [[1.0, a], [a, 1.0 + a * a]], (1, 1), "sheared flat torus")
    base = MetricField(1, lambda y: [[1.0]], (1,), "circle")
    proj = ProjectionMap(lambda x: [x[1]], 2, 1)
    chart = Chart((0.0, 0.0), (TWO_PI, TWO_PI), ("periodic", "periodic"))
    base_chart = Chart((0.0,), (TWO_PI,), ("periodic",))
    triv = Trivialization(base_chart, Chart((0.0,), (TWO_PI,), ("periodic",)), lambda y, f: [TWO_PI - f[0], y[0]])
    return SubmersionSpec(
        "flat-torus-bundle", metric, base, proj, chart, base_chart, triv, 0,
        description="flat T^2 fibered over S^1 with fiber S^1", params={"shear": a}, euler_characteristic=0,
    )


def s2_round() -> SubmersionSpec:
    metric = MetricField(2, lambda x: _round_sphere(x[0]), (1, 1), "round S2")
    base = MetricField(0, lambda y: [], (), "point")
    proj = ProjectionMap(lambda x: [], 2, 0)
    triv = Trivialization(POINT_CHART, SPHERE_CHART, lambda y, f: [f[0], f[1]])
    return SubmersionSpec(
        "s2-round", metric, base, proj, SPHERE_CHART, POINT_CHART, triv, 2,
        description="round unit S^2 over a point", euler_characteristic=2,
    )


def default_warp(theta, phi):
    return 2.0 + jets.cos(theta)


def s2xs2_warped(warp: Callable | None = None, name: str = "s2xs2-warped") -> SubmersionSpec:
    """``f(theta_B, phi_B)^2 g_S2 + g_S2`` on coordinates (theta_F, phi_F, theta_B, phi_B)."""
    warp = default_warp if warp is None else warp
    probe = SPHERE_CHART.sample(np.random.default_rng(0), 200)
    try:
        vals = np.broadcast_to(np.asarray(warp(probe[:, 0], probe[:, 1]), dtype=float), len(probe))
    except Exception as exc:  # noqa: BLE001 - any failure here is a bad warp function
        raise ExampleConstructionError(f"warp function cannot be evaluated: {exc}") from exc
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise ExampleConstructionError("warp function must be finite and positive on the base chart")

    def metric_func(x):
        f2 = warp(x[2], x[3]) ** 2
        return _block_diag([[f2, 0.0], [0.0, f2 * jets.sin(x[0]) ** 2]], _round_sphere(x[2]))

    metric = MetricField(4, metric_func, (1, 1, 1, 1), "warped S2xS2")
    base = MetricField(2, lambda y: _round_sphere(y[0]), (1, 1), "round S2")
    proj = ProjectionMap(lambda x: [x[2], x[3]], 4, 2)
    chart = Chart((0.0, 0.0, 0.0, 0.0), (np.pi, TWO_PI, np.pi, TWO_PI), ("polar", "periodic", "polar", "periodic"))
    triv = Trivialization(SPHERE_CHART, SPHERE_CHART, lambda y, f: [f[0], f[1], y[0], y[1]])
    return SubmersionSpec(
        name, metric, base, proj, chart, SPHERE_CHART, triv, 2,
        description="S^2 x S^2 with fiber spheres scaled by a positive function on the base",
        euler_characteristic=4,
    )


def s2xs2_product() -> SubmersionSpec:
    return s2xs2_warped(lambda th, ph: 1.0 + 0.0 * th, name="s2xs2-product")


def _hopf_metric_rows(x):
    c1 = jets.cos(x[2]) ** 2
    s1 = jets.sin(x[2]) ** 2
    return [[c1, 0.0, 0.0], [0.0, s1, 0.0], [0.0, 0.0, 1.0]]


def _half_sphere_metric(y):
    w = 1.0 - y[0] * y[0]
    return [[0.25 / w, 0.0], [0.0, 0.25 * w]]


HOPF_BASE_CHART = Chart((-1.0, 0.0), (1.0, TWO_PI), ("interval", "periodic"))


def hopf() -> SubmersionSpec:
    """Unit S^3 in angles (xi1, xi2, eta) over S^2(1/2) in (c, phi), c = cos(2 eta)."""
    metric = MetricField(3, _hopf_metric_rows, (1, 1, 1), "round S3")
    base = MetricField(2, _half_sphere_metric, (1, 1), "S2 of radius 1/2")
    proj = ProjectionMap(lambda x: [jets.cos(2.0 * x[2]), x[0] - x[1]], 3, 2)
    chart = Chart((0.0, 0.0, 0.0), (TWO_PI, TWO_PI, np.pi / 2), ("periodic", "periodic", "interval"))
    triv = Trivialization(
        HOPF_BASE_CHART,
        Chart((0.0,), (TWO_PI,), ("periodic",)),
        lambda y, f: [y[1] - f[0], -f[0], 0.5 * jets.arccos(y[0])],
    )
    return SubmersionSpec(
        "hopf", metric, base, proj, chart, HOPF_BASE_CHART, triv, 0,
        description="Hopf fibration S^3 -> S^2(1/2) with circle fibers",
    )


def hopf_x_s1() -> SubmersionSpec:
    """S^3 x S^1 over S^2(1/2) with torus fibers (Hopf circle times the extra circle)."""

    def metric_func(x):
        return _block_diag(_hopf_metric_rows(x[:3]), [[1.0]])

    metric = MetricField(4, metric_func, (1, 1, 1, 1), "S3 x S1")
    base = MetricField(2, _half_sphere_metric, (1, 1), "S2 of radius 1/2")
    proj = ProjectionMap(lambda x: [jets.cos(2.0 * x[2]), x[0] - x[1]], 4, 2)
    chart = Chart((0.0, 0.0, 0.0, 0.0), (TWO_PI, TWO_PI, np.pi / 2, TWO_PI), ("periodic", "periodic", "interval", "periodic"))
    # fiber coordinates ordered (extra circle, Hopf circle) to make the embedding orientation preserving
    triv = Trivialization(
        HOPF_BASE_CHART,
        Chart((0.0, 0.0), (TWO_PI, TWO_PI), ("periodic", "periodic")),
        lambda y, f: [f[1] + y[1], f[1], 0.5 * jets.arccos(y[0]), f[0]],
    )
    return SubmersionSpec(
        "hopf-x-s1", metric, base, proj, chart, HOPF_BASE_CHART, triv, 0,
        description="product of the Hopf fibration with a circle; even dimensional, non-integrable horizontal",
        euler_characteristic=0,
    )


def minkowski_trivial() -> SubmersionSpec:
    metric = MetricField(2, lambda x: [[-1.0, 0.0], [0.0, 1.0]], (-1, 1), "Minkowski plane")
    base = MetricField(1, lambda y: [[1.0]], (1,), "line")
    proj = ProjectionMap(lambda x: [x[1]], 2, 1)
    chart = Chart((-2.0, -2.0), (2.0, 2.0), ("interval", "interval"))
    return SubmersionSpec(
        "minkowski-trivial", metric, base, proj, chart, Chart((-2.0,), (2.0,), ("interval",)),
        description="R^{1,1} -> R along the time direction",
    )


def lorentz_warped() -> SubmersionSpec:
    """``h(x)^2 (-dt^2 + ds^2) + dx^2`` over the line ``x``; Lorentzian fibers with nonzero shape."""

    def h(x):
        return 1.5 + 0.5 * jets.sin(x)

    def metric_func(x):
        h2 = h(x[2]) ** 2
        return [[-h2, 0.0, 0.0], [0.0, h2, 0.0], [0.0, 0.0, 1.0]]

    metric = MetricField(3, metric_func, (-1, 1, 1), "warped Lorentzian")
    base = MetricField(1, lambda y: [[1.0]], (1,), "line")
    proj = ProjectionMap(lambda x: [x[2]], 3, 1)
    chart = Chart((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0), ("interval",) * 3)
    return SubmersionSpec(
        "lorentz-warped", metric, base, proj, chart, Chart((-2.0,), (2.0,), ("interval",)),
        description="Lorentzian warped product with timelike direction in the fibers",
    )


EXAMPLES: dict[str, Callable[..., SubmersionSpec]] = {
    "euclidean-product": euclidean_product,
    "flat-torus-bundle": flat_torus_bundle,
    "s2-round": s2_round,
    "s2xs2-product": s2xs2_product,
    "s2xs2-warped": s2xs2_warped,
    "hopf": hopf,
    "hopf-x-s1": hopf_x_s1,
    "minkowski-trivial": minkowski_trivial,
    "lorentz-warped": lorentz_warped,
}


def make_example(name: str, **params) -> SubmersionSpec:
    try:
        ctor = EXAMPLES[name]
    except KeyError:
        raise CatalogError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}") from None
    return ctor(**params)
