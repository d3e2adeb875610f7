"""Quadrature over chart boxes, integration along fibers and eps sweeps.

Pushforward convention: for a form written in trivialization coordinates
``(y, f)`` the base component along ``dy^J`` is the fiber integral of the
coefficient of ``dy^J ^ df^1 ^ ... ^ df^k``. With this ordering the projection
formula reads ``pi_*(pi^* beta ^ omega) = beta ^ pi_* omega``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import forms
from .catalog import Trivialization, make_example  # noqa: F401 - re-exported
from .errors import FitError, QuadratureNodeError
from .forms import ExteriorForm
from .geometry import Chart
from .submersion import ProjectorState, SubmersionSpec

log = logging.getLogger(__name__)

CHUNK = 2048
THREADS_ENV = "FIBERSHRINK_THREADS"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# -- quadrature -----------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product rule over a chart box.

    Interval axes use Gauss–Legendre, periodic axes the equal-weight trapezoid
    rule, and polar axes Gauss–Legendre in ``u = cos(theta)`` (the ``1/sin``
    Jacobian is folded into the weights).
    """

    nodes: np.ndarray
    weights: np.ndarray
    kinds: tuple[str, ...]
    orders: tuple[int, ...]

    @classmethod
    def for_chart(cls, chart: Chart, order: int = 32, periodic_order: int | None = None) -> "QuadratureRule":
        periodic_order = order if periodic_order is None else periodic_order
        axes_n, axes_w, orders = [], [], []
        for lo, hi, kind in zip(chart.lower, chart.upper, chart.kinds):
            if kind == "periodic":
                m = periodic_order
                x = lo + (hi - lo) * np.arange(m) / m
                w = np.full(m, (hi - lo) / m)
            elif kind == "polar":
                m = order
                u, wu = np.polynomial.legendre.leggauss(m)
                x = np.arccos(u[::-1])
                w = (wu / np.sqrt(1.0 - u * u))[::-1]
            else:
                m = order
                t, wt = np.polynomial.legendre.leggauss(m)
                x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
                w = 0.5 * (hi - lo) * wt
            axes_n.append(x)
            axes_w.append(w)
            orders.append(m)
        if not axes_n:
            return cls(np.zeros((1, 0)), np.ones(1), (), ())
        grids = np.meshgrid(*axes_n, indexing="ij")
        wgrids = np.meshgrid(*axes_w, indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
        return cls(nodes, weights, tuple(chart.kinds), tuple(orders))

    def __len__(self) -> int:
        return len(self.weights)


def _evaluate_chunked(func: Callable[[np.ndarray], np.ndarray], points: np.ndarray) -> np.ndarray:
    chunks = [points[i : i + CHUNK] for i in range(0, len(points), CHUNK)]
    workers = thread_count()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(func, chunks))
    else:
        parts = [func(c) for c in chunks]
    return np.concatenate(parts, axis=0)


def euler_coefficients(spec: SubmersionSpec, eps: float | None) -> Callable[[np.ndarray], np.ndarray]:
    def func(points):
        return forms.euler_form_at(spec, points, eps).coeffs

    return func


def total_integral(
    form_field: Callable[[np.ndarray], np.ndarray],
    spec: SubmersionSpec,
    rule: QuadratureRule,
    degree: int | None = None,
) -> float:
    """Integral of a top-degree form over the whole chart box of ``spec``.

    ``form_field`` maps chart points ``(P, n)`` to coefficient arrays ``(P, 1)``.
    """
    if degree is not None and degree != spec.n:
        raise ValueError(f"total_integral needs a top-degree form (degree {spec.n}), got {degree}")
    vals = _evaluate_chunked(form_field, rule.nodes)
    if vals.shape[-1] != 1:
        raise ValueError("total_integral needs a top-degree form")
    return float(np.dot(rule.weights, vals[:, 0]))


def euler_integral(spec: SubmersionSpec, eps: float | None = None, order: int = 32, periodic_order: int | None = None) -> float:
    if spec.n % 2:
        raise ValueError(f"{spec.name} is odd dimensional; it has no Euler form")
    rule = QuadratureRule.for_chart(spec.chart, order, periodic_order)
    return total_integral(euler_coefficients(spec, eps), spec, rule)


def fiber_pushforward(
    form_field: Callable[[np.ndarray], ExteriorForm],
    triv: Trivialization,
    base_points,
    rule: QuadratureRule,
) -> ExteriorForm:
    """Integrate a form along the fibers above each base point.

    ``form_field`` maps M chart points ``(P, n)`` to an :class:`ExteriorForm`
    batch. Returns a base form of degree ``degree - k`` batched over
    ``base_points``.
    """
    y = np.atleast_2d(np.asarray(base_points, dtype=float))
    if triv.b == 0:
        y = np.zeros((1, 0))
    k, b = triv.k, triv.b
    n = k + b
    pts = triv.points(y, rule.nodes).reshape(-1, n)
    jac = triv.jacobian(y, rule.nodes).reshape(-1, n, n)
    det = np.linalg.det(jac)
    if np.any(np.abs(det) < 1e-12):
        raise QuadratureNodeError("trivialization Jacobian is degenerate at a quadrature node")
    alpha = form_field(pts)
    out_degree = alpha.degree - k
    if out_degree < 0:
        return ExteriorForm.zero(b, 0, (len(y),))
    pulled = forms.pullback(alpha, jac)
    fiber_top = tuple(range(b, n))
    coeffs = np.stack(
        [pulled.component(tuple(J) + fiber_top) for J in forms.basis(b, out_degree)], axis=-1
    ).reshape(len(y), len(rule), -1)
    return ExteriorForm(b, out_degree, np.einsum("pqc,q->pc", coeffs, rule.weights))


def euler_pushforward(spec: SubmersionSpec, base_points, eps: float | None, order: int = 32, periodic_order: int | None = None) -> ExteriorForm:
    triv = spec.trivialization
    rule = QuadratureRule.for_chart(triv.fiber_chart, order, periodic_order)

    def field(points):
        parts = [forms.euler_form_at(spec, points[i : i + CHUNK], eps) for i in range(0, len(points), CHUNK)]
        return ExteriorForm(spec.n, spec.n, np.concatenate([p.coeffs for p in parts], axis=0))

    return fiber_pushforward(field, triv, base_points, rule)


def fiber_euler_characteristic(spec: SubmersionSpec, order: int = 32, base_point=None) -> float:
    """``int_F e(Omega^V)`` over the fiber above one base point (cross-check of the declared value)."""
    triv = spec.trivialization
    if spec.k % 2:
        return 0.0
    rule = QuadratureRule.for_chart(triv.fiber_chart, order)
    if base_point is None:
        base_point = np.asarray([(lo + hi) / 2 for lo, hi in zip(triv.base_chart.lower, triv.base_chart.upper)])
    pts = triv.points(np.atleast_2d(base_point), rule.nodes).reshape(-1, spec.n)
    jac = triv.jacobian(np.atleast_2d(base_point), rule.nodes).reshape(-1, spec.n, spec.n)
    fiber_jac = jac[:, :, spec.b:]  # d(M coords)/d(fiber coords)
    e_v = forms.vertical_curvature_form_at(spec, pts).euler_form() if spec.k else None
    if e_v is None:
        return 1.0
    restricted = forms.pullback(e_v, fiber_jac)
    return float(np.dot(rule.weights, restricted.coeffs[:, 0]))


# -- sweeps -----------------------------------------------------------------------


_T975 = {1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447, 7: 2.365, 8: 2.306, 9: 2.262, 10: 2.228,
         12: 2.179, 15: 2.131, 20: 2.086, 30: 2.042}


def _t975(dof: int) -> float:
    if dof in _T975:
        return _T975[dof]
    keys = sorted(k for k in _T975 if k <= dof)
    return _T975[keys[-1]] if dof < 60 else 1.96


@dataclass
class SlopeFit:
    slope: float | None
    ci95: float | None
    intercept: float | None
    flat: bool

    def to_dict(self) -> dict:
        return {"slope": self.slope, "ci95": self.ci95, "intercept": self.intercept, "flat": self.flat}


FLAT_TOL = 1e-10


def fit_loglog(one_minus_eps, values) -> SlopeFit:
    """Least-squares slope of ``log(values)`` against ``log(1 - eps)`` with a 95% interval."""
    x = np.asarray(one_minus_eps, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(x) < 3:
        raise FitError("slope fits need at least 3 grid points")
    if not np.all(np.isfinite(v)):
        return SlopeFit(None, None, None, False)
    if np.max(np.abs(v)) < FLAT_TOL:
        return SlopeFit(None, None, None, True)
    if np.any(v <= 0):
        raise FitError("non-positive values cannot be fitted on a log scale")
    coef, cov = np.polyfit(np.log(x), np.log(v), 1, cov="unscaled" if len(x) == 3 else True)
    ci = _t975(len(x) - 2) * float(np.sqrt(max(cov[0, 0], 0.0)))
    return SlopeFit(float(coef[0]), ci, float(coef[1]), False)


def geometric_eps_grid(start: float, end: float, count: int) -> np.ndarray:
    """``count`` values from ``start`` to ``end`` (both included), geometric in ``1 - eps``."""
    if count < 2:
        raise ValueError("grid needs at least two points")
    if not (start < end < 1.0):
        raise ValueError("need start < end < 1")
    return 1.0 - np.geomspace(1.0 - start, 1.0 - end, count)


def block_norms(spec: SubmersionSpec, points, eps: float) -> tuple[float, float]:
    """Max |coefficient| of the mixed blocks, and of the diagonal blocks minus their eps -> 1 limits."""
    s = ProjectorState(spec, points)
    om = forms.curvature_form_at(spec, points, eps)
    blocks = om.blocks(s.k)
    off = max(float(np.max(blocks["mixed_vh"].max_abs(), initial=0.0)), float(np.max(blocks["mixed_hv"].max_abs(), initial=0.0)))
    diag = 0.0
    if s.k:
        ov = forms.vertical_curvature_form_at(spec, points)
        diag = max(diag, float(np.max(np.abs(blocks["vertical"].omega - ov.omega), initial=0.0)))
    if s.b:
        pulled = pulled_base_curvature_form(s)
        diag = max(diag, float(np.max(np.abs(blocks["horizontal"].omega - pulled.omega), initial=0.0)))
    return off, diag


def pulled_base_curvature_form(s: ProjectorState) -> forms.FormMatrix:
    """``pi^* Omega^B`` in the frame ``Dpi H_a`` (the horizontal frame pushed down)."""
    om_b = forms.curvature_form_matrix(s.base_riemann, s.base_g, s.base_frame, s.frame.signs[:, s.k:])
    pairs = forms.minors(s.dpi, 2)  # (P, base pairs, M pairs)
    return forms.FormMatrix(s.n, np.einsum("pijJ,pJI->pijI", om_b.omega, pairs), om_b.signs)


@dataclass
class SweepResult:
    example: str
    eps: list[float]
    offdiag_norm: list[float]
    diag_corr_norm: list[float]
    pushforward_err: list[float | None]
    total_euler_integral: list[float | None]
    fits: dict[str, SlopeFit] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    COLUMNS = ("eps", "offdiag_norm", "diag_corr_norm", "pushforward_err", "total_euler_integral")

    def rows(self):
        for i, e in enumerate(self.eps):
            yield [e, self.offdiag_norm[i], self.diag_corr_norm[i], self.pushforward_err[i], self.total_euler_integral[i]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows():
            w.writerow(["" if v is None else repr(float(v)) for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "example": self.example,
            "columns": list(self.COLUMNS),
            "rows": [[None if v is None else float(v) for v in r] for r in self.rows()],
            "fits": {k: v.to_dict() for k, v in self.fits.items()},
            "meta": self.meta,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def monotone_decreasing(self, column: str) -> bool:
        vals = getattr(self, column)
        if any(v is None for v in vals):
            return False
        return all(b < a for a, b in zip(vals, vals[1:]))


def epsilon_sweep(
    spec: SubmersionSpec,
    eps_grid,
    n_points: int = 20,
    n_probes: int = 10,
    order: int = 24,
    periodic_order: int | None = None,
    seed: int = 0,
    integrals: bool = True,
) -> SweepResult:
    eps_grid = [float(e) for e in eps_grid]
    if len(eps_grid) < 3:
        raise FitError("an eps sweep needs at least 3 grid points")
    if any(b <= a for a, b in zip(eps_grid, eps_grid[1:])) or eps_grid[0] < 0 or eps_grid[-1] >= 1:
        raise ValueError("eps grid must be increasing inside [0, 1)")
    rng = np.random.default_rng(seed)
    points = spec.sample_points(rng, n_points)
    has_fibers = spec.trivialization is not None
    even = spec.n % 2 == 0 and spec.riemannian
    probes = None
    target = None
    if has_fibers and even and spec.b:
        probes = spec.trivialization.base_chart.sample(rng, n_probes)
        chi = spec.fiber_euler_characteristic or 0
        target = chi * forms.base_euler_form_at(spec, probes).coeffs
    off, diag, push, total = [], [], [], []
    for eps in eps_grid:
        o, d = block_norms(spec, points, eps)
        off.append(o)
        diag.append(d)
        if probes is not None:
            pf = euler_pushforward(spec, probes, eps, order, periodic_order)
            push.append(float(np.max(np.abs(pf.coeffs - target))))
        else:
            push.append(None)
        if has_fibers and even and integrals:
            total.append(euler_integral(spec, eps, order, periodic_order))
        else:
            total.append(None)
        log.info("eps=%.6g offdiag=%.3e diag=%.3e push=%s", eps, o, d, push[-1])
    x = 1.0 - np.asarray(eps_grid)
    fits = {"offdiag_norm": fit_loglog(x, off), "diag_corr_norm": fit_loglog(x, diag)}
    if probes is not None:
        fits["pushforward_err"] = fit_loglog(x, push)
    meta = {"n_points": n_points, "n_probes": n_probes if probes is not None else 0, "order": order, "seed": seed}
    return SweepResult(spec.name, eps_grid, off, diag, push, total, fits, meta)
