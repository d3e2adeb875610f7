"""Metrics with the fibers rescaled by ``1 - eps`` and their connections.

``g_eps(X, Y) = g((I - eps V) X, (I - eps V) Y)``. Everything here is
computed twice where possible: once directly from ``g_eps`` with the generic
geometry machinery, and once from closed-form expressions in undeformed
quantities, so each route is an oracle for the other.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import geometry, jets
from .errors import SingularMetricError
from .jets import Jet3
from .reports import ResidualReport
from .submersion import ProjectorState, SubmersionSpec, screen_points


def shrink_factor(eps: float) -> float:
    """``eps (2 - eps) = 1 - (1 - eps)^2``."""
    return eps * (2.0 - eps)


@dataclass(frozen=True)
class VariedMetric:
    spec: SubmersionSpec
    eps: float

    def __post_init__(self):
        if not np.isfinite(self.eps):
            raise ValueError("eps must be finite")


def _check_metric_eps(eps: float) -> None:
    if eps >= 1.0:
        raise SingularMetricError(f"the varied metric is degenerate for eps >= 1 (got {eps})")


def varied_metric_jet(g: Jet3, vertical: Jet3, eps: float) -> Jet3:
    _check_metric_eps(eps)
    shrink = np.eye(g.shape[-1]) - eps * vertical
    return jets.einsum("ai,ab->ib", shrink, jets.einsum("ab,bj->aj", g, shrink))


class VariedState:
    """Quantities of ``g_eps`` at a batch of points, sharing a :class:`ProjectorState`."""

    def __init__(self, base: ProjectorState, eps: float):
        _check_metric_eps(eps)
        self.base = base
        self.eps = float(eps)
        self.c = shrink_factor(self.eps)

    @classmethod
    def at(cls, vm: VariedMetric, points) -> "VariedState":
        return cls(ProjectorState(vm.spec, points), vm.eps)

    @cached_property
    def g_jet(self) -> Jet3:
        return varied_metric_jet(self.base.g_jet, self.base.vertical, self.eps)

    @property
    def g(self) -> np.ndarray:
        return self.g_jet.c0

    @cached_property
    def gamma(self) -> Jet3:
        return geometry.christoffels_from_metric(self.g_jet)

    @cached_property
    def difference(self) -> Jet3:
        """Difference tensor ``[..., i, k, j]``: component i of ``Gamma_eps(d_k, d_j)``."""
        return self.gamma - self.base.gamma

    @cached_property
    def riemann(self) -> np.ndarray:
        return geometry.curvature_of_connection(self.gamma).c0

    @cached_property
    def nabla_h_jet(self) -> Jet3:
        """``nabla^eps H`` for the same projector field ``H``."""
        return geometry.covariant_derivative(self.base.horizontal, self.gamma, "ud")

    @cached_property
    def nabla2_h(self) -> np.ndarray:
        return geometry.covariant_derivative(self.nabla_h_jet, self.gamma, "udd").c0

    @cached_property
    def nabla_difference(self) -> np.ndarray:
        """``[..., i, k, j, l] = ((nabla_{d_l} Gamma_eps)(d_k, d_j))^i`` using the undeformed connection."""
        return geometry.covariant_derivative(self.difference, self.base.gamma, "udd").c0

    @cached_property
    def frame_columns(self) -> np.ndarray:
        """``g_eps``-orthonormal frame: vertical frame vectors divided by ``1 - eps``."""
        cols = self.base.frame.columns.copy()
        cols[:, :, : self.base.k] /= 1.0 - self.eps
        return cols

    # -- operators -----------------------------------------------------------
    def inner(self, u, v):
        return np.einsum("...a,...ab,...b->...", u, self.g, v)

    def nabla_h(self, x):
        return np.einsum("...ijk,...k->...ij", self.nabla_h_jet.c0, x)

    def projector_curvature(self, x, y):
        d = self.nabla2_h
        return np.einsum("...ijkl,...k,...l->...ij", d, y, x) - np.einsum("...ijkl,...k,...l->...ij", d, x, y)

    def curvature_op(self, x, y):
        return np.einsum("...ijkl,...k,...l->...ij", self.riemann, x, y)

    def gamma_direct(self, x, y):
        return np.einsum("...ikj,...k,...j->...i", self.difference.c0, x, y)

    def nabla_gamma(self, x, y, z):
        """``(nabla_X Gamma_eps)(Y, Z)``."""
        return np.einsum("...ikjl,...k,...j,...l->...i", self.nabla_difference, y, z, x)


def g_eps_at(vm: VariedMetric, points) -> Jet3:
    return VariedState.at(vm, points).g_jet


def gamma_eps_direct_at(vm: VariedMetric, points) -> np.ndarray:
    return VariedState.at(vm, points).difference.c0


def gamma_eps_formula(state: ProjectorState, eps: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Closed-form difference tensor from undeformed projector derivatives (valid for eps <= 1)."""
    H, V = state.H, state.V
    hx, hy = _apply(H, x), _apply(H, y)
    vx, vy = _apply(V, x), _apply(V, y)
    total = _apply(state.nabla_h(hx), vy) + _apply(state.nabla_h(hy), vx) + _apply(state.nabla_h(vx), vy)
    return shrink_factor(eps) * total


def hessian_pi_at(state: ProjectorState, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``(nabla^2 pi)(X, Y)`` as a base vector."""
    return np.einsum("...ajk,...j,...k->...a", state.hessian_pi_jet.c0, x, y)


def third_pi_at(state: ProjectorState, x, y, z) -> np.ndarray:
    """``(nabla^3 pi)(X, Y, Z) = (nabla_X nabla^2 pi)(Y, Z)``."""
    return np.einsum("...ajkl,...j,...k,...l->...a", state.third_pi, y, z, x)


def _apply(a, v):
    return np.einsum("...ij,...j->...i", a, v)


def variation_suite(
    spec: SubmersionSpec,
    points,
    eps: float,
    tol: float = 1e-9,
    seed: int = 0,
) -> ResidualReport:
    """Residuals of the varied-metric identities at one ``eps``."""
    pts, skipped = screen_points(spec, points)
    report = ResidualReport(spec.name, seed, skipped=skipped, meta={"eps": eps})
    if len(pts) == 0:
        return report
    s = ProjectorState(spec, pts)
    ve = VariedState(s, eps)
    rng = np.random.default_rng(seed)
    c = ve.c
    X, Y, Z = (s.random_vectors(rng) for _ in range(3))
    W = s.random_vectors(rng, "vertical")
    L = s.random_vectors(rng, "horizontal")
    H, V = s.H, s.V

    def add(name, r):
        report.add(name, r, pts, tol)

    fr = s.frame.columns
    gram = np.einsum("pai,pab,pbj->pij", fr, ve.g, fr)
    scale = np.ones(s.n)
    scale[: s.k] = (1.0 - eps) ** 2
    expected = np.einsum("pi,i->pi", s.frame.signs, scale)
    add("varied_metric_in_frame", np.max(np.abs(gram - expected[:, :, None] * np.eye(s.n)), axis=(-1, -2)))
    mixed = np.einsum("pa,pab,pb->p", _apply(H, X), ve.g, _apply(V, Y))
    add("varied_metric_keeps_splitting", np.abs(mixed))

    direct = ve.gamma_direct(X, Y)
    add("difference_tensor_formula", s.vec_norm(direct - gamma_eps_formula(s, eps, X, Y)))
    add("difference_tensor_symmetric", s.vec_norm(direct - ve.gamma_direct(Y, X)))
    add("difference_tensor_horizontal", s.vec_norm(_apply(V, direct)))
    add("difference_tensor_on_vertical", s.vec_norm(ve.gamma_direct(X, W) - c * _apply(s.nabla_h(X), W)))
    add("difference_tensor_on_horizontal", s.vec_norm(ve.gamma_direct(X, L) - c * _apply(s.nabla_h(L), _apply(V, X))))

    dg = geometry.covariant_derivative(ve.g_jet, s.gamma, "dd").c0
    lhs = np.einsum("...abk,...a,...b,...k->...", dg, Y, Z, X)
    rhs = c * s.inner(Y, _apply(s.nabla_h(X), Z))
    add("varied_metric_derivative", np.abs(lhs - rhs))

    if s.b:
        hess = hessian_pi_at(s, X, Y)
        add("map_hessian_projection", s.base_vec_norm(c * hess - s.push(direct)))

    nXe, nYe = ve.nabla_h(X), ve.nabla_h(Y)
    nX, nY = s.nabla_h(X), s.nabla_h(Y)
    q = (1.0 - eps) ** 2
    add("varied_projector_derivative_on_horizontal", s.vec_norm(_apply(nXe, L) - _apply(nX, L)))
    add("varied_projector_derivative_on_vertical", s.vec_norm(_apply(nXe, W) - q * _apply(nX, W)))
    add("varied_projector_derivative_product", s.op_norm(nXe @ nYe - q * nX @ nY))
    add("varied_projector_derivative_commutator", s.op_norm(nXe @ nYe - nYe @ nXe - q * (nX @ nY - nY @ nX)))
    return report
