"""Projection maps, the horizontal/vertical projectors and their derivatives.

The central object is :class:`ProjectorState`, which evaluates everything the
verification suites need on a batch of points: the metric and its connection,
the projectors ``H`` and ``V`` as jets, ``nabla H`` and ``nabla^2 H``, the
curvature of the adapted connection (which restricts to the induced
connections on the two subbundles), and the base-side quantities pulled back
through the projection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Sequence

import numpy as np

from . import geometry, jets
from .errors import DegenerateRestrictionError, GeometryError, NotASubmersionError
from .geometry import Chart, FrameValue, MetricField
from .jets import Jet3
from .reports import ResidualReport

log = logging.getLogger(__name__)

RANK_TOL = 1e-12


@dataclass(frozen=True)
class ProjectionMap:
    """Jet-evaluable map from total-space chart coordinates to base coordinates."""

    func: Callable[[Sequence], Sequence]
    n: int
    b: int

    @property
    def k(self) -> int:
        return self.n - self.b

    def jet(self, points, order: int = 3) -> Jet3:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        coords = jets.lift_point(points, order)
        if self.b == 0:
            return Jet3.constant(np.zeros((len(points), 0)), self.n, order)
        return jets.vector(self.func(coords), like=coords[0]).broadcast_to((len(points), self.b))

    def values(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.b == 0:
            return np.zeros((len(points), 0))
        out = self.func([points[:, i] for i in range(self.n)])
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), len(points)) for v in out], axis=-1)


@dataclass(frozen=True)
class SubmersionSpec:
    name: str
    metric: MetricField
    base_metric: MetricField
    projection: ProjectionMap
    chart: Chart
    base_chart: Chart | None = None
    trivialization: Any = None
    fiber_euler_characteristic: int | None = None
    description: str = ""
    euler_characteristic: int | None = None
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.projection.n

    @property
    def b(self) -> int:
        return self.projection.b

    @property
    def k(self) -> int:
        return self.projection.k

    @property
    def riemannian(self) -> bool:
        return all(s > 0 for s in self.metric.signature)

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.chart.sample(rng, count)


# -- kernel basis and projectors -----------------------------------------------


def pivot_columns(d: np.ndarray) -> tuple[int, ...]:
    """Columns chosen by row-wise elimination with partial pivoting over columns."""
    a = np.array(d, dtype=float)
    b, n = a.shape
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    piv: list[int] = []
    for r in range(b):
        free = [c for c in range(n) if c not in piv]
        vals = np.abs(a[r, free])
        j = int(np.argmax(vals))
        if vals[j] <= RANK_TOL * scale:
            raise NotASubmersionError(f"projection differential has rank {r} < {b}")
        c = free[j]
        piv.append(c)
        a[r + 1:] -= np.outer(a[r + 1:, c] / a[r, c], a[r])
    return tuple(piv)


def kernel_basis(dpi: Jet3) -> Jet3:
    """Jet of a basis of ker(Dpi), value shape (P, n, k).

    Pivot columns are selected per point from the value of Dpi; the basis is
    ``[-Dp^{-1} Df ; I]`` rearranged into chart order, smooth near the point.
    """
    P, b, n = dpi.shape
    k = n - b
    order = dpi.order
    if b == 0:
        return Jet3.constant(np.broadcast_to(np.eye(n), (P, n, n)), n, order)
    groups: dict[tuple[int, ...], list[int]] = {}
    for p in range(P):
        groups.setdefault(pivot_columns(dpi.c0[p]), []).append(p)
    coeffs = [np.zeros((n,) * o + (P, n, k)) for o in range(order + 1)]
    for piv, members in groups.items():
        idx = np.asarray(members)
        free = [c for c in range(n) if c not in piv]
        sub = dpi[idx]
        dp = sub[:, :, list(piv)]
        df = sub[:, :, free]
        top = -jets.matmul(jets.inv(dp), df)  # (Pg, b, k)
        for o in range(order + 1):
            block = np.zeros((n,) * o + (len(idx), n, k))
            block[(Ellipsis, list(piv), slice(None))] = top.coeffs[o]
            if o == 0:
                block[(Ellipsis, free, slice(None))] = np.eye(k)
            coeffs[o][(slice(None),) * o + (idx,)] = block
    return Jet3(coeffs, n)


def vertical_projector(g: Jet3, kernel: Jet3) -> Jet3:
    """g-orthogonal projector onto span(kernel): K (K^T g K)^{-1} K^T g."""
    kt_g = jets.einsum("ai,ab->ib", kernel, g)
    gram = jets.einsum("ib,bj->ij", kt_g, kernel)
    g0 = gram.c0
    scale = np.maximum(np.abs(g0).max(axis=(-1, -2), initial=0.0), 1.0) ** g0.shape[-1]
    if g0.shape[-1] and np.any(np.abs(np.linalg.det(g0)) < geometry.DEGENERACY_TOL * scale):
        raise DegenerateRestrictionError("metric restricted to the fibers is degenerate")
    return jets.matmul(jets.matmul(kernel, jets.inv(gram)), kt_g)


def screen_points(spec: SubmersionSpec, points) -> tuple[np.ndarray, list[dict]]:
    """Drop (and report) points where the submersion preconditions fail."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    keep, skipped = [], []
    for i, p in enumerate(points):
        try:
            ProjectorState(spec, p[None]).vertical
        except (GeometryError, np.linalg.LinAlgError) as exc:
            log.warning("skipping point %s of %s: %s", p.tolist(), spec.name, exc)
            skipped.append({"index": i, "point": p.tolist(), "reason": str(exc)})
        else:
            keep.append(i)
    return points[keep], skipped


class ProjectorState:
    """Projectors, their covariant derivatives and curvature data at a batch of points.

    Jet orders: metric 2, connection 1, projection map 3, projectors 2,
    ``nabla H`` 1; second derivatives and curvatures are values only.
    """

    def __init__(self, spec: SubmersionSpec, points):
        self.spec = spec
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.P, self.n = self.points.shape
        self.b, self.k = spec.b, spec.k

    # -- metric side ---------------------------------------------------------
    @cached_property
    def g_jet(self) -> Jet3:
        return geometry.metric_at(self.spec.metric, self.points, order=2)

    @property
    def g(self) -> np.ndarray:
        return self.g_jet.c0

    @cached_property
    def gamma(self) -> Jet3:
        return geometry.christoffels_from_metric(self.g_jet)

    @cached_property
    def riemann(self) -> np.ndarray:
        return geometry.curvature_of_connection(self.gamma).c0

    # -- projection side -----------------------------------------------------
    @cached_property
    def pi_jet(self) -> Jet3:
        return self.spec.projection.jet(self.points, order=3)

    @cached_property
    def dpi_jet(self) -> Jet3:
        return self.pi_jet.grad()

    @property
    def dpi(self) -> np.ndarray:
        return self.dpi_jet.c0

    @cached_property
    def kernel(self) -> Jet3:
        return kernel_basis(self.dpi_jet)

    @cached_property
    def vertical(self) -> Jet3:
        return vertical_projector(self.g_jet, self.kernel.truncate(2))

    @cached_property
    def horizontal(self) -> Jet3:
        return np.eye(self.n) - self.vertical

    @property
    def V(self) -> np.ndarray:
        return self.vertical.c0

    @property
    def H(self) -> np.ndarray:
        return self.horizontal.c0

    @cached_property
    def nabla_h_jet(self) -> Jet3:
        """``[..., i, j, k] = (nabla_k H)^i_j``."""
        return geometry.covariant_derivative(self.horizontal, self.gamma, "ud")

    @cached_property
    def nabla_v(self) -> np.ndarray:
        return geometry.covariant_derivative(self.vertical, self.gamma, "ud").c0

    @cached_property
    def nabla2_h(self) -> np.ndarray:
        """``[..., i, j, k, l]``; contract with ``Y^k X^l`` for nabla^2_{X,Y} H."""
        return geometry.covariant_derivative(self.nabla_h_jet, self.gamma, "udd").c0

    @cached_property
    def frame(self) -> FrameValue:
        return geometry.orthonormal_frame_at(self.g, self.kernel.c0)

    @cached_property
    def frame_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.frame.columns)

    @cached_property
    def adapted_connection(self) -> Jet3:
        """Connection ``D = nabla + (2H - I) nabla H``.

        ``D`` preserves both subbundles and restricts to ``V nabla(V .)`` on
        vertical and ``H nabla(H .)`` on horizontal sections.
        """
        reflect = 2.0 * self.horizontal.truncate(1) - np.eye(self.n)
        return self.gamma + jets.einsum("im,mjk->ikj", reflect, self.nabla_h_jet)

    @cached_property
    def adapted_riemann(self) -> np.ndarray:
        return geometry.curvature_of_connection(self.adapted_connection).c0

    # -- base side -----------------------------------------------------------
    @cached_property
    def base_points(self) -> np.ndarray:
        return self.pi_jet.c0

    @cached_property
    def base_g_jet(self) -> Jet3:
        return geometry.metric_at(self.spec.base_metric, self.base_points, order=2)

    @property
    def base_g(self) -> np.ndarray:
        return self.base_g_jet.c0

    @cached_property
    def base_gamma(self) -> Jet3:
        return geometry.christoffels_from_metric(self.base_g_jet)

    @cached_property
    def base_riemann(self) -> np.ndarray:
        return geometry.curvature_of_connection(self.base_gamma).c0

    @cached_property
    def base_gamma_pulled(self) -> Jet3:
        """Base Christoffels as a jet in total-space variables."""
        return jets.compose(self.base_gamma, self.pi_jet.truncate(self.base_gamma.order))

    @cached_property
    def hessian_pi_jet(self) -> Jet3:
        """``[..., a, j, k] = (nabla^2 pi)(d_j, d_k)^a``."""
        d2 = self.dpi_jet.grad()
        dpi = self.dpi_jet.truncate(1)
        tb = jets.einsum("abc,bj->acj", self.base_gamma_pulled, dpi)
        tb = jets.einsum("acj,ck->ajk", tb, dpi)
        return d2 + tb - jets.einsum("am,mjk->ajk", dpi, self.gamma)

    @cached_property
    def third_pi(self) -> np.ndarray:
        """``[..., a, j, k, l] = ((nabla_{d_l} nabla^2 pi)(d_j, d_k))^a``."""
        t = self.hessian_pi_jet
        d = t.grad().c0
        bg = np.einsum("...abc,...bl->...acl", self.base_gamma_pulled.c0, self.dpi)
        d = d + np.einsum("...acl,...cjk->...ajkl", bg, t.c0)
        gam = self.gamma.c0
        d = d - np.einsum("...mlj,...amk->...ajkl", gam, t.c0)
        d = d - np.einsum("...mlk,...ajm->...ajkl", gam, t.c0)
        return d

    @cached_property
    def base_frame(self) -> np.ndarray:
        """Orthonormal base frame ``Dpi H_a`` for the horizontal frame vectors."""
        return np.einsum("...aj,...jb->...ab", self.dpi, self.frame.columns[:, :, self.k:])

    # -- operators on vectors --------------------------------------------------
    def nabla_h(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("...ijk,...k->...ij", self.nabla_h_jet.c0, x)

    def nabla2h(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("...ijkl,...k,...l->...ij", self.nabla2_h, y, x)

    def curvature_op(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("...ijkl,...k,...l->...ij", self.riemann, x, y)

    def projector_curvature(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``R(X,Y)H`` as the commutator of second covariant derivatives."""
        return self.nabla2h(x, y) - self.nabla2h(y, x)

    def adapted_curvature_op(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("...ijkl,...k,...l->...ij", self.adapted_riemann, x, y)

    def base_curvature_op(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.einsum("...ijkl,...k,...l->...ij", self.base_riemann, u, v)

    def push(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("...aj,...j->...a", self.dpi, x)

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.einsum("...a,...ab,...b->...", u, self.g, v)

    # -- frame-measured norms --------------------------------------------------
    def vec_norm(self, v: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.einsum("...ab,...b->...a", self.frame_inverse, v), axis=-1)

    def op_norm(self, a: np.ndarray) -> np.ndarray:
        m = self.frame_inverse @ a @ self.frame.columns
        return np.linalg.norm(m, ord=2, axis=(-2, -1))

    def base_vec_norm(self, w: np.ndarray) -> np.ndarray:
        if self.b == 0:
            return np.zeros(w.shape[:-1])
        return np.linalg.norm(np.linalg.solve(self.base_frame, w[..., None])[..., 0], axis=-1)

    # -- random test vectors ---------------------------------------------------
    def random_vectors(self, rng: np.random.Generator, part: str = "all") -> np.ndarray:
        """Random combinations of frame vectors with coefficients in [-1, 1]."""
        cols = self.frame.columns
        if part == "vertical":
            cols = cols[:, :, : self.k]
        elif part == "horizontal":
            cols = cols[:, :, self.k:]
        c = rng.uniform(-1.0, 1.0, size=(self.P, cols.shape[-1]))
        return np.einsum("pab,pb->pa", cols, c)


def vertical_projector_at(spec: SubmersionSpec, points) -> ProjectorState:
    state = ProjectorState(spec, points)
    state.vertical  # noqa: B018 - force evaluation so precondition errors surface here
    return state


def nablaH_at(state: ProjectorState, x: np.ndarray) -> np.ndarray:
    return state.nabla_h(x)


def nabla2H_at(state: ProjectorState, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return state.nabla2h(x, y)


def _vector_field_derivative(field: Jet3, state: ProjectorState, x: np.ndarray, conn: Jet3 | None = None) -> np.ndarray:
    conn = state.gamma if conn is None else conn
    return np.einsum("...ik,...k->...i", geometry.covariant_derivative(field, conn, "u").c0, x)


def _comm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def _apply(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", a, v)


def projector_identity_suite(
    spec: SubmersionSpec,
    points,
    tol: float = 1e-8,
    seed: int = 0,
) -> ResidualReport:
    """Pointwise residuals of the projector identities on a sample of points.

    Each residual is measured in the orthonormal frame; vectors fed to the
    identities are random frame combinations drawn from ``seed``.
    """
    pts, skipped = screen_points(spec, points)
    report = ResidualReport(spec.name, seed, skipped=skipped)
    if len(pts) == 0:
        return report
    s = ProjectorState(spec, pts)
    rng = np.random.default_rng(seed)
    n, P = s.n, s.P
    eye = np.eye(n)
    H, V, g = s.H, s.V, s.g

    X, Y, X2 = (s.random_vectors(rng) for _ in range(3))
    U, W = (s.random_vectors(rng, "vertical") for _ in range(2))
    L, K = (s.random_vectors(rng, "horizontal") for _ in range(2))
    w_const, h_const = rng.uniform(-1, 1, (2, P, n))
    nX, nY = s.nabla_h(X), s.nabla_h(Y)
    n2XY = s.nabla2h(X, Y)

    def add(name, r):
        report.add(name, r, pts, tol)

    add("projector_sum", s.op_norm(H + V - eye))
    add("projector_idempotent", s.op_norm(H @ H - H) + s.op_norm(V @ V - V))
    if s.b:
        add("differential_kills_vertical", np.max(np.abs(np.linalg.solve(s.base_frame, s.dpi @ V @ s.frame.columns)), axis=(-1, -2)))
        fr = s.frame.columns
        iso = np.einsum("pai,pab,pbj->pij", s.dpi @ fr, s.base_g, s.dpi @ fr) - np.einsum(
            "pai,pab,pbj->pij", H @ fr, g, H @ fr
        )
        add("horizontal_isometry", np.max(np.abs(iso), axis=(-1, -2)))
    add("nabla_h_plus_nabla_v", s.op_norm(nX + np.einsum("...ijk,...k->...ij", s.nabla_v, X)))

    # vertical and horizontal sections from projected constant fields
    vert_field = jets.einsum("ij,j->i", s.vertical, w_const)
    hor_field = jets.einsum("ij,j->i", s.horizontal, h_const)
    Wf, Hf = _apply(V, w_const), _apply(H, h_const)
    dW = _vector_field_derivative(vert_field, s, X)
    dH = _vector_field_derivative(hor_field, s, X)
    add("horizontal_part_of_vertical_derivative", s.vec_norm(_apply(H, dW) + _apply(nX, Wf)))
    add("vertical_part_of_horizontal_derivative", s.vec_norm(_apply(V, dH) - _apply(nX, Hf)))
    dH_adapted = _vector_field_derivative(hor_field, s, X, s.adapted_connection)
    dW_adapted = _vector_field_derivative(vert_field, s, X, s.adapted_connection)
    add("horizontal_connection_split", s.vec_norm(dH - dH_adapted - _apply(nX, Hf)))
    add("vertical_connection_split", s.vec_norm(dW - dW_adapted + _apply(nX, Wf)))
    add("induced_connections_preserve_subbundles", s.vec_norm(_apply(V, dH_adapted)) + s.vec_norm(_apply(H, dW_adapted)))

    def self_adjoint_residual(a):
        ga = g @ a
        return s.op_norm(np.linalg.solve(g, ga - np.swapaxes(ga, -1, -2)))

    add("projector_self_adjoint", self_adjoint_residual(H))
    add("first_derivative_self_adjoint", self_adjoint_residual(nX))
    add("second_derivative_self_adjoint", self_adjoint_residual(s.nabla2h(X, X2)))

    add("derivative_on_vertical_is_horizontal", s.op_norm(nY @ V - H @ nY))
    add("derivative_on_horizontal_is_vertical", s.op_norm(nY @ H - V @ nY))

    sym = nX @ nY + nY @ nX
    add("codazzi_full", s.op_norm(n2XY @ V - nY @ nX - nX @ nY - H @ n2XY))
    add("codazzi_horizontal", s.vec_norm(-_apply(H @ n2XY, L) - _apply(sym, L)))
    add("codazzi_vertical", s.vec_norm(_apply(V @ n2XY, W) - _apply(sym, W)))

    add("vertical_symmetry", s.vec_norm(_apply(s.nabla_h(U), W) - _apply(s.nabla_h(W), U)))
    add("horizontal_skew_symmetry", s.vec_norm(_apply(s.nabla_h(L), K) + _apply(s.nabla_h(K), L)))

    R_XY = s.curvature_op(X, Y)
    RH_XY = s.projector_curvature(X, Y)
    RD_XY = s.adapted_curvature_op(X, Y)
    comm = _comm(nX, nY)
    add("projector_curvature_is_commutator", s.op_norm(RH_XY - _comm(R_XY, H)))
    lhs_v = _apply(R_XY, W)
    rhs_v = -_apply(RH_XY, W) + _apply(V @ RD_XY, W) - _apply(comm, W)
    add("curvature_split_on_vertical", s.vec_norm(lhs_v - rhs_v))
    add(
        "curvature_split_on_vertical_components",
        s.vec_norm(_apply(V @ RH_XY, W)) + s.vec_norm(_apply(H, _apply(V @ RD_XY, W) - _apply(comm, W))),
    )
    lhs_h = _apply(R_XY, L)
    rhs_h = _apply(RH_XY, L) + _apply(H @ RD_XY, L) - _apply(comm, L)
    add("curvature_split_on_horizontal", s.vec_norm(lhs_h - rhs_h))
    add(
        "curvature_split_on_horizontal_components",
        s.vec_norm(_apply(H @ RH_XY, L)) + s.vec_norm(_apply(V, _apply(H @ RD_XY, L) - _apply(comm, L))),
    )

    if s.k:
        A, B, C, D = (s.random_vectors(rng, "vertical") for _ in range(4))
        nA, nB = s.nabla_h(A), s.nabla_h(B)
        lhs = s.inner(_apply(s.curvature_op(A, B), C), D)
        intrinsic = s.inner(_apply(s.adapted_curvature_op(A, B), C), D)
        # second fundamental form of the fibers: II(X, U) = -nabla_X H . U
        ii = lambda x_op, u: -_apply(x_op, u)  # noqa: E731
        rhs = intrinsic + s.inner(ii(nA, C), ii(nB, D)) - s.inner(ii(nB, C), ii(nA, D))
        add("fiber_gauss_equation", np.abs(lhs - rhs))
        # the same statement with both second fundamental form terms sign flipped
        flipped = intrinsic - s.inner(ii(nA, C), ii(nB, D)) + s.inner(ii(nB, C), ii(nA, D))
        report.diagnostics.append(
            {"name": "fiber_gauss_equation_flipped_sign", "max_residual": float(np.max(np.abs(lhs - flipped)))}
        )
    return report


def bianchi_failure_witness(state: ProjectorState, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Frame norm of the cyclic sum of ``R(X,Y)H . Z`` (generically nonzero)."""
    total = (
        _apply(state.projector_curvature(x, y), z)
        + _apply(state.projector_curvature(y, z), x)
        + _apply(state.projector_curvature(z, x), y)
    )
    return state.vec_norm(total)
