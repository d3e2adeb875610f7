"""Metrics, Levi-Civita connections, curvature and orthonormal frames on one chart.

Index layouts (used verbatim everywhere else in the package):

* metric ``g[..., a, b]``.
* connection ``conn[..., i, k, j]`` is component ``i`` of ``D_{d_k} d_j``. For the
  Levi-Civita connection this is the symmetric Christoffel array
  ``Gamma^i_{kj}``.
* Riemann ``R[..., i, j, k, l] = R^i_{jkl}`` with
  ``R(d_k, d_l) d_j = R^i_{jkl} d_i`` and
  ``R(X, Y) Z = D_X D_Y Z - D_Y D_X Z - D_[X,Y] Z``.
* covariant derivative of a tensor appends the differentiation slot last:
  ``(nabla T)[..., idx, k] = (nabla_{d_k} T)[..., idx]``. Hence for a (1,1)
  tensor ``nabla2T[..., i, j, k, l]`` contracted with ``Y^k X^l`` is
  ``nabla^2_{X,Y} T = nabla_X(nabla_Y T) - nabla_{nabla_X Y} T``.

Every function takes a batch of points ``(P, n)`` and returns batched arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import jets
from .errors import DegenerateRestrictionError, GeometryError, SingularMetricError
from .jets import Jet3

DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class MetricField:
    """A metric given by a jet-evaluable formula on chart coordinates.

    ``func`` receives a list of ``dim`` coordinate scalars (jets or float arrays)
    and returns an ``dim x dim`` nested list of entries.
    """

    dim: int
    func: Callable[[Sequence], Sequence[Sequence]]
    signature: tuple[int, ...]
    name: str = ""

    def values(self, points) -> np.ndarray:
        """Plain metric matrices at a batch of points (no derivatives)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        coords = [points[:, i] for i in range(self.dim)]
        rows = self.func(coords)
        out = np.empty(points.shape[:1] + (self.dim, self.dim))
        for a in range(self.dim):
            for b in range(self.dim):
                out[:, a, b] = rows[a][b]
        return out


def sylvester_signs(g: np.ndarray) -> np.ndarray:
    """Sorted inertia (-1 first) of a batch of symmetric matrices."""
    ev = np.linalg.eigvalsh(g)
    return np.where(ev < 0, -1, 1)


def metric_at(m: MetricField, points, order: int = 3) -> Jet3:
    """Jet of the metric at a batch of points, value shape (P, n, n)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[-1] != m.dim:
        raise GeometryError(f"metric {m.name!r} has dim {m.dim}, got points of dim {points.shape[-1]}")
    if m.dim == 0:
        return Jet3.constant(np.zeros((len(points), 0, 0)), 0, order)
    coords = jets.lift_point(points, order)
    g = jets.matrix(m.func(coords), like=coords[0])
    g = g.broadcast_to((len(points), m.dim, m.dim)).map_linear(np.array)
    g0 = g.c0
    if np.max(np.abs(g0 - np.swapaxes(g0, -1, -2))) > 1e-14 * max(1.0, np.abs(g0).max()):
        raise GeometryError(f"metric {m.name!r} is not symmetric")
    det = np.linalg.det(g0)
    if np.any(np.abs(det) <= DEGENERACY_TOL):
        bad = np.flatnonzero(np.abs(det) <= DEGENERACY_TOL)
        raise SingularMetricError(f"metric {m.name!r} is degenerate at points {bad.tolist()}")
    return g


def christoffels_from_metric(g: Jet3) -> Jet3:
    """Levi-Civita Christoffel symbols ``Gamma[..., i, j, k]`` (order drops by one)."""
    dg = g.grad()  # dg[a, b, c] = d_c g_ab
    lowered = dg.map_linear(
        lambda c: 0.5 * (np.einsum("...lkj->...ljk", c) + c - np.einsum("...jkl->...ljk", c))
    )
    return jets.einsum("il,ljk->ijk", jets.inv(g.truncate(dg.order)), lowered)


def christoffels_at(m: MetricField, points, order: int = 3) -> Jet3:
    return christoffels_from_metric(metric_at(m, points, order))


def curvature_of_connection(conn: Jet3) -> Jet3:
    """Riemann tensor ``R[..., i, j, k, l]`` of a connection in the layout above."""
    d = conn.grad()  # d[i, k, j, l] = d_l conn^i_{kj}
    c = conn.truncate(d.order)
    quad = jets.einsum("ikm,mlj->ijkl", c, c)
    lin = d.map_linear(lambda a: np.einsum("...iljk->...ijkl", a) - np.einsum("...ikjl->...ijkl", a))
    return lin + quad - quad.map_linear(lambda a: np.swapaxes(a, -1, -2))


def riemann_at(m: MetricField, points) -> np.ndarray:
    """Riemann tensor values at a batch of points."""
    return curvature_of_connection(christoffels_at(m, points, order=2)).c0


def covariant_derivative(t: Jet3, conn: Jet3, kinds: str) -> Jet3:
    """Covariant derivative of a tensor field jet with index kinds like ``"ud"``.

    ``kinds[s]`` is ``"u"`` for a contravariant slot and ``"d"`` for a covariant
    one; batch axes precede the tensor slots. The result gains a trailing
    differentiation slot.
    """
    r = len(kinds)
    letters = "abcdefgh"[:r]
    out = letters + "k"
    result = t.grad()
    c = conn.truncate(min(conn.order, result.order))
    tt = t.truncate(result.order)
    for s, kind in enumerate(kinds):
        replaced = letters[:s] + "m" + letters[s + 1:]
        if kind == "u":
            sub = f"{letters[s]}km,{replaced}->{out}"
            result = result + jets.einsum(sub, c, tt)
        elif kind == "d":
            sub = f"mk{letters[s]},{replaced}->{out}"
            result = result - jets.einsum(sub, c, tt)
        else:
            raise ValueError(f"index kind must be 'u' or 'd', got {kind!r}")
    return result


def covariant_derivative_11(t: Jet3, conn: Jet3, x: np.ndarray) -> np.ndarray:
    """``nabla_X T`` for a (1,1)-tensor field jet, value at the points."""
    return np.einsum("...ijk,...k->...ij", covariant_derivative(t, conn, "ud").c0, x)


def second_covariant_derivative_11(t: Jet3, conn: Jet3, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``nabla^2_{X,Y} T = nabla_X(nabla_Y T) - nabla_{nabla_X Y} T``."""
    d2 = covariant_derivative(covariant_derivative(t, conn, "ud"), conn, "udd").c0
    return np.einsum("...ijkl,...k,...l->...ij", d2, y, x)


@dataclass
class FrameValue:
    """Orthonormal frames at a batch of points.

    ``columns[p, :, a]`` is frame vector ``a``; the first ``k`` are vertical.
    ``signs[p, a] = g(e_a, e_a)``.
    """

    columns: np.ndarray
    signs: np.ndarray
    n_vertical: int

    @property
    def dual(self) -> np.ndarray:
        return np.linalg.inv(self.columns)


def _inner(g: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...a,...ab,...b->...", u, g, v)


def orthonormal_frame_at(g: np.ndarray, vertical_basis: np.ndarray) -> FrameValue:
    """Signature-aware Gram-Schmidt frame, vertical vectors first.

    ``g`` has shape (P, n, n) and ``vertical_basis`` (P, n, k). The horizontal
    part is completed from coordinate basis vectors, each step taking the
    candidate with the largest ``|g(w, w)|`` (lowest index on ties). If the
    frame is negatively oriented its final column is negated.
    """
    g = np.asarray(g, dtype=float)
    P, n, _ = g.shape
    k = vertical_basis.shape[-1]
    cols = np.zeros((P, n, n))
    signs = np.zeros((P, n))
    rows = np.arange(P)

    def project_out(w, count):
        for a in range(count):
            e = cols[:, :, a]
            coeff = signs[:, a] * np.einsum("pa,pab,pb->p", w, g, e)
            w = w - coeff[:, None] * e
        return w

    for a in range(k):
        w = project_out(vertical_basis[:, :, a], a)
        norm2 = _inner(g, w, w)
        if np.any(np.abs(norm2) < DEGENERACY_TOL):
            raise DegenerateRestrictionError("null vector in the vertical basis")
        cols[:, :, a] = w / np.sqrt(np.abs(norm2))[:, None]
        signs[:, a] = np.sign(norm2)
    eye = np.eye(n)
    for a in range(k, n):
        cand = np.stack([project_out(np.broadcast_to(eye[m], (P, n)), a) for m in range(n)], axis=1)
        norm2 = np.einsum("pma,pab,pmb->pm", cand, g, cand)
        pick = np.argmax(np.abs(norm2), axis=1)
        best = norm2[rows, pick]
        if np.any(np.abs(best) < DEGENERACY_TOL):
            raise DegenerateRestrictionError("could not complete the horizontal frame")
        cols[:, :, a] = cand[rows, pick] / np.sqrt(np.abs(best))[:, None]
        signs[:, a] = np.sign(best)
    flip = np.linalg.det(cols) < 0
    cols[flip, :, -1] *= -1.0
    return FrameValue(cols, signs, k)


AXIS_KINDS = ("interval", "periodic", "polar")


@dataclass(frozen=True)
class Chart:
    """Open coordinate box with a per-axis kind used by samplers and quadrature.

    ``"periodic"`` axes wrap around, ``"polar"`` axes are colatitudes on
    ``(0, pi)`` that quadrature treats through ``u = cos(theta)``.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    kinds: tuple[str, ...]
    margin: float = 1e-2

    def __post_init__(self):
        if not len(self.lower) == len(self.upper) == len(self.kinds):
            raise GeometryError("chart bounds and kinds disagree in length")
        for k in self.kinds:
            if k not in AXIS_KINDS:
                raise GeometryError(f"unknown axis kind {k!r}")

    @property
    def dim(self) -> int:
        return len(self.kinds)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lo = np.asarray(self.lower) + self.margin
        hi = np.asarray(self.upper) - self.margin
        return lo + (hi - lo) * rng.random((count, self.dim))

    def contains(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        periodic = np.asarray([k == "periodic" for k in self.kinds])
        inside = (points > lo) & (points < hi)
        return np.all(inside | periodic, axis=-1)
