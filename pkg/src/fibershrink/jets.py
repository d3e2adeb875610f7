"""Truncated multivariate Taylor jets of order at most three.

A :class:`Jet3` carries a value together with all of its partial derivatives
up to a fixed order, with respect to ``dim`` independent variables. The
coefficients are plain derivatives (no factorials):

    c0[...]           = f
    c1[i, ...]        = df/dx_i
    c2[i, j, ...]     = d2f/dx_i dx_j
    c3[i, j, k, ...]  = d3f/dx_i dx_j dx_k

Derivative axes come first and the value axes ("..." above) last, so a jet can
be array valued: a metric evaluated on a batch of ``P`` points is a single jet
with value shape ``(P, n, n)``. All arithmetic keeps the batch and value axes
and is exact to the stored order.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import JetDomainError, JetError, OrderError, SingularPointError

MAX_ORDER = 3


def _sym3(t: np.ndarray) -> np.ndarray:
    """t[i,j,k] + t[i,k,j] + t[j,k,i] over the three leading axes."""
    rest = tuple(range(3, t.ndim))
    return t + t.transpose((0, 2, 1) + rest) + t.transpose((2, 0, 1) + rest)


def _leibniz(a: Sequence[np.ndarray], b: Sequence[np.ndarray], op, order: int) -> list[np.ndarray]:
    """Coefficients of op(a, b) for a bilinear, broadcasting ``op``."""
    out = [op(a[0], b[0])]
    if order >= 1:
        out.append(op(a[1], b[0][None]) + op(a[0][None], b[1]))
    if order >= 2:
        cross = op(a[1][:, None], b[1][None, :])
        # grouped so that swapping a and b reproduces every sum bit for bit
        out.append(
            (op(a[2], b[0][None, None]) + op(a[0][None, None], b[2]))
            + (cross + np.swapaxes(cross, 0, 1))
        )
    if order >= 3:
        t21 = op(a[2][:, :, None], b[1][None, None, :])
        t12 = op(a[1][None, None, :], b[2][:, :, None])
        out.append(
            (op(a[3], b[0][None, None, None]) + op(a[0][None, None, None], b[3]))
            + (_sym3(t21) + _sym3(t12))
        )
    return out


def _chain(derivs: Sequence[np.ndarray], a: Sequence[np.ndarray], order: int) -> list[np.ndarray]:
    """Coefficients of phi(a) given phi and its derivatives evaluated at a.c0."""
    out = [derivs[0]]
    if order >= 1:
        out.append(derivs[1] * a[1])
    if order >= 2:
        a1a1 = a[1][:, None] * a[1][None, :]
        out.append(derivs[2] * a1a1 + derivs[1] * a[2])
    if order >= 3:
        a111 = a1a1[:, :, None] * a[1][None, None, :]
        out.append(
            derivs[3] * a111
            + derivs[2] * _sym3(a[2][:, :, None] * a[1][None, None, :])
            + derivs[1] * a[3]
        )
    return out


class Jet3:
    """Array-valued jet of order ``order`` (0..3) in ``dim`` variables."""

    __array_ufunc__ = None

    def __init__(self, coeffs: Sequence[np.ndarray], dim: int):
        coeffs = [np.asarray(c, dtype=float) for c in coeffs]
        if not 1 <= len(coeffs) <= MAX_ORDER + 1:
            raise OrderError(f"jets carry 1..{MAX_ORDER + 1} coefficient arrays, got {len(coeffs)}")
        shape = coeffs[0].shape
        for k, c in enumerate(coeffs):
            if c.shape != (dim,) * k + shape:
                raise JetError(f"coefficient {k} has shape {c.shape}, expected {(dim,) * k + shape}")
        self.coeffs = coeffs
        self.dim = dim

    # -- construction -------------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int, order: int = MAX_ORDER) -> "Jet3":
        value = np.asarray(value, dtype=float)
        return cls([value] + [np.zeros((dim,) * k + value.shape) for k in range(1, order + 1)], dim)

    # -- accessors ----------------------------------------------------------
    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs[0].shape

    def _coeff(self, k: int):
        return self.coeffs[k] if k <= self.order else None

    c0 = property(lambda self: self._coeff(0))
    c1 = property(lambda self: self._coeff(1))
    c2 = property(lambda self: self._coeff(2))
    c3 = property(lambda self: self._coeff(3))

    def __repr__(self) -> str:
        return f"Jet3(dim={self.dim}, order={self.order}, shape={self.shape})"

    def truncate(self, order: int) -> "Jet3":
        if order > self.order:
            raise OrderError(f"cannot raise jet order from {self.order} to {order}")
        return Jet3(self.coeffs[: order + 1], self.dim)

    def __getitem__(self, idx) -> "Jet3":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if not any(i is Ellipsis for i in idx):
            idx = idx + (Ellipsis,)
        return Jet3([c[(slice(None),) * k + idx] for k, c in enumerate(self.coeffs)], self.dim)

    def map_linear(self, fn: Callable[[np.ndarray], np.ndarray]) -> "Jet3":
        """Apply a linear map acting on trailing value axes to every coefficient."""
        return Jet3([fn(c) for c in self.coeffs], self.dim)

    def grad(self) -> "Jet3":
        """Jet of the gradient; the new derivative index is appended to the value axes."""
        if self.order == 0:
            raise OrderError("order-0 jet carries no derivative")
        return Jet3([np.moveaxis(c, 0, -1) for c in self.coeffs[1:]], self.dim)

    def broadcast_to(self, shape: tuple[int, ...]) -> "Jet3":
        return Jet3([np.broadcast_to(c, (self.dim,) * k + tuple(shape)) for k, c in enumerate(self.coeffs)], self.dim)

    # -- arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> "Jet3 | None":
        if isinstance(other, Jet3):
            if other.dim != self.dim:
                raise JetError(f"jets in {self.dim} and {other.dim} variables do not mix")
            return other
        return None

    def _common(self, other: "Jet3") -> tuple["Jet3", "Jet3", int]:
        order = min(self.order, other.order)
        shape = np.broadcast_shapes(self.shape, other.shape)
        return self.truncate(order).broadcast_to(shape), other.truncate(order).broadcast_to(shape), order

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            other = np.asarray(other, dtype=float)
            a = self.broadcast_to(np.broadcast_shapes(self.shape, other.shape))
            return Jet3([a.coeffs[0] + other] + a.coeffs[1:], self.dim)
        a, b, _ = self._common(o)
        return Jet3([x + y for x, y in zip(a.coeffs, b.coeffs)], self.dim)

    __radd__ = __add__

    def __neg__(self):
        return Jet3([-c for c in self.coeffs], self.dim)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            other = np.asarray(other, dtype=float)
            return Jet3([c * other for c in self.coeffs], self.dim)
        a, b, order = self._common(o)
        return Jet3(_leibniz(a.coeffs, b.coeffs, np.multiply, order), self.dim)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * reciprocal(o)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        return power(self, p)

    def apply(self, derivs: Sequence[np.ndarray]) -> "Jet3":
        """Compose a scalar function with this jet, given phi^(m)(c0) for m=0..order."""
        return Jet3(_chain(derivs, self.coeffs, self.order), self.dim)


# -- construction helpers ------------------------------------------------------


def lift_coordinate(index: int, value, dim: int, order: int = MAX_ORDER) -> Jet3:
    """Jet of the coordinate function x_index at ``value`` (scalar or batch)."""
    if not 0 <= index < dim:
        raise JetError(f"coordinate index {index} out of range for dim {dim}")
    value = np.asarray(value, dtype=float)
    c1 = np.zeros((dim,) + value.shape)
    c1[index] = 1.0
    coeffs = [value, c1] + [np.zeros((dim,) * k + value.shape) for k in range(2, order + 1)]
    return Jet3(coeffs[: order + 1], dim)


def lift_point(points, order: int = MAX_ORDER) -> list[Jet3]:
    """Coordinate jets for an array of points of shape (..., n)."""
    points = np.asarray(points, dtype=float)
    n = points.shape[-1]
    return [lift_coordinate(i, points[..., i], n, order) for i in range(n)]


def as_jet(x, like: Jet3) -> Jet3:
    if isinstance(x, Jet3):
        return x
    return Jet3.constant(np.broadcast_to(np.asarray(x, dtype=float), like.shape), like.dim, like.order)


def stack(items: Sequence, axis: int = -1) -> Jet3:
    """Stack jets (or constants) along a new value axis."""
    template = next((x for x in items if isinstance(x, Jet3)), None)
    if template is None:
        raise JetError("stack needs at least one jet")
    order = min(x.order for x in items if isinstance(x, Jet3))
    shape = np.broadcast_shapes(*[np.shape(x.c0) if isinstance(x, Jet3) else np.shape(x) for x in items])
    jets = [as_jet(x, template).truncate(order).broadcast_to(shape) for x in items]
    if axis >= 0:
        raise JetError("stack only supports negative value axes")
    return Jet3([np.stack([j.coeffs[k] for j in jets], axis=axis) for k in range(order + 1)], template.dim)


def matrix(rows: Sequence[Sequence], like: Jet3 | None = None) -> Jet3:
    """Assemble a jet-valued matrix from nested rows of jets/constants.

    ``like`` supplies dim, order and batch shape when every entry is constant.
    """
    if like is not None:
        rows = [[as_jet(x, like) for x in r] for r in rows]
    return stack([stack(list(r)) for r in rows], axis=-2)


def vector(items: Sequence, like: Jet3 | None = None) -> Jet3:
    if like is not None:
        items = [as_jet(x, like) for x in items]
    return stack(list(items))


# -- univariate functions ------------------------------------------------------


def _check_finite_domain(cond: np.ndarray, exc, msg: str):
    if np.any(cond):
        raise exc(msg)


def reciprocal(a: Jet3) -> Jet3:
    x = a.c0
    _check_finite_domain(x == 0.0, SingularPointError, "division by a jet with zero value")
    inv = 1.0 / x
    return a.apply([inv, -inv**2, 2 * inv**3, -6 * inv**4][: a.order + 1])


def power(a, p: int):
    if not isinstance(a, Jet3):
        return np.asarray(a, dtype=float) ** p
    if int(p) != p:
        raise JetError("only integer powers are supported")
    p = int(p)
    if p < 0:
        return power(reciprocal(a), -p)
    x = a.c0
    derivs = []
    for m in range(a.order + 1):
        coef = math.perm(p, m) if m <= p else 0
        derivs.append(coef * x ** max(p - m, 0) if coef else np.zeros_like(x))
    return a.apply(derivs)


def sin(a):
    if not isinstance(a, Jet3):
        return np.sin(a)
    s, c = np.sin(a.c0), np.cos(a.c0)
    return a.apply([s, c, -s, -c][: a.order + 1])


def cos(a):
    if not isinstance(a, Jet3):
        return np.cos(a)
    s, c = np.sin(a.c0), np.cos(a.c0)
    return a.apply([c, -s, -c, s][: a.order + 1])


def exp(a):
    if not isinstance(a, Jet3):
        return np.exp(a)
    e = np.exp(a.c0)
    return a.apply([e] * (a.order + 1))


def sqrt(a):
    if not isinstance(a, Jet3):
        return np.sqrt(a)
    x = a.c0
    _check_finite_domain(x <= 0.0, JetDomainError, "sqrt of a nonpositive jet")
    r = np.sqrt(x)
    return a.apply([r, 0.5 / r, -0.25 / (r * x), 0.375 / (r * x * x)][: a.order + 1])


def arccos(a):
    if not isinstance(a, Jet3):
        return np.arccos(a)
    x = a.c0
    _check_finite_domain(np.abs(x) >= 1.0, JetDomainError, "arccos needs |x| < 1")
    w = 1.0 - x * x
    r = np.sqrt(w)
    return a.apply([np.arccos(x), -1.0 / r, -x / (w * r), -(2 * x * x + 1) / (w * w * r)][: a.order + 1])


_UNARY = {"neg": lambda a: -a, "sin": sin, "cos": cos, "exp": exp, "sqrt": sqrt, "arccos": arccos}
_BINARY = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
}


def jet_compose(op: str, args: Sequence, power_exponent: int | None = None) -> Jet3:
    """Named-operation entry point: ``jet_compose("mul", [a, b])`` etc."""
    if op in _UNARY:
        (a,) = args
        return _UNARY[op](a)
    if op in _BINARY:
        a, b = args
        return _BINARY[op](a, b)
    if op == "pow-int":
        a = args[0]
        p = power_exponent if power_exponent is not None else args[1]
        return power(a, p)
    raise JetError(f"unknown jet operation {op!r}")


def extract_partial(j: Jet3, multi_index: Sequence[int]):
    """Mixed partial derivative along ``multi_index`` (plain, not factorial-scaled)."""
    multi_index = tuple(multi_index)
    if len(multi_index) > MAX_ORDER:
        raise OrderError(f"jets stop at order {MAX_ORDER}")
    if len(multi_index) > j.order:
        raise OrderError(f"jet of order {j.order} has no order-{len(multi_index)} partials")
    for i in multi_index:
        if not 0 <= i < j.dim:
            raise JetError(f"variable index {i} out of range for dim {j.dim}")
    c = j.coeffs[len(multi_index)]
    return c[multi_index] if multi_index else c


# -- tensor products -----------------------------------------------------------


def einsum(subscripts: str, a, b=None) -> Jet3:
    """einsum over value axes; derivative and batch axes ride along as '...'.

    Operands may be jets or constant arrays. Batch axes must agree between jet
    operands (constants may omit them).
    """
    ins, out = subscripts.split("->")
    parts = ins.split(",")
    full = ",".join("..." + p for p in parts) + "->..." + out
    if b is None:
        return a.map_linear(lambda c: np.einsum(full, c))
    op = lambda x, y: np.einsum(full, x, y)  # noqa: E731
    if isinstance(a, Jet3) and isinstance(b, Jet3):
        if a.dim != b.dim:
            raise JetError("jets in different variable counts do not mix")
        order = min(a.order, b.order)
        return Jet3(_leibniz(a.coeffs, b.coeffs, op, order), a.dim)
    if isinstance(a, Jet3):
        return a.map_linear(lambda c: np.einsum(full, c, b))
    if isinstance(b, Jet3):
        return b.map_linear(lambda c: np.einsum(full, a, c))
    return np.einsum(full, a, b)


def matmul(a, b) -> Jet3:
    return einsum("ij,jk->ik", a, b)


def transpose(a: Jet3) -> Jet3:
    return a.map_linear(lambda c: np.swapaxes(c, -1, -2))


def inv(a: Jet3) -> Jet3:
    """Jet of the matrix inverse of a jet-valued square matrix."""
    b0 = np.linalg.inv(a.c0)
    mm = lambda x, y: np.einsum("...ij,...jk->...ik", x, y)  # noqa: E731
    out = [b0]
    A = a.coeffs
    if a.order >= 1:
        out.append(-mm(mm(b0, A[1]), b0))
    if a.order >= 2:
        b1 = out[1]
        t = mm(A[1][:, None], b1[None, :])
        out.append(-mm(b0, mm(A[2], b0) + t + np.swapaxes(t, 0, 1)))
    if a.order >= 3:
        b1, b2 = out[1], out[2]
        t21 = mm(A[2][:, :, None], b1[None, None, :])
        t12 = mm(A[1][None, None, :], b2[:, :, None])
        out.append(-mm(b0, mm(A[3], b0) + _sym3(t21) + _sym3(t12)))
    return Jet3(out, a.dim)


def compose(outer: Jet3, inner: Jet3) -> Jet3:
    """Jet of ``outer`` (a jet in m variables at inner.c0) composed with ``inner``.

    ``inner`` has value shape ``B + (m,)``; ``outer`` has value shape ``B + S``.
    The result is a jet in ``inner.dim`` variables with value shape ``B + S``.
    """
    m = inner.shape[-1]
    if outer.dim != m:
        raise JetError(f"outer jet has {outer.dim} variables, inner map has {m} components")
    batch = inner.shape[:-1]
    vshape = outer.shape[len(batch):]
    if outer.shape[: len(batch)] != batch:
        raise JetError("outer and inner jets must share batch axes")
    s = int(np.prod(vshape, dtype=int))
    order = min(outer.order, inner.order)
    f = [c.reshape((m,) * k + batch + (s,)) for k, c in enumerate(outer.coeffs[: order + 1])]
    p = inner.coeffs
    out = [f[0]]
    if order >= 1:
        out.append(np.einsum("a...s,i...a->i...s", f[1], p[1]))
    if order >= 2:
        out.append(
            np.einsum("ab...s,i...a,j...b->ij...s", f[2], p[1], p[1])
            + np.einsum("a...s,ij...a->ij...s", f[1], p[2])
        )
    if order >= 3:
        t = np.einsum("ab...s,ij...a,k...b->ijk...s", f[2], p[2], p[1])
        out.append(
            np.einsum("abc...s,i...a,j...b,k...c->ijk...s", f[3], p[1], p[1], p[1])
            + _sym3(t)
            + np.einsum("a...s,ijk...a->ijk...s", f[1], p[3])
        )
    n = inner.dim
    return Jet3([c.reshape((n,) * k + batch + vshape) for k, c in enumerate(out)], n)
