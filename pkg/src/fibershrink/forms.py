"""Exterior forms at points, curvature form matrices and Pfaffians.

Forms are batched: ``coeffs[..., I]`` is the coefficient of
``dx^{i_1} ^ ... ^ dx^{i_d}`` for the ``I``-th strictly increasing index tuple
in ``itertools.combinations(range(dim), degree)`` order.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ParityError, UnsupportedSignatureError


@lru_cache(maxsize=None)
def basis(dim: int, degree: int) -> tuple[tuple[int, ...], ...]:
    if degree < 0 or degree > dim:
        return ()
    return tuple(itertools.combinations(range(dim), degree))


@lru_cache(maxsize=None)
def _index(dim: int, degree: int) -> dict[tuple[int, ...], int]:
    return {t: i for i, t in enumerate(basis(dim, degree))}


def permutation_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (0 if an entry repeats)."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def wedge_table(dim: int, p: int, q: int) -> np.ndarray:
    """``T[a, b, c]`` with ``e_a ^ e_b = sum_c T[a, b, c] e_c`` for the increasing bases."""
    out_basis = _index(dim, p + q)
    table = np.zeros((len(basis(dim, p)), len(basis(dim, q)), len(out_basis)))
    for a, ia in enumerate(basis(dim, p)):
        for b, ib in enumerate(basis(dim, q)):
            sign = permutation_sign(ia + ib)
            if sign:
                table[a, b, out_basis[tuple(sorted(ia + ib))]] = sign
    return table


@dataclass
class ExteriorForm:
    dim: int
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        expected = len(basis(self.dim, self.degree))
        if self.degree < 0 or self.degree > self.dim:
            expected = 0
        if self.coeffs.shape[-1:] != (expected,):
            raise ValueError(f"degree-{self.degree} form on dim {self.dim} needs {expected} coefficients")

    @classmethod
    def zero(cls, dim: int, degree: int, batch: tuple[int, ...] = ()) -> "ExteriorForm":
        n = len(basis(dim, degree)) if 0 <= degree <= dim else 0
        return cls(dim, degree, np.zeros(batch + (n,)))

    @classmethod
    def scalar(cls, value, dim: int = 0) -> "ExteriorForm":
        return cls(dim, 0, np.asarray(value, dtype=float)[..., None])

    @classmethod
    def from_components(cls, dim: int, degree: int, components: dict) -> "ExteriorForm":
        """Build from ``{index tuple: coefficient}``; unsorted tuples get the permutation sign."""
        out = np.zeros(len(basis(dim, degree)))
        idx = _index(dim, degree)
        for key, val in components.items():
            sign = permutation_sign(key)
            if sign:
                out[idx[tuple(sorted(key))]] += sign * val
        return cls(dim, degree, out)

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    def component(self, indices) -> np.ndarray:
        sign = permutation_sign(indices)
        if not sign:
            return np.zeros(self.batch_shape)
        return sign * self.coeffs[..., _index(self.dim, self.degree)[tuple(sorted(indices))]]

    def _same(self, other: "ExteriorForm"):
        if self.dim != other.dim or self.degree != other.degree:
            raise ValueError("forms differ in dimension or degree")

    def __add__(self, other):
        self._same(other)
        return ExteriorForm(self.dim, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._same(other)
        return ExteriorForm(self.dim, self.degree, self.coeffs - other.coeffs)

    def __neg__(self):
        return ExteriorForm(self.dim, self.degree, -self.coeffs)

    def __mul__(self, scalar):
        s = np.asarray(scalar, dtype=float)
        return ExteriorForm(self.dim, self.degree, self.coeffs * s[..., None] if s.ndim else self.coeffs * s)

    __rmul__ = __mul__

    def wedge(self, other: "ExteriorForm") -> "ExteriorForm":
        if self.dim != other.dim:
            raise ValueError("wedge of forms on different spaces")
        deg = self.degree + other.degree
        if deg > self.dim:
            batch = np.broadcast_shapes(self.batch_shape, other.batch_shape)
            return ExteriorForm.zero(self.dim, deg, batch)
        table = wedge_table(self.dim, self.degree, other.degree)
        return ExteriorForm(self.dim, deg, np.einsum("...a,...b,abc->...c", self.coeffs, other.coeffs, table))

    __xor__ = wedge

    def max_abs(self) -> np.ndarray:
        return np.max(np.abs(self.coeffs), axis=-1, initial=0.0)

    def to_dict(self) -> dict:
        if self.batch_shape:
            raise ValueError("to_dict needs a single form; index the batch first")
        return {
            "degree": self.degree,
            "entries": [[list(t), float(c)] for t, c in zip(basis(self.dim, self.degree), self.coeffs) if c != 0.0],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, dim: int, data: dict) -> "ExteriorForm":
        return cls.from_components(dim, data["degree"], {tuple(k): v for k, v in data["entries"]})

    def __getitem__(self, idx) -> "ExteriorForm":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return ExteriorForm(self.dim, self.degree, self.coeffs[idx + (Ellipsis, slice(None))])


# -- Pfaffians -----------------------------------------------------------------


def _pfaffian_rec(entry, indices: tuple[int, ...], memo: dict, one):
    if not indices:
        return one
    if indices in memo:
        return memo[indices]
    first, rest = indices[0], indices[1:]
    total = None
    for pos, j in enumerate(rest):
        sub = _pfaffian_rec(entry, rest[:pos] + rest[pos + 1:], memo, one)
        term = _mul(entry(first, j), sub)
        if pos % 2:
            term = -term
        total = term if total is None else total + term
    memo[indices] = total
    return total


def _mul(a, b):
    if isinstance(a, ExteriorForm):
        return a.wedge(b)
    return a * b


def pfaffian_matrix(a: np.ndarray) -> np.ndarray:
    """Pfaffian of a batch of scalar antisymmetric matrices by first-row expansion."""
    a = np.asarray(a, dtype=float)
    m = a.shape[-1]
    if m % 2:
        raise ParityError(f"Pfaffian needs an even-sized matrix, got {m}")
    return _pfaffian_rec(lambda i, j: a[..., i, j], tuple(range(m)), {}, np.ones(a.shape[:-2]))


def pfaffian_bruteforce(a: np.ndarray) -> np.ndarray:
    """Permutation-sum definition; for testing only."""
    a = np.asarray(a, dtype=float)
    size = a.shape[-1]
    if size % 2:
        raise ParityError(f"Pfaffian needs an even-sized matrix, got {size}")
    m = size // 2
    total = np.zeros(a.shape[:-2])
    for perm in itertools.permutations(range(size)):
        term = permutation_sign(perm) * np.ones(a.shape[:-2])
        for r in range(m):
            term = term * a[..., perm[2 * r], perm[2 * r + 1]]
        total = total + term
    return total / (2**m * math.factorial(m))


def pfaffian(entries) -> ExteriorForm:
    """Pfaffian of a square array of even-degree forms (nested lists or a FormMatrix)."""
    if isinstance(entries, FormMatrix):
        return entries.pfaffian()
    size = len(entries)
    if size % 2:
        raise ParityError(f"Pfaffian needs an even-sized matrix, got {size}")
    if size == 0:
        raise ValueError("empty form matrix has no dimension information; use FormMatrix")
    sample = entries[0][0]
    if sample.degree % 2:
        raise ValueError("Pfaffian entries must have even degree")
    one = ExteriorForm.scalar(np.ones(sample.batch_shape), sample.dim)
    return _pfaffian_rec(lambda i, j: entries[i][j], tuple(range(size)), {}, one)


@dataclass
class FormMatrix:
    """Batched square matrix of 2-forms: ``omega[..., i, j, I]``."""

    dim: int
    omega: np.ndarray
    signs: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.omega.shape[-2]

    def entry(self, i: int, j: int) -> ExteriorForm:
        return ExteriorForm(self.dim, 2, self.omega[..., i, j, :])

    def block(self, rows: slice, cols: slice) -> "FormMatrix":
        signs = None if self.signs is None else self.signs[..., rows]
        return FormMatrix(self.dim, self.omega[..., rows, cols, :], signs)

    def blocks(self, k: int) -> dict[str, "FormMatrix"]:
        v, h = slice(0, k), slice(k, self.size)
        return {
            "vertical": self.block(v, v),
            "horizontal": self.block(h, h),
            "mixed_vh": self.block(v, h),
            "mixed_hv": self.block(h, v),
        }

    def max_abs(self) -> np.ndarray:
        flat = np.abs(self.omega).reshape(self.omega.shape[:-3] + (-1,))
        return np.max(flat, axis=-1, initial=0.0)

    def pfaffian(self) -> ExteriorForm:
        if self.size % 2:
            raise ParityError(f"Pfaffian needs an even-sized matrix, got {self.size}")
        one = ExteriorForm.scalar(np.ones(self.omega.shape[:-3]), self.dim)
        return _pfaffian_rec(self.entry, tuple(range(self.size)), {}, one)

    def euler_form(self) -> ExteriorForm:
        """``(2 pi)^{-size/2} Pf``; only defined for positive-definite frames."""
        if self.signs is not None and np.any(self.signs < 0):
            raise UnsupportedSignatureError("Euler forms are only supported for Riemannian signature")
        return self.pfaffian() * (2.0 * np.pi) ** (-self.size / 2)


def curvature_form_matrix(riemann: np.ndarray, g: np.ndarray, frame: np.ndarray, signs: np.ndarray) -> FormMatrix:
    """``Omega_ij(d_k, d_l) = signs_i g(R(d_k, d_l) e_j, e_i)`` on increasing pairs ``k < l``."""
    n = riemann.shape[-1]
    pairs = basis(n, 2)
    ks = [p[0] for p in pairs]
    ls = [p[1] for p in pairs]
    r = riemann[..., ks, ls]  # (..., m, a, pair)
    lowered = np.einsum("...bi,...bm,...map->...iap", frame, g, r)
    omega = np.einsum("...iap,...aj->...ijp", lowered, frame) * signs[..., :, None, None]
    return FormMatrix(n, omega, np.asarray(signs))


def minors(a: np.ndarray, degree: int) -> np.ndarray:
    """``M[..., J, I] = det(a[..., J, I])`` over increasing row tuples ``J`` and column tuples ``I``."""
    rows = basis(a.shape[-2], degree)
    cols = basis(a.shape[-1], degree)
    out = np.empty(a.shape[:-2] + (len(rows), len(cols)))
    for r, jr in enumerate(rows):
        sub = a[..., list(jr), :]
        for c, ic in enumerate(cols):
            out[..., r, c] = np.linalg.det(sub[..., list(ic)]) if degree else 1.0
    return out


def pullback(form: ExteriorForm, jacobian: np.ndarray) -> ExteriorForm:
    """Pull back along a map whose derivative at the batch points is ``jacobian (..., b, n)``."""
    if form.degree > jacobian.shape[-2]:
        raise ValueError("form degree exceeds the target dimension")
    n = jacobian.shape[-1]
    if form.degree > n:
        return ExteriorForm.zero(n, form.degree, form.batch_shape)
    m = minors(jacobian, form.degree)
    return ExteriorForm(n, form.degree, np.einsum("...J,...JI->...I", form.coeffs, m))


def frame_form_matrix(rows: np.ndarray, signs: np.ndarray, dim: int) -> FormMatrix:
    """Wrap precomputed coefficients; convenience for tests."""
    return FormMatrix(dim, np.asarray(rows, dtype=float), np.asarray(signs))


# -- catalog-aware constructors ---------------------------------------------------


def curvature_form_at(spec, points, eps: float | None = None) -> FormMatrix:
    """Curvature form of ``g`` (``eps=None``) or ``g_eps`` in the adapted orthonormal frame."""
    from .submersion import ProjectorState
    from .variation import VariedState

    s = ProjectorState(spec, points)
    if eps is None:
        return curvature_form_matrix(s.riemann, s.g, s.frame.columns, s.frame.signs)
    ve = VariedState(s, eps)
    return curvature_form_matrix(ve.riemann, ve.g, ve.frame_columns, s.frame.signs)


def vertical_curvature_form_at(spec, points) -> FormMatrix:
    """Curvature form of the induced connection on the vertical bundle (2-forms on M)."""
    from .submersion import ProjectorState

    s = ProjectorState(spec, points)
    vert = s.frame.columns[:, :, : s.k]
    return curvature_form_matrix(s.adapted_riemann, s.g, vert, s.frame.signs[:, : s.k])


def base_curvature_form_at(spec, base_points) -> FormMatrix:
    from . import geometry

    base_points = np.atleast_2d(np.asarray(base_points, dtype=float))
    gj = geometry.metric_at(spec.base_metric, base_points, order=2)
    riemann = geometry.curvature_of_connection(geometry.christoffels_from_metric(gj)).c0
    frame = geometry.orthonormal_frame_at(gj.c0, np.zeros(base_points.shape + (0,)))
    return curvature_form_matrix(riemann, gj.c0, frame.columns, frame.signs)


def euler_form_at(spec, points, eps: float | None = None) -> ExteriorForm:
    return curvature_form_at(spec, points, eps).euler_form()


def base_euler_form_at(spec, base_points) -> ExteriorForm:
    if spec.b == 0:
        return ExteriorForm.scalar(np.ones(len(np.atleast_2d(base_points))))
    return base_curvature_form_at(spec, base_points).euler_form()


def limit_euler_form_at(spec, points) -> ExteriorForm:
    """``e(Omega^V) ^ pi^* e(Omega^B)``, the pointwise limit of the Euler form as eps -> 1."""
    from .submersion import ProjectorState

    s = ProjectorState(spec, points)
    fiber = vertical_curvature_form_at(spec, points).euler_form() if s.k else ExteriorForm.scalar(np.ones(s.P), s.n)
    base = base_euler_form_at(spec, s.base_points)
    return fiber.wedge(pullback(base, s.dpi))
