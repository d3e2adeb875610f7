"""Curvature of the shrunken-fiber metric: direct computation versus
closed forms in undeformed quantities.

Block naming follows the frame ordering (vertical first): ``VV`` compares
``g_eps(R_eps(X,Y) V_i, V_j)`` and so on, with vertical frame vectors rescaled
by ``1 / (1 - eps)``. The right-hand sides use only ``g``, ``g_B`` and the
projector derivatives, and accept ``eps = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .reports import ResidualReport
from .submersion import ProjectorState, SubmersionSpec, screen_points
from .variation import VariedMetric, VariedState, shrink_factor, third_pi_at

BLOCKS = ("VV", "HV", "VH", "HH")


def _apply(a, v):
    return np.einsum("...ij,...j->...i", a, v)


def _bilinear(g, u, v):
    """``g(u_i, v_j)`` for stacks of column vectors ``u (P, n, a)`` and ``v (P, n, b)``."""
    return np.einsum("pxi,pxy,pyj->pij", u, g, v)


@dataclass
class CurvatureComparison:
    eps: float
    block: str
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        """Max absolute entry difference per point."""
        d = np.abs(self.lhs - self.rhs)
        return d.reshape(len(d), -1).max(axis=-1, initial=0.0)


def r_eps_direct_at(vm: VariedMetric, points) -> np.ndarray:
    return VariedState.at(vm, points).riemann


def _split_frame(state: ProjectorState):
    cols = state.frame.columns
    return cols[:, :, : state.k], cols[:, :, state.k:]


def block_lhs(ve: VariedState, x, y, block: str) -> np.ndarray:
    """``g_eps(R_eps(X,Y) e_i, e_j)`` in the ``g_eps``-orthonormal frame."""
    s = ve.base
    cols = ve.frame_columns
    vert, hor = cols[:, :, : s.k], cols[:, :, s.k:]
    first, second = {"VV": (vert, vert), "HV": (hor, vert), "VH": (vert, hor), "HH": (hor, hor)}[block]
    r = ve.curvature_op(x, y)
    return _bilinear(ve.g, r @ first, second)


def block_rhs(s: ProjectorState, eps: float, x, y, block: str) -> np.ndarray:
    """Closed-form blocks in undeformed quantities; the vectors are the unscaled frame."""
    c = shrink_factor(eps)
    q = (1.0 - eps) ** 2
    g = s.g
    vert, hor = _split_frame(s)
    nX, nY = s.nabla_h(x), s.nabla_h(y)
    if block == "VV":
        intrinsic = _bilinear(g, s.adapted_curvature_op(x, y) @ vert, vert)
        return intrinsic - q * _bilinear(g, (nX @ nY - nY @ nX) @ vert, vert)
    if block == "HV":
        rh = _bilinear(g, s.projector_curvature(x, y) @ hor, vert)
        # nabla_{H_i} H applied to Y, for every horizontal frame vector H_i
        nh_y = np.einsum("pijk,pj,pkh->pih", s.nabla_h_jet.c0, y, hor)
        nh_x = np.einsum("pijk,pj,pkh->pih", s.nabla_h_jet.c0, x, hor)
        corr = _bilinear(g, nX @ nh_y - nY @ nh_x, vert)
        return (1.0 - eps) * (rh + c * corr)
    if block == "VH":
        # rows: vertical frame vector V_i, columns: horizontal frame vector H_j
        rh = _bilinear(g, s.projector_curvature(x, y) @ vert, hor)
        dir_y = nY @ vert  # nabla_Y H . V_i
        dir_x = nX @ vert
        d = s.nabla_h_jet.c0
        t1 = np.einsum("pijk,pkv,pj->piv", d, dir_y, x)  # nabla_{nabla_Y H V_i} H . X
        t2 = np.einsum("pijk,pkv,pj->piv", d, dir_x, y)
        corr = _bilinear(g, t1 - t2, hor)
        return (eps - 1.0) * (rh + c * corr)
    if block == "HH":
        rhs = q * _bilinear(g, s.curvature_op(x, y) @ hor, hor)
        if s.b:
            dh = s.dpi @ hor
            rb = s.base_curvature_op(s.push(x), s.push(y))
            rhs = rhs + c * _bilinear(s.base_g, rb @ dh, dh)
        return rhs
    raise ValueError(f"block must be one of {BLOCKS}, got {block!r}")


def theorem_block_check(ve: VariedState, x, y, block: str) -> CurvatureComparison:
    return CurvatureComparison(ve.eps, block, block_lhs(ve, x, y, block), block_rhs(ve.base, ve.eps, x, y, block))


def undeformed_block(s: ProjectorState, x, y, block: str) -> np.ndarray:
    """Blocks of ``g(R(X,Y) e_i, e_j)`` as predicted by the decomposition of ``R``."""
    vert, hor = _split_frame(s)
    g = s.g
    nX, nY = s.nabla_h(x), s.nabla_h(y)
    comm = nX @ nY - nY @ nX
    rd = s.adapted_curvature_op(x, y)
    rh = s.projector_curvature(x, y)
    if block == "VV":
        return _bilinear(g, (rd - comm) @ vert, vert)
    if block == "HV":
        return _bilinear(g, rh @ hor, vert)
    if block == "VH":
        return _bilinear(g, -rh @ vert, hor)
    if block == "HH":
        return _bilinear(g, (rd - comm) @ hor, hor)
    raise ValueError(block)


def projector_curvature_variation(ve: VariedState, x, y, arg, part: str) -> np.ndarray:
    """Residual vectors for ``R_eps(X,Y) H`` applied to a horizontal or vertical argument."""
    s, eps = ve.base, ve.eps
    c = shrink_factor(eps)
    lhs = _apply(ve.projector_curvature(x, y), arg)
    base = _apply(s.projector_curvature(x, y), arg)
    V = s.V
    if part == "H":
        n_arg = s.nabla_h(arg)
        rhs = base + c * (_apply(s.nabla_h(x) @ n_arg, _apply(V, y)) - _apply(s.nabla_h(y) @ n_arg, _apply(V, x)))
    elif part == "V":
        a = s.nabla_h(_apply(s.nabla_h(y), arg))
        b = s.nabla_h(_apply(s.nabla_h(x), arg))
        rhs = (1.0 - eps) ** 2 * (base + c * (_apply(a, _apply(V, x)) - _apply(b, _apply(V, y))))
    else:
        raise ValueError("part must be 'H' or 'V'")
    return lhs - rhs


def duality_residual(s: ProjectorState, x, y, v, h) -> np.ndarray:
    """``g(nabla_{nabla_Y H . V} H . X, H) + g(nabla_Y H . nabla_H H . X, V)``."""
    t1 = _apply(s.nabla_h(_apply(s.nabla_h(y), v)), x)
    t2 = _apply(s.nabla_h(y) @ s.nabla_h(h), x)
    return s.inner(t1, h) + s.inner(t2, v)


def projected_curvature_residual(ve: VariedState, x, y, z) -> np.ndarray:
    """``Dpi R_eps(X,Y)Z - eps(2-eps) R_B(Dpi X, Dpi Y) Dpi Z - (1-eps)^2 Dpi R(X,Y)Z``."""
    s, eps = ve.base, ve.eps
    lhs = s.push(_apply(ve.curvature_op(x, y), z))
    rhs = projected_curvature_rhs(s, eps, x, y, z)
    return lhs - rhs


def projected_curvature_rhs(s: ProjectorState, eps: float, x, y, z) -> np.ndarray:
    base = _apply(s.base_curvature_op(s.push(x), s.push(y)), s.push(z))
    return shrink_factor(eps) * base + (1.0 - eps) ** 2 * s.push(_apply(s.curvature_op(x, y), z))


def projected_curvature_exact_residual(ve: VariedState, x, y, z) -> np.ndarray:
    """Projected curvature including the map-Hessian term that vanishes only at eps = 1:
    ``- (1-eps)^2 [nabla^2 pi(X, Gamma(Y,Z)) - nabla^2 pi(Y, Gamma(X,Z))]``."""
    s = ve.base
    hess = s.hessian_pi_jet.c0
    extra = np.einsum("...ajk,...j,...k->...a", hess, x, ve.gamma_direct(y, z)) - np.einsum(
        "...ajk,...j,...k->...a", hess, y, ve.gamma_direct(x, z)
    )
    return projected_curvature_residual(ve, x, y, z) + (1.0 - ve.eps) ** 2 * extra


def projected_curvature_limit(spec: SubmersionSpec, points, x, y, z, eps_values=(0.9, 0.99, 0.999)):
    """Extrapolate ``Dpi R_eps(X,Y)Z`` to ``eps = 1`` linearly in ``(1 - eps)^2``.

    Returns ``(extrapolated, target)`` where ``target = R_B(Dpi X, Dpi Y) Dpi Z``.
    """
    s = ProjectorState(spec, points)
    t = np.array([(1.0 - e) ** 2 for e in eps_values])
    vals = np.stack([s.push(_apply(VariedState(s, e).curvature_op(x, y), z)) for e in eps_values])
    design = np.stack([np.ones_like(t), t], axis=1)
    coef, *_ = np.linalg.lstsq(design, vals.reshape(len(t), -1), rcond=None)
    extrapolated = coef[0].reshape(vals.shape[1:])
    target = _apply(s.base_curvature_op(s.push(x), s.push(y)), s.push(z))
    return extrapolated, target


def third_derivative_residual(ve: VariedState, x, y, z, corrected: bool = False) -> np.ndarray:
    """Differentiated map-Hessian identity.

    ``corrected=False`` evaluates
    ``eps(2-eps) nabla^3 pi(X,Y,Z) - Dpi[(nabla_X Gamma)(Y,Z) + Gamma(X, Gamma(Y,Z))]``.
    ``corrected=True`` evaluates the exact derivative
    ``eps(2-eps) nabla^3 pi(X,Y,Z) - nabla^2 pi(X, Gamma(Y,Z)) - Dpi (nabla_X Gamma)(Y,Z)``.
    """
    s = ve.base
    c = ve.c
    lhs = c * third_pi_at(s, x, y, z)
    gyz = ve.gamma_direct(y, z)
    if corrected:
        hess = np.einsum("...ajk,...j,...k->...a", s.hessian_pi_jet.c0, x, gyz)
        rhs = hess + s.push(ve.nabla_gamma(x, y, z))
    else:
        rhs = s.push(ve.nabla_gamma(x, y, z) + ve.gamma_direct(x, gyz))
    return lhs - rhs


def difference_curvature_residual(ve: VariedState, x, y, z) -> np.ndarray:
    """``R_eps(X,Y)Z`` against ``R`` plus the alternating difference-tensor terms."""
    s = ve.base
    rhs = (
        _apply(s.curvature_op(x, y), z)
        + ve.nabla_gamma(x, y, z)
        + ve.gamma_direct(x, ve.gamma_direct(y, z))
        - ve.nabla_gamma(y, x, z)
        - ve.gamma_direct(y, ve.gamma_direct(x, z))
    )
    return _apply(ve.curvature_op(x, y), z) - rhs


def map_ricci_identity_residual(s: ProjectorState, x, y, z) -> np.ndarray:
    lhs = third_pi_at(s, x, y, z) - third_pi_at(s, y, x, z)
    rhs = _apply(s.base_curvature_op(s.push(x), s.push(y)), s.push(z)) - s.push(_apply(s.curvature_op(x, y), z))
    return lhs - rhs


def theorem_suite(spec: SubmersionSpec, points, eps: float, tol: float = 1e-8, seed: int = 0) -> ResidualReport:
    """All four curvature blocks (direct versus closed form) at one ``eps``."""
    pts, skipped = screen_points(spec, points)
    report = ResidualReport(spec.name, seed, skipped=skipped, meta={"eps": eps})
    if len(pts) == 0:
        return report
    s = ProjectorState(spec, pts)
    ve = VariedState(s, eps)
    rng = np.random.default_rng(seed)
    x, y = s.random_vectors(rng), s.random_vectors(rng)
    for block in BLOCKS:
        if (block.count("V") and not s.k) or (block.count("H") and not s.b):
            continue
        cmp = theorem_block_check(ve, x, y, block)
        report.add(f"curvature_block_{block}", cmp.residual, pts, tol)
        swapped = theorem_block_check(ve, y, x, block)
        report.add(f"curvature_block_{block}_antisymmetric", CurvatureComparison(eps, block, swapped.rhs, -cmp.rhs).residual, pts, tol)
    if eps == 0.0:
        for block in BLOCKS:
            if (block.count("V") and not s.k) or (block.count("H") and not s.b):
                continue
            lhs = block_lhs(ve, x, y, block)
            report.add(f"undeformed_block_{block}", CurvatureComparison(0.0, block, lhs, undeformed_block(s, x, y, block)).residual, pts, tol)
    return report


def proof_suite(
    spec: SubmersionSpec,
    points,
    eps: float,
    tol: float = 1e-7,
    seed: int = 0,
    limit_tol: float = 1e-5,
) -> ResidualReport:
    """Projector-curvature variation, duality, projected curvature and the
    third-derivative identities at one ``eps``."""
    pts, skipped = screen_points(spec, points)
    report = ResidualReport(spec.name, seed, skipped=skipped, meta={"eps": eps})
    if len(pts) == 0:
        return report
    s = ProjectorState(spec, pts)
    ve = VariedState(s, eps)
    rng = np.random.default_rng(seed)
    x, y, z = (s.random_vectors(rng) for _ in range(3))

    def add(name, r, t=tol):
        report.add(name, r, pts, t)

    if s.b:
        hv = s.random_vectors(rng, "horizontal")
        add("projector_curvature_variation_horizontal", s.vec_norm(projector_curvature_variation(ve, x, y, hv, "H")))
    if s.k:
        vv = s.random_vectors(rng, "vertical")
        add("projector_curvature_variation_vertical", s.vec_norm(projector_curvature_variation(ve, x, y, vv, "V")))
    if s.k and s.b:
        add("mixed_block_duality", np.abs(duality_residual(s, x, y, vv, hv)))
    add("difference_curvature", s.vec_norm(difference_curvature_residual(ve, x, y, z)))
    if s.b:
        add("projected_curvature", s.base_vec_norm(projected_curvature_residual(ve, x, y, z)))
        add("projected_curvature_exact", s.base_vec_norm(projected_curvature_exact_residual(ve, x, y, z)))
        hz = s.random_vectors(rng, "horizontal")
        add("projected_curvature_horizontal_argument", s.base_vec_norm(projected_curvature_residual(ve, x, y, hz)))
        add("map_ricci_identity", s.base_vec_norm(map_ricci_identity_residual(s, x, y, z)))
        add("differentiated_map_hessian", s.base_vec_norm(third_derivative_residual(ve, x, y, z)))
        add("differentiated_map_hessian_exact", s.base_vec_norm(third_derivative_residual(ve, x, y, z, corrected=True)))
        ext, target = projected_curvature_limit(spec, pts, x, y, z)
        add("projected_curvature_limit", s.base_vec_norm(ext - target), limit_tol)
    return report
