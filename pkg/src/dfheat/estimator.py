"""Residual a posteriori indicators for the heat and Darcy-Forchheimer parts.

Heat indicator of element ``K`` (2D, exponent ``p``)::

    E_{p,K}^p = sum_{z in D interior to K or on a side of K} h_K^(2-p)
              + h_K^p ||R_K||_{L^p(K)}^p
              + h_K sum_{interior sides e of K} ||J_e||_{L^p(e)}^p

with ``R_K = -grad T_h . u_h`` and ``J_e`` the normal jump of
``kappa grad T_h - T_h u_h``.  Sources sitting on a vertex of ``K`` add
nothing.  Darcy indicator::

    E_K^2 = ||f0 + f1(T_h) - nu u_h - |u_h| u_h - grad p_h||_{L^2(K)}^2
          + h_K^(2/3) (sum_{interior sides e} |[u_h . n]_e|^3 |e|)^(2/3)

(in 3D the source exponent would be ``d + p(1 - d)``; only 2D is handled.)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import Discretization, ProblemData, grad_p1, p1_at_quadrature
from .mesh import Mesh, locate_point
from .quadrature import DEFAULT_DEGREE, integrate


@dataclass
class IndicatorField:
    heat_local: np.ndarray
    darcy_local: np.ndarray
    total_local: np.ndarray
    heat_global: float
    darcy_global: float
    total_global: float
    p: float


def _require_converged(state):
    if not getattr(state, "converged", False):
        raise ValueError("indicators need a converged discrete state")


def lp_power_linear(a, b, p, rule=None):
    """``int_0^1 |a + (b - a) t|^p dt`` elementwise, in closed form.

    Nearly constant integrands fall back to Gauss quadrature, which is then
    accurate and avoids cancellation in the closed form.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    scale = np.maximum(np.abs(a), np.abs(b))
    flat = np.abs(d) <= 1e-6 * scale
    out = np.zeros(np.broadcast(a, b).shape)
    steep = ~flat & (scale > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        prim_b = np.sign(b) * np.abs(b) ** (p + 1)
        prim_a = np.sign(a) * np.abs(a) ** (p + 1)
        closed = (prim_b - prim_a) / ((p + 1) * d)
    out[steep] = closed[steep]
    if np.any(flat):
        if rule is None:
            from .quadrature import edge_rule
            rule = edge_rule(DEFAULT_DEGREE)
        vals = a[flat][:, None] + d[flat][:, None] * rule.points[None, :]
        out[flat] = np.abs(vals) ** p @ rule.weights
    return out


def source_counts(mesh: Mesh, sources) -> np.ndarray:
    """Number of sources per element that are inside it or on one of its sides.

    A source on a shared side counts for both neighbours; a source at a
    vertex counts for none.
    """
    counts = np.zeros(mesh.n_elements)
    for z in np.asarray(sources, dtype=float).reshape(-1, 2):
        loc = locate_point(mesh, z)
        if loc.kind != "vertex":
            counts[list(loc.elements)] += 1
    return counts


def heat_indicators(mesh: Mesh, state, data: ProblemData, disc: Discretization | None = None) -> np.ndarray:
    """Per-element heat indicators ``E_{p,K}``."""
    _require_converged(state)
    p = data.p
    u = state.u.coefficients.reshape(-1, 2)
    T = state.T.coefficients
    h = mesh.diameters
    gradT = grad_p1(mesh, T)

    residual = np.abs(np.einsum("kd,kd->k", gradT, u))
    total = h**p * residual**p * mesh.areas
    total += source_counts(mesh, data.sources) * h ** (2.0 - p)

    inner = np.flatnonzero(~mesh.boundary_edges)
    k0, k1 = mesh.edge_elements[inner, 0], mesh.edge_elements[inner, 1]
    n = mesh.edge_normals[inner]
    diff_flux = data.kappa * np.einsum("ed,ed->e", gradT[k0] - gradT[k1], n)
    diff_u = np.einsum("ed,ed->e", u[k0] - u[k1], n)
    T0, T1 = T[mesh.edges[inner, 0]], T[mesh.edges[inner, 1]]
    J0 = diff_flux - T0 * diff_u
    J1 = diff_flux - T1 * diff_u
    rule = disc.edge_rule if disc is not None else None
    edge_pow = mesh.edge_lengths[inner] * lp_power_linear(J0, J1, p, rule)
    jump = np.bincount(k0, weights=edge_pow, minlength=mesh.n_elements)
    jump += np.bincount(k1, weights=edge_pow, minlength=mesh.n_elements)
    total += h * jump
    return total ** (1.0 / p)


def darcy_indicators(mesh: Mesh, state, data: ProblemData, disc: Discretization | None = None,
                     quad_degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Per-element Darcy-Forchheimer indicators ``E_K``."""
    _require_converged(state)
    disc = disc or Discretization(mesh, data, quad_degree)
    u = state.u.coefficients.reshape(-1, 2)
    gradp = grad_p1(mesh, state.p.coefficients)
    T_q = p1_at_quadrature(mesh, state.T.coefficients, disc.rule)
    speed = np.linalg.norm(u, axis=1)
    r = (disc.f0_q + np.asarray(data.f1(T_q), dtype=float)
         - disc.nu_q[..., None] * u[:, None, :]
         - (speed[:, None] * u)[:, None, :]
         - gradp[:, None, :])
    l2sq = integrate(mesh, np.einsum("kqd,kqd->kq", r, r), disc.rule)

    inner = np.flatnonzero(~mesh.boundary_edges)
    k0, k1 = mesh.edge_elements[inner, 0], mesh.edge_elements[inner, 1]
    jump = np.abs(np.einsum("ed,ed->e", u[k0] - u[k1], mesh.edge_normals[inner]))
    cube = jump**3 * mesh.edge_lengths[inner]
    s = np.bincount(k0, weights=cube, minlength=mesh.n_elements)
    s += np.bincount(k1, weights=cube, minlength=mesh.n_elements)
    return np.sqrt(l2sq + mesh.diameters ** (2.0 / 3.0) * s ** (2.0 / 3.0))


def total_indicators(heat_local, darcy_local, p: float) -> IndicatorField:
    heat_local = np.asarray(heat_local, dtype=float)
    darcy_local = np.asarray(darcy_local, dtype=float)
    if heat_local.shape != darcy_local.shape:
        raise ValueError(f"indicator length mismatch: {heat_local.shape} vs {darcy_local.shape}")
    heat_global = float(np.sum(heat_local**p) ** (1.0 / p))
    darcy_global = float(np.sqrt(np.sum(darcy_local**2)))
    return IndicatorField(heat_local, darcy_local, heat_local + darcy_local,
                          heat_global, darcy_global, heat_global + darcy_global, p)


def estimate(mesh: Mesh, state, data: ProblemData, disc: Discretization | None = None,
             quad_degree: int = DEFAULT_DEGREE) -> IndicatorField:
    """All indicators and global estimators for a converged state."""
    disc = disc or Discretization(mesh, data, quad_degree)
    return total_indicators(heat_indicators(mesh, state, data, disc),
                            darcy_indicators(mesh, state, data, disc), data.p)
