"""Discrete spaces and assembly for the coupled Darcy-Forchheimer / heat system.

Spaces on a mesh with ``nt`` elements and ``nv`` vertices:

* velocity: piecewise-constant vectors, coefficients of shape (nt, 2);
* pressure: continuous P1 with zero mean, coefficients of shape (nv,);
* temperature: continuous P1 vanishing on the boundary, shape (nv,).

The Darcy step is the saddle-point system obtained by freezing ``|u|`` and
the temperature forcing at the previous Picard iterate::

    a_K u_K + |K| grad p_K           = int_K f0 + f1(T_prev)
    sum_K |K| grad phi_i . u_K + m_i l = int_{boundary} phi_i g_N
    sum_i m_i p_i                     = 0

where ``a_K = int_K (nu + |u_prev|_K)``, ``m_i = int phi_i`` and ``l`` is a
Lagrange multiplier enforcing the zero mean of the pressure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, barycentric, locate_point
from .quadrature import DEFAULT_DEGREE, QuadRule, edge_rule, integrate, physical_points, triangle_rule

TEMPERATURE = "temperature_p1"
PRESSURE = "pressure_p1"
VELOCITY = "velocity_p0"


@dataclass
class FeFunction:
    """Coefficient vector tagged with the space it lives in."""

    space: str
    coefficients: np.ndarray

    def __post_init__(self):
        if self.space not in (TEMPERATURE, PRESSURE, VELOCITY):
            raise ValueError(f"unknown space {self.space!r}")
        self.coefficients = np.asarray(self.coefficients, dtype=float)

    @classmethod
    def zeros(cls, mesh: Mesh, space: str) -> "FeFunction":
        shape = (mesh.n_elements, 2) if space == VELOCITY else (mesh.n_vertices,)
        return cls(space, np.zeros(shape))


@dataclass(frozen=True)
class CornerFlux:
    """Normal-flux boundary condition attached to boundary corners.

    Every boundary edge having ``inflow`` as an endpoint gets ``u.n = value``,
    every one touching ``outflow`` gets ``u.n = -value``.  Edges are picked on
    whatever mesh is being assembled, so refinement shrinks the well edges.
    """

    inflow: tuple = (0.0, 0.0)
    outflow: tuple = (1.0, 1.0)
    value: float = 1.0

    def edge_values(self, mesh: Mesh, balance: bool = True) -> np.ndarray:
        """Normal flux per edge (zero on interior edges).

        With ``balance`` the boundary mean is subtracted so that the total
        flux through the boundary vanishes exactly on this mesh.
        """
        g = np.zeros(mesh.n_edges)
        bnd = np.flatnonzero(mesh.boundary_edges)
        ends = mesh.vertices[mesh.edges[bnd]]
        for point, sign in ((self.inflow, 1.0), (self.outflow, -1.0)):
            hit = np.any(np.all(np.isclose(ends, point, rtol=0, atol=1e-12), axis=2), axis=1)
            g[bnd[hit]] += sign * self.value
        if balance:
            lengths = mesh.edge_lengths[bnd]
            g[bnd] -= np.dot(g[bnd], lengths) / lengths.sum()
        return g


def _constant_vector(value):
    value = np.asarray(value, dtype=float)

    def f(x):
        return np.broadcast_to(value, x.shape[:-1] + (2,))
    return f


@dataclass
class ProblemData:
    """Coefficients and sources of the coupled problem.

    ``nu`` maps points of shape (..., 2) to (...); ``f0`` maps points to
    vectors (..., 2); ``f1`` maps temperatures (...) to vectors (..., 2) and
    must vanish at zero.  ``sources`` is the set of Dirac points.
    """

    nu: Callable[[np.ndarray], np.ndarray]
    kappa: float = 1.0
    f0: Callable[[np.ndarray], np.ndarray] = field(default_factory=lambda: _constant_vector((0.0, 0.0)))
    f1: Callable[[np.ndarray], np.ndarray] = field(default_factory=lambda: (lambda s: np.zeros(np.shape(s) + (2,))))
    sources: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    p: float = 1.5
    nu_bounds: tuple = (0.0, np.inf)
    flux: Optional[CornerFlux] = None

    def __post_init__(self):
        self.sources = np.asarray(self.sources, dtype=float).reshape(-1, 2)
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        lo, hi = self.nu_bounds
        if not 0 <= lo <= hi:
            raise ValueError(f"invalid viscosity bounds {self.nu_bounds}")

    def evaluate_nu(self, x: np.ndarray) -> np.ndarray:
        values = np.broadcast_to(np.asarray(self.nu(x), dtype=float), x.shape[:-1])
        lo, hi = self.nu_bounds
        if np.any(values < lo) or np.any(values > hi) or np.any(values <= 0):
            raise ValueError(f"viscosity outside declared bounds [{lo}, {hi}]")
        return values

    def forcing(self, x: np.ndarray, temperature: np.ndarray) -> np.ndarray:
        """``f0(x) + f1(T)`` at the given points."""
        return np.asarray(self.f0(x), dtype=float) + np.asarray(self.f1(temperature), dtype=float)


# --------------------------------------------------------------------- evaluation

def eval_p1(mesh: Mesh, coeffs, element: int, bary) -> float:
    """Value of a P1 function inside ``element`` at barycentric point ``bary``."""
    return float(np.dot(np.asarray(coeffs)[mesh.triangles[element]], bary))


def grad_p1(mesh: Mesh, coeffs, element=None) -> np.ndarray:
    """Elementwise-constant gradient of a P1 function, shape (2,) or (nt, 2)."""
    coeffs = np.asarray(coeffs, dtype=float)
    g = np.einsum("ki,kid->kd", coeffs[mesh.triangles], mesh.hat_gradients)
    return g if element is None else g[element]


def p1_at_quadrature(mesh: Mesh, coeffs, rule) -> np.ndarray:
    """P1 values at the nodes of ``rule`` in every element, shape (nt, nq)."""
    return np.asarray(coeffs, dtype=float)[mesh.triangles] @ rule.points.T


def evaluate_at(mesh: Mesh, coeffs, points, kind: str = "p1") -> np.ndarray:
    """Evaluate a discrete field at arbitrary points of the closed domain.

    ``kind`` is ``"p1"`` for nodal coefficients or ``"p0"`` for elementwise
    ones; for P0 the first containing element wins.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    out = []
    for z in np.asarray(points, dtype=float).reshape(-1, 2):
        k = locate_point(mesh, z).elements[0]
        if kind == "p0":
            out.append(coeffs[k])
        else:
            lam = barycentric(mesh, z, [k])[0]
            out.append(np.dot(coeffs[mesh.triangles[k]], lam))
    return np.array(out)


# --------------------------------------------------------------------- loads

def dirac_load(mesh: Mesh, sources, drop_boundary: bool = True) -> np.ndarray:
    """Nodal load ``b_i = sum_z phi_i(z)`` of a sum of Dirac masses.

    Returned over all vertices; boundary entries are zeroed unless
    ``drop_boundary`` is False.
    """
    b = np.zeros(mesh.n_vertices)
    for z in np.asarray(sources, dtype=float).reshape(-1, 2):
        loc = locate_point(mesh, z)
        if loc.kind == "vertex":
            b[loc.index] += 1.0
            continue
        k = loc.elements[0]
        lam = barycentric(mesh, z, [k])[0]
        lam = np.clip(lam, 0.0, None)
        np.add.at(b, mesh.triangles[k], lam / lam.sum())
    if drop_boundary:
        b[mesh.boundary_vertices] = 0.0
    return b


def boundary_flux_load(mesh: Mesh, edge_flux: np.ndarray) -> np.ndarray:
    """``int_{boundary} phi_i g_N`` for an edgewise-constant normal flux."""
    g = np.zeros(mesh.n_vertices)
    contrib = 0.5 * edge_flux * mesh.edge_lengths
    np.add.at(g, mesh.edges[:, 0], contrib)
    np.add.at(g, mesh.edges[:, 1], contrib)
    return g


# --------------------------------------------------------------------- assembly

@dataclass
class DarcySystem:
    """Blocks of one linearized Darcy step.

    ``A_diag[K]`` is the scalar ``int_K (nu + |u_prev|)``, so the velocity
    block is ``diag(A_diag) (x) I_2``.  ``B`` maps interleaved velocity
    coefficients to pressure test functions.
    """

    A_diag: np.ndarray
    B: sp.csr_matrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    mass: np.ndarray

    @property
    def A_block(self) -> sp.csr_matrix:
        return sp.diags(np.repeat(self.A_diag, 2)).tocsr()

    def saddle_matrix(self) -> sp.csr_matrix:
        m = sp.csr_matrix(self.mass.reshape(-1, 1))
        return sp.bmat([
            [self.A_block, self.B.T, None],
            [self.B, None, m],
            [None, m.T, None],
        ], format="csr")

    def saddle_rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_u.ravel(), self.rhs_p, [0.0]])


class Discretization:
    """Mesh-dependent quantities reused across Picard iterations.

    Everything here depends on the mesh and data only, not on the iterate.
    ``rule`` overrides the element quadrature chosen by ``quad_degree``.
    """

    def __init__(self, mesh: Mesh, data: ProblemData, quad_degree: int = DEFAULT_DEGREE,
                 rule: QuadRule | None = None):
        self.mesh = mesh
        self.data = data
        self.rule = rule if rule is not None else triangle_rule(quad_degree)
        self.edge_rule = edge_rule(quad_degree)
        self.qpoints = physical_points(mesh, self.rule)
        self.nu_q = data.evaluate_nu(self.qpoints)
        self.nu_int = integrate(mesh, self.nu_q, self.rule)
        self.f0_q = np.broadcast_to(np.asarray(data.f0(self.qpoints), dtype=float),
                                    self.qpoints.shape)
        self.B = pressure_coupling(mesh)
        self.mass = np.bincount(mesh.triangles.ravel(),
                                weights=np.repeat(mesh.areas / 3.0, 3),
                                minlength=mesh.n_vertices)
        if data.flux is not None:
            self.edge_flux = data.flux.edge_values(mesh)
            self.rhs_p = boundary_flux_load(mesh, self.edge_flux)
        else:
            self.edge_flux = np.zeros(mesh.n_edges)
            self.rhs_p = np.zeros(mesh.n_vertices)
        self.stiffness = stiffness_matrix(mesh)
        self.load = dirac_load(mesh, data.sources)
        self.interior = mesh.interior_vertices

    @property
    def n_velocity(self) -> int:
        return 2 * self.mesh.n_elements

    def darcy_step(self, u_prev: np.ndarray, T_prev: np.ndarray) -> DarcySystem:
        speed = np.linalg.norm(np.asarray(u_prev, dtype=float).reshape(-1, 2), axis=1)
        A_diag = self.nu_int + speed * self.mesh.areas
        T_q = p1_at_quadrature(self.mesh, T_prev, self.rule)
        f1_q = np.asarray(self.data.f1(T_q), dtype=float)
        rhs_u = integrate(self.mesh, self.f0_q + f1_q, self.rule)
        return DarcySystem(A_diag, self.B, rhs_u, self.rhs_p.copy(), self.mass)

    def heat_matrix(self, u: np.ndarray) -> sp.csr_matrix:
        """Heat operator restricted to interior vertices."""
        full = self.data.kappa * self.stiffness - convection_matrix(self.mesh, u)
        idx = self.interior
        return full.tocsr()[idx][:, idx]


def pressure_coupling(mesh: Mesh) -> sp.csr_matrix:
    """``B[i, 2K + c] = |K| d_c phi_i |_K``, shape (nv, 2 nt)."""
    nt = mesh.n_elements
    vals = mesh.areas[:, None, None] * mesh.hat_gradients  # (nt, 3, 2)
    rows = np.repeat(mesh.triangles[:, :, None], 2, axis=2)
    cols = 2 * np.arange(nt)[:, None, None] + np.arange(2)[None, None, :]
    cols = np.broadcast_to(cols, rows.shape)
    B = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(mesh.n_vertices, 2 * nt))
    return B.tocsr()


def stiffness_matrix(mesh: Mesh) -> sp.csr_matrix:
    G = mesh.hat_gradients
    local = mesh.areas[:, None, None] * np.einsum("kid,kjd->kij", G, G)
    return _scatter(mesh, local)


def convection_matrix(mesh: Mesh, u) -> sp.csr_matrix:
    """Entries ``int phi_j (u . grad phi_i)`` (row i = test, column j = trial)."""
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    ugrad = np.einsum("kd,kid->ki", u, mesh.hat_gradients)  # u . grad phi_i
    local = (mesh.areas / 3.0)[:, None, None] * np.repeat(ugrad[:, :, None], 3, axis=2)
    return _scatter(mesh, local)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t[:, :, None], 3, axis=2)
    cols = np.repeat(t[:, None, :], 3, axis=1)
    A = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(mesh.n_vertices, mesh.n_vertices))
    return A.tocsr()


def assemble_darcy_step(mesh: Mesh, data: ProblemData, u_prev: FeFunction, T_prev: FeFunction,
                        quad_degree: int = DEFAULT_DEGREE) -> DarcySystem:
    """Blocks of the linearized Darcy step with ``|u_prev|`` and ``f(T_prev)`` frozen."""
    if u_prev.space != VELOCITY or T_prev.space != TEMPERATURE:
        raise ValueError("expected a velocity and a temperature iterate")
    return Discretization(mesh, data, quad_degree).darcy_step(u_prev.coefficients, T_prev.coefficients)


def assemble_heat(mesh: Mesh, data: ProblemData, u: FeFunction, eliminate: bool = True) -> sp.csr_matrix:
    """``kappa * K - C(u)`` on P1; boundary rows/columns removed when ``eliminate``."""
    if u.space != VELOCITY:
        raise ValueError("expected a velocity field")
    full = data.kappa * stiffness_matrix(mesh) - convection_matrix(mesh, u.coefficients)
    if not eliminate:
        return full
    idx = mesh.interior_vertices
    return full[idx][:, idx]


def forchheimer_operator(nu, v: np.ndarray) -> np.ndarray:
    """Pointwise ``nu v + |v| v`` for vectors stored along the last axis."""
    v = np.asarray(v, dtype=float)
    return np.asarray(nu)[..., None] * v + np.linalg.norm(v, axis=-1, keepdims=True) * v
