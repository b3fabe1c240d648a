"""Picard iteration for the coupled discrete system on a fixed mesh."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import PRESSURE, TEMPERATURE, VELOCITY, Discretization, FeFunction, ProblemData
from .linalg import LUFactor
from .mesh import Mesh
from .quadrature import DEFAULT_DEGREE

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


class PicardConvergenceError(RuntimeError):
    """The fixed-point loop hit ``max_iter`` before the increment fell below ``tol``."""

    def __init__(self, message, increments):
        super().__init__(message)
        self.increments = list(increments)


@dataclass
class CoupledState:
    """Discrete velocity, pressure and temperature on one mesh."""

    u: FeFunction
    p: FeFunction
    T: FeFunction
    picard_iters: int = 0
    final_increment: float = float("inf")
    increments: list = field(default_factory=list)
    converged: bool = False
    multiplier: float = 0.0

    @classmethod
    def zeros(cls, mesh: Mesh) -> "CoupledState":
        return cls(FeFunction.zeros(mesh, VELOCITY), FeFunction.zeros(mesh, PRESSURE),
                   FeFunction.zeros(mesh, TEMPERATURE))

    def vector(self) -> np.ndarray:
        """Concatenated raw coefficients ``(u, p, T)``."""
        return np.concatenate([self.u.coefficients.ravel(), self.p.coefficients, self.T.coefficients])


def solve_darcy(disc: Discretization, u_prev, T_prev, check: bool = True, method: str = "schur"):
    """One linearized Darcy solve; returns ``(u, p, multiplier)``.

    ``method="saddle"`` factors the full velocity/pressure/multiplier
    system.  ``method="schur"`` eliminates the elementwise velocity first
    (its block is diagonal) and factors the pressure system
    ``[[B D^-1 B^T, m], [m^T, 0]]``; both give the same discrete solution.
    """
    system = disc.darcy_step(u_prev, T_prev)
    if method == "saddle":
        x = LUFactor(system.saddle_matrix()).solve(system.saddle_rhs(), check=check)
        nu_ = disc.n_velocity
        return x[:nu_].reshape(-1, 2), x[nu_:-1], x[-1]
    if method != "schur":
        raise ValueError(f"unknown Darcy solve method {method!r}")
    dinv = sp.diags(np.repeat(1.0 / system.A_diag, 2))
    BD = system.B @ dinv
    m = sp.csr_matrix(system.mass.reshape(-1, 1))
    S = sp.bmat([[BD @ system.B.T, m], [m.T, None]], format="csr")
    rhs = np.concatenate([BD @ system.rhs_u.ravel() - system.rhs_p, [0.0]])
    x = LUFactor(S).solve(rhs, check=check)
    p, lam = x[:-1], -x[-1]
    u = (system.rhs_u.ravel() - system.B.T @ p) / np.repeat(system.A_diag, 2)
    return u.reshape(-1, 2), p, lam


def solve_heat(disc: Discretization, u, check: bool = True) -> np.ndarray:
    """Temperature for a given velocity, zero on the boundary."""
    T = np.zeros(disc.mesh.n_vertices)
    idx = disc.interior
    if len(idx):
        A = disc.heat_matrix(u)
        T[idx] = LUFactor(A).solve(disc.load[idx], check=check)
    return T


def picard_solve(mesh: Mesh, data: ProblemData, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, initial: CoupledState | None = None,
                 relative: bool = False, quad_degree: int = DEFAULT_DEGREE,
                 disc: Discretization | None = None) -> CoupledState:
    """Solve the coupled system by the Picard fixed-point scheme.

    Each sweep solves the Darcy step with ``|u|`` and ``f(T)`` frozen at the
    previous iterate, then the heat equation with the new velocity.  The
    loop stops when the Euclidean norm of the increment of the concatenated
    coefficient vector is at most ``tol`` (divided by the norm of the new
    iterate when ``relative``).  The initial guess defaults to zero.

    Raises
    ------
    PicardConvergenceError
        If ``max_iter`` sweeps do not reach ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    disc = disc or Discretization(mesh, data, quad_degree)
    state = initial if initial is not None else CoupledState.zeros(mesh)
    u, p, T = state.u.coefficients.reshape(-1, 2), state.p.coefficients, state.T.coefficients
    old = np.concatenate([u.ravel(), p, T])
    increments = []
    for it in range(1, max_iter + 1):
        u, p, lam = solve_darcy(disc, u, T)
        T = solve_heat(disc, u)
        new = np.concatenate([u.ravel(), p, T])
        inc = float(np.linalg.norm(new - old))
        if relative:
            inc /= max(float(np.linalg.norm(new)), np.finfo(float).tiny)
        increments.append(inc)
        logger.debug("picard %d: increment %.3e", it, inc)
        old = new
        if inc <= tol:
            return CoupledState(FeFunction(VELOCITY, u), FeFunction(PRESSURE, p),
                                FeFunction(TEMPERATURE, T), it, inc, increments, True, float(lam))
    raise PicardConvergenceError(
        f"Picard iteration did not reach tol={tol:g} in {max_iter} iterations "
        f"(last increment {increments[-1]:.3e})", increments)


def mass_residual(disc: Discretization, u) -> float:
    """Max-norm of ``B u - g`` over all pressure test functions."""
    r = disc.B @ np.asarray(u, dtype=float).ravel() - disc.rhs_p
    return float(np.max(np.abs(r))) if r.size else 0.0

