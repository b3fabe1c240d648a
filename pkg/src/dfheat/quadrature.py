"""Quadrature on the reference triangle and the unit interval.

Triangle rules are conical (collapsed) Gauss-Jacobi products: with ``n``
points per direction they are exact for total degree ``2n - 1`` and have
strictly positive weights and interior nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 20
DEFAULT_DEGREE = 19


@dataclass(frozen=True)
class QuadRule:
    """Points and weights of a rule.

    For triangles ``points`` holds barycentric coordinates, shape (n, 3), and
    the weights sum to 1/2.  For edges ``points`` holds the parameter in
    [0, 1], shape (n,), and the weights sum to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _check_degree(degree):
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree!r}; expected 1..{MAX_DEGREE}")


@lru_cache(maxsize=None)
def triangle_rule(degree: int = DEFAULT_DEGREE) -> QuadRule:
    _check_degree(degree)
    n = (degree + 2) // 2
    s, ws = roots_legendre(n)
    t, wt = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (s + 1.0)  # Legendre on [0, 1]
    v = 0.5 * (t + 1.0)  # Jacobi weight (1 - v) on [0, 1]
    wu = 0.5 * ws
    wv = 0.25 * wt
    U, V = np.meshgrid(u, v, indexing="ij")
    x = (U * (1.0 - V)).ravel()
    y = V.ravel()
    w = np.outer(wu, wv).ravel()
    points = np.stack([1.0 - x - y, x, y], axis=1)
    points.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(points, w, degree)


@lru_cache(maxsize=None)
def edge_rule(degree: int = DEFAULT_DEGREE) -> QuadRule:
    _check_degree(degree)
    n = (degree + 2) // 2
    s, ws = roots_legendre(n)
    t = 0.5 * (s + 1.0)
    w = 0.5 * ws
    t.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(t, w, degree)


def physical_points(mesh, rule: QuadRule) -> np.ndarray:
    """Quadrature nodes mapped into every element, shape (nt, nq, 2)."""
    x = mesh.vertices[mesh.triangles]
    return np.einsum("qi,kid->kqd", rule.points, x)


def integrate(mesh, values: np.ndarray, rule: QuadRule) -> np.ndarray:
    """Per-element integrals of ``values`` sampled at :func:`physical_points`.

    ``values`` has shape (nt, nq) or (nt, nq, m).
    """
    jac = 2.0 * mesh.areas
    return jac.reshape((-1,) + (1,) * (values.ndim - 2)) * np.tensordot(
        values, rule.weights, axes=([1], [0]))


def subdivided_triangle_rule(degree: int, levels: int = 2) -> QuadRule:
    """Composite rule on ``4**levels`` congruent sub-triangles.

    Used as an independent accuracy check for the plain rules.
    """
    base = triangle_rule(degree)
    tris = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for b in tris:
            m01, m12, m20 = (b[0] + b[1]) / 2, (b[1] + b[2]) / 2, (b[2] + b[0]) / 2
            nxt += [np.array([b[0], m01, m20]), np.array([m01, b[1], m12]),
                    np.array([m20, m12, b[2]]), np.array([m01, m12, m20])]
        tris = nxt
    pts = np.concatenate([base.points @ b for b in tris])
    w = np.concatenate([base.weights / len(tris)] * len(tris))
    return QuadRule(pts, w, degree)
