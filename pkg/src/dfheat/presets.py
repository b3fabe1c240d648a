"""Problem data and initial meshes of the three reference experiments."""
from __future__ import annotations

import numpy as np

from .fem import CornerFlux, ProblemData
from .mesh import Mesh, crisscross_square, lshape_mesh

PRESETS = ("example1", "example2", "fivespot")


def _const(value):
    value = np.asarray(value, dtype=float)
    return lambda x: np.broadcast_to(value, np.shape(x)[:-1] + (2,))


def _scaled_identity(scale):
    return lambda s: scale * np.stack([s, s], axis=-1)


def _unit_viscosity(x):
    return np.ones(np.shape(x)[:-1])


def _example1_viscosity(x):
    return np.sin(x[..., 0] * x[..., 1]) + 1.1


def example1(p: float = 1.0) -> tuple[Mesh, ProblemData]:
    """Unit square, four sources, variable viscosity."""
    data = ProblemData(
        nu=_example1_viscosity, kappa=1.0, f0=_const((1.0, 1.0)), f1=_scaled_identity(1.0),
        sources=[(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)], p=p,
        nu_bounds=(1.1, 1.1 + np.sin(1.0)),
    )
    return crisscross_square(2), data


def example2(p: float = 1.0) -> tuple[Mesh, ProblemData]:
    """L-shaped domain, one source, strong temperature coupling."""
    data = ProblemData(
        nu=_unit_viscosity, kappa=1.0, f0=_const((0.0, 0.0)), f1=_scaled_identity(10.0),
        sources=[(-0.25, 0.5)], p=p, nu_bounds=(1.0, 1.0),
    )
    return lshape_mesh(2), data


def fivespot(p: float = 1.0) -> tuple[Mesh, ProblemData]:
    """Quarter five-spot: unit normal flux at the (0,0) and (1,1) corners."""
    data = ProblemData(
        nu=_unit_viscosity, kappa=1.0, f0=_const((0.0, 0.0)), f1=_scaled_identity(1.0),
        sources=[(0.5, 0.5)], p=p, nu_bounds=(1.0, 1.0),
        flux=CornerFlux(inflow=(0.0, 0.0), outflow=(1.0, 1.0), value=1.0),
    )
    return crisscross_square(2), data


def load_preset(name: str, p: float = 1.0) -> tuple[Mesh, ProblemData]:
    try:
        factory = {"example1": example1, "example2": example2, "fivespot": fivespot}[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return factory(p)
