"""Field export (legacy VTK) and solution snapshots.

VTK files use the legacy ASCII ``UNSTRUCTURED_GRID`` layout that ParaView
reads; a two-triangle file starts like::

    # vtk DataFile Version 3.0
    dfheat solution
    ASCII
    DATASET UNSTRUCTURED_GRID
    POINTS 4 double
    0 0 0
    1 0 0
    ...
    CELLS 2 8
    3 0 1 2
    ...
    CELL_TYPES 2
    5
    5

followed by ``POINT_DATA`` (``temperature``, ``pressure``) and ``CELL_DATA``
(``velocity`` vectors and the three indicator fields).  Reals are printed
with 17 significant digits so coordinates survive a round trip exactly.

Snapshots are ``.npz`` archives holding the mesh, the discrete state and
the indicators of one adaptive round.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .estimator import IndicatorField
from .fem import PRESSURE, TEMPERATURE, VELOCITY, FeFunction
from .mesh import Mesh
from .solver import CoupledState

VTK_TRIANGLE = 5


def _fmt(values) -> str:
    return "\n".join(" ".join(f"{v:.17g}" for v in row) for row in np.atleast_2d(values))


def export_vtk(mesh: Mesh, state: CoupledState, indicators: IndicatorField | None, path) -> None:
    """Write mesh, solution and indicators as a legacy ASCII VTK file.

    ``indicators`` may be None, in which case zero indicator fields are
    written.
    """
    nv, nt = mesh.n_vertices, mesh.n_elements
    T = np.asarray(state.T.coefficients, dtype=float)
    p = np.asarray(state.p.coefficients, dtype=float)
    u = np.asarray(state.u.coefficients, dtype=float).reshape(-1, 2)
    if len(T) != nv or len(p) != nv or len(u) != nt:
        raise ValueError("state does not match the mesh")
    if indicators is None:
        zero = np.zeros(nt)
        ind = {"indicator_total": zero, "indicator_heat": zero, "indicator_darcy": zero}
    else:
        ind = {"indicator_total": indicators.total_local, "indicator_heat": indicators.heat_local,
               "indicator_darcy": indicators.darcy_local}
        if any(len(v) != nt for v in ind.values()):
            raise ValueError("indicator fields do not match the mesh")

    points = np.column_stack([mesh.vertices, np.zeros(nv)])
    cells = np.column_stack([np.full(nt, 3), mesh.triangles])
    parts = [
        "# vtk DataFile Version 3.0", "dfheat solution", "ASCII", "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double", _fmt(points),
        f"CELLS {nt} {4 * nt}", "\n".join(" ".join(map(str, row)) for row in cells.tolist()),
        f"CELL_TYPES {nt}", "\n".join([str(VTK_TRIANGLE)] * nt),
        f"POINT_DATA {nv}",
    ]
    for name, values in (("temperature", T), ("pressure", p)):
        parts += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(values[:, None])]
    parts += [f"CELL_DATA {nt}", "VECTORS velocity double", _fmt(np.column_stack([u, np.zeros(nt)]))]
    for name, values in ind.items():
        parts += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(np.asarray(values)[:, None])]
    text = "\n".join(parts) + "\n"
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc


def read_vtk(path) -> dict:
    """Parse a file written by :func:`export_vtk`.

    Returns a dict with ``points`` (nv, 3), ``cells`` (nt, 3) and one array
    per data field.
    """
    tokens = Path(path).read_text().split("\n")
    lines = iter(tokens)
    out = {}
    n_values = None
    for line in lines:
        head = line.split()
        if not head:
            continue
        if head[0] == "POINTS":
            n = int(head[1])
            out["points"] = np.array([next(lines).split() for _ in range(n)], dtype=float)
        elif head[0] == "CELLS":
            n = int(head[1])
            out["cells"] = np.array([next(lines).split()[1:] for _ in range(n)], dtype=np.int64)
        elif head[0] in ("POINT_DATA", "CELL_DATA"):
            n_values = int(head[1])
        elif head[0] == "SCALARS":
            next(lines)  # lookup table
            out[head[1]] = np.array([next(lines) for _ in range(n_values)], dtype=float)
        elif head[0] == "VECTORS":
            out[head[1]] = np.array([next(lines).split() for _ in range(n_values)], dtype=float)
    return out


def save_snapshot(path, mesh: Mesh, state: CoupledState, indicators: IndicatorField | None = None,
                  iteration: int = 0) -> None:
    arrays = dict(vertices=mesh.vertices, triangles=mesh.triangles, u=state.u.coefficients,
                  p=state.p.coefficients, T=state.T.coefficients, iteration=iteration,
                  picard_iters=state.picard_iters, converged=state.converged)
    if indicators is not None:
        arrays.update(heat=indicators.heat_local, darcy=indicators.darcy_local,
                      exponent=indicators.p)
    np.savez_compressed(path, **arrays)


def load_snapshot(path) -> tuple[Mesh, CoupledState, IndicatorField | None]:
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read snapshot {path}: {exc}") from exc
    with data:
        try:
            mesh = Mesh(data["vertices"], data["triangles"])
            state = CoupledState(FeFunction(VELOCITY, data["u"]), FeFunction(PRESSURE, data["p"]),
                                 FeFunction(TEMPERATURE, data["T"]), int(data["picard_iters"]),
                                 converged=bool(data["converged"]))
            indicators = None
            if "heat" in data:
                from .estimator import total_indicators
                indicators = total_indicators(data["heat"], data["darcy"], float(data["exponent"]))
        except KeyError as exc:
            raise OSError(f"{path} is not a solution snapshot (missing {exc})") from exc
    return mesh, state, indicators
