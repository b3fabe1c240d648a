"""SOLVE -> ESTIMATE -> MARK -> REFINE."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .estimator import IndicatorField, estimate
from .fem import Discretization, ProblemData
from .mesh import Mesh, longest_edge_bisect
from .quadrature import DEFAULT_DEGREE
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, CoupledState, picard_solve

logger = logging.getLogger(__name__)

CSV_FIELDS = ("iter", "nv", "nt", "ndof", "est_heat", "est_darcy", "est_total", "picard_iters", "marked")


class AdaptiveLoopError(RuntimeError):
    """A round of the adaptive loop failed; ``round`` is its index."""

    def __init__(self, round_index: int, cause: Exception):
        super().__init__(f"adaptive round {round_index}: {cause}")
        self.round = round_index
        self.cause = cause


def count_dofs(mesh: Mesh) -> int:
    """Velocity + pressure + interior temperature unknowns + one multiplier."""
    return 2 * mesh.n_elements + mesh.n_vertices + len(mesh.interior_vertices) + 1


def mark_max(indicators, fraction: float = 0.5) -> np.ndarray:
    """Elements whose indicator exceeds ``fraction`` times the largest one."""
    eta = np.asarray(indicators, dtype=float)
    if eta.size == 0:
        raise ValueError("empty indicator field")
    top = eta.max()
    if top <= 0:
        return np.zeros(0, dtype=np.int64)
    marked = np.flatnonzero(eta > fraction * top)
    return np.union1d(marked, [int(np.argmax(eta))]).astype(np.int64)


@dataclass
class RunRecord:
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})

    @classmethod
    def from_csv(cls, path) -> "RunRecord":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_FIELDS:
                raise ValueError(f"{path}: expected CSV header {','.join(CSV_FIELDS)}")
            rows = []
            for raw in reader:
                row = {}
                for k, v in raw.items():
                    row[k] = float(v) if k.startswith("est_") else int(v)
                rows.append(row)
        return cls(rows)


@dataclass
class AdaptiveResult:
    record: RunRecord
    mesh: Mesh
    state: CoupledState
    indicators: IndicatorField
    disc: Discretization


def adaptive_loop(mesh: Mesh, data: ProblemData, n_iterations: int, tol: float = DEFAULT_TOL,
                  max_picard: int = DEFAULT_MAX_ITER, quad_degree: int = DEFAULT_DEGREE,
                  callback: Optional[Callable] = None, config: dict | None = None,
                  max_elements: int | None = None) -> AdaptiveResult:
    """Run ``n_iterations`` refinements; the record gets ``n_iterations + 1`` rows.

    ``callback(round, mesh, state, indicators)`` is called after every
    estimate, e.g. to write snapshots.  If ``max_elements`` is given the
    loop stops early (with a warning) once a refined mesh would exceed it,
    so the record may be shorter than requested.
    """
    if n_iterations < 0:
        raise ValueError("n_iterations must be nonnegative")
    record = RunRecord(config=dict(config or {}))
    for it in range(n_iterations + 1):
        try:
            disc = Discretization(mesh, data, quad_degree)
            state = picard_solve(mesh, data, tol=tol, max_iter=max_picard, disc=disc)
            indicators = estimate(mesh, state, data, disc)
        except Exception as exc:
            raise AdaptiveLoopError(it, exc) from exc
        marked = mark_max(indicators.total_local)
        record.rows.append({
            "iter": it, "nv": mesh.n_vertices, "nt": mesh.n_elements, "ndof": count_dofs(mesh),
            "est_heat": indicators.heat_global, "est_darcy": indicators.darcy_global,
            "est_total": indicators.total_global, "picard_iters": state.picard_iters,
            "marked": len(marked),
        })
        logger.info("round %d: nt=%d ndof=%d E=%.4e picard=%d marked=%d", it, mesh.n_elements,
                    record.rows[-1]["ndof"], indicators.total_global, state.picard_iters, len(marked))
        if callback is not None:
            callback(it, mesh, state, indicators)
        if it == n_iterations:
            break
        if len(marked) == 0:
            logger.warning("all indicators vanish; stopping after round %d", it)
            break
        refined = longest_edge_bisect(mesh, marked)
        if max_elements is not None and refined.n_elements > max_elements:
            logger.warning("element budget %d exceeded after round %d; stopping", max_elements, it)
            break
        mesh = refined
    return AdaptiveResult(record, mesh, state, indicators, disc)


def fit_rate(record: RunRecord, tail: int = 10) -> float:
    """Least-squares slope of log(est_total) against log(ndof) over the last ``tail`` rows."""
    if tail < 2 or len(record) < tail + 1:
        raise ValueError(f"insufficient rows: need at least {tail + 1}, have {len(record)}")
    ndof = record.column("ndof")[-tail:]
    est = record.column("est_total")[-tail:]
    if np.any(est <= 0) or np.any(ndof <= 0):
        raise ValueError("estimator values must be positive to fit a rate")
    slope, _ = np.polyfit(np.log(ndof), np.log(est), 1)
    return float(slope)


def read_record(path) -> RunRecord:
    return RunRecord.from_csv(Path(path))
