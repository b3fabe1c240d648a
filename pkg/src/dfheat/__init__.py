"""Adaptive finite elements for Darcy-Forchheimer flow coupled to heat transfer with point sources."""
from .adaptivity import AdaptiveLoopError, AdaptiveResult, RunRecord, adaptive_loop, count_dofs, fit_rate, mark_max
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .estimator import IndicatorField, darcy_indicators, estimate, heat_indicators
from .fem import CornerFlux, Discretization, FeFunction, ProblemData
from .io import export_vtk, load_snapshot, read_vtk, save_snapshot
from .mesh import Mesh, MeshError, crisscross_square, locate_point, longest_edge_bisect, lshape_mesh, read_mesh, write_mesh
from .presets import load_preset
from .solver import CoupledState, PicardConvergenceError, picard_solve

__version__ = "0.1.0"
