"""Experiment configuration files.

Grammar: one ``key = value`` per line, ``#`` starts a comment, blank lines
are ignored, keys are case sensitive and may appear once.  Example::

    # Example 1 with p = 1.4
    preset = example1
    p = 1.4
    n_iterations = 40
    output_dir = runs/ex1

The ``custom`` preset additionally takes the problem data:

    mesh = square            # square | lshape | path to a mesh text file
    kappa = 1
    nu = sin(x*y) + 1.1      # expression in x, y
    nu_bounds = 1.1, 2.0
    f0 = 1, 1                # two expressions in x, y
    f1 = s, s                # two expressions in the temperature s
    sources = 0.5 0.5; 0.25 0.25
    flux_inflow = 0 0        # optional corner flux (both corners needed)
    flux_outflow = 1 1
    flux_value = 1
"""
from __future__ import annotations

import ast
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .fem import CornerFlux, ProblemData
from .mesh import Mesh, MeshError, crisscross_square, locate_point, lshape_mesh, read_mesh
from .presets import PRESETS, load_preset
from .quadrature import DEFAULT_DEGREE
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("preset", "p", "n_iterations")
CUSTOM_REQUIRED = ("mesh", "nu", "f0", "f1", "sources")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    preset: str
    p: float
    n_iterations: int
    picard_tol: float = DEFAULT_TOL
    max_picard: int = DEFAULT_MAX_ITER
    quad_degree: int = DEFAULT_DEGREE
    output_dir: str = "output"
    write_csv: bool = True
    write_vtk: bool = False
    snapshot_every: int = 0
    max_elements: int = 0
    # custom preset only
    mesh: str = ""
    kappa: float = 1.0
    nu: str = ""
    nu_bounds: tuple = ()
    f0: tuple = ()
    f1: tuple = ()
    sources: tuple = ()
    flux_inflow: tuple = ()
    flux_outflow: tuple = ()
    flux_value: float = 1.0
    _problem: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------ checks
    def validate(self) -> None:
        if self.preset not in PRESETS + ("custom",):
            raise ConfigError(f"preset must be one of {', '.join(PRESETS + ('custom',))}, got {self.preset!r}")
        if not (1.0 < self.p < 2.0 or self.p == 1.0):
            raise ConfigError(f"p must lie in (1, 2) or equal 1.0, got {self.p}")
        if self.p == 1.0:
            logger.info("p = 1.0 lies outside the range covered by the theory; running anyway")
        if self.n_iterations < 0:
            raise ConfigError("n_iterations must be nonnegative")
        if not self.picard_tol > 0:
            raise ConfigError("picard_tol must be positive")
        if self.max_picard < 1:
            raise ConfigError("max_picard must be at least 1")
        if not 1 <= self.quad_degree <= 20:
            raise ConfigError("quad_degree must lie in 1..20")
        if self.snapshot_every < 0 or self.max_elements < 0:
            raise ConfigError("snapshot_every and max_elements must be nonnegative")
        if self.preset == "custom":
            missing = [k for k in CUSTOM_REQUIRED if not getattr(self, k)]
            if missing:
                raise ConfigError(f"custom preset needs: {', '.join(missing)}")
            if len(self.f0) != 2 or len(self.f1) != 2:
                raise ConfigError("f0 and f1 need two comma-separated components")
            if bool(self.flux_inflow) != bool(self.flux_outflow):
                raise ConfigError("flux_inflow and flux_outflow must be given together")
            if not self.kappa > 0:
                raise ConfigError("kappa must be positive")
            self._problem = None
            mesh, _ = self.problem()
            for z in np.asarray(self.sources, dtype=float).reshape(-1, 2):
                try:
                    locate_point(mesh, z)
                except MeshError:
                    raise ConfigError(f"source ({z[0]:g}, {z[1]:g}) lies outside the domain") from None

    # ------------------------------------------------------------------ data
    def problem(self) -> tuple[Mesh, ProblemData]:
        """Initial mesh and problem data described by this config."""
        if self.preset != "custom":
            return load_preset(self.preset, self.p)
        if self._problem is None:
            self._problem = (_custom_mesh(self.mesh), _custom_data(self))
        return self._problem

    # ------------------------------------------------------------------ text
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name.startswith("_"):
                continue
            value = getattr(self, f.name)
            if f.name in CUSTOM_REQUIRED + ("kappa", "nu_bounds", "flux_inflow", "flux_outflow", "flux_value") \
                    and self.preset != "custom":
                continue
            if value in ((), ""):
                continue
            lines.append(f"{f.name} = {_format(f.name, value)}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("_problem", None)
        return d


# ---------------------------------------------------------------------- parsing

def _floats(text: str, key: str) -> tuple:
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {text!r}") from None


def _points(text: str, key: str) -> tuple:
    pts = []
    for chunk in text.split(";"):
        if chunk.strip():
            xy = _floats(chunk, key)
            if len(xy) != 2:
                raise ConfigError(f"{key}: each point needs two coordinates, got {chunk.strip()!r}")
            pts.append(xy)
    return tuple(pts)


def _bool(text: str, key: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _exprs(text: str, key: str) -> tuple:
    parts = tuple(s.strip() for s in text.split(","))
    for s in parts:
        compile_expression(s, key)
    return parts


_PARSERS = {
    "preset": lambda v, k: v, "p": _float, "n_iterations": _int, "picard_tol": _float,
    "max_picard": _int, "quad_degree": _int, "output_dir": lambda v, k: v,
    "write_csv": _bool, "write_vtk": _bool, "snapshot_every": _int, "max_elements": _int,
    "mesh": lambda v, k: v, "kappa": _float, "nu": lambda v, k: compile_expression(v, k) and v,
    "nu_bounds": _floats, "f0": _exprs, "f1": _exprs, "sources": _points,
    "flux_inflow": _floats, "flux_outflow": _floats, "flux_value": _float,
}


def _format(key: str, value) -> str:
    if key == "sources":
        return "; ".join(f"{x!r} {y!r}" for x, y in value)
    if key in ("f0", "f1"):
        return ", ".join(value)
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str, origin: str = "<string>") -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        values[key] = _PARSERS[key](value, key)
    missing = [k for k in REQUIRED_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{origin}: missing required keys: {', '.join(missing)}")
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


# ---------------------------------------------------------------------- expressions

_FUNCS = {name: getattr(np, name) for name in
          ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "arctan", "sinh", "cosh", "tanh",
           "minimum", "maximum")}
_FUNCS["pi"] = np.pi
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def compile_expression(source: str, key: str = "expression", variables=("x", "y", "s")):
    """Compile an arithmetic expression over ``variables`` and a few numpy functions."""
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError:
        raise ConfigError(f"{key}: cannot parse expression {source!r}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ConfigError(f"{key}: unsupported syntax in {source!r}")
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in variables:
            raise ConfigError(f"{key}: unknown name {node.id!r} in {source!r}")
        if isinstance(node, ast.Call) and not isinstance(node.func, ast.Name):
            raise ConfigError(f"{key}: unsupported call in {source!r}")
    return compile(tree, key, "eval")


def _evaluate(code, shape, **variables):
    value = eval(code, {"__builtins__": {}}, {**_FUNCS, **variables})
    return np.broadcast_to(np.asarray(value, dtype=float), shape)


def _custom_mesh(where: str) -> Mesh:
    if where == "square":
        return crisscross_square(2)
    if where == "lshape":
        return lshape_mesh(2)
    try:
        return read_mesh(where)
    except OSError as exc:
        raise ConfigError(f"mesh: cannot read {where!r}: {exc}") from exc


def _custom_data(cfg: ExperimentConfig) -> ProblemData:
    nu_code = compile_expression(cfg.nu, "nu", ("x", "y"))
    f0_code = [compile_expression(s, "f0", ("x", "y")) for s in cfg.f0]
    f1_code = [compile_expression(s, "f1", ("s",)) for s in cfg.f1]

    def nu(x):
        return _evaluate(nu_code, x.shape[:-1], x=x[..., 0], y=x[..., 1])

    def f0(x):
        return np.stack([_evaluate(c, x.shape[:-1], x=x[..., 0], y=x[..., 1]) for c in f0_code], axis=-1)

    def f1(s):
        s = np.asarray(s, dtype=float)
        return np.stack([_evaluate(c, s.shape, s=s) for c in f1_code], axis=-1)

    if abs(f1(np.zeros(1))).max() > 0:
        raise ConfigError("f1 must vanish at s = 0")
    bounds = cfg.nu_bounds or (0.0, np.inf)
    if len(bounds) != 2:
        raise ConfigError("nu_bounds needs two numbers")
    flux = None
    if cfg.flux_inflow:
        if len(cfg.flux_inflow) != 2 or len(cfg.flux_outflow) != 2:
            raise ConfigError("flux corners need two coordinates")
        flux = CornerFlux(tuple(cfg.flux_inflow), tuple(cfg.flux_outflow), cfg.flux_value)
    try:
        return ProblemData(nu=nu, kappa=cfg.kappa, f0=f0, f1=f1, sources=np.array(cfg.sources),
                           p=cfg.p, nu_bounds=tuple(bounds), flux=flux)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
