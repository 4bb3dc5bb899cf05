"""Run configuration: a TOML file (or a checked-in preset) describing one solve.

Schema, with defaults in parentheses::

    [model]    name, params (table of factory keyword arguments)
    [grid]     lower, upper, nodes, periodic (list of periodic axis indices, [])
    [target]   type = box_complement | cylinder | node_values, plus
               lower/upper, radius/axes, or values; clip_bound ("auto")
    [problem]  kind (mdr), lambda (0.1), dt ("auto"), tau_bar (2.0)
    [solver]   method = vi | pi | multigrid | warmstart (vi), epsilon (0.001),
               max_iterations, levels (2, multigrid), warm_start (path, warmstart),
               table_mode (auto)
    [output]   dir, values (true), report (true), contours (list of
               under | over | zero, []), slice_axis, slice_indices, svg (false)
    [tdlearn]  samples = nodes | rollout | <csv path>, policy (per-node control
               indices), passes, alpha, shuffle, seed, reference, x0, horizon

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from mdreach.grid import GridSpec
from mdreach.models import MODELS, SystemModel, make_model
from mdreach.problem import Problem
from mdreach.targets import BoxComplement, Cylinder, NodeValues, TargetSpec

METHODS = ("vi", "pi", "multigrid", "warmstart")
CONTOUR_KINDS = ("under", "over", "zero")


class ConfigError(ValueError):
    """Raised for unreadable or schema-invalid configurations."""


@dataclass
class OutputConfig:
    dir: Path = Path("out")
    values: bool = True
    report: bool = True
    contours: tuple = ()
    slice_axis: Optional[int] = None
    slice_indices: tuple = ()
    svg: bool = False


@dataclass
class TDSection:
    samples: str = "nodes"
    policy: tuple = ()
    passes: int = 100
    alpha: Any = "visits"
    shuffle: bool = False
    seed: Optional[int] = None
    reference: bool = True
    x0: tuple = ()
    horizon: int = 0


@dataclass
class RunConfig:
    name: str
    model_name: str
    model_params: dict
    grid: GridSpec
    target: TargetSpec
    kind: str = "mdr"
    lam: float = 0.1
    dt: Optional[float] = None
    tau_bar: float = 2.0
    method: str = "vi"
    epsilon: float = 1e-3
    max_iterations: Optional[int] = None
    levels: int = 2
    warm_start: Optional[Path] = None
    table_mode: str = "auto"
    output: OutputConfig = field(default_factory=OutputConfig)
    tdlearn: Optional[TDSection] = None
    source: Optional[Path] = None

    def model(self) -> SystemModel:
        return make_model(self.model_name, **self.model_params)

    def problem(self) -> Problem:
        return Problem(self.grid, self.model(), self.target, kind=self.kind, lam=self.lam, dt=self.dt,
                       table_mode=self.table_mode)

    def with_overrides(self, **kw) -> "RunConfig":
        out = dict(kw.pop("output", {}))
        cfg = replace(self, **kw)
        if out:
            cfg = replace(cfg, output=replace(cfg.output, **out))
        return cfg


def _section(raw: dict, key: str, required: bool = True) -> dict:
    val = raw.get(key)
    if val is None:
        if required:
            raise ConfigError(f"missing [{key}] section")
        return {}
    if not isinstance(val, dict):
        raise ConfigError(f"[{key}] must be a table")
    return val


def _need(sec: dict, key: str, where: str):
    if key not in sec:
        raise ConfigError(f"[{where}] is missing '{key}'")
    return sec[key]


def _parse_grid(sec: dict) -> GridSpec:
    lower, upper, nodes = (_need(sec, k, "grid") for k in ("lower", "upper", "nodes"))
    n = len(lower)
    periodic_axes = sec.get("periodic", [])
    if any(not isinstance(j, int) or not 0 <= j < n for j in periodic_axes):
        raise ConfigError(f"[grid] periodic must list axis indices in [0, {n})")
    try:
        return GridSpec(tuple(lower), tuple(upper), tuple(nodes), tuple(j in periodic_axes for j in range(n)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[grid] {exc}") from None


def _parse_target(sec: dict) -> TargetSpec:
    kind = _need(sec, "type", "target")
    clip = sec.get("clip_bound", "auto")
    try:
        if kind == "box_complement":
            return BoxComplement(tuple(_need(sec, "lower", "target")), tuple(_need(sec, "upper", "target")), clip)
        if kind == "cylinder":
            return Cylinder(float(_need(sec, "radius", "target")), tuple(sec.get("axes", (0, 1))), clip)
        if kind == "node_values":
            return NodeValues(tuple(float(v) for v in _need(sec, "values", "target")), clip)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[target] {exc}") from None
    raise ConfigError(f"unknown target type {kind!r}; known: box_complement, cylinder, node_values")


def _resolve(path: str, base: Optional[Path]) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p


def parse_config(raw: dict, source: Optional[Path] = None, name: str = "run") -> RunConfig:
    """Validate a parsed TOML document and build a :class:`RunConfig`."""
    base = source.parent if source is not None else None
    msec = _section(raw, "model")
    model_name = _need(msec, "name", "model")
    if model_name not in MODELS:
        raise ConfigError(f"unknown model {model_name!r}; known: {sorted(MODELS)}")
    params = dict(msec.get("params", {}))
    try:
        model = make_model(model_name, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[model] {exc}") from None

    grid = _parse_grid(_section(raw, "grid"))
    if model.dim != grid.dim:
        raise ConfigError(f"model {model_name!r} is {model.dim}-dimensional but the grid has {grid.dim} axes")
    target = _parse_target(_section(raw, "target"))

    psec = _section(raw, "problem", required=False)
    kind = psec.get("kind", "mdr")
    if kind not in ("mr", "mdr", "sdr"):
        raise ConfigError(f"unknown problem kind {kind!r}")
    lam = float(psec.get("lambda", 0.1))
    if kind in ("mdr", "sdr") and lam <= 0:
        raise ConfigError(f"lambda must be positive for {kind}")
    dt = psec.get("dt", "auto")
    if dt != "auto":
        if not isinstance(dt, (int, float)) or dt <= 0:
            raise ConfigError("dt must be 'auto' or a positive number")
        dt = float(dt)
    else:
        dt = None
    tau_bar = float(psec.get("tau_bar", 2.0))
    if tau_bar <= 0:
        raise ConfigError("tau_bar must be positive")

    ssec = _section(raw, "solver", required=False)
    method = ssec.get("method", "vi")
    if method not in METHODS:
        raise ConfigError(f"unknown solver method {method!r}; known: {', '.join(METHODS)}")
    if method == "pi" and model.two_player:
        raise ConfigError("policy iteration requires a model without disturbance")
    if method == "pi" and kind != "mdr":
        raise ConfigError("policy iteration is implemented for mdr problems")
    if method in ("multigrid", "warmstart") and kind == "mr":
        raise ConfigError(f"method {method!r} needs a discounted problem; mr must start from l")
    epsilon = float(ssec.get("epsilon", 1e-3))
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    max_it = ssec.get("max_iterations")
    levels = int(ssec.get("levels", 2))
    if levels < 1:
        raise ConfigError("levels must be at least 1")
    warm = None
    if method == "warmstart":
        warm = _resolve(_need(ssec, "warm_start", "solver"), base)
        if not warm.is_file():
            raise ConfigError(f"warm start file not found: {warm}")
    table_mode = ssec.get("table_mode", "auto")
    if table_mode not in ("auto", "table", "on_the_fly"):
        raise ConfigError(f"unknown table_mode {table_mode!r}")

    osec = _section(raw, "output", required=False)
    contours = tuple(osec.get("contours", ()))
    bad = [c for c in contours if c not in CONTOUR_KINDS]
    if bad:
        raise ConfigError(f"unknown contour kinds {bad}; known: {', '.join(CONTOUR_KINDS)}")
    if contours and grid.dim not in (2, 3):
        raise ConfigError("contours need a 2D or 3D grid")
    slice_axis = osec.get("slice_axis")
    slice_indices = tuple(osec.get("slice_indices", ()))
    if contours and grid.dim == 3:
        if slice_axis is None or not slice_indices:
            raise ConfigError("3D contours need slice_axis and slice_indices")
        if not 0 <= slice_axis < 3 or any(not 0 <= k < grid.nodes_per_axis[slice_axis] for k in slice_indices):
            raise ConfigError("slice_axis/slice_indices out of range")
    output = OutputConfig(
        dir=_resolve(osec.get("dir", f"out/{name}"), base),
        values=bool(osec.get("values", True)),
        report=bool(osec.get("report", True)),
        contours=contours,
        slice_axis=slice_axis,
        slice_indices=slice_indices,
        svg=bool(osec.get("svg", False)),
    )

    td = None
    if "tdlearn" in raw:
        tsec = _section(raw, "tdlearn")
        samples = str(tsec.get("samples", "nodes"))
        if samples not in ("nodes", "rollout"):
            path = _resolve(samples, base)
            if not path.is_file():
                raise ConfigError(f"transition dataset not found: {path}")
            samples = str(path)
        alpha = tsec.get("alpha", "visits")
        if alpha != "visits" and not (isinstance(alpha, (int, float)) and 0 <= alpha <= 1):
            raise ConfigError("tdlearn alpha must be 'visits' or a number in [0, 1]")
        td = TDSection(
            samples=samples,
            policy=tuple(int(a) for a in tsec.get("policy", ())),
            passes=int(tsec.get("passes", 100)),
            alpha=alpha,
            shuffle=bool(tsec.get("shuffle", False)),
            seed=tsec.get("seed"),
            reference=bool(tsec.get("reference", True)),
            x0=tuple(float(v) for v in tsec.get("x0", ())),
            horizon=int(tsec.get("horizon", 0)),
        )
        if samples in ("nodes", "rollout") and model.two_player:
            raise ConfigError("TD learning needs a one-player model")

    return RunConfig(
        name=name, model_name=model_name, model_params=params, grid=grid, target=target, kind=kind,
        lam=lam, dt=dt, tau_bar=tau_bar, method=method, epsilon=epsilon,
        max_iterations=None if max_it is None else int(max_it), levels=levels, warm_start=warm,
        table_mode=table_mode, output=output, tdlearn=td, source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw, source=path, name=path.stem)


def preset_names() -> list[str]:
    folder = resources.files("mdreach") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    return (resources.files("mdreach") / "presets" / f"{name}.toml").read_text()


def load_preset(name: str) -> RunConfig:
    """Presets carry relative output dirs, resolved against the working directory."""
    return parse_config(tomllib.loads(preset_text(name)), source=None, name=name)
