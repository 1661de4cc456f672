"""YAML problem configs (schema ``maxentcert/v1``) and the JSON run report.

Example::

    schema: maxentcert/v1
    dimension: 1
    support: {shape: box, lower: [0], upper: [.inf]}
    constraints:
      - {kind: power, p: 1, u: 1.0}
    solver: {tol: 1.0e-8, max_iter: 200, budget: 400000, seed: 0}
    quadrature: {budget: 400000, target_rel_tol: 1.0e-10, seed: 0}
    output: {report: report.json, csv: density.csv, grid: {points: 401}}

Every validation failure raises :class:`ConfigError` carrying the field path
(``constraints[0].u``) and, when known, the line in the file.
"""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, DeclarationInconsistent, MaxentError
from .measurements import (IndicatorComplement, LinearCombination, MomentProblem, NormPower,
                           PowerMoment, QuadraticForm, Scaled, check_well_behaved,
                           equality_constraint)
from .support import SupportSet

SCHEMA = "maxentcert/v1"
SEED_ENV = "MAXENT_SEED"

SOLVER_DEFAULTS = {"tol": 1e-8, "max_iter": 200, "budget": 400_000, "seed": 0}
QUADRATURE_DEFAULTS = {"budget": 400_000, "target_rel_tol": 1e-10, "seed": 0}
OUTPUT_DEFAULTS = {"report": "report.json", "csv": "density.csv", "grid": {}}
DEFAULT_GRID_POINTS = {1: 401, 2: 101, 3: 41}


# --------------------------------------------------------------------------- line tracking

def _line_map(text):
    """Map field paths to 1-based line numbers using the YAML node tree."""
    lines = {}

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = str(k.value)
                sub = f"{path}.{key}" if path else key
                lines[sub] = k.start_mark.line + 1
                walk(v, sub)
                lines[sub] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, f"{path}[{i}]")

    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, "")
    return lines


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def error(self, path, message):
        # a missing field takes the line of its nearest enclosing node
        line, p = self.lines.get(path), path
        while line is None and p:
            cut = max(p.rfind("."), p.rfind("["))
            p = p[:cut] if cut > 0 else ""
            line = self.lines.get(p)
        return ConfigError(path_of(path), message, line)


def path_of(p):
    return p or "<root>"


# --------------------------------------------------------------------------- scalar readers

def _number(ctx, value, path, *, finite=True, allow_inf=False):
    if isinstance(value, bool):
        raise ctx.error(path, "expected a number, got a boolean")
    if isinstance(value, str):
        s = value.strip().lower()
        if s in ("inf", "+inf", "infinity", "+infinity", ".inf"):
            value = math.inf
        elif s in ("-inf", "-infinity", "-.inf"):
            value = -math.inf
        else:
            try:
                value = float(s)
            except ValueError:
                raise ctx.error(path, f"expected a number, got {value!r}") from None
    if not isinstance(value, (int, float)):
        raise ctx.error(path, f"expected a number, got {type(value).__name__} {value!r}")
    value = float(value)
    if math.isnan(value):
        raise ctx.error(path, "NaN is not allowed")
    if finite and not allow_inf and not math.isfinite(value):
        raise ctx.error(path, "must be a finite number")
    return value


def _integer(ctx, value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ctx.error(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ctx.error(path, f"must be >= {minimum}")
    return int(value)


def _vector(ctx, value, path, size=None, allow_inf=False):
    if not isinstance(value, (list, tuple)):
        value = [value] if size == 1 and not isinstance(value, dict) else value
    if not isinstance(value, (list, tuple)):
        raise ctx.error(path, f"expected a list of numbers, got {value!r}")
    if size is not None and len(value) != size:
        raise ctx.error(path, f"expected {size} entries, got {len(value)}")
    return np.array([_number(ctx, v, f"{path}[{i}]", allow_inf=allow_inf)
                     for i, v in enumerate(value)], dtype=float)


def _mapping(ctx, value, path):
    if not isinstance(value, dict):
        raise ctx.error(path, f"expected a mapping, got {value!r}")
    return value


def _check_keys(ctx, mapping, path, allowed):
    for k in mapping:
        if k not in allowed:
            sub = f"{path}.{k}" if path else str(k)
            raise ctx.error(sub, f"unknown field {k!r} (allowed: {', '.join(sorted(allowed))})")


# --------------------------------------------------------------------------- problem pieces

def _support(ctx, raw, d):
    path = "support"
    raw = _mapping(ctx, raw, path)
    _check_keys(ctx, raw, path, {"shape", "lower", "upper", "A", "b"})
    shape = raw.get("shape", "box")
    if shape not in ("full", "box", "halfspaces"):
        raise ctx.error(f"{path}.shape", f"unknown shape {shape!r} (full, box, halfspaces)")
    lower = _vector(ctx, raw["lower"], f"{path}.lower", d, True) if "lower" in raw \
        else np.full(d, -math.inf)
    upper = _vector(ctx, raw["upper"], f"{path}.upper", d, True) if "upper" in raw \
        else np.full(d, math.inf)
    if shape == "full" and (np.any(np.isfinite(lower)) or np.any(np.isfinite(upper))):
        raise ctx.error(path, "shape 'full' takes no finite bounds")
    A = b = None
    if shape == "halfspaces":
        if "A" not in raw or "b" not in raw:
            raise ctx.error(path, "shape 'halfspaces' needs A and b")
        rows = raw["A"]
        if not isinstance(rows, list) or not rows:
            raise ctx.error(f"{path}.A", "expected a nonempty list of rows")
        A = np.vstack([_vector(ctx, r, f"{path}.A[{i}]", d) for i, r in enumerate(rows)])
        b = _vector(ctx, raw["b"], f"{path}.b", A.shape[0])
    elif "A" in raw or "b" in raw:
        raise ctx.error(path, "A and b need shape 'halfspaces'")
    try:
        return SupportSet(lower, upper, A, b)
    except MaxentError as exc:
        raise ctx.error(path, str(exc)) from None


FUNCTION_KINDS = ("power", "norm-power", "quadratic", "indicator-complement",
                  "linear-combination", "scaled")
_DECLARE_KEYS = {"convex", "coercive", "well_behaved", "radius"}


def _function(ctx, raw, path, d):
    raw = _mapping(ctx, raw, path)
    kind = str(raw.get("kind", "")).replace("_", "-")
    if kind not in FUNCTION_KINDS:
        raise ctx.error(f"{path}.kind", f"unknown function kind {raw.get('kind')!r} "
                                         f"(one of {', '.join(FUNCTION_KINDS)})")
    common = {"kind", "u", "equality", "declare"}
    try:
        if kind == "power":
            _check_keys(ctx, raw, path, common | {"p", "index", "absolute"})
            p = _number(ctx, raw.get("p"), f"{path}.p")
            index = _integer(ctx, raw.get("index", 0), f"{path}.index", 0)
            absolute = raw.get("absolute", True)
            if not isinstance(absolute, bool):
                raise ctx.error(f"{path}.absolute", "expected true or false")
            phi = PowerMoment(p, index=index, dim=d, absolute=absolute)
        elif kind == "norm-power":
            _check_keys(ctx, raw, path, common | {"p"})
            phi = NormPower(_number(ctx, raw.get("p"), f"{path}.p"), dim=d)
        elif kind == "quadratic":
            _check_keys(ctx, raw, path, common | {"Q"})
            Q = raw.get("Q")
            if not isinstance(Q, list) or len(Q) != d:
                raise ctx.error(f"{path}.Q", f"expected a {d}x{d} matrix")
            phi = QuadraticForm(np.vstack([_vector(ctx, r, f"{path}.Q[{i}]", d)
                                           for i, r in enumerate(Q)]))
        elif kind == "indicator-complement":
            _check_keys(ctx, raw, path, common | {"lower", "upper"})
            phi = IndicatorComplement(_vector(ctx, raw.get("lower"), f"{path}.lower", d, True),
                                      _vector(ctx, raw.get("upper"), f"{path}.upper", d, True))
        elif kind == "linear-combination":
            _check_keys(ctx, raw, path, common | {"terms", "weights"})
            terms = raw.get("terms")
            if not isinstance(terms, list) or not terms:
                raise ctx.error(f"{path}.terms", "expected a nonempty list of functions")
            funcs = [_function(ctx, t, f"{path}.terms[{i}]", d) for i, t in enumerate(terms)]
            w = _vector(ctx, raw.get("weights"), f"{path}.weights", len(funcs))
            phi = LinearCombination(funcs, w)
        else:
            _check_keys(ctx, raw, path, common | {"base", "factor"})
            base = _function(ctx, raw.get("base"), f"{path}.base", d)
            phi = Scaled(base, _number(ctx, raw.get("factor"), f"{path}.factor"))
    except ConfigError:
        raise
    except MaxentError as exc:
        raise ctx.error(path, str(exc)) from None
    if "declare" in raw:
        _declare(ctx, phi, raw["declare"], f"{path}.declare")
    return phi


def _declare(ctx, phi, raw, path):
    """Apply declared attributes; a well-behaved claim is spot-checked."""
    raw = _mapping(ctx, raw, path)
    _check_keys(ctx, raw, path, _DECLARE_KEYS)
    for key in ("convex", "coercive", "well_behaved"):
        if key in raw and not isinstance(raw[key], bool):
            raise ctx.error(f"{path}.{key}", "expected true or false")
    if raw.get("convex"):
        phi.is_convex = True
    if raw.get("coercive"):
        phi.is_coercive = True
    if raw.get("well_behaved"):
        if "radius" not in raw:
            raise ctx.error(path, "a well_behaved declaration needs a radius")
        radius = _number(ctx, raw["radius"], f"{path}.radius")
        if radius < 0:
            raise ctx.error(f"{path}.radius", "must be >= 0")
        phi.is_well_behaved, phi.well_behaved_radius = True, radius
        try:
            check_well_behaved(phi, strict=True)
        except DeclarationInconsistent as exc:
            raise ctx.error(path, str(exc)) from None


def _constraints(ctx, raw, d):
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ctx.error("constraints", "expected a list")
    out = []
    for i, item in enumerate(raw):
        path = f"constraints[{i}]"
        item = _mapping(ctx, item, path)
        if "u" not in item:
            raise ctx.error(path, "missing bound u")
        u = _number(ctx, item["u"], f"{path}.u")
        phi = _function(ctx, item, path, d)
        eq = item.get("equality", False)
        if not isinstance(eq, bool):
            raise ctx.error(f"{path}.equality", "expected true or false")
        out.extend(equality_constraint(phi, u) if eq else [(phi, u)])
    return out


def _section(ctx, raw, name, defaults, spec):
    raw = {} if raw is None else _mapping(ctx, raw, name)
    _check_keys(ctx, raw, name, set(defaults))
    out = dict(defaults)
    for key, (kind, lo) in spec.items():
        if key in raw:
            path = f"{name}.{key}"
            if kind is int:
                out[key] = _integer(ctx, raw[key], path, lo)
            else:
                v = _number(ctx, raw[key], path)
                if lo is not None and not v > lo:
                    raise ctx.error(path, f"must be > {lo}")
                out[key] = v
    return out


# --------------------------------------------------------------------------- config object

@dataclass
class ProblemConfig:
    problem: MomentProblem
    dimension: int
    solver: dict
    quadrature: dict
    output: dict
    source: dict
    path: str = ""
    seed_override: int | None = None

    def echo(self):
        """The parsed config after defaults and overrides, for reports."""
        out = copy.deepcopy(self.source)
        out["solver"], out["quadrature"] = dict(self.solver), dict(self.quadrature)
        out["output"] = copy.deepcopy(self.output)
        out["seed_override"] = self.seed_override
        return _jsonable(out)


def _seed_from_env():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(SEED_ENV, f"environment seed must be an integer, got {raw!r}") from None
    if seed < 0:
        raise ConfigError(SEED_ENV, "environment seed must be >= 0")
    return seed


def parse_config(text, path="<string>"):
    """Parse YAML text into a :class:`ProblemConfig`."""
    ctx = _Ctx(_line_map(text))
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<yaml>", f"not valid YAML: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    raw = _mapping(ctx, raw, "")
    _check_keys(ctx, raw, "", {"schema", "dimension", "support", "constraints", "solver",
                               "quadrature", "output"})
    if raw.get("schema") != SCHEMA:
        raise ctx.error("schema", f"expected schema: {SCHEMA}, got {raw.get('schema')!r}")
    if "dimension" not in raw:
        raise ctx.error("dimension", "missing dimension")
    d = _integer(ctx, raw["dimension"], "dimension", 1)
    if "support" not in raw:
        raise ctx.error("support", "missing support")
    support = _support(ctx, raw["support"], d)
    cons = _constraints(ctx, raw.get("constraints"), d)
    try:
        problem = MomentProblem(support, cons, require_bounded_below=False)
    except MaxentError as exc:
        raise ctx.error("constraints", str(exc)) from None
    solver = _section(ctx, raw.get("solver"), "solver", SOLVER_DEFAULTS,
                      {"tol": (float, 0.0), "max_iter": (int, 1), "budget": (int, 1000),
                       "seed": (int, 0)})
    quad = _section(ctx, raw.get("quadrature"), "quadrature", QUADRATURE_DEFAULTS,
                    {"budget": (int, 1000), "target_rel_tol": (float, 0.0), "seed": (int, 0)})
    output = _output(ctx, raw.get("output"), d)
    seed = _seed_from_env()
    if seed is not None:
        solver["seed"] = quad["seed"] = seed
    return ProblemConfig(problem, d, solver, quad, output, raw, path, seed)


def _output(ctx, raw, d):
    raw = {} if raw is None else _mapping(ctx, raw, "output")
    _check_keys(ctx, raw, "output", set(OUTPUT_DEFAULTS))
    out = copy.deepcopy(OUTPUT_DEFAULTS)
    for key in ("report", "csv"):
        if key in raw:
            if not isinstance(raw[key], str) or not raw[key]:
                raise ctx.error(f"output.{key}", "expected a file name")
            out[key] = raw[key]
    grid = _mapping(ctx, raw.get("grid", {}) or {}, "output.grid")
    _check_keys(ctx, grid, "output.grid", {"lower", "upper", "points"})
    g = {}
    if "lower" in grid:
        g["lower"] = _vector(ctx, grid["lower"], "output.grid.lower", d).tolist()
    if "upper" in grid:
        g["upper"] = _vector(ctx, grid["upper"], "output.grid.upper", d).tolist()
    if "lower" in g and "upper" in g and any(a >= b for a, b in zip(g["lower"], g["upper"])):
        raise ctx.error("output.grid", "grid lower must be below upper on every axis")
    g["points"] = _integer(ctx, grid.get("points", DEFAULT_GRID_POINTS.get(d, 21)),
                           "output.grid.points", 2)
    out["grid"] = g
    return out


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))


# --------------------------------------------------------------------------- report

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


@dataclass
class RunReport:
    """Machine-readable record of one command run. Timings are kept apart."""

    command: str
    tool_version: str
    outcome: dict
    config: dict
    diagnosis: dict | None = None
    solution: dict | None = None
    certificate: dict | None = None
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return _jsonable({
            "schema": "maxentcert-report/v1",
            "command": self.command,
            "tool_version": self.tool_version,
            "outcome": self.outcome,
            "config": self.config,
            "diagnosis": self.diagnosis,
            "solution": self.solution,
            "certificate": self.certificate,
        })

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        if data.get("schema") != "maxentcert-report/v1":
            raise ValueError("not a maxentcert report")
        return cls(data["command"], data["tool_version"], data["outcome"], data["config"],
                   data.get("diagnosis"), data.get("solution"), data.get("certificate"))

    def __eq__(self, other):
        if not isinstance(other, RunReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()
