"""Builtin reference systems and JSON system definitions.

A definition file looks like::

    {
      "schema_version": 1,
      "name": "planar-walker",
      "parameters": {"l": 1.0, "delta": 0.3},
      "fiber": ["x"],
      "modes": [
        {"id": "theta",
         "chart": {"variables": ["theta"], "periodic": {}, "bounds": [[-1.57, 1.57]]},
         "connection": [["-l*cos(theta)"]],
         "potential": ["-l*sin(theta)"]}
      ],
      "transitions": [
        {"source": "theta", "target": "phi", "guard": "theta + delta",
         "transversality_tol": 1e-8,
         "reset": {"base": ["-theta"], "fiber": ["x"], "lifted_base": ["-theta"]}}
      ],
      "loops": {
        "canonical": {"segments": [
          {"mode": "theta", "t0": 0, "t1": 0.5, "curve": {"expr": ["delta - 4*delta*t"]}},
          {"mode": "phi", "t0": 0.5, "t1": 1, "curve": {"polyline": {"times": [0.5, 1], "points": [[0.3], [-0.3]]}}}
        ]}
      }
    }

Every expression is a string in the expression grammar. Named parameters
are substituted before anything else; periods, bounds and segment times may
also be expressions in the parameters. ``chart.periodic`` maps a variable
to its period; ``potential``, ``bounds``, ``transversality_tol`` and
``lifted_base`` are optional.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .curves import Curve, ExprCurve, Polyline, constant_curve
from .errors import ParseError
from .expr import Expression, evaluate, free_variables, parse, substitute
from .geometry import Chart, ConnectionCoeffs, ExprPotential, Mode
from .hybrid import EPS_C, EPS_T, BaseLoop, Guard, HybridBundle, Reset, Segment, repeat_loop, validate_bundle
from .output import atomic_write

SCHEMA_VERSION = 1
FIXTURES = Path(__file__).parent / "fixtures"


@dataclass
class SystemDefinition:
    """Parsed (but not yet compiled) contents of a definition file."""

    name: str
    fiber: list[str]
    modes: list[dict[str, Any]]
    transitions: list[dict[str, Any]]
    parameters: dict[str, float] = field(default_factory=dict)
    loops: dict[str, dict[str, Any]] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "parameters": self.parameters,
            "fiber": self.fiber,
            "modes": self.modes,
            "transitions": self.transitions,
            "loops": self.loops,
        }

    @classmethod
    def from_json(cls, data: Any) -> "SystemDefinition":
        if not isinstance(data, dict):
            raise ParseError("system definition must be a JSON object", location="$")
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ParseError(f"unsupported schema_version {version!r}", location="$.schema_version")
        for key in ("fiber", "modes", "transitions"):
            if key not in data:
                raise ParseError(f"missing field {key!r}", location="$")
        params = data.get("parameters", {})
        if not isinstance(params, dict) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in params.values()
        ):
            raise ParseError("parameters must map names to numbers", location="$.parameters")
        return cls(
            name=str(data.get("name", "")),
            fiber=list(data["fiber"]),
            modes=list(data["modes"]),
            transitions=list(data["transitions"]),
            parameters={k: float(v) for k, v in params.items()},
            loops=dict(data.get("loops", {})),
            schema_version=version,
        )


class _Compiler:
    """Turns expression strings from a definition into checked expressions."""

    def __init__(self, parameters: dict[str, float]):
        self.parameters = parameters

    def expr(self, source: Any, location: str, allowed) -> Expression:
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            source = repr(float(source))
        if not isinstance(source, str):
            raise ParseError(f"expected an expression string, got {source!r}", location=location)
        try:
            e = parse(source)
        except ParseError as exc:
            raise exc.at(location) from None
        e = substitute(e, self.parameters)
        unbound = sorted(free_variables(e) - set(allowed))
        if unbound:
            raise ParseError(f"unbound parameter {unbound[0]!r} in {source!r}", location=location)
        return e

    def number(self, source: Any, location: str) -> float:
        return float(evaluate(self.expr(source, location, ()), {}))

    def exprs(self, sources: Any, location: str, allowed) -> tuple[Expression, ...]:
        if not isinstance(sources, list):
            raise ParseError("expected a list of expressions", location=location)
        return tuple(self.expr(s, f"{location}[{i}]", allowed) for i, s in enumerate(sources))


def _mode(c: _Compiler, spec: dict, fiber: tuple[str, ...], loc: str) -> Mode:
    try:
        mid = spec["id"]
        chart_spec = spec["chart"]
        variables = tuple(chart_spec["variables"])
        connection = spec["connection"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"mode is missing field {exc}", location=loc) from None
    periods = {
        name: c.number(p, f"{loc}.chart.periodic.{name}") for name, p in chart_spec.get("periodic", {}).items()
    }
    bounds = chart_spec.get("bounds")
    if bounds is not None:
        bounds = tuple(
            (c.number(lo, f"{loc}.chart.bounds[{k}][0]"), c.number(hi, f"{loc}.chart.bounds[{k}][1]"))
            for k, (lo, hi) in enumerate(bounds)
        )
    rows = tuple(c.exprs(row, f"{loc}.connection[{a}]", variables) for a, row in enumerate(connection))
    try:
        chart = Chart(variables, periods, bounds)
        coeffs = ConnectionCoeffs(rows, variables)
        potential = None
        if spec.get("potential") is not None:
            potential = ExprPotential(c.exprs(spec["potential"], f"{loc}.potential", variables), variables)
        return Mode(str(mid), chart, coeffs, fiber, potential)
    except ValueError as exc:
        raise ParseError(str(exc), location=loc) from None


def _transition(c: _Compiler, spec: dict, modes: dict[str, Mode], fiber, loc: str) -> tuple[Guard, Reset]:
    try:
        source, target = spec["source"], spec["target"]
        reset = spec["reset"]
        level = spec["guard"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"transition is missing field {exc}", location=loc) from None
    if source not in modes or target not in modes:
        raise ParseError(f"transition references unknown mode {source!r} or {target!r}", location=loc)
    chart = modes[source].chart.names
    total = chart + tuple(fiber)
    eps_t = c.number(spec.get("transversality_tol", EPS_T), f"{loc}.transversality_tol")
    guard = Guard(source, target, c.expr(level, f"{loc}.guard", chart), eps_t)
    lifted = reset.get("lifted_base")
    return guard, Reset(
        c.exprs(reset["base"], f"{loc}.reset.base", chart),
        c.exprs(reset["fiber"], f"{loc}.reset.fiber", total),
        c.exprs(lifted, f"{loc}.reset.lifted_base", total) if lifted is not None else None,
    )


def _curve(c: _Compiler, spec: dict, loc: str) -> Curve:
    if "expr" in spec:
        return ExprCurve(c.exprs(spec["expr"], f"{loc}.expr", ("t",)))
    if "polyline" in spec:
        poly = spec["polyline"]
        times = [c.number(v, f"{loc}.polyline.times[{i}]") for i, v in enumerate(poly["times"])]
        points = [
            [c.number(v, f"{loc}.polyline.points[{i}][{j}]") for j, v in enumerate(p)]
            for i, p in enumerate(poly["points"])
        ]
        try:
            return Polyline(times, points)
        except ValueError as exc:
            raise ParseError(str(exc), location=loc) from None
    if "constant" in spec:
        return constant_curve([c.number(v, f"{loc}.constant[{i}]") for i, v in enumerate(spec["constant"])])
    raise ParseError("curve needs one of 'expr', 'polyline' or 'constant'", location=loc)


def _loop(c: _Compiler, spec: dict, loc: str) -> BaseLoop:
    segments = []
    for k, seg in enumerate(spec.get("segments", [])):
        sloc = f"{loc}.segments[{k}]"
        segments.append(
            Segment(
                str(seg["mode"]),
                _curve(c, seg["curve"], f"{sloc}.curve"),
                c.number(seg["t0"], f"{sloc}.t0"),
                c.number(seg["t1"], f"{sloc}.t1"),
            )
        )
    try:
        return BaseLoop(tuple(segments), c.number(spec.get("closure_tol", EPS_C), f"{loc}.closure_tol"))
    except ValueError as exc:
        raise ParseError(str(exc), location=loc) from None


@dataclass
class LoadedSystem:
    definition: SystemDefinition
    bundle: HybridBundle
    loops: dict[str, BaseLoop]

    def loop(self, name: str | None = None, cycles: int = 1) -> BaseLoop:
        if not self.loops:
            raise ParseError("system defines no loops", location="$.loops")
        if name is None:
            name = "canonical" if "canonical" in self.loops else sorted(self.loops)[0]
        if name not in self.loops:
            raise ParseError(f"no loop named {name!r}; have {sorted(self.loops)}", location="$.loops")
        return repeat_loop(self.loops[name], cycles)


def compile_system(defn: SystemDefinition, validate: bool = True, samples: int = 16, seed: int = 0) -> LoadedSystem:
    """Build the hybrid bundle (and declared loops) for a definition."""
    c = _Compiler(defn.parameters)
    fiber = tuple(defn.fiber)
    modes = [_mode(c, m, fiber, f"$.modes[{i}]") for i, m in enumerate(defn.modes)]
    by_id = {m.id: m for m in modes}
    transitions = [
        _transition(c, t, by_id, fiber, f"$.transitions[{i}]") for i, t in enumerate(defn.transitions)
    ]
    bundle = HybridBundle(modes, transitions, defn.name)
    if validate:
        validate_bundle(bundle, samples=samples, seed=seed)
    loops = {name: _loop(c, spec, f"$.loops.{name}") for name, spec in defn.loops.items()}
    return LoadedSystem(defn, bundle, loops)


def read_definition(path: str | Path) -> SystemDefinition:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos, location=str(path)) from None
    return SystemDefinition.from_json(data)


def load_system(path: str | Path, samples: int = 16, seed: int = 0) -> HybridBundle:
    """Read, compile and validate a definition file."""
    return load_system_full(path, samples=samples, seed=seed).bundle


def load_system_full(path: str | Path, samples: int = 16, seed: int = 0) -> LoadedSystem:
    return compile_system(read_definition(path), samples=samples, seed=seed)


def save_definition(defn: SystemDefinition, path: str | Path) -> None:
    atomic_write(path, json.dumps(defn.to_json(), indent=2) + "\n")


# -- builtin models ------------------------------------------------------------


def rolling_disk_definition(r: float = 1.0) -> SystemDefinition:
    """Disk of radius ``r`` rolling without slipping: ``xdot = r thetadot``."""
    return SystemDefinition(
        name="rolling-disk",
        parameters={"r": float(r)},
        fiber=["x"],
        modes=[
            {
                "id": "disk",
                "chart": {"variables": ["theta"], "periodic": {"theta": "2*pi"}},
                "connection": [["-r"]],
                "potential": ["-r*theta"],
            }
        ],
        transitions=[],
        loops={
            "canonical": {
                "segments": [{"mode": "disk", "t0": 0, "t1": 1, "curve": {"expr": ["2*pi*t"]}}]
            }
        },
    )


def disk_loop(windings: int) -> BaseLoop:
    """``theta: 0 -> 2 pi n`` on the universal cover."""
    return BaseLoop((Segment("disk", ExprCurve([f"{2 * int(windings)}*pi*t"]), 0.0, 1.0),))


def build_rolling_disk(r: float = 1.0) -> tuple[HybridBundle, Callable[[int], BaseLoop]]:
    if not r > 0:
        raise ValueError("radius must be positive")
    bundle = compile_system(rolling_disk_definition(r), validate=False).bundle
    return bundle, disk_loop


def planar_walker_definition(l: float = 1.0, delta: float = 0.3) -> SystemDefinition:
    """Two-legged walker with leg length ``l`` and impact angle ``delta``.

    Mode ``theta`` has the first leg in stance, mode ``phi`` the second; each
    chart carries only the stance angle. A step ends when the stance angle
    reaches ``-delta`` (guard ``angle + delta``); the legs swap roles and the
    new stance angle is ``-angle``. The mirrored guard ``angle - delta``
    serves loops walked backwards. The fiber coordinate ``x`` is unchanged by
    impacts.
    """
    half = "pi/2"
    modes = []
    transitions = []
    for me, other in (("theta", "phi"), ("phi", "theta")):
        modes.append(
            {
                "id": me,
                "chart": {"variables": [me], "bounds": [[f"-{half}", half]]},
                "connection": [[f"-l*cos({me})"]],
                "potential": [f"-l*sin({me})"],
            }
        )
        for level in (f"{me} + delta", f"{me} - delta"):
            transitions.append(
                {
                    "source": me,
                    "target": other,
                    "guard": level,
                    "transversality_tol": EPS_T,
                    "reset": {"base": [f"-{me}"], "fiber": ["x"], "lifted_base": [f"-{me}"]},
                }
            )
    # one step per leg; the stance angle sweeps delta -> -delta linearly
    loops = {
        "canonical": {
            "segments": [
                {"mode": "theta", "t0": 0, "t1": 0.5, "curve": {"expr": ["delta - 4*delta*t"]}},
                {"mode": "phi", "t0": 0.5, "t1": 1, "curve": {"expr": ["delta - 4*delta*(t - 0.5)"]}},
            ]
        }
    }
    return SystemDefinition(
        name="planar-walker",
        parameters={"l": float(l), "delta": float(delta)},
        fiber=["x"],
        modes=modes,
        transitions=transitions,
        loops=loops,
    )


def walker_loop(delta: float, cycles: int) -> BaseLoop:
    """``cycles`` full steps on each leg, ``2 * cycles`` polyline segments.

    With ``cycles == 0`` the loop rests at ``theta = 0``, away from both
    guards (resting on a guard would make every instant a candidate impact).
    """
    if cycles < 0:
        raise ValueError("cycles must be non-negative")
    if cycles == 0:
        return BaseLoop((Segment("theta", constant_curve([0.0]), 0.0, 1.0),))
    count = 2 * cycles
    bounds = [k / count for k in range(count)] + [1.0]
    segs = []
    for k in range(count):
        t0, t1 = bounds[k], bounds[k + 1]
        curve = Polyline([t0, t1], [[delta], [-delta]])
        segs.append(Segment("theta" if k % 2 == 0 else "phi", curve, t0, t1))
    return BaseLoop(tuple(segs))


def build_planar_walker(l: float = 1.0, delta: float = 0.3) -> tuple[HybridBundle, Callable[[int], BaseLoop]]:
    if not l > 0:
        raise ValueError("leg length must be positive")
    if not 0 <= delta < math.pi / 2:
        raise ValueError("delta must lie in [0, pi/2)")
    bundle = compile_system(planar_walker_definition(l, delta), validate=False).bundle
    return bundle, lambda cycles: walker_loop(delta, cycles)


def round_trip(defn: SystemDefinition) -> SystemDefinition:
    """Serialize to JSON text and back."""
    return SystemDefinition.from_json(json.loads(json.dumps(defn.to_json())))


def fixture_path(name: str) -> Path:
    return FIXTURES / name

