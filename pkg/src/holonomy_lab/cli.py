"""Command-line front end.

Subcommands ``holonomy``, ``lift``, ``sweep`` and ``check``. Results go to
stdout as JSON; files are written atomically. Exit codes: 0 success, 2
invalid input or failed validation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import sys
import warnings
from typing import Callable

import numpy as np

from . import models
from .errors import HolonomyError, InputError, NotExact, NumericalError, ValidationFailed
from .geometry import potential_residual, reconstruct_potential
from .hybrid import EPS_C, BaseLoop, HybridBundle, segment_loop, validate_bundle
from .lift import crossing_log, holonomy_report, hybrid_lift, lift_csv
from .limits import convergence_sweep, rolling_disk_comparator
from .output import atomic_write, dumps
from .quadrature import DEFAULT_TOL

DEFAULT_SCHEDULE = "10,100,1000,10000"


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _schedule(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"schedule must be comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("system")
    which = src.add_mutually_exclusive_group(required=True)
    which.add_argument("--model", choices=("walker", "disk"), help="builtin model")
    which.add_argument("--system", metavar="PATH", help="system definition JSON file")
    src.add_argument("--l", type=_positive, default=1.0, help="walker leg length")
    src.add_argument("--delta", type=float, default=0.3, help="walker impact angle (radians)")
    src.add_argument("--r", type=_positive, default=1.0, help="disk radius")
    src.add_argument("--windings", type=int, default=1, help="disk loop winding number")
    src.add_argument("--cycles", type=int, default=1, help="walker steps per leg / loop repetitions")
    src.add_argument("--loop", help="loop name in a definition file (default: canonical)")
    num = common.add_argument_group("numerics")
    num.add_argument("--tol", type=_positive, default=DEFAULT_TOL, help="quadrature tolerance")
    num.add_argument("--eps-t", type=_positive, default=None, help="transversality tolerance")
    num.add_argument("--eps-c", type=_positive, default=EPS_C, help="continuity/closure tolerance")
    num.add_argument("--seed", type=int, default=0, help="seed for validation sampling")
    num.add_argument("--samples", type=int, default=16, help="guard samples per transition in validation")

    parser = argparse.ArgumentParser(prog="holonomy-lab", description="Holonomy of hybrid principal bundles.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("holonomy", parents=[common], help="total holonomy of a loop")
    p.add_argument("--method", choices=("quadrature", "potential", "both"), default="both")
    p.add_argument("--output", help="also write the JSON report here")

    p = sub.add_parser("lift", parents=[common], help="sampled hybrid lift")
    p.add_argument("--method", choices=("quadrature", "potential", "both"), default="quadrature")
    p.add_argument("--e0", type=float, nargs="+", help="initial fiber value (default 0)")
    p.add_argument("--lift-samples", type=int, default=256, help="samples per piece")
    p.add_argument("--output", help="trajectory file")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--crossings", help="crossing log JSON file")

    p = sub.add_parser("sweep", parents=[common], help="infinite-switching convergence study")
    p.add_argument("--K", type=float, default=0.5, help="fixed product N * delta")
    p.add_argument("--schedule", type=_schedule, default=_schedule(DEFAULT_SCHEDULE))
    p.add_argument("--method", choices=("quadrature", "potential", "both"), default="potential")
    p.add_argument("--param", default="delta", help="definition parameter swept as delta (--system only)")
    p.add_argument("--output", help="CSV with one row per schedule entry")
    p.add_argument("--summary", help="JSON summary file")

    p = sub.add_parser("check", parents=[common], help="validate resets, exactness and crossings")
    p.add_argument("--grid", type=int, default=9, help="grid points per axis for the exactness check")
    p.add_argument("--output", help="also write the JSON report here")
    return parser


# -- system loading ------------------------------------------------------------


@dataclasses.dataclass
class Loaded:
    definition: models.SystemDefinition
    bundle: HybridBundle
    loop: Callable[[int], BaseLoop]


def _with_eps_t(defn: models.SystemDefinition, eps_t: float | None) -> models.SystemDefinition:
    if eps_t is None:
        return defn
    defn = copy.deepcopy(defn)
    for t in defn.transitions:
        t["transversality_tol"] = eps_t
    return defn


def _load(args, delta: float | None = None, validate: bool = True) -> Loaded:
    if args.model == "walker":
        d = args.delta if delta is None else delta
        if not 0 <= d < np.pi / 2:
            raise InputError(f"delta must lie in [0, pi/2), got {d!r}")
        defn = models.planar_walker_definition(args.l, d)
        factory = lambda n: models.walker_loop(d, n)  # noqa: E731
        sys_ = models.compile_system(_with_eps_t(defn, args.eps_t), validate=False)
    elif args.model == "disk":
        defn = models.rolling_disk_definition(args.r)
        factory = lambda n: models.disk_loop(n)  # noqa: E731
        sys_ = models.compile_system(_with_eps_t(defn, args.eps_t), validate=False)
    else:
        defn = models.read_definition(args.system)
        if delta is not None:
            if args.param not in defn.parameters:
                raise InputError(f"definition has no parameter {args.param!r} to sweep")
            defn.parameters[args.param] = delta
        sys_ = models.compile_system(_with_eps_t(defn, args.eps_t), validate=False)
        factory = lambda n: sys_.loop(args.loop, n)  # noqa: E731
    if validate:
        validate_bundle(sys_.bundle, samples=args.samples, seed=args.seed)

    def loop(n: int) -> BaseLoop:
        base = factory(n)
        return dataclasses.replace(base, closure_tol=args.eps_c)

    return Loaded(defn, sys_.bundle, loop)


def _default_count(args) -> int:
    return args.windings if args.model == "disk" else args.cycles


def _emit(report: dict, path: str | None) -> None:
    text = dumps(report)
    if path:
        atomic_write(path, text)
    sys.stdout.write(text)


# -- commands ------------------------------------------------------------------


def cmd_holonomy(args) -> int:
    sys_ = _load(args)
    loop = sys_.loop(_default_count(args))
    report = holonomy_report(sys_.bundle, loop, args.method, args.tol)
    out = {"system": sys_.definition.name, **report.to_json(), "tol": args.tol}
    _emit(out, args.output)
    return 0


def _lift_json(result) -> dict:
    return {
        "pieces": [
            {
                "mode": p.mode,
                "t0": p.t0,
                "t1": p.t1,
                "contribution": p.contribution,
                "t": p.t,
                "m": p.m.tolist(),
                "g": p.g.tolist(),
            }
            for p in result.pieces
        ],
        **crossing_log(result),
    }


def cmd_lift(args) -> int:
    sys_ = _load(args)
    loop = sys_.loop(_default_count(args))
    result = hybrid_lift(sys_.bundle, loop, args.e0, args.lift_samples, args.tol, args.method)
    if args.output:
        text = lift_csv(result) if args.format == "csv" else dumps(_lift_json(result))
        atomic_write(args.output, text)
    if args.crossings:
        atomic_write(args.crossings, dumps(crossing_log(result)))
    _emit(
        {
            "system": sys_.definition.name,
            "method": result.method,
            "pieces": len(result.pieces),
            "crossings": len(result.crossings),
            "e0": result.e0,
            "final": result.final,
            "holonomy": result.total,
        },
        None,
    )
    return 0


def cmd_sweep(args) -> int:
    if args.model == "disk":
        raise InputError("sweeps need a switching system; use --model walker or --system")
    _load(args, validate=True)

    def factory(delta: float):
        sys_ = _load(args, delta=delta, validate=False)
        return sys_.bundle, sys_.loop

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = convergence_sweep(factory, args.K, args.schedule, args.method, args.tol, allow_partial=True)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    summary = report.summary()
    if args.model == "walker":
        # a disk of radius l turned through -4K matches the walker's limit
        angle = -4.0 * args.K
        summary["rolling_disk"] = {
            "r": args.l,
            "angle": angle,
            "holonomy": rolling_disk_comparator(args.l, angle, args.tol),
            "expected_limit": [-4.0 * args.l * args.K],
        }
    if args.output:
        atomic_write(args.output, report.to_csv())
    if args.summary:
        atomic_write(args.summary, dumps(summary))
    _emit(summary, None)
    return 0


def _region(mode) -> list[tuple[float, float]]:
    if mode.chart.bounds is not None:
        return list(mode.chart.bounds)
    return [(-np.pi, np.pi)] * mode.chart.dim


def cmd_check(args) -> int:
    sys_ = _load(args, validate=False)
    ok = True
    try:
        report = validate_bundle(sys_.bundle, samples=args.samples, seed=args.seed)
        diagram = {"ok": True, "error": None, "transitions": report.transitions}
    except ValidationFailed as exc:
        ok = False
        diagram = {"ok": False, "error": str(exc), "transitions": exc.report.transitions if exc.report else []}
    diagram["transitions"] = [
        {
            "source": c.source,
            "target": c.target,
            "samples": c.samples,
            "max_violation": c.max_violation,
            "worst_point": c.worst_point,
            "ok": c.ok,
            "error": c.error,
        }
        for c in diagram["transitions"]
    ]

    exactness = []
    for mode in sys_.bundle.modes.values():
        region = _region(mode)
        entry = {"mode": mode.id, "exact": True, "violation": 0.0, "potential_residual": None,
                 "reconstruction_residual": None}
        try:
            anchor = [0.5 * (lo + hi) for lo, hi in region]
            table = reconstruct_potential(mode, anchor, region, grid=args.grid)
            entry["reconstruction_residual"] = table.residual
        except NotExact as exc:
            ok = False
            entry.update(exact=False, violation=exc.violation, point=list(exc.point))
        if entry["exact"] and mode.potential is not None:
            res = potential_residual(mode, region, grid=args.grid)
            entry["potential_residual"] = res
            if res > 1e-6:
                ok = False
                entry["exact"] = False
        exactness.append(entry)

    crossings = None
    try:
        if args.system and not sys_.definition.loops:
            raise LookupError
        part = segment_loop(sys_.bundle, sys_.loop(_default_count(args)))
        crossings = {
            "ok": True,
            "count": len(part.events),
            "min_transversality": min((abs(e.transversality) for e in part.events), default=None),
            "tangential_contacts": len(part.contacts),
            "modes": part.mode_sequence(),
        }
    except LookupError:
        pass
    except HolonomyError as exc:
        ok = False
        crossings = {"ok": False, "error": str(exc)}

    out = {"system": sys_.definition.name, "ok": ok, "diagram": diagram, "exactness": exactness,
           "crossings": crossings}
    _emit(out, args.output)
    if not ok:
        print("check failed", file=sys.stderr)
    return 0 if ok else 2


COMMANDS = {"holonomy": cmd_holonomy, "lift": cmd_lift, "sweep": cmd_sweep, "check": cmd_check}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, HolonomyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
