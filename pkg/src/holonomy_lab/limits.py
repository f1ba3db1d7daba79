"""Two-mode alternation and the infinite-switching limit.

A loop that bounces ``N`` times between two exact modes, travelling in mode
1 from ``m1`` to ``m2`` and in mode 2 back from ``m2`` to ``m1``, collects

    dg = N * ((F1 - F2)(m1) - (F1 - F2)(m2)).

When the guard points merge with ``N * |m1 - m2| -> C`` this tends to the
directional derivative ``C * d(F1 - F2)`` at the merge point, taken along
the direction from ``m2`` to ``m1``.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .curves import ExprCurve, Polyline
from .errors import InsufficientData
from .geometry import ExprPotential, GroupElement, make_mode, segment_holonomy_quadrature
from .hybrid import BaseLoop, Guard, HybridBundle, Reset, Segment
from .lift import hybrid_holonomy
from .output import fmt
from .quadrature import DEFAULT_TOL

THREADS_ENV = "HOLONOMY_LAB_THREADS"


@dataclass(frozen=True)
class AlternationSpec:
    F1: ExprPotential
    F2: ExprPotential
    m1: tuple[float, ...]
    m2: tuple[float, ...]
    N: int

    def __post_init__(self):
        object.__setattr__(self, "m1", tuple(float(x) for x in np.atleast_1d(self.m1)))
        object.__setattr__(self, "m2", tuple(float(x) for x in np.atleast_1d(self.m2)))
        if self.N < 0:
            raise ValueError("N must be non-negative")
        if self.F1.names != self.F2.names:
            raise ValueError("both potentials must live on the same chart")


def alternating_holonomy(spec: AlternationSpec) -> GroupElement:
    """Closed form ``N * ((F1 - F2)(m1) - (F1 - F2)(m2))``."""
    diff = lambda m: spec.F1(m) - spec.F2(m)  # noqa: E731
    return spec.N * (diff(spec.m1) - diff(spec.m2))


def infinitesimal_holonomy(F1: ExprPotential, F2: ExprPotential, m1, direction, C: float) -> GroupElement:
    """``C`` times the derivative of ``F1 - F2`` at ``m1`` along ``direction``."""
    m1 = np.atleast_1d(np.asarray(m1, dtype=float))
    u = np.atleast_1d(np.asarray(direction, dtype=float))
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    if C < 0:
        raise ValueError("C must be non-negative")
    h = 1e-6 * max(1.0, float(np.max(np.abs(m1))))
    lo, hi = m1 - h * u, m1 + h * u
    diff = lambda m: F1(m) - F2(m)  # noqa: E731
    return C * (diff(hi) - diff(lo)) / (2.0 * h)


def alternating_system(
    names: Sequence[str],
    fiber: Sequence[str],
    A1: Sequence[Sequence[str]],
    F1: Sequence[str],
    A2: Sequence[Sequence[str]],
    F2: Sequence[str],
    m1,
    m2,
    N: int,
) -> tuple[HybridBundle, BaseLoop]:
    """Explicit bundle and ``2N``-segment loop realizing an alternation.

    Modes ``1`` and ``2`` share one chart; mode 1 runs straight from ``m1``
    to ``m2`` and mode 2 straight back. Guards are the hyperplanes through
    the end points orthogonal to the path, resets are the identity.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    m1 = np.atleast_1d(np.asarray(m1, dtype=float))
    m2 = np.atleast_1d(np.asarray(m2, dtype=float))
    u = m1 - m2
    if not np.any(u):
        raise ValueError("m1 and m2 must differ")
    mode1 = make_mode("1", names, A1, fiber, F1)
    mode2 = make_mode("2", names, A2, fiber, F2)

    def plane(point):
        return " + ".join(f"({float(u[k])!r})*({v} - ({float(point[k])!r}))" for k, v in enumerate(names))

    identity_base = tuple(names)
    identity_fiber = tuple(fiber)
    transitions = [
        (Guard("1", "2", plane(m2)), Reset(identity_base, identity_fiber)),
        (Guard("2", "1", plane(m1)), Reset(identity_base, identity_fiber)),
    ]
    bundle = HybridBundle([mode1, mode2], transitions, "alternation")
    count = 2 * N
    bounds = [k / count for k in range(count)] + [1.0]
    segs = []
    for k in range(count):
        a, b = (m1, m2) if k % 2 == 0 else (m2, m1)
        segs.append(Segment("1" if k % 2 == 0 else "2", Polyline([bounds[k], bounds[k + 1]], [a, b]), bounds[k], bounds[k + 1]))
    return bundle, BaseLoop(tuple(segs))


# -- convergence sweeps --------------------------------------------------------


@dataclass
class SweepEntry:
    N: int
    delta: float
    dg: GroupElement
    C: float


@dataclass
class ConvergenceReport:
    K: float
    entries: list[SweepEntry]
    limit: GroupElement
    order: float | None
    orders: list[float | None]
    C: float
    method: str

    def errors(self) -> np.ndarray:
        return np.array([float(np.linalg.norm(e.dg - self.limit)) for e in self.entries])

    def to_csv(self) -> str:
        n = len(self.limit)
        header = ["N", "delta"] + [f"dg_{a + 1}" for a in range(n)] + ["abs_error_vs_limit"]
        lines = [",".join(header)]
        for e, err in zip(self.entries, self.errors()):
            lines.append(",".join([str(e.N), fmt(e.delta), *map(fmt, e.dg), fmt(err)]))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "K": self.K,
            "method": self.method,
            "limit": self.limit,
            "order": self.order,
            "orders": self.orders,
            "C": self.C,
            "schedule": [e.N for e in self.entries],
        }


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _order(deltas: Sequence[float], values: Sequence[np.ndarray]) -> float | None:
    """Order ``p`` with ``dg(delta) = L + c * delta^p`` through three entries."""
    d0, d1, d2 = deltas
    s1 = float(np.linalg.norm(values[1] - values[0]))
    s2 = float(np.linalg.norm(values[2] - values[1]))
    if s1 == 0.0 or s2 == 0.0:
        return None
    target = math.log(s1 / s2)

    def f(p):
        return math.log(abs(d0**p - d1**p) / abs(d1**p - d2**p)) - target

    lo, hi = 1e-3, 20.0
    try:
        if f(lo) * f(hi) > 0:
            return None
        return float(brentq(f, lo, hi, xtol=1e-12))
    except (ValueError, ZeroDivisionError, OverflowError):
        return None


def _richardson(d_prev: float, d_last: float, v_prev, v_last, order: float) -> np.ndarray:
    ratio = (d_prev / d_last) ** order
    return v_last + (v_last - v_prev) / (ratio - 1.0)


def convergence_sweep(
    model_factory: Callable[[float], tuple[HybridBundle, Callable[[int], BaseLoop]]],
    K: float,
    schedule: Sequence[int],
    method: str = "potential",
    tol: float = DEFAULT_TOL,
    allow_partial: bool = False,
    richardson_order: float = 2.0,
) -> ConvergenceReport:
    """Holonomy for each ``N`` in ``schedule`` with ``delta = K / N``.

    ``model_factory(delta)`` returns a bundle and a loop factory taking
    ``N``. The limit is Richardson-extrapolated from the last two entries
    assuming error ``~ delta^richardson_order``; the order itself is
    estimated from the last three entries and reported, not assumed.
    """
    schedule = [int(n) for n in schedule]
    if not schedule:
        raise InsufficientData("schedule is empty")
    if any(n < 1 for n in schedule) or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be strictly increasing positive integers")
    if len(schedule) < 3:
        if not allow_partial:
            raise InsufficientData(f"order estimation needs at least 3 schedule entries, got {len(schedule)}")
        warnings.warn(f"schedule has {len(schedule)} entries; no order estimate", stacklevel=2)

    def run(N: int) -> SweepEntry:
        delta = K / N
        if K == 0:
            bundle, _ = model_factory(0.0)
            return SweepEntry(N, 0.0, np.zeros(bundle.fiber_dim), 0.0)
        bundle, loops = model_factory(delta)
        loop = loops(N)
        dg = hybrid_holonomy(bundle, loop, method, tol)
        first = loop.segments[0]
        span = float(np.max(np.abs(first.curve(first.t1) - first.curve(first.t0))))
        return SweepEntry(N, delta, dg, N * span)

    threads = min(_threads(), len(schedule))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            entries = list(pool.map(run, schedule))
    else:
        entries = [run(N) for N in schedule]

    values = [e.dg for e in entries]
    deltas = [e.delta for e in entries]
    if K == 0:
        orders: list[float | None] = [None] * max(0, len(entries) - 2)
        limit = np.zeros_like(values[-1])
    else:
        orders = [_order(deltas[k : k + 3], values[k : k + 3]) for k in range(len(entries) - 2)]
        if len(entries) >= 2:
            limit = _richardson(deltas[-2], deltas[-1], values[-2], values[-1], richardson_order)
        else:
            limit = values[-1].copy()
    order = orders[-1] if orders else None
    return ConvergenceReport(float(K), entries, limit, order, orders, entries[-1].C, method)


def rolling_disk_comparator(r: float, angle: float, tol: float = DEFAULT_TOL) -> GroupElement:
    """Fiber displacement of a disk of radius ``r`` rolled through ``angle``.

    The path need not close on the circle, so the single disk mode is
    integrated directly instead of going through a loop.
    """
    from .models import build_rolling_disk

    bundle, _ = build_rolling_disk(r)
    return segment_holonomy_quadrature(bundle.modes["disk"], ExprCurve([f"({angle!r})*t"]), 0.0, 1.0, tol)
