"""Hybrid bundles: modes glued by guards and resets, and loops through them.

A guard is the zero set of a level function on the source chart. A reset
has a base map (source chart -> target chart) and a total-space map whose
fiber part moves the fiber value and whose base part must agree with the
base map; ``validate_bundle`` checks that agreement on sampled guard
points.

Loops are declared as consecutive segments tiling ``[0, 1]``, each with the
mode it starts in. ``segment_loop`` walks the loop, detects transversal
guard crossings, switches modes, and checks continuity through the resets.
A guard root where the curve is tangent to the guard is recorded but does
not switch modes. The loop start is always treated as post-impact: roots at
the start of a piece are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .curves import Curve, Reparametrized
from .errors import (
    AmbiguousCrossing,
    ContinuityViolation,
    HolonomyError,
    ValidationFailed,
)
from .expr import Expression, compile_array, compile_scalar, free_variables, numeric_partial, parse
from .geometry import Mode

EPS_T = 1e-8
EPS_C = 1e-9
SCAN_RESOLUTION = 1024
ROOT_TOL = 1e-12
DIAGRAM_TOL = 1e-9


def _exprs(items) -> tuple[Expression, ...]:
    return tuple(parse(e) if isinstance(e, str) else e for e in items)


@dataclass(frozen=True)
class Guard:
    """Switching surface ``{level = 0}`` on the source chart."""

    source: str
    target: str
    level: Expression
    transversality_tol: float = EPS_T

    def __post_init__(self):
        if isinstance(self.level, str):
            object.__setattr__(self, "level", parse(self.level))


@dataclass(frozen=True)
class Reset:
    """Reset pair.

    ``base`` maps source chart variables to target chart variables.
    ``fiber`` maps (source chart, fiber) variables to the new fiber value.
    ``lifted_base`` is the base part of the total-space map, also a function
    of (source chart, fiber); it defaults to ``base``, in which case the
    commuting diagram holds by construction.
    """

    base: tuple[Expression, ...]
    fiber: tuple[Expression, ...]
    lifted_base: tuple[Expression, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "base", _exprs(self.base))
        object.__setattr__(self, "fiber", _exprs(self.fiber))
        if self.lifted_base is not None:
            object.__setattr__(self, "lifted_base", _exprs(self.lifted_base))


class Transition:
    """A guard with its reset, compiled against the source and target modes."""

    def __init__(self, guard: Guard, reset: Reset, source: Mode, target: Mode):
        self.guard = guard
        self.reset = reset
        self.source = source.id
        self.target = target.id
        chart = source.chart.names
        total = chart + source.fiber
        where = f"transition {source.id!r} -> {target.id!r}"
        _check_vars(guard.level, chart, f"{where}: guard")
        if len(reset.base) != target.chart.dim:
            raise ValidationFailed(f"{where}: base reset has {len(reset.base)} components, "
                                   f"target chart has {target.chart.dim}")
        if len(reset.fiber) != source.fiber_dim:
            raise ValidationFailed(f"{where}: fiber reset must have {source.fiber_dim} components")
        if reset.lifted_base is not None and len(reset.lifted_base) != target.chart.dim:
            raise ValidationFailed(f"{where}: lifted base reset must have {target.chart.dim} components")
        for e in reset.base:
            _check_vars(e, chart, f"{where}: base reset")
        for e in reset.fiber + (reset.lifted_base or ()):
            _check_vars(e, total, f"{where}: fiber reset")
        self.eps_t = guard.transversality_tol
        self._eta = compile_scalar(guard.level, chart)
        self._eta_array = compile_array(guard.level, chart)
        self._base = [compile_scalar(e, chart) for e in reset.base]
        self._fiber = [compile_scalar(e, total) for e in reset.fiber]
        lifted = reset.lifted_base if reset.lifted_base is not None else reset.base
        self._lifted = [compile_scalar(e, total) for e in lifted]
        self._chart = chart

    def __repr__(self) -> str:
        return f"Transition({self.source!r} -> {self.target!r}, level={str(self.guard.level)!r})"

    def level(self, m) -> float:
        return self._eta(*(float(x) for x in m))

    def level_array(self, points: np.ndarray) -> np.ndarray:
        return self._eta_array(*points.T)

    def level_gradient(self, m) -> np.ndarray:
        env = dict(zip(self._chart, (float(x) for x in m)))
        return np.array([numeric_partial(self.guard.level, v, env) for v in self._chart])

    def base_map(self, m) -> np.ndarray:
        args = tuple(float(x) for x in m)
        return np.array([f(*args) for f in self._base])

    def fiber_map(self, m, g) -> np.ndarray:
        args = tuple(float(x) for x in m) + tuple(float(x) for x in g)
        return np.array([f(*args) for f in self._fiber])

    def lifted_base_map(self, m, g) -> np.ndarray:
        args = tuple(float(x) for x in m) + tuple(float(x) for x in g)
        return np.array([f(*args) for f in self._lifted])


def _check_vars(e: Expression, allowed, where: str):
    extra = free_variables(e) - set(allowed)
    if extra:
        raise ValidationFailed(f"{where} {e} uses unknown variables {sorted(extra)}")


class HybridBundle:
    """Modes sharing one fiber dimension plus guarded transitions between them."""

    def __init__(self, modes: Sequence[Mode], transitions: Sequence[tuple[Guard, Reset]], name: str = ""):
        self.name = name
        self.modes = {m.id: m for m in modes}
        if len(self.modes) != len(modes):
            raise ValidationFailed("mode ids must be unique")
        if not modes:
            raise ValidationFailed("a hybrid bundle needs at least one mode")
        dims = {m.fiber_dim for m in modes}
        fibers = {m.fiber for m in modes}
        if len(dims) != 1 or len(fibers) != 1:
            raise ValidationFailed("all modes must share the same fiber variables")
        for m in modes:
            clash = set(m.chart.names) & set(m.fiber)
            if clash:
                raise ValidationFailed(f"mode {m.id!r}: names {sorted(clash)} used for both base and fiber")
        self.fiber = modes[0].fiber
        self.transitions: list[Transition] = []
        for guard, reset in transitions:
            for end in (guard.source, guard.target):
                if end not in self.modes:
                    raise ValidationFailed(f"transition references unknown mode {end!r}")
            self.transitions.append(Transition(guard, reset, self.modes[guard.source], self.modes[guard.target]))
        self._outgoing: dict[str, list[Transition]] = {mid: [] for mid in self.modes}
        for tr in self.transitions:
            self._outgoing[tr.source].append(tr)

    def __repr__(self) -> str:
        return f"HybridBundle({self.name!r}, modes={list(self.modes)}, transitions={self.transitions})"

    @property
    def fiber_dim(self) -> int:
        return len(self.fiber)

    def outgoing(self, mode_id: str) -> list[Transition]:
        return self._outgoing[mode_id]

    def between(self, source: str, target: str) -> list[Transition]:
        return [tr for tr in self._outgoing[source] if tr.target == target]


# -- loops ---------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    mode: str
    curve: Curve
    t0: float
    t1: float

    def __post_init__(self):
        if not self.t0 <= self.t1:
            raise ValueError(f"segment interval [{self.t0}, {self.t1}] is reversed")


@dataclass(frozen=True)
class BaseLoop:
    """Segments tiling ``[0, 1]`` exactly, each declaring its starting mode."""

    segments: tuple[Segment, ...]
    closure_tol: float = EPS_C

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("a loop needs at least one segment")
        if segs[0].t0 != 0.0 or segs[-1].t1 != 1.0:
            raise ValueError("loop segments must start at t = 0 and end at t = 1")
        for a, b in zip(segs[:-1], segs[1:]):
            if a.t1 != b.t0:
                raise ValueError(f"segments do not tile [0, 1]: gap or overlap at {a.t1!r} / {b.t0!r}")

    def __call__(self, t: float) -> np.ndarray:
        for seg in self.segments:
            if t <= seg.t1:
                return seg.curve(t)
        return self.segments[-1].curve(t)


def repeat_loop(loop: BaseLoop, times: int) -> BaseLoop:
    """Traverse ``loop`` ``times`` times, compressed into ``[0, 1]``."""
    if times < 1:
        raise ValueError("times must be at least 1")
    if times == 1:
        return loop
    segs = []
    for c in range(times):
        for seg in loop.segments:
            t0 = 1.0 if c == times - 1 and seg.t0 == 1.0 else (c + seg.t0) / times
            t1 = 1.0 if c == times - 1 and seg.t1 == 1.0 else (c + seg.t1) / times
            # t -> times * t - c maps the copy back onto the original interval
            segs.append(Segment(seg.mode, Reparametrized(seg.curve, times, -c), t0, t1))
    return BaseLoop(tuple(segs), loop.closure_tol)


def reversed_loop(loop: BaseLoop) -> BaseLoop:
    """The same loop traversed backwards, ``t -> 1 - t``.

    Each reversed segment keeps its declared mode, which is right when the
    original switches modes only at segment ends; the mirrored guards that
    the reversed loop meets must be part of the bundle.
    """
    segs = [
        Segment(seg.mode, Reparametrized(seg.curve, -1.0, 1.0), 1.0 - seg.t1, 1.0 - seg.t0)
        for seg in reversed(loop.segments)
    ]
    # exact tiling: 1 - t is exact for the boundaries we produce only up to rounding
    fixed = []
    prev_end = 0.0
    for k, seg in enumerate(segs):
        t1 = 1.0 if k == len(segs) - 1 else seg.t1
        fixed.append(Segment(seg.mode, seg.curve, prev_end, t1))
        prev_end = t1
    return BaseLoop(tuple(fixed), loop.closure_tol)


# -- crossings -----------------------------------------------------------------


@dataclass(frozen=True)
class CrossingEvent:
    """A transversal guard crossing: the loop switches ``source -> target``."""

    t: float
    source: str
    target: str
    pre_point: np.ndarray
    post_point: np.ndarray
    transversality: float
    segment_index: int
    transition: Transition = field(repr=False, compare=False)


@dataclass(frozen=True)
class TangentialContact:
    """A guard root where the curve is tangent to the guard; no transition."""

    t: float
    source: str
    target: str
    point: np.ndarray
    transversality: float
    segment_index: int


@dataclass(frozen=True)
class Piece:
    """Maximal stretch ``[t0, t1]`` of one declared segment spent in one mode."""

    mode: str
    t0: float
    t1: float
    curve: Curve
    segment_index: int
    crossing: int | None = None  # index of the event ending this piece

    @property
    def start_point(self) -> np.ndarray:
        return self.curve(self.t0)

    @property
    def end_point(self) -> np.ndarray:
        return self.curve(self.t1)


@dataclass
class Partition:
    pieces: list[Piece]
    events: list[CrossingEvent]
    contacts: list[TangentialContact]

    def mode_sequence(self) -> list[str]:
        seq = [p.mode for p in self.pieces[:1]]
        seq += [e.target for e in self.events]
        return seq


@dataclass(frozen=True)
class _Root:
    t: float
    transition: Transition
    transversality: float
    at_end: bool

    def is_transversal(self) -> bool:
        return abs(self.transversality) > self.transition.eps_t


def _transversality(tr: Transition, curve: Curve, t: float, lo: float, hi: float) -> float:
    point = curve(t)
    return float(tr.level_gradient(point) @ curve.velocity(t, lo, hi))


def _bisect(f, a: float, b: float, fa: float) -> float:
    while b - a > ROOT_TOL:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def _guard_roots(
    tr: Transition,
    curve: Curve,
    lo: float,
    hi: float,
    ts: np.ndarray,
    pts: np.ndarray,
    eps_c: float,
) -> list[_Root]:
    """Roots of ``level(curve(t))`` in ``(lo, hi]``, scanning at the sample grid ``ts``."""
    eta = lambda t: tr.level(curve(t))  # noqa: E731
    vals = tr.level_array(pts)
    near = np.abs(vals) <= eps_c
    if near.size >= 3 and np.any(near[:-2] & near[1:-1] & near[2:]):
        i = int(np.argmax(near[:-2] & near[1:-1] & near[2:]))
        raise AmbiguousCrossing(
            f"guard {tr!r} vanishes along the curve near t = {ts[i]:.17g}; "
            "cannot decide where the crossing happens"
        )
    start_zero = abs(eta(lo)) <= eps_c
    end_zero = abs(eta(hi)) <= eps_c
    last = len(ts) - 1
    roots: list[_Root] = []
    if end_zero:
        roots.append(_Root(hi, tr, _transversality(tr, curve, hi, lo, hi), True))

    sign = np.sign(vals)
    for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
        if (i == 0 and start_zero) or (i == last - 1 and end_zero):
            continue
        a, b = float(ts[i]), float(ts[i + 1])
        fa, fb = eta(a), eta(b)
        if fa == 0.0 or fb == 0.0 or (fa < 0) == (fb < 0):
            # scalar and vector evaluation disagree about a sample sitting on the guard
            t = a if abs(fa) <= abs(fb) else b
        else:
            t = _bisect(eta, a, b, fa)
        if lo < t < hi:
            roots.append(_Root(t, tr, _transversality(tr, curve, t, lo, hi), False))

    # touching roots: local minima of |level| with no sign change around them
    mag = np.abs(vals)
    minima = (
        (mag[1:-1] <= mag[:-2])
        & (mag[1:-1] <= mag[2:])
        & (sign[:-2] * sign[1:-1] >= 0)
        & (sign[1:-1] * sign[2:] >= 0)
    )
    for i in np.nonzero(minima)[0] + 1:
        if (i == 1 and start_zero) or (i == last - 1 and end_zero):
            continue
        a, b = float(ts[i - 1]), float(ts[i + 1])
        if sign[i] == 0 and sign[i - 1] * sign[i + 1] < 0:
            t = float(ts[i])
        else:
            slope = lambda t: _transversality(tr, curve, t, lo, hi)  # noqa: E731
            sa, sb = slope(a), slope(b)
            t = _bisect(slope, a, b, sa) if (sa < 0) != (sb < 0) else float(ts[i])
        if abs(eta(t)) <= eps_c and lo < t < hi:
            roots.append(_Root(t, tr, _transversality(tr, curve, t, lo, hi), False))
    return roots


def _scan_window(bundle, mode_id, curve, lo, hi, eps_c, resolution) -> list[_Root]:
    outgoing = bundle.outgoing(mode_id)
    if not outgoing or hi <= lo:
        return []
    ts = np.linspace(lo, hi, resolution + 1)
    pts = curve.sample(ts)
    roots = []
    for tr in outgoing:
        roots.extend(_guard_roots(tr, curve, lo, hi, ts, pts, eps_c))
    roots.sort(key=lambda r: r.t)
    return roots


def _walk(bundle: HybridBundle, loop: BaseLoop, resolution: int = SCAN_RESOLUTION) -> Partition:
    eps_c = loop.closure_tol
    segs = loop.segments
    first_mode = segs[0].mode
    if first_mode not in bundle.modes:
        raise ContinuityViolation(0.0, f"unknown mode {first_mode!r}")
    origin = segs[0].curve(segs[0].t0)
    pieces: list[Piece] = []
    events: list[CrossingEvent] = []
    contacts: list[TangentialContact] = []
    active = first_mode

    for k, seg in enumerate(segs):
        if seg.mode != active:
            raise ContinuityViolation(
                seg.t0, f"segment {k} is declared in mode {seg.mode!r} but the loop is in mode {active!r}"
            )
        nxt = segs[k + 1] if k + 1 < len(segs) else None
        start = seg.t0
        while True:
            roots = _scan_window(bundle, active, seg.curve, start, seg.t1, eps_c, resolution)
            crossing = None
            for r in roots:
                if r.is_transversal():
                    crossing = r
                    break
                contacts.append(
                    TangentialContact(r.t, active, r.transition.target, seg.curve(r.t), r.transversality, k)
                )
            if crossing is not None and crossing.at_end:
                # several guards may vanish at the declared endpoint; prefer the
                # one leading where the loop continues
                at_end = [r for r in roots if r.at_end and r.is_transversal()]
                wanted = nxt.mode if nxt is not None else first_mode
                crossing = next((r for r in at_end if r.transition.target == wanted), at_end[0])
            end = crossing.t if crossing is not None else seg.t1
            pieces.append(Piece(active, start, end, seg.curve, k, len(events) if crossing is not None else None))
            if crossing is None:
                break
            tr = crossing.transition
            pre = seg.curve(crossing.t)
            post = tr.base_map(pre)
            events.append(
                CrossingEvent(crossing.t, active, tr.target, pre, post, crossing.transversality, k, tr)
            )
            target_chart = bundle.modes[tr.target].chart
            if not crossing.at_end:
                # the rest of this declared segment continues in the target mode
                if len(post) != seg.curve.dim or target_chart.distance(post, pre) > eps_c:
                    raise ContinuityViolation(
                        crossing.t,
                        f"crossing into {tr.target!r} inside segment {k}; the reset moves the base point "
                        f"{pre.tolist()} -> {post.tolist()}, so the segment must be split at the guard",
                    )
                active = tr.target
                start = crossing.t
                continue
            active = tr.target
            break

        ended_on_guard = pieces[-1].crossing is not None
        end_point = events[-1].post_point if ended_on_guard else seg.curve(seg.t1)
        chart = bundle.modes[active].chart
        if nxt is not None:
            if nxt.mode != active:
                raise ContinuityViolation(
                    seg.t1, f"segment {k + 1} is declared in mode {nxt.mode!r} but the loop is in mode {active!r}"
                )
            nxt_start = nxt.curve(nxt.t0)
            if len(nxt_start) != len(end_point) or chart.distance(nxt_start, end_point) > eps_c:
                raise ContinuityViolation(
                    seg.t1,
                    f"segment {k + 1} starts at {nxt_start.tolist()}, expected {end_point.tolist()}",
                )
        else:
            if active != first_mode:
                raise ContinuityViolation(1.0, f"loop ends in mode {active!r}, started in {first_mode!r}")
            if len(origin) != len(end_point) or chart.distance(origin, end_point) > eps_c:
                raise ContinuityViolation(
                    1.0, f"loop is not closed: ends at {end_point.tolist()}, started at {origin.tolist()}"
                )
    return Partition(pieces, events, contacts)


def detect_crossings(bundle: HybridBundle, loop: BaseLoop) -> list[CrossingEvent]:
    """Transversal guard crossings along ``loop``, in time order."""
    return _walk(bundle, loop).events


def segment_loop(bundle: HybridBundle, loop: BaseLoop) -> Partition:
    """Split ``loop`` into single-mode pieces with the crossings between them."""
    return _walk(bundle, loop)


# -- validation ----------------------------------------------------------------


@dataclass
class TransitionCheck:
    source: str
    target: str
    samples: int
    max_violation: float
    worst_point: list[float] | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.max_violation <= DIAGRAM_TOL


@dataclass
class ValidationReport:
    transitions: list[TransitionCheck]

    @property
    def ok(self) -> bool:
        return all(t.ok for t in self.transitions)

    @property
    def max_violation(self) -> float:
        return max((t.max_violation for t in self.transitions), default=0.0)


def _sample_box(mode: Mode) -> list[tuple[float, float]]:
    if mode.chart.bounds is not None:
        return list(mode.chart.bounds)
    return [(-math.pi, math.pi)] * mode.chart.dim


def _guard_points(tr: Transition, mode: Mode, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Points on ``{level = 0}`` found by root-finding along random lines."""
    box = np.array(_sample_box(mode))
    lo, hi = box[:, 0], box[:, 1]
    reach = float(np.linalg.norm(hi - lo))
    found: list[np.ndarray] = []
    for _ in range(40 * count):
        if len(found) >= count:
            break
        p = rng.uniform(lo, hi)
        u = rng.normal(size=len(lo))
        u /= np.linalg.norm(u) or 1.0
        s = np.linspace(-reach, reach, 257)
        pts = p[None, :] + s[:, None] * u[None, :]
        try:
            vals = tr.level_array(pts)
        except HolonomyError:
            continue
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        for i in np.nonzero((np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0) & inside[:-1] & inside[1:])[0]:
            f = lambda x: tr.level(p + x * u)  # noqa: E731
            try:
                x = brentq(f, s[i], s[i + 1], xtol=1e-14) if vals[i] != vals[i + 1] else s[i]
            except (ValueError, HolonomyError):
                continue
            found.append(p + x * u)
            break
    return found


def validate_bundle(
    bundle: HybridBundle, samples: int = 16, seed: int = 0, tol: float = DIAGRAM_TOL
) -> ValidationReport:
    """Check the commuting diagram of every reset on sampled guard points.

    For guard points ``m`` and random fiber values ``g`` the base part of the
    total-space reset at ``(m, g)`` must equal the base reset at ``m``
    (periodic target coordinates compared modulo their period).
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = np.random.default_rng(seed)
    checks = []
    for tr in bundle.transitions:
        source = bundle.modes[tr.source]
        target = bundle.modes[tr.target]
        points = _guard_points(tr, source, samples, rng)
        worst, worst_point, error = 0.0, None, None
        for m in points:
            g = rng.uniform(-10.0, 10.0, size=bundle.fiber_dim)
            try:
                expected = tr.base_map(m)
                got = tr.lifted_base_map(m, g)
                tr.fiber_map(m, g)
            except HolonomyError as exc:
                error = f"reset not evaluable at {m.tolist()}: {exc}"
                worst_point = m.tolist()
                break
            v = target.chart.distance(got, expected)
            if v > worst or worst_point is None:
                worst, worst_point = v, m.tolist()
        checks.append(TransitionCheck(tr.source, tr.target, len(points), worst, worst_point, error))
    report = ValidationReport(checks)
    bad = [c for c in checks if c.error is not None or c.max_violation > tol]
    if bad:
        c = bad[0]
        detail = c.error or f"commuting diagram violated by {c.max_violation:.3e} at {c.worst_point}"
        raise ValidationFailed(f"transition {c.source!r} -> {c.target!r}: {detail}", report)
    return report
