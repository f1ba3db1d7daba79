"""Single-mode principal-bundle machinery for abelian structure group.

The structure group is ``(R^n, +)``: a group element is a plain vector,
composition is addition and the identity is zero, so the left translation
and adjoint action that appear in the general local form of a connection
are identities and never represented.

In a trivialization ``(m, g)`` the connection one-form is

    omega(mdot, gdot) = gdot + A(m) mdot

with ``A`` an ``n x d`` matrix of expressions on the base chart. Horizontal
curves satisfy ``gdot = -A(m) mdot``, so a base segment lifts to the fiber
displacement ``-int A(m) dm``. When ``A dm = dF`` this equals
``F(start) - F(end)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .curves import Curve
from .errors import DomainError, NoPotential, NotExact
from .expr import Expression, compile_array, compile_scalar, free_variables, numeric_partial, parse
from .quadrature import DEFAULT_TOL, adaptive_simpson, integrate_panels

GroupElement = np.ndarray


def identity(n: int) -> GroupElement:
    return np.zeros(n)


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    return np.asarray(a, dtype=float) + np.asarray(b, dtype=float)


def inverse(a: GroupElement) -> GroupElement:
    return -np.asarray(a, dtype=float)


# -- domain types --------------------------------------------------------------


@dataclass(frozen=True)
class Chart:
    """Base coordinates of one mode.

    ``periods`` maps periodic (circle) coordinates to their period. Curves
    always carry unwound values; periods only matter when two points are
    compared, e.g. for loop closure.
    """

    names: tuple[str, ...]
    periods: Mapping[str, float] = field(default_factory=dict)
    bounds: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"chart variable names must be unique: {self.names}")
        for name, period in self.periods.items():
            if name not in self.names:
                raise ValueError(f"period given for unknown variable {name!r}")
            if not period > 0:
                raise ValueError(f"period of {name!r} must be positive")
        if self.bounds is not None:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if len(bounds) != len(self.names) or any(not lo < hi for lo, hi in bounds):
                raise ValueError("bounds must give lo < hi for every chart variable")
            object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self) -> int:
        return len(self.names)

    def difference(self, a, b) -> np.ndarray:
        """``a - b`` with periodic coordinates reduced to ``[-P/2, P/2]``."""
        diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.periods:
            diff = diff.copy()
            for k, name in enumerate(self.names):
                if name in self.periods:
                    diff[k] = math.remainder(diff[k], self.periods[name])
        return diff

    def distance(self, a, b) -> float:
        return float(np.max(np.abs(self.difference(a, b)), initial=0.0))

    def contains(self, m) -> bool:
        if self.bounds is None:
            return True
        return all(lo <= x <= hi for x, (lo, hi) in zip(m, self.bounds))


def _as_expr(e: Expression | str) -> Expression:
    return parse(e) if isinstance(e, str) else e


@dataclass(frozen=True)
class ConnectionCoeffs:
    """Matrix ``A(m)`` of the local connection form, shape ``n x d``."""

    entries: tuple[tuple[Expression, ...], ...]
    names: tuple[str, ...]

    def __post_init__(self):
        entries = tuple(tuple(_as_expr(e) for e in row) for row in self.entries)
        names = tuple(self.names)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "names", names)
        if not entries or any(len(row) != len(names) for row in entries):
            raise ValueError(f"connection matrix must be n x {len(names)}")
        for row in entries:
            for e in row:
                extra = free_variables(e) - set(names)
                if extra:
                    raise ValueError(f"connection entry {e} uses unknown variables {sorted(extra)}")
        compiled = tuple(tuple(compile_scalar(e, names) for e in row) for row in entries)
        object.__setattr__(self, "_compiled", compiled)
        arrays = tuple(tuple(compile_array(e, names) for e in row) for row in entries)
        object.__setattr__(self, "_arrays", arrays)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.entries), len(self.names)

    def __call__(self, m) -> np.ndarray:
        args = tuple(float(x) for x in m)
        return np.array([[f(*args) for f in row] for row in self._compiled])

    def batch(self, ms: np.ndarray) -> np.ndarray:
        """``A`` at each row of ``ms``; shape ``(k, n, d)``."""
        cols = tuple(np.asarray(ms, dtype=float).T)
        k = len(ms)
        return np.stack([np.stack([np.broadcast_to(f(*cols), (k,)) for f in row], axis=-1) for row in self._arrays], axis=1)


@dataclass(frozen=True)
class ExprPotential:
    """Closed-form potential ``F`` with ``dF = A dm``."""

    components: tuple[Expression, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        comps = tuple(_as_expr(e) for e in self.components)
        names = tuple(self.names)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "names", names)
        for e in comps:
            extra = free_variables(e) - set(names)
            if extra:
                raise ValueError(f"potential {e} uses unknown variables {sorted(extra)}")
        object.__setattr__(self, "_compiled", tuple(compile_scalar(e, names) for e in comps))

    def __call__(self, m) -> np.ndarray:
        args = tuple(float(x) for x in m)
        return np.array([f(*args) for f in self._compiled])

    def gradient(self, m) -> np.ndarray:
        """Central-difference Jacobian ``dF/dm``, shape ``n x d``."""
        env = dict(zip(self.names, (float(x) for x in m)))
        return np.array([[numeric_partial(e, v, env) for v in self.names] for e in self.components])


@dataclass(frozen=True)
class TabulatedPotential:
    """Potential sampled on a grid, evaluated by multilinear interpolation.

    ``residual`` is the largest mismatch, over all grid edges, between the
    table increment and the line integral of ``A dm`` along that edge.
    """

    names: tuple[str, ...]
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    anchor: tuple[float, ...]
    residual: float

    def __post_init__(self):
        interp = RegularGridInterpolator(self.axes, self.values, method="linear", bounds_error=True)
        object.__setattr__(self, "_interp", interp)

    def __call__(self, m) -> np.ndarray:
        try:
            return self._interp(np.asarray(m, dtype=float)[None, :])[0]
        except ValueError as exc:
            raise DomainError(f"point {tuple(m)} outside the tabulated region: {exc}") from None

    def node_value(self, index: Sequence[int]) -> np.ndarray:
        return self.values[tuple(index)]


@dataclass(frozen=True)
class Mode:
    """One trivialized component: chart, connection and optional potential."""

    id: str
    chart: Chart
    connection: ConnectionCoeffs
    fiber: tuple[str, ...]
    potential: ExprPotential | TabulatedPotential | None = None

    def __post_init__(self):
        object.__setattr__(self, "fiber", tuple(self.fiber))
        n, d = self.connection.shape
        if d != self.chart.dim or self.connection.names != self.chart.names:
            raise ValueError(f"mode {self.id!r}: connection columns must match the chart variables")
        if n != len(self.fiber):
            raise ValueError(f"mode {self.id!r}: connection has {n} rows for {len(self.fiber)} fiber variables")
        if isinstance(self.potential, ExprPotential) and len(self.potential.components) != n:
            raise ValueError(f"mode {self.id!r}: potential must have {n} components")

    @property
    def fiber_dim(self) -> int:
        return len(self.fiber)

    @property
    def base_dim(self) -> int:
        return self.chart.dim

    def A(self, m) -> np.ndarray:
        return self.connection(m)


def make_mode(
    id: str,
    chart: Chart | Sequence[str],
    connection: Sequence[Sequence[str | Expression]],
    fiber: Sequence[str],
    potential: Sequence[str | Expression] | None = None,
) -> Mode:
    """Convenience constructor taking expression strings."""
    if not isinstance(chart, Chart):
        chart = Chart(tuple(chart))
    coeffs = ConnectionCoeffs(tuple(tuple(row) for row in connection), chart.names)
    pot = ExprPotential(tuple(potential), chart.names) if potential is not None else None
    return Mode(id, chart, coeffs, tuple(fiber), pot)


# -- operations ----------------------------------------------------------------


def connection_form_eval(mode: Mode, m, mdot, gdot) -> np.ndarray:
    """``omega(mdot, gdot) = gdot + A(m) mdot``."""
    return np.asarray(gdot, dtype=float) + mode.A(m) @ np.asarray(mdot, dtype=float)


def horizontal_velocity(mode: Mode, m, mdot) -> np.ndarray:
    """The fiber velocity making ``(mdot, gdot)`` horizontal: ``-A(m) mdot``."""
    return -(mode.A(m) @ np.asarray(mdot, dtype=float))


def segment_holonomy_quadrature(
    mode: Mode, curve: Curve, t0: float, t1: float, tol: float = DEFAULT_TOL
) -> GroupElement:
    """Fiber displacement ``-int_{t0}^{t1} A(m(t)) m'(t) dt`` of the horizontal lift.

    Integration is split at the curve's kinks, each piece by adaptive
    Simpson; the error target ``tol`` is shared between the pieces.
    """
    if t1 < t0:
        raise ValueError("segment interval must satisfy t0 <= t1")
    n = mode.fiber_dim
    if t0 == t1:
        return identity(n)
    cuts = [t0, *curve.breakpoints(t0, t1), t1]
    parts = integrate_panels(_integrand(mode, curve), cuts, tol)
    return np.array([math.fsum(col) for col in parts.T])


def _integrand(mode: Mode, curve: Curve):
    def f(ts, lo, hi):
        A = mode.connection.batch(curve.sample(ts))
        return -np.einsum("knd,kd->kn", A, curve.velocities(ts, lo, hi))

    return f


def segment_holonomy_samples(mode: Mode, curve: Curve, ts, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Cumulative fiber displacement from ``ts[0]`` to each of ``ts``; shape ``(len(ts), n)``.

    All sample intervals (further split at the curve's kinks) are integrated
    in one adaptive pass sharing the error target ``tol``.
    """
    ts = np.asarray(ts, dtype=float)
    if ts.size == 0:
        return np.empty((0, mode.fiber_dim))
    kinks = curve.breakpoints(float(ts[0]), float(ts[-1]))
    edges = np.union1d(ts, kinks)
    parts = integrate_panels(_integrand(mode, curve), edges, tol)
    cum = np.vstack([np.zeros((1, mode.fiber_dim)), np.cumsum(parts, axis=0)])
    return cum[np.searchsorted(edges, ts)]


def segment_holonomy_potential(mode: Mode, m_start, m_end) -> GroupElement:
    """``F(m_start) - F(m_end)``; equals the quadrature value when ``A dm = dF``."""
    if mode.potential is None:
        raise NoPotential(f"mode {mode.id!r} has no potential")
    return mode.potential(m_start) - mode.potential(m_end)


def closedness_violation(mode: Mode, m) -> tuple[float, int, tuple[int, int]]:
    """Largest ``|dA_aj/dm_k - dA_ak/dm_j|`` at ``m`` with its location."""
    names = mode.chart.names
    env = dict(zip(names, (float(x) for x in m)))
    worst = (0.0, 0, (0, 0))
    for a, row in enumerate(mode.connection.entries):
        for j, k in itertools.combinations(range(len(names)), 2):
            v = abs(numeric_partial(row[j], names[k], env) - numeric_partial(row[k], names[j], env))
            if v > worst[0]:
                worst = (v, a, (j, k))
    return worst


def _grid_axes(region, grid) -> tuple[np.ndarray, ...]:
    if isinstance(grid, int):
        grid = [grid] * len(region)
    if len(grid) != len(region) or any(g < 2 for g in grid):
        raise ValueError("grid needs at least two points per region axis")
    return tuple(np.linspace(lo, hi, g) for (lo, hi), g in zip(region, grid))


def _line_integral(mode: Mode, point, axis: int, a: float, b: float, tol: float) -> np.ndarray:
    """``int_a^b A[:, axis](point with coordinate axis = s) ds``."""
    base = np.array(point, dtype=float)

    def f(ss):
        pts = np.repeat(base[None, :], len(ss), axis=0)
        pts[:, axis] = ss
        return mode.connection.batch(pts)[:, :, axis]

    return adaptive_simpson(f, a, b, tol, vectorized=True)


def reconstruct_potential(
    mode: Mode,
    anchor,
    region: Sequence[tuple[float, float]],
    grid: int | Sequence[int] = 33,
    tol: float = 1e-6,
    quad_tol: float = 1e-12,
) -> TabulatedPotential:
    """Verify that ``A dm`` is closed on ``region`` and tabulate a potential.

    Closedness is tested with central-difference mixed partials at every
    grid node; a violation above ``tol`` raises ``NotExact`` with the worst
    node. Otherwise ``F`` (zero at ``anchor``) is built by integrating along
    axis-aligned paths from the anchor, first along axis 0, then axis 1, and
    so on.
    """
    names = mode.chart.names
    d = len(names)
    region = [(float(lo), float(hi)) for lo, hi in region]
    if len(region) != d:
        raise ValueError(f"region must have {d} intervals")
    anchor = np.asarray(anchor, dtype=float)
    if anchor.shape != (d,) or any(not lo <= x <= hi for x, (lo, hi) in zip(anchor, region)):
        raise ValueError("anchor must lie inside the region")
    axes = _grid_axes(region, grid)
    shape = tuple(len(ax) for ax in axes)
    n = mode.fiber_dim

    if d > 1:
        worst = (0.0, None, 0, (0, 0))
        for idx in itertools.product(*(range(s) for s in shape)):
            point = [axes[k][i] for k, i in enumerate(idx)]
            v, a, pair = closedness_violation(mode, point)
            if worst[1] is None or v > worst[0]:
                worst = (v, point, a, pair)
        if worst[0] > tol:
            raise NotExact(worst[0], worst[1], worst[2], worst[3])

    table = np.zeros(n)
    for k in range(d):
        ax = axes[k]
        knots = np.union1d(ax, [anchor[k]])
        zero = int(np.searchsorted(knots, anchor[k]))
        prev_shape = shape[:k]
        new = np.empty(prev_shape + (len(ax), n))
        for idx in itertools.product(*(range(s) for s in prev_shape)):
            point = np.concatenate([[axes[j][i] for j, i in enumerate(idx)], anchor[k:]])
            steps = [
                _line_integral(mode, point, k, knots[i], knots[i + 1], quad_tol)
                for i in range(len(knots) - 1)
            ]
            cum = np.zeros((len(knots), n))
            for i in range(zero + 1, len(knots)):
                cum[i] = cum[i - 1] + steps[i - 1]
            for i in range(zero - 1, -1, -1):
                cum[i] = cum[i + 1] - steps[i]
            at_nodes = cum[np.searchsorted(knots, ax)]
            new[idx] = table[idx] + at_nodes
        table = new

    residual = 0.0
    for idx in itertools.product(*(range(s) for s in shape)):
        point = [axes[k][i] for k, i in enumerate(idx)]
        for k in range(d):
            if idx[k] + 1 >= shape[k]:
                continue
            nxt = list(idx)
            nxt[k] += 1
            edge = _line_integral(mode, point, k, axes[k][idx[k]], axes[k][idx[k] + 1], quad_tol)
            mismatch = np.max(np.abs(table[tuple(nxt)] - table[idx] - edge))
            residual = max(residual, float(mismatch))

    return TabulatedPotential(names, axes, table, tuple(anchor.tolist()), residual)


def potential_residual(mode: Mode, region, grid: int | Sequence[int] = 17) -> float:
    """Max ``|dF/dm - A|`` over a grid, for a mode with a closed-form potential."""
    if not isinstance(mode.potential, ExprPotential):
        raise NoPotential(f"mode {mode.id!r} has no closed-form potential")
    axes = _grid_axes(region, grid)
    worst = 0.0
    for point in itertools.product(*axes):
        diff = mode.potential.gradient(point) - mode.A(point)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst
