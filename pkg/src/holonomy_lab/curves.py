"""Parametrized base curves ``m(t)``.

Three kinds cover everything the package builds: curves given by
expressions in ``t``, polylines (piecewise linear in ``t``), and affine
reparametrizations of either (used for repetition and reversal).

Every curve evaluates a single parameter to a point (``__call__``), a
vector of parameters to an array of points (``sample``), and reports its
velocity on a given parameter window (``velocity``). Polylines use exact
chord slopes; expression curves use fourth-order central differences.
"""

from __future__ import annotations

import bisect
from typing import Sequence

import numpy as np

from .errors import DomainError
from .expr import Expression, compile_array, compile_scalar, free_variables, parse


class Curve:
    dim: int

    def __call__(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def sample(self, ts: np.ndarray) -> np.ndarray:
        """Points at every parameter in ``ts``; shape ``(len(ts), dim)``."""
        return np.array([self(float(t)) for t in ts]).reshape(len(ts), self.dim)

    def velocity(self, t: float, lo: float, hi: float) -> np.ndarray:
        """``m'(t)`` using only parameters inside ``[lo, hi]`` where possible."""
        raise NotImplementedError

    def velocities(self, ts: np.ndarray, lo, hi) -> np.ndarray:
        """``velocity`` at every parameter in ``ts``; shape ``(len(ts), dim)``.

        ``lo`` and ``hi`` are the window, either scalars or one per parameter.
        """
        ts = np.asarray(ts, dtype=float)
        lo, hi = np.broadcast_to(lo, ts.shape), np.broadcast_to(hi, ts.shape)
        return np.array([self.velocity(float(t), float(a), float(b)) for t, a, b in zip(ts, lo, hi)]).reshape(
            len(ts), self.dim
        )

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        """Parameters strictly inside ``(lo, hi)`` where ``m'`` may jump."""
        return []


class ExprCurve(Curve):
    """Curve whose components are expressions in a single parameter."""

    def __init__(self, components: Sequence[Expression | str], var: str = "t"):
        exprs = tuple(parse(c) if isinstance(c, str) else c for c in components)
        for e in exprs:
            extra = free_variables(e) - {var}
            if extra:
                raise ValueError(f"curve component {e} has free variables {sorted(extra)}")
        self.components = exprs
        self.var = var
        self.dim = len(exprs)
        self._scalar = [compile_scalar(e, (var,)) for e in exprs]
        self._array = [compile_array(e, (var,)) for e in exprs]

    def __repr__(self) -> str:
        return f"ExprCurve({[str(c) for c in self.components]!r})"

    def __call__(self, t: float) -> np.ndarray:
        return np.array([f(t) for f in self._scalar])

    def sample(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        out = np.empty((ts.size, self.dim))
        for j, f in enumerate(self._array):
            out[:, j] = f(ts)
        return out

    def velocity(self, t: float, lo: float = -np.inf, hi: float = np.inf) -> np.ndarray:
        # Fourth-order central stencil; the step balances truncation against
        # rounding for curves with up to a few radians of phase per unit t.
        # The stencil may reach slightly past the window: using it everywhere
        # keeps m' smooth in t, which adaptive quadrature relies on. Only when
        # the curve cannot be evaluated there do we go one-sided.
        h = 2e-4 * max(1.0, abs(t))
        h = (t + h) - t
        try:
            f = [self(t + k * h) for k in (-2, -1, 1, 2)]
            return (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h)
        except DomainError:
            pass
        step = h if t - 2 * h < lo else -h
        f = [self(t + k * step) for k in range(5)]
        return (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * step)

    def velocities(self, ts: np.ndarray, lo=-np.inf, hi=np.inf) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        h = 2e-4 * np.maximum(1.0, np.abs(ts))
        h = (ts + h) - ts
        try:
            f = [self.sample(ts + k * h) for k in (-2, -1, 1, 2)]
        except DomainError:
            return super().velocities(ts, lo, hi)
        return (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h[:, None])


class Polyline(Curve):
    """Piecewise-linear curve through ``points`` at increasing ``times``."""

    def __init__(self, times: Sequence[float], points):
        times = np.asarray(times, dtype=float)
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a polyline needs at least two knots")
        if points.shape[0] != times.size:
            raise ValueError("times and points differ in length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("polyline times must be strictly increasing")
        self.times = times
        self.points = points
        self.dim = points.shape[1]
        self._t = times.tolist()
        self._slopes = np.diff(points, axis=0) / np.diff(times)[:, None]

    def __repr__(self) -> str:
        return f"Polyline(times={self._t!r}, points={self.points.tolist()!r})"

    def _chord(self, t: float) -> int:
        j = bisect.bisect_right(self._t, t) - 1
        return min(max(j, 0), len(self._t) - 2)

    def __call__(self, t: float) -> np.ndarray:
        if t <= self._t[0]:
            return self.points[0].copy()
        if t >= self._t[-1]:
            return self.points[-1].copy()
        j = self._chord(t)
        if t == self._t[j]:
            return self.points[j].copy()
        return self.points[j] + (t - self._t[j]) * self._slopes[j]

    def sample(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        return np.column_stack([np.interp(ts, self.times, self.points[:, k]) for k in range(self.dim)])

    def velocity(self, t: float, lo: float = -np.inf, hi: float = np.inf) -> np.ndarray:
        j = self._chord(t)
        # at the upper end of the window the chord arriving from the left applies
        if t >= hi and j > 0 and t <= self._t[j]:
            j -= 1
        return self._slopes[j].copy()

    def velocities(self, ts: np.ndarray, lo=-np.inf, hi=np.inf) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        j = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, len(self._t) - 2)
        at_upper = (ts >= hi) & (j > 0) & (ts <= self.times[j])
        return self._slopes[j - at_upper]

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        return [t for t in self._t[1:-1] if lo < t < hi]


class Reparametrized(Curve):
    """``t -> base(scale * t + offset)``; ``scale`` may be negative."""

    def __init__(self, base: Curve, scale: float, offset: float):
        if scale == 0:
            raise ValueError("scale must be non-zero")
        self.base = base
        self.scale = float(scale)
        self.offset = float(offset)
        self.dim = base.dim

    def __repr__(self) -> str:
        return f"Reparametrized({self.base!r}, scale={self.scale!r}, offset={self.offset!r})"

    def _map(self, t):
        return self.scale * t + self.offset

    def __call__(self, t: float) -> np.ndarray:
        return self.base(self._map(t))

    def sample(self, ts: np.ndarray) -> np.ndarray:
        return self.base.sample(self._map(np.asarray(ts, dtype=float)))

    def velocity(self, t: float, lo: float = -np.inf, hi: float = np.inf) -> np.ndarray:
        a, b = self._map(lo), self._map(hi)
        if a > b:
            a, b = b, a
        return self.scale * self.base.velocity(self._map(t), a, b)

    def velocities(self, ts: np.ndarray, lo=-np.inf, hi=np.inf) -> np.ndarray:
        u, v = self._map(np.asarray(lo, dtype=float)), self._map(np.asarray(hi, dtype=float))
        a, b = np.minimum(u, v), np.maximum(u, v)
        return self.scale * self.base.velocities(self._map(np.asarray(ts, dtype=float)), a, b)

    def breakpoints(self, lo: float, hi: float) -> list[float]:
        a, b = sorted((self._map(lo), self._map(hi)))
        return sorted((u - self.offset) / self.scale for u in self.base.breakpoints(a, b))


def constant_curve(point: Sequence[float]) -> Polyline:
    """The curve sitting at ``point`` for all parameters."""
    p = np.asarray(point, dtype=float).reshape(1, -1)
    return Polyline([0.0, 1.0], np.vstack([p, p]))
