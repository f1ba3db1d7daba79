"""Adaptive Simpson quadrature for vector-valued integrands.

Panels are refined breadth-first: every panel still being refined at a
given depth is split at once, so the integrand is called once per level
on an array of abscissae. Several initial panels (e.g. the intervals
between output samples, or the smooth pieces of a polyline) can be
integrated together, each getting its own result.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import QuadratureNoConvergence

DEFAULT_TOL = 1e-10
MAX_DEPTH = 40
# always split this many levels before trusting the error estimate; guards
# against symmetric integrands whose coarse Simpson estimates agree by accident
MIN_DEPTH = 3

_EPS = np.finfo(float).eps


def integrate_panels(
    f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    edges: Sequence[float],
    tol: float = DEFAULT_TOL,
    max_depth: int = MAX_DEPTH,
) -> np.ndarray:
    """Integrals of ``f`` over each ``[edges[i], edges[i+1]]``; shape ``(P, n)``.

    ``f(ts, lo, hi)`` evaluates the integrand at the abscissae ``ts``; ``lo``
    and ``hi`` give, per abscissa, the initial panel it belongs to (so a
    one-sided quantity can be taken from inside that panel). The absolute
    error target ``tol`` is shared between panels in proportion to width.

    A panel is accepted once its two-half Simpson estimate agrees with the
    whole-panel estimate to ``15 * tol_panel`` (the tolerance halves with
    each split), and contributes the Richardson-corrected value.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) < 0):
        raise ValueError("edges must be a non-decreasing sequence of at least two values")
    lo, hi = edges[:-1], edges[1:]
    width = float(edges[-1] - edges[0])
    live = np.nonzero(hi > lo)[0]

    def F(ts, origin):
        return np.asarray(f(ts, L0[origin], H0[origin]), dtype=float).reshape(len(ts), -1)

    L0, H0 = lo, hi
    if live.size == 0:
        n = F(edges[:1], np.array([0])).shape[1]
        return np.zeros((len(lo), n))

    origin = live
    lo, hi = lo[live], hi[live]
    mid = 0.5 * (lo + hi)
    k = len(lo)
    y = F(np.concatenate([lo, mid, hi]), np.concatenate([origin, origin, origin]))
    fa, fm, fb = y[:k], y[k : 2 * k], y[2 * k :]
    whole = ((hi - lo) / 6.0)[:, None] * (fa + 4.0 * fm + fb)
    panel_tol = tol * (hi - lo) / width
    result = np.zeros((len(L0), y.shape[1]))

    for depth in range(max_depth + 1):
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        k = len(lo)
        y = F(np.concatenate([lm, rm]), np.concatenate([origin, origin]))
        flm, frm = y[:k], y[k:]
        left = ((mid - lo) / 6.0)[:, None] * (fa + 4.0 * flm + fm)
        right = ((hi - mid) / 6.0)[:, None] * (fm + 4.0 * frm + fb)
        both = left + right
        err = np.max(np.abs(both - whole), axis=1)
        if depth >= MIN_DEPTH:
            noise = 64.0 * _EPS * np.max(np.abs(left) + np.abs(right), axis=1)
            done = (err <= 15.0 * panel_tol) | (err <= noise)
        else:
            done = np.zeros(k, dtype=bool)
        if np.any(done):
            np.add.at(result, origin[done], both[done] + (both[done] - whole[done]) / 15.0)
        todo = ~done
        if not np.any(todo):
            return result
        splittable = (lo < lm) & (lm < mid) & (mid < rm) & (rm < hi)
        if depth >= max_depth or not np.all(splittable[todo]):
            i = int(np.argmax(np.where(todo, err, -1.0)))
            raise QuadratureNoConvergence(
                f"adaptive Simpson exceeded depth {max_depth} near [{lo[i]:.17g}, {hi[i]:.17g}] "
                f"(error estimate {err[i]:.3e})"
            )
        # children [lo, mid] and [mid, hi] of every unfinished panel
        lo, mid, hi, origin = lo[todo], mid[todo], hi[todo], origin[todo]
        fa, flm, fm, frm, fb = fa[todo], flm[todo], fm[todo], frm[todo], fb[todo]
        left, right = left[todo], right[todo]
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        origin = np.concatenate([origin, origin])
        fa, fm, fb = np.concatenate([fa, fm]), np.concatenate([flm, frm]), np.concatenate([fm, fb])
        whole = np.concatenate([left, right])
        panel_tol = 0.5 * np.concatenate([panel_tol[todo], panel_tol[todo]])
    return result  # pragma: no cover - the loop always returns or raises


def adaptive_simpson(
    f: Callable,
    a: float,
    b: float,
    tol: float = DEFAULT_TOL,
    max_depth: int = MAX_DEPTH,
    vectorized: bool = False,
) -> np.ndarray:
    """Integrate ``f`` over ``[a, b]`` to absolute error ``tol`` (max-norm).

    With ``vectorized=True``, ``f`` maps an array of ``k`` abscissae to a
    ``(k, n)`` array; otherwise it maps a float to a length-``n`` vector.
    """
    if vectorized:
        g = lambda ts, lo, hi: f(ts)  # noqa: E731
    else:
        g = lambda ts, lo, hi: np.array([np.atleast_1d(np.asarray(f(float(t)), dtype=float)) for t in ts])  # noqa: E731
    return integrate_panels(g, [a, b], tol, max_depth)[0]
