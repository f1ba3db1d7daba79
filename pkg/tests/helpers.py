"""Random exact connections and curves for property tests."""

from __future__ import annotations

import numpy as np

from holonomy_lab.curves import ExprCurve
from holonomy_lab.geometry import make_mode

# (F, dF/dx, dF/dy) over the chart (x, y)
TERMS = [
    ("x", "1", "0"),
    ("y", "0", "1"),
    ("x*y", "y", "x"),
    ("x^2", "2*x", "0"),
    ("y^3", "0", "3*y^2"),
    ("sin(x)", "cos(x)", "0"),
    ("cos(y)", "0", "-sin(y)"),
    ("sin(x)*cos(y)", "cos(x)*cos(y)", "-sin(x)*sin(y)"),
    ("x*sin(y)", "sin(y)", "x*cos(y)"),
    ("exp(x/2)*y", "0.5*exp(x/2)*y", "exp(x/2)"),
]


def _num(v: float) -> str:
    return f"({float(v)!r})"


def random_exact_mode(rng: np.random.Generator, mode_id: str = "m", fiber_dim: int = 1):
    """A mode on chart (x, y) whose connection is the gradient of a random potential."""
    rows, pots = [], []
    for _ in range(fiber_dim):
        picks = rng.choice(len(TERMS), size=3, replace=False)
        coeffs = rng.uniform(-2, 2, size=3)
        F = " + ".join(f"{_num(c)}*{TERMS[i][0]}" for c, i in zip(coeffs, picks))
        dx = " + ".join(f"{_num(c)}*{TERMS[i][1]}" for c, i in zip(coeffs, picks))
        dy = " + ".join(f"{_num(c)}*{TERMS[i][2]}" for c, i in zip(coeffs, picks))
        rows.append([dx, dy])
        pots.append(F)
    fiber = [f"g{a}" for a in range(fiber_dim)]
    return make_mode(mode_id, ["x", "y"], rows, fiber, pots)


def random_component(rng: np.random.Generator) -> str:
    a, b, c = rng.uniform(-1, 1, size=3)
    k = rng.uniform(0.5, 2.0)
    return f"{_num(a)} + {_num(b)}*t + {_num(c)}*sin({_num(k)}*t)"


def random_curve(rng: np.random.Generator, dim: int = 2) -> ExprCurve:
    return ExprCurve([random_component(rng) for _ in range(dim)])


def random_closed_component(rng: np.random.Generator) -> str:
    a, b, c = rng.uniform(-1, 1, size=3)
    j, k = rng.integers(1, 3, size=2)
    return f"{_num(a)} + {_num(b)}*sin(2*pi*{j}*t) + {_num(c)}*(1 - cos(2*pi*{k}*t))"


def random_closed_curve(rng: np.random.Generator, dim: int = 2) -> ExprCurve:
    return ExprCurve([random_closed_component(rng) for _ in range(dim)])


def rotational_mode(rng: np.random.Generator, mode_id: str = "m"):
    """A non-exact mode: random exact part plus ``c * (-y dx + x dy)``."""
    exact = random_exact_mode(rng, mode_id)
    c = _num(rng.uniform(0.5, 2.0))
    dx, dy = (str(e) for e in exact.connection.entries[0])
    return make_mode(mode_id, ["x", "y"], [[f"{dx} - {c}*y", f"{dy} + {c}*x"]], ["g0"])


def random_walker(rng: np.random.Generator) -> tuple[float, float, int]:
    """Leg length, impact angle and cycle count for a random walker."""
    return float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.05, 1.2)), int(rng.integers(1, 6))


def walker_interior_loop(rng: np.random.Generator, delta: float) -> ExprCurve:
    """Closed stance-angle loop staying strictly between the walker's guards."""
    c = rng.uniform(-0.3, 0.3) * delta
    a, b = rng.uniform(-1, 1, size=2) * (0.85 * delta - abs(c)) / 2
    j, k = rng.integers(1, 3, size=2)
    return ExprCurve([f"{_num(c)} + {_num(a)}*sin(2*pi*{j}*t) + {_num(b)}*sin(2*pi*{k}*t)"])
