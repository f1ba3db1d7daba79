import math
import warnings

import numpy as np
import pytest

from helpers import TERMS
from holonomy_lab.errors import InsufficientData
from holonomy_lab.geometry import ExprPotential
from holonomy_lab.lift import hybrid_holonomy
from holonomy_lab.limits import (
    AlternationSpec,
    alternating_holonomy,
    alternating_system,
    convergence_sweep,
    infinitesimal_holonomy,
    rolling_disk_comparator,
)
from holonomy_lab.models import build_planar_walker


def walker_potentials(l=1.0):
    # the second leg is the first one walked in the opposite direction
    return ExprPotential([f"-{l!r}*sin(theta)"], ("theta",)), ExprPotential([f"{l!r}*sin(theta)"], ("theta",))


def walker_factory(delta):
    return build_planar_walker(1.0, delta)


# -- alternating holonomy ------------------------------------------------------


def test_walker_alternation():
    F1, F2 = walker_potentials()
    dg = alternating_holonomy(AlternationSpec(F1, F2, [0.3], [-0.3], 5))
    assert abs(dg[0]) == pytest.approx(4 * 5 * math.sin(0.3), abs=1e-12)
    assert abs(dg[0]) == pytest.approx(5.9104041, abs=1e-7)
    # same sign as the walker's own loop
    bundle, loops = build_planar_walker(1.0, 0.3)
    assert dg[0] == pytest.approx(hybrid_holonomy(bundle, loops(5), "potential")[0], rel=1e-12)


def test_alternation_degenerate_cases():
    F1, F2 = walker_potentials()
    assert np.all(alternating_holonomy(AlternationSpec(F1, F2, [0.2], [0.2], 7)) == 0)
    assert np.all(alternating_holonomy(AlternationSpec(F1, F1, [0.2], [-0.5], 7)) == 0)
    assert np.all(alternating_holonomy(AlternationSpec(F1, F2, [0.2], [-0.5], 0)) == 0)
    with pytest.raises(ValueError):
        AlternationSpec(F1, F2, [0.2], [-0.5], -1)


def test_alternation_is_linear_in_n():
    rng = np.random.default_rng(40)
    for _ in range(100):
        F1, F2 = random_potential(rng), random_potential(rng)
        m1, m2 = rng.uniform(-1, 1, size=(2, 2))
        n = int(rng.integers(1, 50))
        a = alternating_holonomy(AlternationSpec(F1, F2, m1, m2, n))
        b = alternating_holonomy(AlternationSpec(F1, F2, m1, m2, 2 * n))
        assert np.array_equal(b, 2 * a)


def random_potential(rng):
    picks = rng.choice(len(TERMS), size=3, replace=False)
    coeffs = rng.uniform(-2, 2, size=3)
    return ExprPotential([" + ".join(f"({float(c)!r})*{TERMS[i][0]}" for c, i in zip(coeffs, picks))], ("x", "y"))


def random_gradient(rng):
    picks = rng.choice(len(TERMS), size=3, replace=False)
    coeffs = rng.uniform(-2, 2, size=3)
    join = lambda col: " + ".join(f"({float(c)!r})*{TERMS[i][col]}" for c, i in zip(coeffs, picks))  # noqa: E731
    return [[join(1), join(2)]], [join(0)]


def test_closed_form_matches_explicit_loop():
    rng = np.random.default_rng(41)
    for _ in range(30):
        A1, F1 = random_gradient(rng)
        A2, F2 = random_gradient(rng)
        m1, m2 = rng.uniform(-1, 1, size=(2, 2))
        n = int(rng.integers(1, 6))
        bundle, loop = alternating_system(["x", "y"], ["g"], A1, F1, A2, F2, m1, m2, n)
        spec = AlternationSpec(ExprPotential(F1, ("x", "y")), ExprPotential(F2, ("x", "y")), m1, m2, n)
        closed = alternating_holonomy(spec)
        assert hybrid_holonomy(bundle, loop, "potential")[0] == pytest.approx(closed[0], rel=1e-12, abs=1e-12)
        assert hybrid_holonomy(bundle, loop, "quadrature")[0] == pytest.approx(closed[0], abs=1e-8)


def test_alternating_system_needs_distinct_points():
    with pytest.raises(ValueError):
        alternating_system(["x"], ["g"], [["1"]], ["x"], [["2"]], ["2*x"], [0.1], [0.1], 3)


# -- infinitesimal holonomy ----------------------------------------------------


def test_walker_infinitesimal():
    F1, F2 = walker_potentials()
    assert abs(infinitesimal_holonomy(F1, F2, [0.0], [1.0], 2.0)[0]) == pytest.approx(4.0, abs=1e-8)
    assert np.all(infinitesimal_holonomy(F1, F2, [0.0], [1.0], 0.0) == 0)
    assert np.all(infinitesimal_holonomy(F1, F1, [0.3], [1.0], 5.0) == 0)


def test_infinitesimal_input_checks():
    F1, F2 = walker_potentials()
    with pytest.raises(ValueError):
        infinitesimal_holonomy(F1, F2, [0.0], [2.0], 1.0)
    with pytest.raises(ValueError):
        infinitesimal_holonomy(F1, F2, [0.0], [1.0], -1.0)


def test_walker_small_delta_matches_infinitesimal():
    F1, F2 = walker_potentials()
    delta, n = 1e-4, 1000
    alt = alternating_holonomy(AlternationSpec(F1, F2, [delta], [-delta], n))
    inf = infinitesimal_holonomy(F1, F2, [delta], [1.0], 2 * n * delta)
    assert abs(inf[0] - alt[0]) / abs(alt[0]) <= 1e-3


def test_limit_consistency_order():
    rng = np.random.default_rng(42)
    C = 1.5
    for _ in range(20):
        F1, F2 = random_potential(rng), random_potential(rng)
        m1 = rng.uniform(-1, 1, size=2)
        u = rng.normal(size=2)
        u /= np.linalg.norm(u)
        inf = infinitesimal_holonomy(F1, F2, m1, u, C)
        errs, gaps = [], []
        for n in (100, 1000, 10000):
            gap = C / n
            alt = alternating_holonomy(AlternationSpec(F1, F2, m1, m1 - gap * u, n))
            errs.append(abs(alt[0] - inf[0]))
            gaps.append(gap)
        if errs[0] < 1e-9:
            continue  # degenerate: second derivative vanishes along u
        slope = np.polyfit(np.log(gaps[:2]), np.log(errs[:2]), 1)[0]
        assert slope >= 0.9
        assert errs[-1] < errs[0]


# -- sweeps --------------------------------------------------------------------


def test_walker_sweep_converges_to_rolling_disk():
    report = convergence_sweep(walker_factory, 0.5, [10, 100, 1000])
    for e in report.entries:
        assert e.delta == 0.5 / e.N
        assert e.dg[0] == pytest.approx(-4 * e.N * math.sin(0.5 / e.N), rel=1e-12)
    assert report.limit[0] == pytest.approx(-2.0, abs=1e-8)
    assert report.order == pytest.approx(2.0, abs=0.1)
    assert report.C == pytest.approx(1.0, rel=1e-12)
    errors = report.errors()
    assert errors[0] > errors[1] > errors[2]
    disk = rolling_disk_comparator(1.0, -4 * 0.5)
    assert disk[0] == pytest.approx(report.limit[0], abs=1e-8)


def test_sweep_k_zero():
    report = convergence_sweep(walker_factory, 0.0, [10, 100, 1000])
    assert all(np.all(e.dg == 0) for e in report.entries)
    assert np.all(report.limit == 0)


def test_sweep_needs_three_entries():
    with pytest.raises(InsufficientData):
        convergence_sweep(walker_factory, 0.5, [10, 100])
    with pytest.raises(InsufficientData):
        convergence_sweep(walker_factory, 0.5, [])
    with pytest.warns(UserWarning):
        report = convergence_sweep(walker_factory, 0.5, [10], allow_partial=True)
    assert report.order is None and len(report.entries) == 1


def test_sweep_schedule_must_increase():
    with pytest.raises(ValueError):
        convergence_sweep(walker_factory, 0.5, [100, 10, 1000])


def test_sweep_csv_and_summary():
    report = convergence_sweep(walker_factory, 0.5, [4, 8, 16])
    lines = report.to_csv().strip().split("\n")
    assert lines[0] == "N,delta,dg_1,abs_error_vs_limit"
    assert [line.split(",")[0] for line in lines[1:]] == ["4", "8", "16"]
    summary = report.summary()
    assert summary["schedule"] == [4, 8, 16]
    assert set(summary) >= {"limit", "order", "C"}


def test_sweep_threads_do_not_change_results(monkeypatch):
    serial = convergence_sweep(walker_factory, 0.5, [3, 6, 12, 24], method="quadrature")
    monkeypatch.setenv("HOLONOMY_LAB_THREADS", "4")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        threaded = convergence_sweep(walker_factory, 0.5, [3, 6, 12, 24], method="quadrature")
    assert serial.to_csv() == threaded.to_csv()
