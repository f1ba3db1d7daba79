"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line for its criterion, then
asserts. Run with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np
import pytest

import test_cli as cli_suite
import test_geometry as geometry_suite
import test_hybrid as hybrid_suite
import test_lift as lift_suite
from helpers import walker_interior_loop
from holonomy_lab.errors import NotExact
from holonomy_lab.geometry import ExprPotential, make_mode, reconstruct_potential
from holonomy_lab.hybrid import BaseLoop, Segment
from holonomy_lab.lift import hybrid_holonomy, holonomy_report
from holonomy_lab.limits import AlternationSpec, alternating_holonomy, convergence_sweep, infinitesimal_holonomy
from holonomy_lab.models import build_planar_walker, build_rolling_disk

TOL = 1e-10


@pytest.fixture
def verdict(capsys):
    def report(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
        assert ok, detail

    return report


def test_criterion_1_rolling_disk(verdict):
    start = time.perf_counter()
    worst = 0.0
    for r, n in [(1.0, 1), (0.5, 3), (2.0, -1)]:
        bundle, loops = build_rolling_disk(r)
        dg = hybrid_holonomy(bundle, loops(n), "quadrature", TOL)
        worst = max(worst, abs(dg[0] - 2 * math.pi * r * n))
    elapsed = time.perf_counter() - start
    verdict(1, "rolling disk 2*pi*r*n", worst <= 1e-9 and elapsed < 1.0, f"max error {worst:.2e}, {elapsed:.2f} s")


def test_criterion_2_single_leg_triviality(verdict):
    rng = np.random.default_rng(2024)
    bundle, _ = build_planar_walker(1.0, 0.3)
    worst = 0.0
    for k in range(20):
        mode = "theta" if k % 2 == 0 else "phi"
        loop = BaseLoop((Segment(mode, walker_interior_loop(rng, 0.3), 0.0, 1.0),))
        worst = max(worst, abs(hybrid_holonomy(bundle, loop, "both", TOL)[0]))
    verdict(2, "single-leg loops do not move the walker", worst <= 1e-9, f"max |dx| {worst:.2e}")


def test_criterion_3_walker_step_formula(verdict):
    worst = worst_residual = 0.0
    for l, delta, n in [(1.0, 0.3, 1), (2.0, 0.25, 3), (1.2, 0.1, 7)]:
        bundle, loops = build_planar_walker(l, delta)
        report = holonomy_report(bundle, loops(n), "both", TOL)
        worst = max(worst, abs(abs(report.total[0]) - 4 * l * n * math.sin(delta)))
        worst_residual = max(worst_residual, report.residual)
    ok = worst <= 1e-8 and worst_residual <= 1e-9
    verdict(3, "walker |dx| = 4 l N sin(delta)", ok, f"max error {worst:.2e}, max cross-check residual {worst_residual:.2e}")


def test_criterion_4_infinite_switching_limit(verdict):
    start = time.perf_counter()
    report = convergence_sweep(lambda d: build_planar_walker(1.0, d), 0.5, [10, 100, 1000, 10000])
    elapsed = time.perf_counter() - start
    # errors against the directly computed limit 4 l K
    errors = [abs(abs(e.dg[0]) - 2.0) for e in report.entries]
    slope = -np.polyfit(np.log([e.N for e in report.entries]), np.log(errors), 1)[0]
    ok = abs(abs(report.limit[0]) - 2.0) <= 1e-6 and abs(slope - 2.0) <= 0.1 and elapsed < 10.0
    verdict(
        4,
        "walker limit 4 l (N delta) = 2",
        ok,
        f"limit {report.limit[0]:.12f}, log-log order {slope:.4f}, estimated order {report.order:.4f}, {elapsed:.2f} s",
    )


def test_criterion_5_infinitesimal_consistency(verdict):
    F1 = ExprPotential(["-sin(theta)"], ("theta",))
    F2 = ExprPotential(["sin(theta)"], ("theta",))
    delta, n = 1e-4, 1000
    per_cycle = alternating_holonomy(AlternationSpec(F1, F2, [delta], [-delta], 1))
    value = infinitesimal_holonomy(F1, F2, [delta], [1.0], 2 * n * delta)
    rel = abs(value[0] - n * per_cycle[0]) / abs(value[0])
    verdict(5, "infinitesimal vs alternating holonomy", rel <= 1e-3, f"relative difference {rel:.2e}")


def test_criterion_6_exactness_oracle(verdict):
    worst = 0.0
    for l in (1.0, 1.7):
        mode = make_mode("leg", ["theta"], [[f"-{l!r}*cos(theta)"]], ["x"])
        F = reconstruct_potential(mode, [0.0], [(-math.pi / 2, math.pi / 2)], grid=33)
        for theta in np.linspace(-math.pi / 2, math.pi / 2, 33):
            worst = max(worst, abs(F([theta])[0] + l * math.sin(theta)))
    rot = make_mode("rot", ["m1", "m2"], [["-m2", "m1"]], ["g"])
    try:
        reconstruct_potential(rot, [0.0, 0.0], [(-1, 1), (-1, 1)], grid=9)
        violation = None
    except NotExact as exc:
        violation = exc.violation
    ok = worst <= 1e-8 and violation is not None and abs(violation - 2.0) <= 1e-6
    verdict(6, "exactness oracle", ok, f"max potential error {worst:.2e}, non-exact violation {violation}")


PROPERTY_SUITES = [
    ("parametrization invariance", geometry_suite.test_reparametrization_invariance),
    ("reversal antisymmetry", geometry_suite.test_reversal_antisymmetry),
    ("concatenation additivity", lift_suite.test_concatenation_additivity),
    ("start-point independence", lift_suite.test_start_point_independence),
    ("horizontality of lifts", lift_suite.test_horizontality_of_lifts),
    ("fault injection detection", hybrid_suite.test_fault_injection_detected_across_random_offsets),
]


def test_criterion_7_property_suites(verdict):
    start = time.perf_counter()
    failures = []
    for name, suite in PROPERTY_SUITES:
        try:
            suite()
        except AssertionError as exc:
            failures.append(f"{name}: {exc}")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60.0
    detail = f"{len(PROPERTY_SUITES) - len(failures)}/{len(PROPERTY_SUITES)} suites green, {elapsed:.1f} s"
    verdict(7, "property suites over 100 instances each", ok, detail + "".join(f"; {f}" for f in failures))


def test_criterion_8_determinism(verdict, tmp_path):
    differing = []
    for k, argv in enumerate(cli_suite.COMMANDS):
        first, second = tmp_path / f"{k}a", tmp_path / f"{k}b"
        first.mkdir()
        second.mkdir()
        if cli_suite.run_fixture_command(argv, first) != cli_suite.run_fixture_command(argv, second):
            differing.append(" ".join(argv))
    ok = not differing
    verdict(8, "byte-identical CLI outputs", ok, f"{len(cli_suite.COMMANDS)} fixture commands" + "".join(f"; differs: {d}" for d in differing))
