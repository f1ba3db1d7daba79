import json
import math

import numpy as np
import pytest

from helpers import walker_interior_loop
from holonomy_lab.curves import ExprCurve
from holonomy_lab.errors import ParseError, ValidationFailed
from holonomy_lab.hybrid import BaseLoop, Segment, reversed_loop
from holonomy_lab.lift import hybrid_holonomy
from holonomy_lab.models import (
    SystemDefinition,
    build_planar_walker,
    build_rolling_disk,
    compile_system,
    fixture_path,
    load_system,
    load_system_full,
    planar_walker_definition,
    read_definition,
    rolling_disk_definition,
    round_trip,
    save_definition,
)

TOL = 1e-10


# -- builtin models ------------------------------------------------------------


@pytest.mark.parametrize("r, n", [(1.0, 1), (0.5, 3), (2.0, -1), (1.0, 0)])
def test_rolling_disk(r, n):
    bundle, loops = build_rolling_disk(r)
    assert hybrid_holonomy(bundle, loops(n), "quadrature", TOL)[0] == pytest.approx(2 * math.pi * r * n, abs=1e-9)


def test_rolling_disk_structure():
    bundle, _ = build_rolling_disk(0.5)
    (mode,) = bundle.modes.values()
    assert mode.chart.names == ("theta",)
    assert mode.potential([2.0])[0] == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        build_rolling_disk(0.0)


@pytest.mark.parametrize(
    "l, delta, n, expected",
    [(1.0, 0.3, 1, 4 * math.sin(0.3)), (1.0, math.pi / 6, 1, 2.0), (2.0, 0.25, 3, 24 * math.sin(0.25))],
)
def test_planar_walker(l, delta, n, expected):
    bundle, loops = build_planar_walker(l, delta)
    dg = hybrid_holonomy(bundle, loops(n), "both", TOL)
    assert abs(dg[0]) == pytest.approx(expected, abs=1e-9)
    # the stance angle sweeps delta -> -delta, so the walker moves towards -x
    assert dg[0] < 0


def test_walker_zero_cycles():
    bundle, loops = build_planar_walker(1.0, 0.3)
    assert np.all(hybrid_holonomy(bundle, loops(0), "both") == 0)


def test_walker_parameter_checks():
    with pytest.raises(ValueError):
        build_planar_walker(-1.0, 0.3)
    with pytest.raises(ValueError):
        build_planar_walker(1.0, math.pi / 2)
    _, loops = build_planar_walker(1.0, 0.3)
    with pytest.raises(ValueError):
        loops(-1)


def test_walker_structure():
    bundle, _ = build_planar_walker(1.5, 0.2)
    assert sorted(bundle.modes) == ["phi", "theta"]
    theta = bundle.modes["theta"]
    assert theta.connection.batch(np.array([[0.0]]))[0, 0, 0] == pytest.approx(-1.5)
    (step,) = [t for t in bundle.between("theta", "phi") if t.level([-0.2]) == 0]
    assert step.base_map([-0.2]) == pytest.approx([0.2])


def test_walker_symmetry_reverses_displacement():
    rng = np.random.default_rng(50)
    for _ in range(10):
        l, delta, n = float(rng.uniform(0.5, 2)), float(rng.uniform(0.05, 1.2)), int(rng.integers(1, 5))
        bundle, loops = build_planar_walker(l, delta)
        forward = hybrid_holonomy(bundle, loops(n), "both")
        backward = hybrid_holonomy(bundle, reversed_loop(loops(n)), "both")
        assert backward[0] == pytest.approx(-forward[0], abs=1e-12)


def test_canonical_definition_loop_matches_builder_loop():
    system = compile_system(planar_walker_definition(1.0, 0.3))
    bundle, loops = build_planar_walker(1.0, 0.3)
    for n in (1, 2, 4):
        a = hybrid_holonomy(system.bundle, system.loop(cycles=n), "both")
        b = hybrid_holonomy(bundle, loops(n), "both")
        assert a[0] == pytest.approx(b[0], abs=1e-9)


# -- definition files ------------------------------------------------------------


def test_shipped_walker_matches_builder():
    system = load_system_full(fixture_path("walker.json"))
    bundle, loops = build_planar_walker(1.0, 0.3)
    assert load_system(fixture_path("walker.json")).fiber_dim == 1
    for n in (1, 3):
        for method in ("potential", "quadrature"):
            a = hybrid_holonomy(system.bundle, loops(n), method)
            b = hybrid_holonomy(bundle, loops(n), method)
            assert np.array_equal(a, b)
    assert read_definition(fixture_path("walker.json")).to_json() == planar_walker_definition(1.0, 0.3).to_json()


def test_shipped_disk_matches_builder():
    system = load_system_full(fixture_path("disk.json"))
    assert read_definition(fixture_path("disk.json")).to_json() == rolling_disk_definition(1.0).to_json()
    assert hybrid_holonomy(system.bundle, system.loop(), "both")[0] == pytest.approx(2 * math.pi, abs=1e-9)


def test_broken_fixture_fails_validation():
    with pytest.raises(ValidationFailed) as info:
        load_system(fixture_path("broken.json"))
    assert not info.value.report.ok


def test_unbound_parameter_is_named(tmp_path):
    data = planar_walker_definition().to_json()
    data["modes"][1]["connection"][0][0] = "-leg*cos(phi)"
    path = tmp_path / "walker.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ParseError) as info:
        load_system(path)
    assert "leg" in str(info.value)
    assert "modes[1]" in str(info.value)


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"name": ')
    with pytest.raises(ParseError):
        load_system(path)


def test_schema_version_checked():
    data = rolling_disk_definition().to_json()
    data["schema_version"] = 99
    with pytest.raises(ParseError):
        SystemDefinition.from_json(data)


def test_polyline_and_constant_curves_load():
    data = rolling_disk_definition(1.0).to_json()
    data["loops"]["zigzag"] = {
        "segments": [
            {"mode": "disk", "t0": 0, "t1": 1, "curve": {"polyline": {"times": [0, 0.5, 1], "points": [[0], ["pi"], [0]]}}}
        ]
    }
    data["loops"]["rest"] = {"segments": [{"mode": "disk", "t0": 0, "t1": 1, "curve": {"constant": ["r"]}}]}
    system = compile_system(SystemDefinition.from_json(data))
    assert hybrid_holonomy(system.bundle, system.loop("zigzag"), "both")[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(hybrid_holonomy(system.bundle, system.loop("rest"), "both") == 0)
    with pytest.raises(ParseError):
        system.loop("missing")


def random_loops(rng, delta):
    """Ten loops: five polyline walker loops, five smooth single-leg loops."""
    _, loops = build_planar_walker(1.0, delta)
    out = [loops(int(rng.integers(1, 6))) for _ in range(5)]
    for _ in range(5):
        out.append(BaseLoop((Segment(str(rng.choice(["theta", "phi"])), walker_interior_loop(rng, delta), 0.0, 1.0),)))
    return out


def test_round_trip_preserves_holonomy(tmp_path):
    rng = np.random.default_rng(51)
    for k in range(3):
        l, delta = float(rng.uniform(0.5, 2)), float(rng.uniform(0.1, 1.0))
        defn = planar_walker_definition(l, delta)
        path = tmp_path / f"walker{k}.json"
        save_definition(defn, path)
        reloaded = load_system(path)
        original, _ = build_planar_walker(l, delta)
        assert round_trip(defn).to_json() == defn.to_json()
        for loop in random_loops(rng, delta):
            assert np.array_equal(
                hybrid_holonomy(reloaded, loop, "potential"), hybrid_holonomy(original, loop, "potential")
            )
            q1 = hybrid_holonomy(reloaded, loop, "quadrature", TOL)
            q2 = hybrid_holonomy(original, loop, "quadrature", TOL)
            assert np.max(np.abs(q1 - q2)) <= 10 * TOL


def test_disk_round_trip(tmp_path):
    rng = np.random.default_rng(52)
    path = tmp_path / "disk.json"
    r = float(rng.uniform(0.1, 3))
    save_definition(rolling_disk_definition(r), path)
    reloaded = load_system(path)
    original, _ = build_rolling_disk(r)
    for _ in range(10):
        n = int(rng.integers(-3, 4))
        a, b = (float(v) for v in rng.uniform(-1, 1, size=2))
        loop = BaseLoop((Segment("disk", ExprCurve([f"2*pi*({n})*t + ({a!r})*sin(2*pi*t) + ({b!r})*sin(4*pi*t)"]), 0.0, 1.0),))
        q1 = hybrid_holonomy(reloaded, loop, "both", TOL)
        q2 = hybrid_holonomy(original, loop, "both", TOL)
        assert np.max(np.abs(q1 - q2)) <= 10 * TOL
        assert q1[0] == pytest.approx(2 * math.pi * r * n, abs=1e-8)
