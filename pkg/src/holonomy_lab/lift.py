"""Hybrid lifts and hybrid holonomy.

Within each single-mode piece of a loop the fiber value follows the
horizontal lift ``gdot = -A(m) mdot``; at a crossing it jumps through the
fiber reset. The lift is left-continuous: at a crossing time the recorded
value is the pre-impact one.

The holonomy of the loop is the total fiber displacement, i.e. the sum of
the per-piece contributions plus the reset jumps. For exact modes each
piece contributes ``F(start) - F(end)``, which gives the potential method;
the quadrature method integrates the connection directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CrossCheckFailed, NoPotential
from .geometry import (
    GroupElement,
    Mode,
    segment_holonomy_potential,
    segment_holonomy_quadrature,
    segment_holonomy_samples,
)
from .hybrid import BaseLoop, HybridBundle, Partition, Piece, TangentialContact, segment_loop
from .output import atomic_write, fmt
from .quadrature import DEFAULT_TOL

METHODS = ("quadrature", "potential", "both")


@dataclass
class LiftPiece:
    mode: str
    t0: float
    t1: float
    t: np.ndarray
    m: np.ndarray
    g: np.ndarray
    contribution: GroupElement


@dataclass
class CrossingRecord:
    t: float
    source: str
    target: str
    pre_point: np.ndarray
    post_point: np.ndarray
    transversality: float
    g_before: GroupElement
    g_after: GroupElement

    @property
    def jump(self) -> GroupElement:
        return self.g_after - self.g_before

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "source": self.source,
            "target": self.target,
            "pre_point": self.pre_point,
            "post_point": self.post_point,
            "transversality": self.transversality,
            "g_before": self.g_before,
            "g_after": self.g_after,
            "jump": self.jump,
        }


@dataclass
class LiftResult:
    pieces: list[LiftPiece]
    crossings: list[CrossingRecord]
    contacts: list[TangentialContact]
    e0: GroupElement
    total: GroupElement
    method: str

    @property
    def final(self) -> GroupElement:
        return self.pieces[-1].g[-1] if self.pieces and len(self.pieces[-1].g) else self.e0


def _sum(terms: Sequence[np.ndarray], n: int) -> np.ndarray:
    if not terms:
        return np.zeros(n)
    stacked = np.vstack(terms)
    return np.array([math.fsum(stacked[:, a]) for a in range(n)])


def _piece_contribution(mode: Mode, piece: Piece, method: str, tol: float) -> GroupElement:
    if method == "potential":
        return segment_holonomy_potential(mode, piece.start_point, piece.end_point)
    return segment_holonomy_quadrature(mode, piece.curve, piece.t0, piece.t1, tol)


def _check_method(bundle: HybridBundle, partition: Partition, method: str):
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method != "quadrature":
        for p in partition.pieces:
            if bundle.modes[p.mode].potential is None:
                raise NoPotential(f"mode {p.mode!r} has no potential; use the quadrature method")


def _piece_samples(mode: Mode, piece: Piece, g0, contribution, samples: int, method: str, tol: float):
    ts = np.linspace(piece.t0, piece.t1, max(samples, 2))
    ms = piece.curve.sample(ts)
    gs = np.empty((len(ts), len(g0)))
    gs[0] = g0
    if method == "potential":
        f0 = mode.potential(ms[0])
        for i in range(1, len(ts)):
            gs[i] = g0 + (f0 - mode.potential(ms[i]))
    else:
        gs[:] = g0 + segment_holonomy_samples(mode, piece.curve, ts, tol)
    gs[-1] = g0 + contribution
    return ts, ms, gs


def _lift(bundle, loop, e0, method, tol, samples, partition=None) -> tuple[LiftResult, Partition]:
    if partition is None:
        partition = segment_loop(bundle, loop)
    _check_method(bundle, partition, method)
    n = bundle.fiber_dim
    e0 = np.zeros(n) if e0 is None else np.asarray(e0, dtype=float).reshape(-1)
    if e0.shape != (n,):
        raise ValueError(f"e0 must have {n} components")
    core = "quadrature" if method == "both" else method
    g = e0.copy()
    pieces, crossings, terms = [], [], []
    for piece in partition.pieces:
        mode = bundle.modes[piece.mode]
        contribution = _piece_contribution(mode, piece, core, tol)
        if samples:
            ts, ms, gs = _piece_samples(mode, piece, g, contribution, samples, core, tol)
        else:
            ts, ms, gs = np.empty(0), np.empty((0, mode.base_dim)), np.empty((0, n))
        pieces.append(LiftPiece(piece.mode, piece.t0, piece.t1, ts, ms, gs, contribution))
        terms.append(contribution)
        g = g + contribution
        if piece.crossing is not None:
            ev = partition.events[piece.crossing]
            after = ev.transition.fiber_map(ev.pre_point, g)
            rec = CrossingRecord(ev.t, ev.source, ev.target, ev.pre_point, ev.post_point, ev.transversality, g, after)
            crossings.append(rec)
            terms.append(rec.jump)
            g = after
    total = _sum(terms, n)
    return LiftResult(pieces, crossings, partition.contacts, e0, total, method), partition


def hybrid_lift(
    bundle: HybridBundle,
    loop: BaseLoop,
    e0=None,
    samples: int = 256,
    tol: float = DEFAULT_TOL,
    method: str = "quadrature",
) -> LiftResult:
    """Lift ``loop`` starting from fiber value ``e0`` (default: identity).

    ``samples`` points per piece are recorded for inspection; they do not
    affect the holonomy. With ``method="both"`` the trajectory uses
    quadrature and the total is cross-checked against the potential method.
    """
    result, partition = _lift(bundle, loop, e0, method, tol, samples)
    if method == "both":
        potential, _ = _lift(bundle, loop, e0, "potential", tol, 0, partition)
        _cross_check(result.total, potential.total, tol)
    return result


@dataclass
class HolonomyReport:
    total: GroupElement
    method: str
    quadrature: GroupElement | None
    potential: GroupElement | None
    residual: float | None
    crossings: int
    contacts: int

    def to_json(self) -> dict:
        return {
            "holonomy": self.total,
            "method": self.method,
            "quadrature": self.quadrature,
            "potential": self.potential,
            "residual": self.residual,
            "crossings": self.crossings,
            "tangential_contacts": self.contacts,
        }


def _cross_check(quad: np.ndarray, pot: np.ndarray, tol: float) -> float:
    residual = float(np.max(np.abs(quad - pot), initial=0.0))
    if residual > 10 * tol:
        raise CrossCheckFailed(residual, 10 * tol)
    return residual


def holonomy_report(
    bundle: HybridBundle, loop: BaseLoop, method: str = "quadrature", tol: float = DEFAULT_TOL
) -> HolonomyReport:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    quad = pot = residual = None
    partition = segment_loop(bundle, loop)
    if method in ("quadrature", "both"):
        quad = _lift(bundle, loop, None, "quadrature", tol, 0, partition)[0].total
    if method in ("potential", "both"):
        pot = _lift(bundle, loop, None, "potential", tol, 0, partition)[0].total
    if method == "both":
        residual = _cross_check(quad, pot, tol)
    total = quad if quad is not None else pot
    return HolonomyReport(total, method, quad, pot, residual, len(partition.events), len(partition.contacts))


def hybrid_holonomy(
    bundle: HybridBundle, loop: BaseLoop, method: str = "quadrature", tol: float = DEFAULT_TOL
) -> GroupElement:
    """Total fiber displacement of the hybrid lift of ``loop``.

    ``method="both"`` returns the quadrature value after checking that it
    agrees with the potential value to ``10 * tol``.
    """
    return holonomy_report(bundle, loop, method, tol).total


# -- export --------------------------------------------------------------------


def lift_csv(result: LiftResult) -> str:
    """CSV text: ``t, m_1..m_d, g_1..g_n, mode_id``; one block per piece."""
    blocks = []
    for piece in result.pieces:
        d = piece.m.shape[1]
        n = piece.g.shape[1]
        header = ["t"] + [f"m_{j + 1}" for j in range(d)] + [f"g_{a + 1}" for a in range(n)] + ["mode_id"]
        lines = [",".join(header)]
        for t, m, g in zip(piece.t, piece.m, piece.g):
            lines.append(",".join([fmt(t), *map(fmt, m), *map(fmt, g), piece.mode]))
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def write_lift_csv(result: LiftResult, path: str | Path) -> None:
    atomic_write(path, lift_csv(result))


def crossing_log(result: LiftResult) -> dict:
    return {
        "method": result.method,
        "e0": result.e0,
        "total": result.total,
        "crossings": [c.to_json() for c in result.crossings],
        "tangential_contacts": [
            {"t": c.t, "source": c.source, "target": c.target, "point": c.point, "transversality": c.transversality}
            for c in result.contacts
        ],
    }
