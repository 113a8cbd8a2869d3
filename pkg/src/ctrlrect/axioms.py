"""Axiom verifiers with violation witnesses.

Each verifier checks one generalized-metric axiom system over the full
materialized carrier and returns an AxiomReport: a verdict, the minimum
margin (rhs - lhs) over all checked inequality instances, the instance
count, and, when violated, the lexicographically first witness in
materialization order.

Quadrilateral systems quantify over ordered pairs (x, y), x != y, and
ordered pairs (u, v) of distinct points with u, v not in {x, y}; triangle
systems over ordered triples of distinct points.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .space import SpaceDef, control, control_matrix, distance, distance_matrix, materialize

SATISFIED = "satisfied"
SATISFIED_ON_GRID = "satisfied_on_grid"
VIOLATED = "violated"
VACUOUS = "vacuous"

SYSTEMS = (
    "metric",
    "b_metric",
    "rectangular",
    "controlled_metric",
    "extended_rect_b",
    "controlled_rect",
)

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class Witness:
    """One concrete failing (or checked) inequality instance."""

    kind: str  # d1 | d2 | triangle | quad
    x: str
    y: str
    intermediates: tuple[str, ...]
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "x": self.x,
            "y": self.y,
            "intermediates": list(self.intermediates),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
        }


@dataclass
class AxiomReport:
    system: str
    verdict: str
    witness: Witness | None
    min_margin: float | None
    checked_count: int
    constant: float | None = None  # s for the b_metric system

    @property
    def ok(self) -> bool:
        return self.verdict in (SATISFIED, SATISFIED_ON_GRID, VACUOUS)

    def to_dict(self) -> dict:
        out = {
            "system": self.system,
            "verdict": self.verdict,
            "witness": self.witness.to_dict() if self.witness else None,
            "min_margin": self.min_margin,
            "checked_count": self.checked_count,
        }
        if self.constant is not None:
            out["s"] = self.constant
        return out


class LatticeError(RuntimeError):
    """Classification verdicts contradict a guaranteed implication."""


@dataclass
class _Scan:
    min_margin: float | None
    checked: int
    first_violation: tuple[int, ...] | None
    first_rhs: float | None


def _d1_d2_witness(points, D) -> Witness | None:
    """First identity or symmetry failure in materialization order."""
    n = len(points)
    off = ~np.eye(n, dtype=bool)
    if not ((D[off] == 0.0).any() or (D != D.T).any()):
        return None
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if D[i, j] == 0.0:
                return Witness("d1", points[i].label, points[j].label, (), 0.0, 0.0)
            if D[i, j] != D[j, i]:
                return Witness("d2", points[i].label, points[j].label, (), D[i, j], D[j, i])
    return None


def _chunks(n, jobs):
    if jobs <= 1:
        return [range(n)]
    size = max(1, -(-n // jobs))
    return [range(s, min(s + size, n)) for s in range(0, n, size)]


def _run_chunks(fn, chunks, jobs):
    if jobs <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, chunks))


def _reduce(parts) -> _Scan:
    # Chunks are processed in ascending x order, so the first violation of
    # the first violating chunk is lexicographically first overall.
    total = _Scan(None, 0, None, None)
    for p in parts:
        total.checked += p.checked
        if p.min_margin is not None and (total.min_margin is None or p.min_margin < total.min_margin):
            total.min_margin = p.min_margin
        if total.first_violation is None and p.first_violation is not None:
            total.first_violation = p.first_violation
            total.first_rhs = p.first_rhs
    return total


def _scan_triples(D, t_xz, t_zy, tol, jobs=1) -> _Scan:
    """Check D[x,y] <= t_xz[x,z] + t_zy[z,y] over ordered distinct triples."""
    n = D.shape[0]
    idx = np.arange(n)

    def one_chunk(xs):
        part = _Scan(None, 0, None, None)
        for x in xs:
            rhs = t_xz[x][None, :] + t_zy.T  # (y, z)
            margins = rhs - D[x][:, None]
            mask = (idx[:, None] != x) & (idx[None, :] != x) & (idx[:, None] != idx[None, :])
            part.checked += int(mask.sum())
            if mask.any():
                m = margins[mask].min()
                if part.min_margin is None or m < part.min_margin:
                    part.min_margin = float(m)
            if part.first_violation is None:
                viol = mask & (margins < -tol)
                if viol.any():
                    flat = int(np.argmax(viol))
                    y, z = divmod(flat, n)
                    part.first_violation = (x, y, z)
                    part.first_rhs = float(rhs[y, z])
        return part

    return _reduce(_run_chunks(one_chunk, _chunks(n, jobs), jobs))


def _scan_quads(D, rhs_for_x, tol, jobs=1) -> _Scan:
    """Check D[x,y] <= rhs over the ordered quadruple family.

    rhs_for_x(x) returns the (y, u, v) block of right-hand sides for a fixed
    first index.
    """
    n = D.shape[0]
    idx = np.arange(n)

    def one_chunk(xs):
        part = _Scan(None, 0, None, None)
        for x in xs:
            rhs = rhs_for_x(x)  # (y, u, v)
            margins = rhs - D[x][:, None, None]
            y_i = idx[:, None, None]
            u_i = idx[None, :, None]
            v_i = idx[None, None, :]
            mask = (
                (y_i != x)
                & (u_i != x) & (u_i != y_i)
                & (v_i != x) & (v_i != y_i)
                & (u_i != v_i)
            )
            part.checked += int(mask.sum())
            if mask.any():
                m = margins[mask].min()
                if part.min_margin is None or m < part.min_margin:
                    part.min_margin = float(m)
            if part.first_violation is None:
                viol = mask & (margins < -tol)
                if viol.any():
                    flat = int(np.argmax(viol))
                    y, rem = divmod(flat, n * n)
                    u, v = divmod(rem, n)
                    part.first_violation = (x, y, u, v)
                    part.first_rhs = float(rhs[y, u, v])
        return part

    return _reduce(_run_chunks(one_chunk, _chunks(n, jobs), jobs))


def _finish(space, system, points, D, scan, kind, constant=None) -> AxiomReport:
    if scan.checked == 0:
        return AxiomReport(system, VACUOUS, None, None, 0, constant)
    if scan.first_violation is not None:
        ids = scan.first_violation
        w = Witness(
            kind,
            points[ids[0]].label,
            points[ids[1]].label,
            tuple(points[i].label for i in ids[2:]),
            float(D[ids[0], ids[1]]),
            scan.first_rhs,
        )
        return AxiomReport(system, VIOLATED, w, scan.min_margin, scan.checked, constant)
    verdict = SATISFIED_ON_GRID if space.carrier.intervals else SATISFIED
    return AxiomReport(system, verdict, None, scan.min_margin, scan.checked, constant)


def _prepare(space, system, points, D, constant=None):
    w = _d1_d2_witness(points, D)
    if w is not None:
        return AxiomReport(system, VIOLATED, w, None, 0, constant)
    return None


def verify_metric(space: SpaceDef, tol: float = DEFAULT_TOL, jobs: int = 1) -> AxiomReport:
    """Triangle inequality d(x,y) <= d(x,z) + d(z,y) over distinct triples."""
    points = materialize(space)
    D = distance_matrix(space, points)
    early = _prepare(space, "metric", points, D)
    if early:
        return early
    scan = _scan_triples(D, D, D, tol, jobs)
    return _finish(space, "metric", points, D, scan, "triangle")


def verify_controlled_metric(space: SpaceDef, tol: float = DEFAULT_TOL, jobs: int = 1) -> AxiomReport:
    """Per-leg weighted triangle d(x,y) <= a(x,z)d(x,z) + a(z,y)d(z,y).

    The axiom quantifies over every intermediate z, so a single failing
    (x, y, z) already violates it.
    """
    points = materialize(space)
    D = distance_matrix(space, points)
    early = _prepare(space, "controlled_metric", points, D)
    if early:
        return early
    M = control_matrix(space, points) * D
    scan = _scan_triples(D, M, M, tol, jobs)
    return _finish(space, "controlled_metric", points, D, scan, "triangle")


def verify_rectangular(space: SpaceDef, tol: float = DEFAULT_TOL, jobs: int = 1) -> AxiomReport:
    """Quadrilateral inequality d(x,y) <= d(x,u) + d(u,v) + d(v,y)."""
    points = materialize(space)
    D = distance_matrix(space, points)
    early = _prepare(space, "rectangular", points, D)
    if early:
        return early

    def rhs_for_x(x):
        return D[x][None, :, None] + D[None, :, :] + D.T[:, None, :]

    scan = _scan_quads(D, rhs_for_x, tol, jobs)
    return _finish(space, "rectangular", points, D, scan, "quad")


def verify_controlled_rect(space: SpaceDef, tol: float = DEFAULT_TOL, jobs: int = 1) -> AxiomReport:
    """Per-leg weighted quadrilateral inequality
    d(x,y) <= a(x,u)d(x,u) + a(u,v)d(u,v) + a(v,y)d(v,y).
    """
    points = materialize(space)
    D = distance_matrix(space, points)
    early = _prepare(space, "controlled_rect", points, D)
    if early:
        return early
    M = control_matrix(space, points) * D

    def rhs_for_x(x):
        return M[x][None, :, None] + M[None, :, :] + M.T[:, None, :]

    scan = _scan_quads(D, rhs_for_x, tol, jobs)
    return _finish(space, "controlled_rect", points, D, scan, "quad")


def verify_extended_rect_b(space: SpaceDef, tol: float = DEFAULT_TOL, jobs: int = 1) -> AxiomReport:
    """Single-multiplier quadrilateral inequality
    d(x,y) <= theta(x,y) [d(x,u) + d(u,v) + d(v,y)], theta = the space's control.
    """
    points = materialize(space)
    D = distance_matrix(space, points)
    early = _prepare(space, "extended_rect_b", points, D)
    if early:
        return early
    T = control_matrix(space, points)

    def rhs_for_x(x):
        chain = D[x][None, :, None] + D[None, :, :] + D.T[:, None, :]
        return T[x][:, None, None] * chain

    scan = _scan_quads(D, rhs_for_x, tol, jobs)
    return _finish(space, "extended_rect_b", points, D, scan, "quad")


def verify_rect_b(space: SpaceDef, s: float = 1.0, tol: float = DEFAULT_TOL, jobs: int = 1) -> AxiomReport:
    """Quadrilateral inequality with one constant multiplier:
    d(x,y) <= s [d(x,u) + d(u,v) + d(v,y)].
    """
    if s < 1:
        raise ValueError(f"b-metric constant must be >= 1, got {s}")
    points = materialize(space)
    D = distance_matrix(space, points)
    early = _prepare(space, "b_metric", points, D, constant=s)
    if early:
        return early

    def rhs_for_x(x):
        return s * (D[x][None, :, None] + D[None, :, :] + D.T[:, None, :])

    scan = _scan_quads(D, rhs_for_x, tol, jobs)
    return _finish(space, "b_metric", points, D, scan, "quad", constant=s)


def classify(space: SpaceDef, tol: float = DEFAULT_TOL, b_constant: float = 1.0, jobs: int = 1) -> dict[str, AxiomReport]:
    """Run every verifier and cross-check the implication lattice.

    Guaranteed implications (control >= 1 throughout):
      metric       -> controlled_metric       (per-leg weights only grow the bound)
      rectangular  -> controlled_rect, extended_rect_b
      control == const s: b_metric(s) and controlled_rect and extended_rect_b
      coincide instance by instance.
    """
    reports = {
        "metric": verify_metric(space, tol, jobs),
        "b_metric": verify_rect_b(space, b_constant, tol, jobs),
        "rectangular": verify_rectangular(space, tol, jobs),
        "controlled_metric": verify_controlled_metric(space, tol, jobs),
        "extended_rect_b": verify_extended_rect_b(space, tol, jobs),
        "controlled_rect": verify_controlled_rect(space, tol, jobs),
    }
    _assert_lattice(space, reports, tol, b_constant)
    return reports


def _assert_lattice(space, reports, tol, b_constant):
    def implies(a, b):
        if reports[a].ok and reports[b].verdict == VIOLATED:
            raise LatticeError(f"{a} satisfied but {b} violated")

    implies("metric", "controlled_metric")
    implies("rectangular", "controlled_rect")
    implies("rectangular", "extended_rect_b")
    ctl = space.control
    if ctl.kind == "const":
        if ctl.s == b_constant:
            va = reports["b_metric"]
            vb = reports["controlled_rect"]
            if va.verdict != vb.verdict:
                # The two scans round the same sums differently; only a
                # margin sitting essentially on the tolerance may disagree.
                ma = va.min_margin if va.min_margin is not None else 0.0
                mb = vb.min_margin if vb.min_margin is not None else 0.0
                near = max(abs(ma + tol), abs(mb + tol)) <= 16 * np.finfo(float).eps * max(1.0, abs(ma), abs(mb))
                if not near:
                    raise LatticeError(
                        f"b_metric(s={ctl.s}) verdict {va.verdict} != controlled_rect {vb.verdict}"
                    )


# ---------------------------------------------------------------------------
# Single-instance bound evaluation (the dual route used by golden replays)


def triangle_instance(space, x, y, z) -> tuple[float, float]:
    """(lhs, rhs) of the triangle inequality at one triple."""
    return distance(space, x, y), distance(space, x, z) + distance(space, z, y)


def controlled_triangle_instance(space, x, y, z) -> tuple[float, float]:
    lhs = distance(space, x, y)
    rhs = control(space, x, z) * distance(space, x, z) + control(space, z, y) * distance(space, z, y)
    return lhs, rhs


def rectangle_instance(space, x, y, u, v) -> tuple[float, float]:
    lhs = distance(space, x, y)
    rhs = distance(space, x, u) + distance(space, u, v) + distance(space, v, y)
    return lhs, rhs


def controlled_rectangle_instance(space, x, y, u, v) -> tuple[float, float]:
    lhs = distance(space, x, y)
    rhs = (
        control(space, x, u) * distance(space, x, u)
        + control(space, u, v) * distance(space, u, v)
        + control(space, v, y) * distance(space, v, y)
    )
    return lhs, rhs


def extended_rectangle_instance(space, x, y, u, v) -> tuple[float, float]:
    lhs = distance(space, x, y)
    chain = distance(space, x, u) + distance(space, u, v) + distance(space, v, y)
    return lhs, control(space, x, y) * chain


def rect_b_instance(space, s, x, y, u, v) -> tuple[float, float]:
    lhs = distance(space, x, y)
    chain = distance(space, x, u) + distance(space, u, v) + distance(space, v, y)
    return lhs, s * chain
