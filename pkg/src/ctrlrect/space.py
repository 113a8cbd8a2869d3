"""Point carriers, distance tables, and control functions.

A space is a triple (carrier, distance, control): a finite set of labelled
points (optionally extended by uniform grid samples of real intervals), a
symmetric distance given by an explicit table and/or a fallback formula,
and a control function with values in [1, inf) drawn from a small registry
of closed forms.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

# Numeric values closer than this denote the same point.
POINT_MERGE_TOL = 1e-12

FALLBACK_KINDS = ("squared_difference", "abs_difference")
CONTROL_KINDS = ("table", "const", "max", "max_plus", "sum_plus", "piecewise_max_plus")


class SpaceError(ValueError):
    """Ill-formed space definition or evaluation outside its domain."""


class UnresolvedDistanceError(SpaceError):
    """A point pair has no table entry and no applicable fallback."""


def parse_scalar(raw) -> float:
    """Parse a number or a fraction/decimal string ("1/9", "0.36") to float.

    String input is parsed as an exact rational first, then rounded once to
    binary floating point.
    """
    if isinstance(raw, bool):
        raise SpaceError(f"not a numeric value: {raw!r}")
    if isinstance(raw, (int, float)):
        return float(raw)
    if isinstance(raw, str):
        try:
            return float(Fraction(raw))
        except (ValueError, ZeroDivisionError) as exc:
            raise SpaceError(f"cannot parse numeric value {raw!r}") from exc
    raise SpaceError(f"not a numeric value: {raw!r}")


def canonical_label(value: float) -> str:
    """Short round-trippable label for a numeric point."""
    if math.isfinite(value) and value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True)
class Point:
    """A carrier element: unique label, optional numeric value."""

    label: str
    value: float | None = None

    def __repr__(self):
        return f"Point({self.label})"


@dataclass(frozen=True)
class Interval:
    """A real interval sampled by a uniform grid of grid_n points."""

    lo: float
    hi: float
    grid_n: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise SpaceError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.grid_n < 2:
            raise SpaceError(f"grid_n must be >= 2, got {self.grid_n}")

    def grid_values(self) -> list[float]:
        w = self.hi - self.lo
        return [self.lo + j * w / (self.grid_n - 1) for j in range(self.grid_n)]


@dataclass
class Carrier:
    finite: list[Point] = field(default_factory=list)
    intervals: list[Interval] = field(default_factory=list)


@dataclass
class DistanceSpec:
    """Distance lookup: explicit entries first, then the fallback formula.

    entries maps ordered label pairs to values. With symmetric closure on
    (the default) both orientations resolve through either stored key; with
    it off, each orientation must be given explicitly.
    """

    entries: dict[tuple[str, str], float] = field(default_factory=dict)
    fallback: str | None = None  # squared_difference | abs_difference | None
    symmetric: bool = True

    def __post_init__(self):
        if self.fallback is not None and self.fallback not in FALLBACK_KINDS:
            raise SpaceError(f"unknown fallback {self.fallback!r}")
        for (a, b), v in self.entries.items():
            if a == b:
                raise SpaceError(f"distance entry for identical point ({a}, {a})")
            if not v > 0:
                raise SpaceError(f"zero or negative distance between distinct points ({a}, {b})")
        if self.symmetric:
            for (a, b), v in self.entries.items():
                w = self.entries.get((b, a))
                if w is not None and w != v:
                    raise SpaceError(f"conflicting symmetric entries for ({a}, {b}): {v} vs {w}")


@dataclass
class ControlSpec:
    """Control function with values in [1, inf).

    Kinds: table, const (s), max, max_plus (max+c), sum_plus (x+y+c),
    piecewise_max_plus (max+c when both arguments lie in region, else a
    constant). Table lookups use the written argument order; symmetry is
    not assumed.
    """

    kind: str
    s: float = 1.0
    c: float = 0.0
    region: tuple[float, float] | None = None
    else_const: float = 1.0
    entries: dict[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CONTROL_KINDS:
            raise SpaceError(f"unknown control kind {self.kind!r}")
        if self.kind == "const" and self.s < 1:
            raise SpaceError(f"constant control must be >= 1, got {self.s}")
        if self.kind == "piecewise_max_plus":
            if self.region is None:
                raise SpaceError("piecewise_max_plus needs a region")
            if self.else_const < 1:
                raise SpaceError(f"else_const must be >= 1, got {self.else_const}")
        for (a, b), v in self.entries.items():
            if v < 1:
                raise SpaceError(f"control table value < 1 at ({a}, {b}): {v}")


@dataclass
class SpaceDef:
    """Immutable space definition; evaluation operations are pure."""

    carrier: Carrier
    distance: DistanceSpec
    control: ControlSpec
    _points: list[Point] | None = field(default=None, init=False, repr=False)
    _by_value: list[tuple[float, Point]] | None = field(default=None, init=False, repr=False)


def materialize(space: SpaceDef) -> list[Point]:
    """Ordered carrier: finite points in declaration order, then grid points
    ascending. Points with numeric values within POINT_MERGE_TOL are merged.
    """
    if space._points is not None:
        return space._points
    points: list[Point] = []
    labels: dict[str, Point] = {}
    values: list[tuple[float, Point]] = []

    def register(p: Point):
        if p.label in labels:
            raise SpaceError(f"duplicate point label {p.label!r}")
        if p.value is not None:
            near = _nearest(values, p.value)
            if near is not None:
                raise SpaceError(
                    f"points {near.label!r} and {p.label!r} carry the same numeric value"
                )
            bisect.insort(values, (p.value, p))
        labels[p.label] = p
        points.append(p)

    for p in space.carrier.finite:
        register(p)

    grid_vals: list[float] = []
    for iv in space.carrier.intervals:
        grid_vals.extend(iv.grid_values())
    grid_vals.sort()
    for v in grid_vals:
        if _nearest(values, v) is not None:
            continue  # merged with a finite point or an earlier grid point
        p = Point(canonical_label(v), v)
        if p.label in labels:
            raise SpaceError(f"grid point label {p.label!r} collides with a distinct point")
        bisect.insort(values, (v, p))
        labels[p.label] = p
        points.append(p)

    space._points = points
    space._by_value = values
    return points


def _nearest(values: list[tuple[float, Point]], v: float) -> Point | None:
    i = bisect.bisect_left(values, (v,))
    for j in (i - 1, i):
        if 0 <= j < len(values) and abs(values[j][0] - v) <= POINT_MERGE_TOL:
            return values[j][1]
    return None


def find_by_value(space: SpaceDef, value: float) -> Point | None:
    """Carrier point whose value matches within POINT_MERGE_TOL, if any."""
    materialize(space)
    return _nearest(space._by_value, value)


def resolve_point(space: SpaceDef, ref) -> Point:
    """Resolve a label, fraction string, or number to a carrier point."""
    pts = materialize(space)
    if isinstance(ref, str):
        for p in pts:
            if p.label == ref:
                return p
    value = parse_scalar(ref)
    p = find_by_value(space, value)
    if p is None:
        raise SpaceError(f"no carrier point matches {ref!r}")
    return p


def distance(space: SpaceDef, x: Point, y: Point) -> float:
    """Distance between two points; zero iff same point."""
    if x.label == y.label:
        return 0.0
    key = (x.label, y.label)
    v = space.distance.entries.get(key)
    if v is None:
        v = space.distance.entries.get((y.label, x.label))
        if v is not None and not space.distance.symmetric:
            v = None
    if v is not None:
        return v
    if space.distance.fallback is None:
        raise UnresolvedDistanceError(f"no distance for ({x.label}, {y.label})")
    if x.value is None or y.value is None:
        raise UnresolvedDistanceError(
            f"fallback distance needs numeric values, ({x.label}, {y.label}) has none"
        )
    if space.distance.fallback == "squared_difference":
        return (x.value - y.value) ** 2
    return abs(x.value - y.value)


def control(space: SpaceDef, x: Point, y: Point) -> float:
    """Control value at (x, y) in written order; always >= 1."""
    spec = space.control
    if spec.kind == "table":
        v = spec.entries.get((x.label, y.label))
        if v is None:
            raise SpaceError(f"control table has no entry for ({x.label}, {y.label})")
        return v
    if spec.kind == "const":
        return spec.s
    xv, yv = x.value, y.value
    if xv is None or yv is None:
        raise SpaceError(f"control formula needs numeric values at ({x.label}, {y.label})")
    if spec.kind == "max":
        v = max(xv, yv)
    elif spec.kind == "max_plus":
        v = max(xv, yv) + spec.c
    elif spec.kind == "sum_plus":
        v = xv + yv + spec.c
    else:  # piecewise_max_plus
        lo, hi = spec.region
        if lo <= xv <= hi and lo <= yv <= hi:
            v = max(xv, yv) + spec.c
        else:
            v = spec.else_const
    if v < 1:
        raise SpaceError(f"control value {v} < 1 at ({x.label}, {y.label})")
    return v


def distance_matrix(space: SpaceDef, points: list[Point] | None = None) -> np.ndarray:
    """Full pairwise distance matrix over the given (default materialized)
    points; raises if any pair is unresolvable.
    """
    pts = materialize(space) if points is None else points
    n = len(pts)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = distance(space, pts[i], pts[j])
    return D


def control_matrix(space: SpaceDef, points: list[Point] | None = None) -> np.ndarray:
    """Full pairwise control matrix; the diagonal is fixed at 1 and never
    evaluated (no axiom instance uses it).
    """
    pts = materialize(space) if points is None else points
    n = len(pts)
    A = np.ones((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                A[i, j] = control(space, pts[i], pts[j])
    return A


def validate(space: SpaceDef) -> None:
    """Eagerly check structural invariants: totality of the distance,
    control >= 1 on all pairs, and entry labels naming carrier points.
    """
    pts = materialize(space)
    known = {p.label for p in pts}
    for a, b in space.distance.entries:
        if a not in known or b not in known:
            raise SpaceError(f"distance entry references unknown point ({a}, {b})")
    for a, b in space.control.entries:
        if a not in known or b not in known:
            raise SpaceError(f"control entry references unknown point ({a}, {b})")
    distance_matrix(space, pts)
    control_matrix(space, pts)


# ---------------------------------------------------------------------------
# JSON space definition files


def _point_from_raw(raw) -> Point:
    if isinstance(raw, str):
        return Point(raw, parse_scalar(raw))
    value = parse_scalar(raw)
    return Point(canonical_label(value), value)


def space_from_dict(doc: dict, grid_override: int | None = None) -> SpaceDef:
    """Build a SpaceDef from a parsed space definition document."""
    if not isinstance(doc, dict):
        raise SpaceError("space document must be a JSON object")
    cdoc = doc.get("carrier", {})
    finite = [_point_from_raw(r) for r in cdoc.get("finite", [])]
    intervals = []
    for iv in cdoc.get("intervals", []):
        grid_n = int(grid_override if grid_override is not None else iv["grid_n"])
        intervals.append(Interval(parse_scalar(iv["lo"]), parse_scalar(iv["hi"]), grid_n))
    carrier = Carrier(finite, intervals)

    ddoc = doc.get("distance", {})
    labels = {p.label for p in finite}

    def ref_label(ref) -> str:
        if isinstance(ref, str) and ref in labels:
            return ref
        return canonical_label(parse_scalar(ref))

    entries = {}
    for a, b, v in ddoc.get("entries", []):
        entries[(ref_label(a), ref_label(b))] = parse_scalar(v)
    dist = DistanceSpec(
        entries=entries,
        fallback=ddoc.get("fallback"),
        symmetric=bool(ddoc.get("symmetric_closure", True)),
    )

    adoc = doc.get("alpha", {"kind": "const", "s": 1})
    kind = adoc.get("kind")
    ctl_entries = {}
    for a, b, v in adoc.get("entries", []):
        ctl_entries[(ref_label(a), ref_label(b))] = parse_scalar(v)
    region = adoc.get("region")
    ctl = ControlSpec(
        kind=kind,
        s=parse_scalar(adoc.get("s", 1)),
        c=parse_scalar(adoc.get("c", 0)),
        region=(parse_scalar(region[0]), parse_scalar(region[1])) if region else None,
        else_const=parse_scalar(adoc.get("else_const", 1)),
        entries=ctl_entries,
    )

    space = SpaceDef(carrier, dist, ctl)
    validate(space)
    return space


def load_space(path, grid_override: int | None = None) -> SpaceDef:
    """Load and validate a space definition from a JSON file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpaceError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return space_from_dict(doc, grid_override=grid_override)
