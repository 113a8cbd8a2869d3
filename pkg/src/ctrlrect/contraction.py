"""Contraction certificates for self-mappings.

Four schemes are covered. Three are fitted, taking the supremum of the
scheme's ratio over all unordered pairs of distinct carrier points:

  banach   d(Tx,Ty) / d(x,y)                              admissible < 1
  kannan   d(Tx,Ty) / (d(x,Tx) + d(y,Ty))                 admissible < 1/2
  reich    d(Tx,Ty) / (d(x,y) + d(x,Tx) + d(y,Ty))        admissible < 1/3

The rational scheme is checked against supplied constants (lam, beta) with
lam + beta < 1:

  fisher   d(Tx,Ty) <= lam d(x,y) + beta C(x,y) / (1 + d(x,y))

where the coupling C multiplies the two displacement distances
d(x,Tx) d(y,Ty) (product variant, the default) or adds them (sum variant).

Induced geometric decay rates along Picard orbits: k, k/(1-k),
2 lam/(1-lam), lam/(1-beta).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .space import (
    Point,
    SpaceDef,
    SpaceError,
    canonical_label,
    distance,
    find_by_value,
    materialize,
    parse_scalar,
    resolve_point,
)

SCHEMES = ("banach", "kannan", "reich", "fisher")

REGISTERED_MAPS = ("identity", "const", "sqrt_clamped")


@dataclass
class MapSpec:
    """Self-mapping given by an explicit table or a registered formula."""

    kind: str  # "table" | "registered"
    entries: dict[str, str] = field(default_factory=dict)
    name: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("table", "registered"):
            raise SpaceError(f"unknown map kind {self.kind!r}")
        if self.kind == "registered" and self.name not in REGISTERED_MAPS:
            raise SpaceError(f"unknown registered map {self.name!r}")


def table_map(pairs) -> MapSpec:
    return MapSpec("table", entries={a: b for a, b in pairs})


def registered_map(name: str, **params) -> MapSpec:
    return MapSpec("registered", name=name, params=params)


def _point_for_value(space: SpaceDef, value: float) -> Point:
    p = find_by_value(space, value)
    if p is not None:
        return p
    return Point(canonical_label(value), value)


def apply_map(space: SpaceDef, mapping: MapSpec, x: Point) -> Point:
    """Image T(x). Numeric images matching a carrier point within the merge
    tolerance resolve to that point; other numeric images are adjoined
    exactly as new points.
    """
    if mapping.kind == "table":
        target = mapping.entries.get(x.label)
        if target is None:
            raise SpaceError(f"map table has no entry for {x.label!r}")
        return resolve_point(space, target)
    name = mapping.name
    if name == "identity":
        return x
    if name == "const":
        return resolve_point(space, mapping.params["c"])
    # sqrt_clamped: square root inside [lo, hi], a constant elsewhere
    if x.value is None:
        raise SpaceError(f"registered map needs a numeric point, got {x.label!r}")
    lo = parse_scalar(mapping.params.get("lo", 1))
    hi = parse_scalar(mapping.params.get("hi", 2))
    if lo <= x.value <= hi:
        return _point_for_value(space, math.sqrt(x.value))
    return _point_for_value(space, parse_scalar(mapping.params.get("else_value", 1)))


@dataclass
class ContractionCertificate:
    scheme: str
    constants: dict
    worst_ratio: float
    worst_pair: tuple[str, str] | None
    admissible: bool
    decay_rate: float | None
    checked_pairs: int
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "constants": dict(self.constants),
            "worst_ratio": self.worst_ratio,
            "worst_pair": list(self.worst_pair) if self.worst_pair else None,
            "admissible": self.admissible,
            "decay_rate": self.decay_rate,
            "checked_pairs": self.checked_pairs,
            "note": self.note,
        }


def _pair_scan(space, mapping):
    pts = materialize(space)
    imgs = [apply_map(space, mapping, p) for p in pts]
    return pts, imgs


def fit_banach(space: SpaceDef, mapping: MapSpec, tol: float = 1e-9) -> ContractionCertificate:
    """Supremum of d(Tx,Ty)/d(x,y); pairs with d(Tx,Ty) <= tol are skipped
    (the scheme only constrains pairs with positive image distance).
    """
    pts, imgs = _pair_scan(space, mapping)
    worst, pair, checked = 0.0, None, 0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            num = distance(space, imgs[i], imgs[j])
            if num <= tol:
                continue
            checked += 1
            r = num / distance(space, pts[i], pts[j])
            if r > worst:
                worst, pair = r, (pts[i].label, pts[j].label)
    admissible = worst < 1.0
    return ContractionCertificate(
        "banach", {"k": worst}, worst, pair, admissible,
        worst if admissible else None, checked,
    )


def _fit_displacement(space, mapping, scheme, include_dxy, threshold, decay_fn, tol):
    pts, imgs = _pair_scan(space, mapping)
    worst, pair, checked, note = 0.0, None, 0, ""
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            num = distance(space, imgs[i], imgs[j])
            den = distance(space, pts[i], imgs[i]) + distance(space, pts[j], imgs[j])
            if include_dxy:
                den += distance(space, pts[i], pts[j])
            if den <= tol:
                if num > tol and not math.isinf(worst):
                    # positive image distance with zero displacement sum:
                    # no finite constant works
                    worst = math.inf
                    pair = (pts[i].label, pts[j].label)
                    note = "positive image distance over zero displacement sum"
                continue
            checked += 1
            r = num / den
            if r > worst:
                worst, pair = r, (pts[i].label, pts[j].label)
    admissible = worst < threshold
    key = "k" if scheme == "kannan" else "lambda"
    return ContractionCertificate(
        scheme, {key: worst}, worst, pair, admissible,
        decay_fn(worst) if admissible else None, checked, note,
    )


def fit_kannan(space: SpaceDef, mapping: MapSpec, tol: float = 1e-9) -> ContractionCertificate:
    """Supremum of d(Tx,Ty)/(d(x,Tx)+d(y,Ty)); admissible below 1/2 with
    decay rate k/(1-k).
    """
    return _fit_displacement(
        space, mapping, "kannan", False, 0.5, lambda k: k / (1.0 - k), tol
    )


def fit_reich(space: SpaceDef, mapping: MapSpec, tol: float = 1e-9) -> ContractionCertificate:
    """Supremum of d(Tx,Ty)/(d(x,y)+d(x,Tx)+d(y,Ty)); admissible below 1/3
    with decay rate 2 lam/(1-lam).
    """
    return _fit_displacement(
        space, mapping, "reich", True, 1.0 / 3.0, lambda l: 2.0 * l / (1.0 - l), tol
    )


def check_fisher(
    space: SpaceDef,
    mapping: MapSpec,
    lam: float,
    beta: float,
    variant: str = "product",
    tol: float = 1e-9,
) -> ContractionCertificate:
    """Verify the rational bound for the supplied constants on every pair.

    worst_pair is the pair of largest lhs - rhs: the worst violator when
    violations exist, otherwise the tightest satisfied instance.
    """
    if not (0.0 < lam < 1.0 and 0.0 < beta < 1.0):
        raise ValueError(f"constants must lie in (0, 1), got lam={lam}, beta={beta}")
    if lam + beta >= 1.0:
        raise ValueError(f"lam + beta must be < 1, got {lam + beta}")
    if variant not in ("product", "sum"):
        raise ValueError(f"unknown variant {variant!r}")
    pts, imgs = _pair_scan(space, mapping)
    worst_slack, worst_ratio, pair, checked, violations = -math.inf, 0.0, None, 0, 0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            dxy = distance(space, pts[i], pts[j])
            di = distance(space, pts[i], imgs[i])
            dj = distance(space, pts[j], imgs[j])
            coupling = di * dj if variant == "product" else di + dj
            lhs = distance(space, imgs[i], imgs[j])
            rhs = lam * dxy + beta * coupling / (1.0 + dxy)
            checked += 1
            if lhs > rhs + tol:
                violations += 1
            slack = lhs - rhs
            if slack > worst_slack:
                worst_slack, pair = slack, (pts[i].label, pts[j].label)
            if rhs > 0:
                worst_ratio = max(worst_ratio, lhs / rhs)
    admissible = violations == 0
    return ContractionCertificate(
        "fisher",
        {"lambda": lam, "beta": beta, "variant": variant},
        worst_ratio,
        pair,
        admissible,
        lam / (1.0 - beta) if admissible else None,
        checked,
        note=f"{violations} violating pair(s)" if violations else "",
    )


def fisher_grid_search(
    space: SpaceDef,
    mapping: MapSpec,
    variant: str = "product",
    tol: float = 1e-9,
    step: float = 0.01,
):
    """Coarse scan of the admissible triangle lam, beta > 0, lam + beta < 1
    at the given step. Returns (best certificate or None, admissible pairs);
    best minimizes the decay rate lam/(1-beta).
    """
    pts, imgs = _pair_scan(space, mapping)
    n = len(pts)
    dxy, lhs, coup = [], [], []
    for i in range(n):
        for j in range(i + 1, n):
            dxy.append(distance(space, pts[i], pts[j]))
            lhs.append(distance(space, imgs[i], imgs[j]))
            di = distance(space, pts[i], imgs[i])
            dj = distance(space, pts[j], imgs[j])
            coup.append(di * dj if variant == "product" else di + dj)
    dxy, lhs, coup = np.array(dxy), np.array(lhs), np.array(coup)
    rational = coup / (1.0 + dxy)
    admissible = []
    ks = np.arange(step, 1.0, step)
    for lam in ks:
        for beta in ks:
            if lam + beta >= 1.0:
                break
            if np.all(lhs <= lam * dxy + beta * rational + tol):
                admissible.append((float(lam), float(beta)))
    if not admissible:
        return None, []
    best = min(admissible, key=lambda p: (p[0] / (1.0 - p[1]), p[0], p[1]))
    return check_fisher(space, mapping, best[0], best[1], variant, tol), admissible


# ---------------------------------------------------------------------------
# JSON mapping files


def map_from_dict(doc: dict) -> MapSpec:
    if not isinstance(doc, dict):
        raise SpaceError("mapping document must be a JSON object")
    kind = doc.get("kind")
    if kind == "table":
        entries = {}
        for a, b in doc.get("entries", []):
            la = a if isinstance(a, str) else canonical_label(parse_scalar(a))
            lb = b if isinstance(b, str) else canonical_label(parse_scalar(b))
            entries[la] = lb
        return MapSpec("table", entries=entries)
    if kind == "registered":
        return MapSpec("registered", name=doc.get("name"), params=doc.get("params", {}))
    raise SpaceError(f"unknown map kind {kind!r}")


def load_map(path) -> MapSpec:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpaceError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return map_from_dict(doc)
