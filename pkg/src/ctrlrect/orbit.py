"""Picard orbits and their convergence diagnostics.

An orbit is the sequence x0, T(x0), T^2(x0), ... together with consecutive
and skip distances and their decay ratios. Diagnostics restate, at the
level of the actually computed orbit, the hypotheses under which the four
contraction schemes guarantee a unique fixed point: geometric decay of
steps, vanishing skip distances, a Cauchy tail, the control-ratio
condition bounded by 1/rate^2, and finiteness of control limits along the
orbit. All window quantities are finite-horizon estimates, never proofs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .contraction import MapSpec, SCHEMES, apply_map
from .space import Point, SpaceDef, control, distance

DEFAULT_TOL = 1e-9

FIXED_POINT_REACHED = "fixed_point_reached"
EPS_REACHED = "eps_reached"
MAX_ITER = "max_iter"


@dataclass
class OrbitTrace:
    points: list[Point]
    step_dists: list[float]
    skip_dists: list[float]
    decay_ratios: list[float | None]
    stop_reason: str
    fixed_point: Point | None
    eps: float
    space: SpaceDef = field(repr=False)
    mapping: MapSpec = field(repr=False)

    def __len__(self):
        return len(self.points)

    def records(self):
        """One dict per orbit index, aligned with the points list."""
        out = []
        for n, p in enumerate(self.points):
            out.append(
                {
                    "n": n,
                    "x": p.label,
                    "value": p.value,
                    "step_dist": self.step_dists[n] if n < len(self.step_dists) else None,
                    "skip_dist": self.skip_dists[n] if n < len(self.skip_dists) else None,
                    "decay_ratio": self.decay_ratios[n] if n < len(self.decay_ratios) else None,
                }
            )
        return out


def picard(
    space: SpaceDef,
    mapping: MapSpec,
    x0: Point,
    eps: float = 1e-8,
    max_iter: int = 200,
) -> OrbitTrace:
    """Iterate x_{n+1} = T(x_n) until an exact fixed point is hit, the step
    distance drops to eps, or max_iter applications.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    points = [x0]
    steps: list[float] = []
    stop, fixed = MAX_ITER, None
    for _ in range(max_iter):
        nxt = apply_map(space, mapping, points[-1])
        d = distance(space, points[-1], nxt)
        points.append(nxt)
        steps.append(d)
        if nxt.label == points[-2].label:
            stop, fixed = FIXED_POINT_REACHED, nxt
            break
        if d <= eps:
            stop, fixed = EPS_REACHED, nxt
            break
    skips = [distance(space, points[n], points[n + 2]) for n in range(len(points) - 2)]
    ratios: list[float | None] = []
    for n in range(len(steps) - 1):
        ratios.append(steps[n + 1] / steps[n] if steps[n] > 0 else None)
    return OrbitTrace(points, steps, skips, ratios, stop, fixed, eps, space, mapping)


@dataclass
class DecayReport:
    rate: float
    holds: bool
    first_fail: int | None
    max_excess: float
    checked: int

    def to_dict(self):
        return {
            "rate": self.rate,
            "holds": self.holds,
            "first_fail": self.first_fail,
            "max_excess": self.max_excess,
            "checked": self.checked,
        }


def decay_check(trace: OrbitTrace, rate: float, tol: float = DEFAULT_TOL) -> DecayReport:
    """Check the geometric envelope step[n] <= rate^n * step[0] + tol."""
    if not trace.step_dists:
        raise ValueError("empty trace")
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must lie in [0, 1), got {rate}")
    d0 = trace.step_dists[0]
    first_fail, max_excess = None, -math.inf
    for n, d in enumerate(trace.step_dists):
        excess = d - (rate**n) * d0 - tol
        max_excess = max(max_excess, excess)
        if excess > 0 and first_fail is None:
            first_fail = n
    return DecayReport(rate, first_fail is None, first_fail, max_excess, len(trace.step_dists))


@dataclass
class SkipReport:
    holds: bool
    tail_max: float
    tail_start: int
    tol: float

    def to_dict(self):
        return {
            "holds": self.holds,
            "tail_max": self.tail_max,
            "tail_start": self.tail_start,
            "tol": self.tol,
        }


def skip_check(trace: OrbitTrace, tol: float = 1e-6) -> SkipReport:
    """Check that skip distances d(x_n, x_{n+2}) die out: maximum over the
    final quarter of the trace at most tol.
    """
    if len(trace.points) < 4:
        raise ValueError(f"trace too short for skip check: {len(trace.points)} points")
    k = len(trace.skip_dists)
    start = max(0, k - max(1, k // 4))
    tail_max = max(trace.skip_dists[start:])
    return SkipReport(tail_max <= tol, tail_max, start, tol)


@dataclass
class CauchyReport:
    tail_max: float
    within_tol: bool
    worst_pair: tuple[int, int]
    tail_start: int
    tail_at_fixed_point: bool | None
    tol: float

    def to_dict(self):
        return {
            "tail_max": self.tail_max,
            "within_tol": self.within_tol,
            "worst_pair": list(self.worst_pair),
            "tail_start": self.tail_start,
            "tail_at_fixed_point": self.tail_at_fixed_point,
            "tol": self.tol,
        }


def cauchy_probe(space: SpaceDef, trace: OrbitTrace, tol: float = 1e-6) -> CauchyReport:
    """Maximum pairwise distance over the tail half of the orbit, plus the
    operational limit-uniqueness check: every tail point within tol of the
    detected fixed point.
    """
    if len(trace.points) < 8:
        raise ValueError(f"trace too short for a Cauchy probe: {len(trace.points)} points")
    start = len(trace.points) // 2
    tail = trace.points[start:]
    tail_max, worst = 0.0, (start, start + 1)
    for i in range(len(tail)):
        for j in range(i + 1, len(tail)):
            d = distance(space, tail[i], tail[j])
            if d > tail_max:
                tail_max, worst = d, (start + i, start + j)
    at_fp = None
    if trace.fixed_point is not None:
        at_fp = all(distance(space, p, trace.fixed_point) <= tol for p in tail)
    return CauchyReport(tail_max, tail_max <= tol, worst, start, at_fp, tol)


@dataclass
class AprioriReport:
    applicable: bool
    holds: bool
    first_fail: int | None
    max_excess: float
    checked: int

    def to_dict(self):
        return {
            "applicable": self.applicable,
            "holds": self.holds,
            "first_fail": self.first_fail,
            "max_excess": self.max_excess,
            "checked": self.checked,
            "informational_only": not self.applicable,
        }


def apriori_bound(trace: OrbitTrace, k: float, tol: float = DEFAULT_TOL) -> AprioriReport:
    """Check d(x_n, z) <= k^n/(1-k) d(x0, x1) + tol against the detected
    fixed point z.

    The bound is a classical-metric estimate: the report is marked
    applicable only when the triangle inequality holds on the orbit's own
    points, and is informational otherwise.
    """
    if trace.fixed_point is None:
        raise ValueError("a-priori bound needs a detected fixed point")
    if not 0.0 < k < 1.0:
        raise ValueError(f"k must lie in (0, 1), got {k}")
    space, z = trace.space, trace.fixed_point
    d0 = trace.step_dists[0]
    first_fail, max_excess = None, -math.inf
    for n, p in enumerate(trace.points):
        excess = distance(space, p, z) - (k**n) / (1.0 - k) * d0 - tol
        max_excess = max(max_excess, excess)
        if excess > 0 and first_fail is None:
            first_fail = n
    applicable = _orbit_is_metric(space, trace.points, tol)
    return AprioriReport(applicable, first_fail is None, first_fail, max_excess, len(trace.points))


def _orbit_is_metric(space, points, tol):
    seen, uniq = set(), []
    for p in points:
        if p.label not in seen:
            seen.add(p.label)
            uniq.append(p)
    for x in uniq:
        for y in uniq:
            if y.label == x.label:
                continue
            dxy = distance(space, x, y)
            for z in uniq:
                if z.label in (x.label, y.label):
                    continue
                if dxy > distance(space, x, z) + distance(space, z, y) + tol:
                    return False
    return True


@dataclass
class StartResult:
    start: str
    stop_reason: str
    iterations: int
    fixed_point: str | None

    def to_dict(self):
        return {
            "start": self.start,
            "stop_reason": self.stop_reason,
            "iterations": self.iterations,
            "fixed_point": self.fixed_point,
        }


@dataclass
class UniquenessReport:
    unique: bool
    all_converged: bool
    fixed_points: list[Point]
    results: list[StartResult]
    eps: float

    def to_dict(self):
        return {
            "unique": self.unique,
            "all_converged": self.all_converged,
            "fixed_points": [p.label for p in self.fixed_points],
            "results": [r.to_dict() for r in self.results],
            "eps": self.eps,
        }


def uniqueness_probe(
    space: SpaceDef,
    mapping: MapSpec,
    starts: list[Point],
    eps: float = 1e-8,
    max_iter: int = 200,
) -> UniquenessReport:
    """Run Picard iteration from several starts and cluster the fixed
    points found; unique means every pair of found fixed points lies within
    eps of each other.
    """
    if len(starts) < 2:
        raise ValueError("uniqueness probe needs at least two starting points")
    results, found = [], []
    for x0 in starts:
        tr = picard(space, mapping, x0, eps=eps, max_iter=max_iter)
        fp = tr.fixed_point
        results.append(
            StartResult(x0.label, tr.stop_reason, len(tr.step_dists), fp.label if fp else None)
        )
        if fp is not None:
            found.append(fp)
    clusters: list[Point] = []
    for fp in found:
        if not any(distance(space, fp, rep) <= eps for rep in clusters):
            clusters.append(fp)
    unique = len(found) >= 1 and len(clusters) == 1
    return UniquenessReport(unique, len(found) == len(starts), clusters, results, eps)


# ---------------------------------------------------------------------------
# Control-ratio convergence condition


@dataclass
class AuxLimit:
    name: str
    estimate: float | None
    bound: float | None
    holds: bool | None

    def to_dict(self):
        return {"name": self.name, "estimate": self.estimate, "bound": self.bound, "holds": self.holds}


@dataclass
class ConditionEstimate:
    scheme: str
    constants: dict
    horizon: int
    window_start: int
    threshold: float
    estimate: float
    alt_estimate: float
    holds: bool
    ratio_rows: list[tuple[int, int, float]]
    aux_limits: list[AuxLimit]
    alpha_limits_bounded: bool
    cycle_detected: bool
    fixed_point: str | None
    tol: float

    def to_dict(self, include_rows: bool = False) -> dict:
        out = {
            "scheme": self.scheme,
            "constants": dict(self.constants),
            "horizon": self.horizon,
            "window_start": self.window_start,
            "threshold": self.threshold,
            "estimate": self.estimate,
            "alt_estimate": self.alt_estimate,
            "holds": self.holds,
            "alpha_limits_bounded": self.alpha_limits_bounded,
            "aux_limits": [a.to_dict() for a in self.aux_limits],
            "cycle_detected": self.cycle_detected,
            "fixed_point": self.fixed_point,
            "tol": self.tol,
        }
        if include_rows:
            out["ratio_rows"] = [[i, m, v] for i, m, v in self.ratio_rows]
        return out


def _rate_constant(scheme: str, constants) -> tuple[float, dict]:
    if scheme in ("banach", "kannan"):
        k = float(constants)
        return k, {"k": k}
    if scheme == "reich":
        lam = float(constants)
        return lam, {"lambda": lam}
    if scheme == "fisher":
        lam, beta = (float(constants[0]), float(constants[1]))
        return lam + beta, {"lambda": lam, "beta": beta}
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def condition_estimate(
    space: SpaceDef,
    mapping: MapSpec,
    x0: Point,
    scheme: str,
    constants,
    horizon: int = 64,
    tol: float = DEFAULT_TOL,
) -> ConditionEstimate:
    """Finite-horizon estimate of the control-ratio condition

        a(x_{i+1}, x_m) * (a(x_{i+1},x_{i+2}) + a(x_{i+2},x_{i+3}))
                        / (a(x_i,x_{i+1})   + a(x_{i+1},x_{i+2}))  <  1/c^2

    with c the scheme's rate constant (k, k, lam, lam+beta). The estimate
    is the maximum over i in the final quarter of [0, horizon] and
    m in [1, horizon] excluding {i, ..., i+3}; it upper-bounds both the
    lim-sup and sup-lim readings at this horizon. alt_estimate replaces the
    leading factor by a(x_i, x_m). Also estimates the auxiliary control
    limits along the orbit, using the detected fixed point as the limit
    point when one appears.
    """
    if horizon < 8:
        raise ValueError(f"horizon must be >= 8, got {horizon}")
    c, const_dict = _rate_constant(scheme, constants)
    if not 0.0 < c < 1.0:
        raise ValueError(f"rate constant must lie in (0, 1), got {c}")
    threshold = 1.0 / (c * c)

    pts = [x0]
    seen = {x0.label: 0}
    fixed: Point | None = None
    cycle = False
    for n in range(horizon + 3):
        nxt = apply_map(space, mapping, pts[-1])
        if fixed is None and nxt.label == pts[-1].label:
            fixed = nxt
        if fixed is None and nxt.label in seen and seen[nxt.label] != n:
            cycle = True
        seen.setdefault(nxt.label, n + 1)
        pts.append(nxt)

    def a(i, j):
        return control(space, pts[i], pts[j])

    window_start = max(0, (3 * horizon) // 4)
    rows: list[tuple[int, int, float]] = []
    estimate, alt_estimate = 0.0, 0.0
    for i in range(window_start, horizon + 1):
        bracket = (a(i + 1, i + 2) + a(i + 2, i + 3)) / (a(i, i + 1) + a(i + 1, i + 2))
        for m in range(1, horizon + 1):
            if i <= m <= i + 3:
                continue
            val = a(i + 1, m) * bracket
            rows.append((i, m, val))
            estimate = max(estimate, val)
            alt_estimate = max(alt_estimate, a(i, m) * bracket)

    aux = _aux_limits(space, pts, fixed, scheme, const_dict, window_start, horizon)
    bounded = all(l.estimate is None or math.isfinite(l.estimate) for l in aux)
    return ConditionEstimate(
        scheme,
        const_dict,
        horizon,
        window_start,
        threshold,
        estimate,
        alt_estimate,
        estimate < threshold - tol,
        rows,
        aux,
        bounded,
        cycle,
        fixed.label if fixed else None,
        tol,
    )


def _aux_limits(space, pts, fixed, scheme, consts, window_start, horizon):
    def a(x, y):
        return control(space, x, y)

    tail = range(window_start, horizon + 1)

    def tail_max(fn):
        return max(fn(n) for n in tail)

    limits: list[AuxLimit] = []

    def add(name, estimate, bound):
        holds = None
        if estimate is not None and bound is not None:
            holds = estimate < bound
        limits.append(AuxLimit(name, estimate, bound, holds))

    est_pairs = max(
        a(pts[n], pts[m]) for n in tail for m in tail if n != m
    )
    est_to_z = tail_max(lambda n: a(pts[n], fixed)) if fixed else None
    est_from_z = tail_max(lambda n: a(fixed, pts[n])) if fixed else None

    # Boundedness of the control along the orbit (no numeric bound).
    add("alpha(x_n, x)", est_to_z, None)
    add("alpha(x, x_n)", est_from_z, None)
    add("alpha(x_n, x_m)", est_pairs, None)

    if scheme == "kannan":
        k = consts["k"]
        est = tail_max(lambda n: a(pts[n + 1], fixed)) if fixed else None
        add("alpha(Tx_n, Tz)", est, 1.0 / k)
    elif scheme == "reich":
        lam = consts["lambda"]
        add("alpha(x_n, T2x_n)", tail_max(lambda n: a(pts[n], pts[n + 2])), 1.0 / lam)
        est = tail_max(lambda n: a(pts[n + 1], fixed)) if fixed else None
        add("alpha(Tx_n, Tz)", est, 1.0 / lam)
        est = tail_max(lambda n: a(fixed, pts[n + 1])) if fixed else None
        add("alpha(Tz, Tx_n)", est, 1.0 / lam)
    elif scheme == "fisher":
        s = consts["lambda"] + consts["beta"]
        add("alpha(x_n, x_m) vs 1/(lambda+beta)", est_pairs, 1.0 / s)
        add("alpha(x_n, x) vs 1/(lambda+beta)", est_to_z, 1.0 / s)
    return limits


def write_ratio_csv(estimate: ConditionEstimate, path) -> None:
    """Dump the (i, m, value) ratio window to CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "m", "value"])
        for i, m, v in estimate.ratio_rows:
            w.writerow([i, m, f"{v:.15g}"])
