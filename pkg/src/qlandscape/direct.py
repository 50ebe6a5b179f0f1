"""DIRECT-style global optimizer with Lipschitz pruning, and a grid-search oracle.

Rectangle sizes use the L1 radius (sum of half-widths) because the landscape's
certified Lipschitz constant is an L1 bound: for any point ``u`` in a rectangle
with centre ``c``, ``|J(u) - J(c)| <= K ||u - c||_1 <= K * l1_radius``.
"""
import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import LandscapeProblem, evaluate_many
from .errors import CapacityError

log = logging.getLogger(__name__)

GRID_ELEMENT_BUDGET = 10**7


@dataclass(frozen=True)
class Objective:
    """Black-box objective on a box; ``evaluate`` maps ``(M, N)`` rows to ``(M,)`` values."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    k_bar: float = math.inf
    delta_o: float = 1.0

    @property
    def n_dims(self) -> int:
        return len(self.lower)


def as_objective(target, k_bar=None) -> Objective:
    if isinstance(target, Objective):
        return target
    if isinstance(target, LandscapeProblem):
        u_max = target.grid.u_max
        n = target.n_steps
        k = target.lipschitz_constant if k_bar is None else k_bar
        return Objective(
            lambda c: evaluate_many(target, c),
            np.full(n, -u_max),
            np.full(n, u_max),
            k,
            target.observable_span,
        )
    raise TypeError("expected a LandscapeProblem or an Objective")


@dataclass(eq=False)
class Rectangle:
    center: np.ndarray
    half_widths: np.ndarray
    value: float
    index: int = 0

    @property
    def l1_radius(self) -> float:
        return float(np.sum(self.half_widths))

    def contains(self, u, tol=1e-12) -> bool:
        return bool(np.all(np.abs(np.asarray(u) - self.center) <= self.half_widths + tol))


@dataclass(frozen=True)
class Certificate:
    prunable: bool
    margin: float


def pruning_certificate(rect: Rectangle, incumbent, k_bar, epsilon_prune) -> Certificate:
    """Lipschitz certificate for minimisation.

    ``margin = value - k_bar * l1_radius - (incumbent - epsilon_prune)``; the
    rectangle cannot hold a value below ``incumbent - epsilon_prune`` when
    the margin is non-negative.
    """
    if k_bar == 0:
        lower = rect.value
    elif math.isinf(k_bar):
        lower = -math.inf
    else:
        lower = rect.value - k_bar * rect.l1_radius
    margin = lower - (incumbent - epsilon_prune)
    return Certificate(bool(margin >= 0), float(margin))


@dataclass(frozen=True)
class PruneRecord:
    center: np.ndarray
    half_widths: np.ndarray
    value: float
    incumbent: float
    margin: float
    k_bar: float
    epsilon_prune: float
    iteration: int


@dataclass
class DirectConfig:
    prune: bool = True
    epsilon_prune: Optional[float] = None
    k_bar: Optional[float] = None
    jones_epsilon: float = 1e-4
    min_radius: float = 0.0

    def resolved(self, objective: Objective):
        eps = 1e-4 * objective.delta_o if self.epsilon_prune is None else self.epsilon_prune
        k_bar = objective.k_bar if self.k_bar is None else self.k_bar
        return eps, k_bar


@dataclass
class OptimizerTrace:
    """Everything the optimizer did, in objective units (``J``, not ``-J``)."""

    mode: str
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)
    incumbents: list = field(default_factory=list)
    pruned: list = field(default_factory=list)
    selections: list = field(default_factory=list)
    termination: str = ""

    @property
    def evaluations(self):
        return list(zip(self.points, self.values))

    @property
    def n_evaluations(self) -> int:
        return len(self.values)

    def rows(self):
        """One row per evaluation with the incumbent after that evaluation."""
        for i, (u, j) in enumerate(zip(self.points, self.values)):
            row = {"eval": i, "value": float(j), "incumbent": float(self.incumbents[i])}
            row.update({f"u{k + 1}": float(x) for k, x in enumerate(u)})
            yield row


@dataclass(frozen=True)
class OptimizeResult:
    u: np.ndarray
    value: float
    trace: OptimizerTrace


def _size_key(rect: Rectangle) -> float:
    return round(rect.l1_radius, 12)


def _potentially_optimal(buckets, min_radius, jones_epsilon):
    """Size keys on the lower-right convex hull of (l1_radius, best value per size)."""
    sizes = sorted(k for k, heap in buckets.items() if heap and k > min_radius)
    vals = [buckets[k][0][0] for k in sizes]
    f_min = min(vals)
    start = max(i for i, v in enumerate(vals) if v == f_min)
    hull = []
    for i in range(start, len(sizes)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (sizes[b] - sizes[a]) * (vals[i] - vals[a]) - (vals[b] - vals[a]) * (sizes[i] - sizes[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    chosen = []
    for pos, i in enumerate(hull):
        if pos + 1 < len(hull):
            j = hull[pos + 1]
            slope = (vals[j] - vals[i]) / (sizes[j] - sizes[i])
            if vals[i] - slope * sizes[i] > f_min - jones_epsilon * abs(f_min):
                continue
        chosen.append(sizes[i])
    return chosen


def _trisect(rect: Rectangle):
    axis = int(np.argmax(rect.half_widths))
    h = rect.half_widths.copy()
    h[axis] /= 3.0
    offset = np.zeros_like(rect.center)
    offset[axis] = 2.0 * h[axis]
    return axis, h, rect.center - offset, rect.center + offset


def optimize(target, budget, mode="minimize", config: Optional[DirectConfig] = None) -> OptimizeResult:
    """DIRECT with optional Lipschitz pruning after convex-hull selection.

    Stops when the evaluation budget is spent, when every rectangle is pruned
    (a certified optimum up to ``epsilon_prune``), or when no live rectangle is
    larger than ``config.min_radius``.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if mode not in ("minimize", "maximize"):
        raise ValueError("mode must be 'minimize' or 'maximize'")
    objective = as_objective(target)
    config = config or DirectConfig()
    eps, k_bar = config.resolved(objective)
    if not config.prune:
        k_bar = math.inf
    lower, upper = np.asarray(objective.lower, float), np.asarray(objective.upper, float)
    if np.any(upper <= lower):
        raise ValueError("the search box has zero volume")
    sign = 1.0 if mode == "minimize" else -1.0
    trace = OptimizerTrace(mode)
    state = {"best": math.inf, "best_u": None}

    def evaluate(centers):
        vals = sign * np.asarray(objective.evaluate(np.asarray(centers)), dtype=float)
        for u, f in zip(centers, vals):
            trace.points.append(np.array(u))
            trace.values.append(sign * float(f))
            if f < state["best"]:
                state["best"], state["best_u"] = float(f), np.array(u)
            trace.incumbents.append(sign * state["best"])
        return vals

    center = (lower + upper) / 2
    root = Rectangle(center, (upper - lower) / 2, float(evaluate([center])[0]), 0)
    # rectangles grouped by size; each heap is ordered by (value, creation index)
    rects = {0: root}
    buckets = {_size_key(root): [(root.value, 0)]}

    def push(rect):
        heapq.heappush(buckets.setdefault(_size_key(rect), []), (rect.value, rect.index))

    counter = 1
    iteration = 0
    while True:
        if not rects:
            trace.termination = "certified"
            break
        if not any(heap for k, heap in buckets.items() if k > config.min_radius):
            trace.termination = "min_radius"
            break
        if trace.n_evaluations + 2 > budget:
            trace.termination = "budget"
            break
        iteration += 1
        chosen = _potentially_optimal(buckets, config.min_radius, config.jones_epsilon)
        divided = []
        for key in chosen:
            rect = rects[buckets[key][0][1]]
            cert = pruning_certificate(rect, state["best"], k_bar, eps)
            if config.prune and cert.prunable:
                heapq.heappop(buckets[key])
                del rects[rect.index]
                trace.pruned.append(
                    PruneRecord(
                        rect.center.copy(), rect.half_widths.copy(), sign * rect.value,
                        sign * state["best"], cert.margin, k_bar, eps, iteration,
                    )
                )
                continue
            if trace.n_evaluations + 2 * (len(divided) + 1) > budget:
                break
            heapq.heappop(buckets[key])
            divided.append(rect)
        trace.selections.append(
            {"iteration": iteration, "selected": len(chosen), "divided": len(divided),
             "pruned_total": len(trace.pruned)}
        )
        if not divided:
            continue
        splits = [_trisect(r) for r in divided]
        centers = [c for _, _, left, right in splits for c in (left, right)]
        vals = evaluate(centers)
        for n, (rect, (_, h, left, right)) in enumerate(zip(divided, splits)):
            rect.half_widths = h
            push(rect)
            for offset, c in enumerate((left, right)):
                child = Rectangle(c, h.copy(), float(vals[2 * n + offset]), counter)
                rects[counter] = child
                push(child)
                counter += 1
    log.debug("direct stopped (%s) after %d evaluations", trace.termination, trace.n_evaluations)
    return OptimizeResult(state["best_u"], sign * state["best"], trace)


def grid_search(target, resolution, mode="minimize", element_budget=GRID_ELEMENT_BUDGET):
    """Exhaustive evaluation on a regular grid that includes the box corners."""
    objective = as_objective(target)
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    total = resolution**objective.n_dims
    if total > element_budget:
        raise CapacityError(f"grid of {total} points exceeds the budget of {element_budget}")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(objective.lower, objective.upper)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, objective.n_dims)
    best_u, best = None, None
    for start in range(0, total, 1 << 16):
        chunk = pts[start:start + (1 << 16)]
        vals = np.asarray(objective.evaluate(chunk), dtype=float)
        i = int(np.argmin(vals) if mode == "minimize" else np.argmax(vals))
        if best is None or (vals[i] < best if mode == "minimize" else vals[i] > best):
            best, best_u = float(vals[i]), chunk[i].copy()
    return best_u, best


def audit_pruned(target, trace: OptimizerTrace, resolution=11, tol=1e-12):
    """Evaluate a fine grid inside each pruned rectangle and count certificate violations.

    A violation is a point better than ``incumbent - epsilon_prune`` at the
    moment of pruning.
    """
    objective = as_objective(target)
    sign = 1.0 if trace.mode == "minimize" else -1.0
    ticks = np.linspace(-1.0, 1.0, resolution)
    unit = np.stack(np.meshgrid(*[ticks] * objective.n_dims, indexing="ij"), -1).reshape(-1, objective.n_dims)
    violations, worst = 0, math.inf
    for rec in trace.pruned:
        pts = rec.center + unit * rec.half_widths
        f = sign * np.asarray(objective.evaluate(pts), dtype=float)
        gap = f.min() - (sign * rec.incumbent - rec.epsilon_prune)
        worst = min(worst, float(gap))
        violations += int(gap < -tol)
    return violations, worst


def check_min_distance(trace: OptimizerTrace, k_bar, tol=1e-12) -> int:
    """Count evaluated pairs closer in L1 than their value gap allows."""
    if not math.isfinite(k_bar):
        return 0
    pts = np.asarray(trace.points)
    vals = np.asarray(trace.values)
    bad = 0
    for start in range(0, len(pts), 256):
        p = pts[start:start + 256]
        dist = np.sum(np.abs(p[:, None, :] - pts[None, :, :]), axis=2)
        gap = np.abs(vals[start:start + 256, None] - vals[None, :])
        bad += int(np.sum(gap > k_bar * dist + tol))
    return bad
