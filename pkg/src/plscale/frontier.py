"""IsoFLOPs profiling: bin runs by compute budget and locate loss valleys.

Within each budget the final loss is modelled as a parabola in ``log10 N``;
its vertex is the compute-optimal model size and the band where the parabola
stays within ``epsilon`` of the minimum is the frontier interval.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, NamedTuple

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .powerlaw import PowerLaw, fit_powerlaw
from .runs import CurvePoint, TrainingRun

logger = logging.getLogger(__name__)

DEFAULT_REL_TOL = 0.1
DEFAULT_EPSILON = 0.01
DEFAULT_MAX_TOKENS = 200e9
DEFAULT_MIN_STEPS = 20_000

# curvature below this is treated as a flat (collinear) fit
_MIN_CURVATURE = 1e-12


def smooth_curve(curve: Sequence[CurvePoint], window: int) -> list[CurvePoint]:
    """Centred moving average of the loss, truncated at the ends.

    Token coordinates are untouched; each loss becomes the mean over up to
    ``window`` neighbouring points.
    """
    if window < 1:
        raise ValidationError("window must be >= 1")
    if len(curve) == 0:
        raise ValidationError("cannot smooth an empty curve")
    losses = np.array([p[1] for p in curve], dtype=float)
    n = losses.size
    left, right = (window - 1) // 2, window // 2
    csum = np.concatenate([[0.0], np.cumsum(losses)])
    out = []
    for i, point in enumerate(curve):
        lo, hi = max(0, i - left), min(n, i + right + 1)
        if np.all(losses[lo:hi] == losses[i]):
            mean = losses[i]  # exact for flat stretches
        else:
            mean = (csum[hi] - csum[lo]) / (hi - lo)
        out.append(CurvePoint(point[0], float(mean)))
    return out


class Valley(NamedTuple):
    n_opt: float
    l_min: float
    boundary: bool
    coeffs: tuple[float, float, float] | None  # (c0, c1, c2) in u = log10 N


class Interval(NamedTuple):
    n_low: float
    n_high: float

    def multipliers(self, n_opt: float) -> tuple[float, float]:
        """Relative adjustments, e.g. ``(-0.4, 0.8)`` for ``[0.6, 1.8] * n_opt``."""
        return self.n_low / n_opt - 1.0, self.n_high / n_opt - 1.0


@dataclass(frozen=True)
class IsoFlopsGroup:
    budget: float
    points: tuple[tuple[float, float], ...]  # (n_params, final_loss), sorted by n_params
    run_ids: tuple[str, ...] = ()
    valley: Valley | None = None
    interval: Interval | None = None

    def __post_init__(self) -> None:
        if self.valley is not None and self.interval is not None:
            if not self.interval.n_low <= self.valley.n_opt <= self.interval.n_high:
                raise ValidationError("frontier interval must contain n_opt")

    @property
    def tokens_opt(self) -> float | None:
        return None if self.valley is None else self.budget / (6.0 * self.valley.n_opt)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "budget": self.budget,
            "points": [list(p) for p in self.points],
            "run_ids": list(self.run_ids),
        }
        if self.valley is not None:
            out["valley"] = {
                "n_opt": self.valley.n_opt,
                "l_min": self.valley.l_min,
                "tokens_opt": self.tokens_opt,
                "boundary": self.valley.boundary,
            }
        if self.interval is not None:
            low, high = self.interval.multipliers(self.valley.n_opt) if self.valley else (None, None)
            out["interval"] = {
                "n_low": self.interval.n_low,
                "n_high": self.interval.n_high,
                "decrease": low,
                "increase": high,
            }
        return out


class Exclusion(NamedTuple):
    run_id: str
    reason: str


class Grouping(NamedTuple):
    groups: list[IsoFlopsGroup]
    excluded: list[Exclusion]


def final_loss(run: TrainingRun, window: int = 1) -> float:
    if window == 1:
        return run.final_loss
    return smooth_curve(run.curve, window)[-1].loss


def group_isoflops(
    runs: Iterable[TrainingRun],
    budgets: Sequence[float],
    rel_tol: float = DEFAULT_REL_TOL,
    max_tokens: float | None = DEFAULT_MAX_TOKENS,
    min_steps: int = DEFAULT_MIN_STEPS,
    *,
    smooth_window: int = 1,
) -> Grouping:
    """Assign runs to the nearest FLOP budget within ``rel_tol``.

    Runs trained on more than ``max_tokens`` tokens or for fewer than
    ``min_steps`` steps are excluded, as are runs near no budget. Each
    excluded run is reported once, with the first reason that applied. When a
    run logs neither steps nor batch size the step filter is skipped for it
    with a warning.
    """
    budgets = [float(b) for b in budgets]
    if not budgets:
        raise ValidationError("budgets must not be empty")
    if any(b <= 0 for b in budgets) or any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValidationError("budgets must be positive and strictly increasing")
    if not 0 < rel_tol < 0.5:
        raise ValidationError("rel_tol must lie in (0, 0.5)")

    log_budgets = np.log(budgets)
    members: list[list[tuple[float, float, str]]] = [[] for _ in budgets]
    excluded: list[Exclusion] = []
    for run in runs:
        if max_tokens is not None and run.final_tokens > max_tokens:
            excluded.append(Exclusion(run.id, "token budget exceeded"))
            continue
        if min_steps > 0:
            steps = run.estimated_steps
            if steps is None:
                logger.warning("run %s logs no steps or batch size; step filter skipped", run.id)
            elif steps < min_steps:
                excluded.append(Exclusion(run.id, "too few training steps"))
                continue
        c = run.flops
        if c <= 0:
            excluded.append(Exclusion(run.id, "zero compute"))
            continue
        i = int(np.argmin(np.abs(log_budgets - math.log(c))))
        if abs(c - budgets[i]) > rel_tol * budgets[i]:
            excluded.append(Exclusion(run.id, "no budget within tolerance"))
            continue
        members[i].append((float(run.n_params), final_loss(run, smooth_window), run.id))

    groups = []
    for budget, pts in zip(budgets, members):
        if not pts:
            continue
        pts.sort()
        groups.append(
            IsoFlopsGroup(
                budget=budget,
                points=tuple((n, loss) for n, loss, _ in pts),
                run_ids=tuple(rid for _, _, rid in pts),
            )
        )
    return Grouping(groups, excluded)


def _pointwise_valley(n: np.ndarray, loss: np.ndarray, coeffs) -> Valley:
    i = int(np.argmin(loss))
    return Valley(float(n[i]), float(loss[i]), True, coeffs)


def valley(group: IsoFlopsGroup) -> Valley:
    """Vertex of the least-squares parabola ``L = c0 + c1*u + c2*u**2``, ``u = log10 N``.

    Falls back to the lowest observed point (``boundary=True``) when the
    parabola opens downward, is flat, or peaks outside the sampled range.
    """
    n = np.array([p[0] for p in group.points], dtype=float)
    loss = np.array([p[1] for p in group.points], dtype=float)
    if np.unique(n).size < 3:
        raise InsufficientDataError(f"valley needs >= 3 distinct model sizes, got {np.unique(n).size}")
    u = np.log10(n)
    centre = u.mean()
    x = u - centre
    design = np.stack([np.ones_like(x), x, x * x], axis=1)
    (k0, k1, k2), *_ = np.linalg.lstsq(design, loss, rcond=None)
    # back to coefficients in u
    c2 = k2
    c1 = k1 - 2 * k2 * centre
    c0 = k0 - k1 * centre + k2 * centre**2
    coeffs = (float(c0), float(c1), float(c2))
    if not k2 > _MIN_CURVATURE:
        return _pointwise_valley(n, loss, None)
    x_opt = -k1 / (2 * k2)
    u_opt = centre + x_opt
    if not u.min() <= u_opt <= u.max():
        return _pointwise_valley(n, loss, coeffs)
    l_min = k0 + k1 * x_opt + k2 * x_opt**2
    return Valley(float(10.0**u_opt), float(l_min), False, coeffs)


def _interpolated_interval(group: IsoFlopsGroup, v: Valley, epsilon: float) -> Interval:
    u = np.log10([p[0] for p in group.points])
    loss = np.array([p[1] for p in group.points], dtype=float)
    threshold = v.l_min + epsilon
    i = int(np.argmin(np.abs(u - math.log10(v.n_opt))))

    def walk(step: int) -> float:
        j = i
        while 0 <= j + step < u.size:
            k = j + step
            if loss[k] > threshold:
                # linear crossing between j and k
                t = (threshold - loss[j]) / (loss[k] - loss[j])
                return u[j] + t * (u[k] - u[j])
            j = k
        return u[j]

    return Interval(float(10.0 ** walk(-1)), float(10.0 ** walk(1)))


def frontier_interval(group: IsoFlopsGroup, epsilon: float = DEFAULT_EPSILON) -> Interval:
    """Widest model-size band around the valley whose loss stays within ``epsilon`` of the minimum.

    Uses the fitted parabola when the valley came from one, otherwise linear
    interpolation of the observed losses. Endpoints are clamped to the
    sampled range.
    """
    v = group.valley
    if v is None:
        raise ValidationError("group has no valley; compute it first")
    if epsilon < 0:
        raise ValidationError("epsilon must be >= 0")
    n_min = min(p[0] for p in group.points)
    n_max = max(p[0] for p in group.points)
    if v.boundary or v.coeffs is None:
        return _interpolated_interval(group, v, epsilon)
    half = math.sqrt(epsilon / v.coeffs[2])
    u_opt = math.log10(v.n_opt)
    low = max(10.0 ** (u_opt - half), n_min)
    high = min(10.0 ** (u_opt + half), n_max)
    # keep n_opt inside after float round-trips
    return Interval(min(low, v.n_opt), max(high, v.n_opt))


def profile_group(group: IsoFlopsGroup, epsilon: float = DEFAULT_EPSILON) -> IsoFlopsGroup:
    with_valley = replace(group, valley=valley(group), interval=None)
    return replace(with_valley, interval=frontier_interval(with_valley, epsilon))


def profile_groups(
    groups: Sequence[IsoFlopsGroup], epsilon: float = DEFAULT_EPSILON, *, workers: int = 1
) -> list[IsoFlopsGroup]:
    """Valley and interval for every group with at least 3 distinct sizes; others are dropped."""
    usable = []
    for g in groups:
        if len({p[0] for p in g.points}) >= 3:
            usable.append(g)
        else:
            logger.warning("budget %.3g has fewer than 3 distinct model sizes; skipped", g.budget)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda g: profile_group(g, epsilon), usable))
    return [profile_group(g, epsilon) for g in usable]


@dataclass(frozen=True)
class FrontierLaws:
    """Power laws fitted through per-budget valleys."""

    n_of_c: PowerLaw
    d_of_c: PowerLaw
    loss_of_n: PowerLaw
    loss_of_d: PowerLaw
    loss_of_c: PowerLaw

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "objective",
            **{k: getattr(self, k).to_dict() for k in ("n_of_c", "d_of_c", "loss_of_n", "loss_of_d", "loss_of_c")},
        }


def fit_frontier(groups: Sequence[IsoFlopsGroup]) -> FrontierLaws:
    """Fit N(C), D(C) and the loss laws L(N), L(D), L(C) through profiled groups."""
    prof = [g for g in groups if g.valley is not None]
    if len(prof) < 2:
        raise InsufficientDataError(f"need >= 2 profiled budgets to fit the frontier, got {len(prof)}")
    c = [g.budget for g in prof]
    n = [g.valley.n_opt for g in prof]
    d = [g.tokens_opt for g in prof]
    loss = [g.valley.l_min for g in prof]
    return FrontierLaws(
        n_of_c=fit_powerlaw(zip(c, n), "C", "N"),
        d_of_c=fit_powerlaw(zip(c, d), "C", "D"),
        loss_of_n=fit_powerlaw(zip(n, loss), "N", "L"),
        loss_of_d=fit_powerlaw(zip(d, loss), "D", "L"),
        loss_of_c=fit_powerlaw(zip(c, loss), "C", "L"),
    )


def group_to_csv(group: IsoFlopsGroup) -> str:
    """Plot rows: ``n_params, final_loss, in_interval, is_valley``.

    ``is_valley`` marks the sampled point closest (in log N) to the valley.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n_params", "final_loss", "in_interval", "is_valley"])
    nearest = None
    if group.valley is not None:
        u_opt = math.log10(group.valley.n_opt)
        nearest = min(range(len(group.points)), key=lambda i: abs(math.log10(group.points[i][0]) - u_opt))
    for i, (n, loss) in enumerate(group.points):
        inside = group.interval is not None and group.interval.n_low <= n <= group.interval.n_high
        writer.writerow([repr(n), repr(loss), str(inside).lower(), str(i == nearest).lower()])
    return buf.getvalue()
