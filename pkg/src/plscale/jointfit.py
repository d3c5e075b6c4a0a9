"""Combined loss surface ``L(N, D) = A / N**alpha + B / D**beta + E``.

The surface is fitted in log space: with ``a = log A``, ``b = log B`` and
``e = log E`` the model log-loss is
``LSE(a - alpha * log N, b - beta * log D, e)``, and the fit minimises the
Huber loss of its residual against the observed log-loss. Local L-BFGS-B
runs start from a grid of initial points and the best result wins.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import FitError, InsufficientDataError, ValidationError

logger = logging.getLogger(__name__)

PARAM_NAMES = ("a", "b", "e", "alpha", "beta")

DEFAULT_GRID: dict[str, tuple[float, ...]] = {
    "a": (0.0, 5.0, 10.0, 15.0, 20.0, 25.0),
    "b": (0.0, 5.0, 10.0, 15.0, 20.0, 25.0),
    "e": (-1.0, -0.5, 0.0, 0.5, 1.0),
    "alpha": (0.0, 0.5, 1.0, 1.5, 2.0),
    "beta": (0.0, 0.5, 1.0, 1.5, 2.0),
}
# (a, b, e, alpha, beta) used for both objectives in the published fits
PUBLISHED_INIT = (5.0, 10.0, 1.0, 0.5, 0.5)

# zero-exponent grid starts are moved here so the surface stays decreasing
EXPONENT_NUDGE = 1e-3
_EXPONENT_FLOOR = 1e-9


@dataclass(frozen=True)
class JointLaw:
    A: float
    B: float
    E: float
    alpha: float
    beta: float
    objective_value: float = float("nan")
    n_points: int = 0
    start: tuple[float, ...] | None = None
    iterations: int = 0

    def __post_init__(self) -> None:
        for name in ("A", "B", "alpha", "beta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be finite and > 0, got {value!r}")
        if not (math.isfinite(self.E) and self.E >= 0):
            raise ValidationError(f"E must be finite and >= 0, got {self.E!r}")

    def __call__(self, n_params, tokens):
        return joint_eval(self, n_params, tokens)

    @property
    def log_params(self) -> tuple[float, float, float, float, float]:
        """``(a, b, e, alpha, beta)``; ``e`` is ``-inf`` when ``E == 0``."""
        e = math.log(self.E) if self.E > 0 else -math.inf
        return (math.log(self.A), math.log(self.B), e, self.alpha, self.beta)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "joint",
            "A": self.A,
            "B": self.B,
            "E": self.E,
            "alpha": self.alpha,
            "beta": self.beta,
            "objective_value": None if math.isnan(self.objective_value) else self.objective_value,
            "n_points": self.n_points,
            "start": None if self.start is None else dict(zip(PARAM_NAMES, self.start)),
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> JointLaw:
        start = data.get("start")
        if isinstance(start, Mapping):
            start = tuple(float(start[k]) for k in PARAM_NAMES)
        objective_value = data.get("objective_value")
        return cls(
            A=float(data["A"]),
            B=float(data["B"]),
            E=float(data.get("E", 0.0)),
            alpha=float(data["alpha"]),
            beta=float(data["beta"]),
            objective_value=float("nan") if objective_value is None else float(objective_value),
            n_points=int(data.get("n_points", 0)),
            start=None if start is None else tuple(start),
            iterations=int(data.get("iterations", 0)),
        )


@dataclass(frozen=True)
class FitSettings:
    """Controls for :func:`fit_joint`.

    ``refine_top`` limits local optimisation to the ``k`` grid starts with the
    lowest initial objective (plus the published initialisation); ``None``
    refines every grid point. ``printed_form`` switches to the variant that
    puts ``e - log L`` inside the log-sum-exp.
    """

    huber_delta: float = 1e-3
    grid: Mapping[str, Sequence[float]] = field(default_factory=lambda: dict(DEFAULT_GRID))
    max_iters: int = 1000
    convergence_tol: float = 1e-12
    refine_top: int | None = None
    include_published_init: bool = True
    printed_form: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.huber_delta > 0:
            raise ValidationError("huber_delta must be > 0")
        missing = [k for k in PARAM_NAMES if k not in self.grid]
        if missing:
            raise ValidationError(f"grid is missing {', '.join(missing)}")
        for name in PARAM_NAMES:
            if len(self.grid[name]) == 0:
                raise ValidationError(f"grid for {name} is empty")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not self.convergence_tol > 0:
            raise ValidationError("convergence_tol must be > 0")
        if self.refine_top is not None and self.refine_top < 1:
            raise ValidationError("refine_top must be >= 1")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


def huber(delta: float, r):
    """Quadratic within ``|r| <= delta``, linear outside, C1 at the seam."""
    if not delta > 0:
        raise ValidationError("delta must be > 0")
    r = np.asarray(r, dtype=float)
    ar = np.abs(r)
    out = np.where(ar <= delta, 0.5 * r * r, delta * (ar - 0.5 * delta))
    return float(out) if out.ndim == 0 else out


def lse(terms) -> float:
    """``log(sum(exp(terms)))`` without overflow."""
    arr = np.asarray(terms, dtype=float)
    if arr.size == 0:
        raise ValidationError("lse of an empty list is undefined")
    return float(logsumexp(arr))


def _log_data(data) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] == 0:
        raise ValidationError("data must be a non-empty list of (N, D, L) triples")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValidationError("N, D and L must all be finite and > 0")
    logs = np.log(arr)
    return logs[:, 0], logs[:, 1], logs[:, 2]


def _residuals(params: np.ndarray, log_n, log_d, log_l, printed_form: bool):
    """Residuals and softmax weights for a batch of parameter vectors.

    ``params`` has shape (S, 5); results have shape (S, n) and (3, S, n).
    """
    a, b, e, alpha, beta = (params[:, i : i + 1] for i in range(5))
    third = e - log_l if printed_form else np.broadcast_to(e, (params.shape[0], log_n.size))
    terms = np.stack([a - alpha * log_n, b - beta * log_d, third])
    top = terms.max(axis=0)
    w = np.exp(terms - top)
    total = w.sum(axis=0)
    r = top + np.log(total)
    if not printed_form:
        r = r - log_l
    return r, w / total


def _objective_batch(params: np.ndarray, log_n, log_d, log_l, delta: float, printed_form: bool) -> np.ndarray:
    r, _ = _residuals(params, log_n, log_d, log_l, printed_form)
    ar = np.abs(r)
    return np.where(ar <= delta, 0.5 * r * r, delta * (ar - 0.5 * delta)).sum(axis=1)


def _value_and_grad(p: np.ndarray, log_n, log_d, log_l, delta: float, printed_form: bool):
    r, w = _residuals(p[None, :], log_n, log_d, log_l, printed_form)
    r, w = r[0], w[:, 0]
    ar = np.abs(r)
    value = np.where(ar <= delta, 0.5 * r * r, delta * (ar - 0.5 * delta)).sum()
    g = np.clip(r, -delta, delta)
    grad = np.array(
        [
            np.dot(g, w[0]),
            np.dot(g, w[1]),
            np.dot(g, w[2]),
            -np.dot(g, w[0] * log_n),
            -np.dot(g, w[1] * log_d),
        ]
    )
    return float(value), grad


def joint_objective(params: Sequence[float], data, delta: float = 1e-3, *, printed_form: bool = False) -> float:
    """Sum of Huber losses of log-loss residuals for ``params = (a, b, e, alpha, beta)``.

    ``data`` holds ``(N, D, L)`` triples; all logs are natural.
    """
    if not delta > 0:
        raise ValidationError("delta must be > 0")
    log_n, log_d, log_l = _log_data(data)
    p = np.asarray(params, dtype=float).reshape(1, 5)
    return float(_objective_batch(p, log_n, log_d, log_l, delta, printed_form)[0])


def joint_objective_grad(params: Sequence[float], data, delta: float = 1e-3, *, printed_form: bool = False) -> np.ndarray:
    """Analytic gradient of :func:`joint_objective` with respect to ``(a, b, e, alpha, beta)``."""
    if not delta > 0:
        raise ValidationError("delta must be > 0")
    log_n, log_d, log_l = _log_data(data)
    return _value_and_grad(np.asarray(params, dtype=float), log_n, log_d, log_l, delta, printed_form)[1]


def grid_starts(settings: FitSettings) -> list[tuple[float, ...]]:
    """Every grid combination in ``(a, b, e, alpha, beta)`` order, plus the published init."""
    starts = []
    seen = set()
    candidates = itertools.product(*(settings.grid[k] for k in PARAM_NAMES))
    if settings.include_published_init:
        candidates = itertools.chain([PUBLISHED_INIT], candidates)
    for a, b, e, alpha, beta in candidates:
        start = (
            float(a),
            float(b),
            float(e),
            float(alpha) if alpha > 0 else EXPONENT_NUDGE,
            float(beta) if beta > 0 else EXPONENT_NUDGE,
        )
        if start not in seen:
            seen.add(start)
            starts.append(start)
    return starts


def fit_joint(data, settings: FitSettings | None = None) -> JointLaw:
    """Fit ``L(N, D)`` to ``(N, D, L)`` observations.

    Raises:
        InsufficientDataError: fewer than 10 points, or fewer than 2 distinct
            values of N or of D.
        FitError: every local optimisation diverged.
    """
    settings = settings or FitSettings()
    log_n, log_d, log_l = _log_data(data)
    n = log_n.size
    if n < 10:
        raise InsufficientDataError(f"insufficient diversity: need >= 10 points, got {n}")
    if np.unique(log_n).size < 2 or np.unique(log_d).size < 2:
        raise InsufficientDataError("insufficient diversity: need >= 2 distinct N and >= 2 distinct D")

    delta = settings.huber_delta
    printed = settings.printed_form
    starts = grid_starts(settings)
    if settings.refine_top is not None and settings.refine_top < len(starts):
        values = _objective_batch(np.array(starts), log_n, log_d, log_l, delta, printed)
        order = np.argsort(values, kind="stable")[: settings.refine_top]
        chosen = [starts[i] for i in sorted(order)]
        if settings.include_published_init and PUBLISHED_INIT not in chosen:
            chosen.insert(0, PUBLISHED_INIT)
        starts = chosen

    # optimiser sees objective / delta so gradients are O(1) in the linear regime
    def scaled(p):
        value, grad = _value_and_grad(p, log_n, log_d, log_l, delta, printed)
        return value / delta, grad / delta

    bounds = [(None, None), (None, None), (None, None), (_EXPONENT_FLOOR, None), (_EXPONENT_FLOOR, None)]
    options = {"maxiter": settings.max_iters, "gtol": settings.convergence_tol, "ftol": 1e-15}

    def run(start):
        with np.errstate(over="ignore", invalid="ignore"):
            res = minimize(scaled, np.array(start), jac=True, method="L-BFGS-B", bounds=bounds, options=options)
        value = res.fun * delta
        if not (np.isfinite(value) and np.all(np.isfinite(res.x))):
            return None
        return value, tuple(float(v) for v in res.x), start, int(res.nit)

    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]
    results = [r for r in results if r is not None]
    if not results:
        raise FitError("all starts diverged")
    value, x, start, nit = min(results, key=lambda r: (r[0], r[1]))
    logger.debug("joint fit: %d starts, best objective %.6g after %d iterations", len(starts), value, nit)
    a, b, e, alpha, beta = x
    return JointLaw(
        A=math.exp(a),
        B=math.exp(b),
        E=math.exp(e),
        alpha=alpha,
        beta=beta,
        objective_value=value,
        n_points=n,
        start=start,
        iterations=nit,
    )


def joint_eval(law: JointLaw, n_params, tokens):
    n = np.asarray(n_params, dtype=float)
    d = np.asarray(tokens, dtype=float)
    if np.any(~(n > 0)) or np.any(~(d > 0)):
        raise ValidationError("N and D must be > 0")
    out = law.A / n**law.alpha + law.B / d**law.beta + law.E
    return float(out) if out.ndim == 0 else out


def allocation_exponents(law: JointLaw) -> tuple[float, float, float]:
    """``(G, a, b)`` with ``N_opt = G * (C/6)**a`` and ``D_opt = (C/6)**b / G``."""
    total = law.alpha + law.beta
    g = (law.alpha * law.A / (law.beta * law.B)) ** (1.0 / total)
    return g, law.beta / total, law.alpha / total


def joint_allocation(law: JointLaw, compute: float) -> tuple[float, float]:
    """Compute-optimal ``(N, D)`` on the surface for budget ``compute``; ``6 * N * D == compute``."""
    if not compute > 0:
        raise ValidationError("compute must be > 0")
    g, a, _ = allocation_exponents(law)
    n_opt = g * (compute / 6.0) ** a
    # D from the constraint rather than G**-1 (C/6)**b keeps 6ND == C to rounding
    d_opt = (compute / 6.0) / n_opt
    return n_opt, d_opt
