"""Single-variable power laws ``y = coeff * x**exponent``.

Covers compute-allocation laws (N(C), D(C)), loss laws (L(N), L(D), L(C)),
scratch vs. transfer compute laws, and the algebra between them: growth
factors, eliminating the loss between L(N) and L(D), crossovers and compute
equivalence.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from dataclasses import asdict, dataclass
from typing import Any, NamedTuple

import numpy as np

from .errors import InsufficientDataError, ValidationError

# Exponent gap below which two laws count as parallel.
PARALLEL_TOL = 1e-6


class NoIntersectionError(ValidationError):
    """Two laws never cross (parallel) or coincide everywhere."""


@dataclass(frozen=True)
class PowerLaw:
    coeff: float
    exponent: float
    x_name: str = "x"
    y_name: str = "y"
    rss: float = 0.0
    n_points: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.coeff) and self.coeff > 0):
            raise ValidationError(f"coeff must be finite and > 0, got {self.coeff!r}")
        if not math.isfinite(self.exponent):
            raise ValidationError(f"exponent must be finite, got {self.exponent!r}")
        if not self.rss >= 0:
            raise ValidationError(f"rss must be >= 0, got {self.rss!r}")

    def __call__(self, x):
        return eval_powerlaw(self, x)

    def inverse(self, y):
        """``x`` such that ``law(x) == y``."""
        if self.exponent == 0:
            raise ValidationError("cannot invert a law with zero exponent")
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise ValidationError("inverse is defined for y > 0 only")
        out = (y / self.coeff) ** (1.0 / self.exponent)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PowerLaw:
        return cls(
            coeff=float(data["coeff"]),
            exponent=float(data["exponent"]),
            x_name=str(data.get("x_name", "x")),
            y_name=str(data.get("y_name", "y")),
            rss=float(data.get("rss", 0.0)),
            n_points=int(data.get("n_points", 0)),
        )


def fit_powerlaw(points: Iterable[tuple[float, float]], x_name: str = "x", y_name: str = "y") -> PowerLaw:
    """Ordinary least squares on ``(log10 x, log10 y)``.

    ``rss`` is the residual sum of squares of ``log10 y``.
    """
    arr = np.asarray(list(points), dtype=float)
    if arr.size == 0:
        raise InsufficientDataError("need at least 2 points with distinct x, got none")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError("points must be (x, y) pairs")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValidationError("power-law fitting needs finite, positive x and y")
    u = np.log10(arr[:, 0])
    v = np.log10(arr[:, 1])
    if np.unique(u).size < 2:
        raise InsufficientDataError("need at least 2 points with distinct x")

    # centred regression keeps the intercept well conditioned for x ~ 1e20
    u_mean, v_mean = u.mean(), v.mean()
    du = u - u_mean
    slope = float(np.dot(du, v - v_mean) / np.dot(du, du))
    intercept = float(v_mean - slope * u_mean)
    resid = v - (intercept + slope * u)
    return PowerLaw(
        coeff=10.0**intercept,
        exponent=slope,
        x_name=x_name,
        y_name=y_name,
        rss=float(np.dot(resid, resid)),
        n_points=len(arr),
    )


def eval_powerlaw(law: PowerLaw, x):
    """``coeff * x**exponent``; accepts scalars or arrays."""
    xs = np.asarray(x, dtype=float)
    if np.any(~(xs > 0)):
        raise ValidationError("power laws are evaluated at x > 0 only")
    out = law.coeff * xs**law.exponent
    return float(out) if out.ndim == 0 else out


def scale_factor(law: PowerLaw, multiplier: float) -> float:
    """Growth of the output when the input grows by ``multiplier``."""
    if not multiplier > 0:
        raise ValidationError(f"multiplier must be > 0, got {multiplier!r}")
    return float(multiplier) ** law.exponent


def derive_data_for_model(loss_vs_n: PowerLaw, loss_vs_d: PowerLaw) -> PowerLaw:
    """Eliminate the loss between ``L(N)`` and ``L(D)`` to get ``D(N)``.

    Setting ``bN * N**aN == bD * D**aD`` gives
    ``D = (bN / bD)**(1 / aD) * N**(aN / aD)``.
    """
    if loss_vs_d.exponent == 0:
        raise ValidationError("loss-vs-data law has zero exponent; D(N) is undefined")
    if loss_vs_n.exponent == 0:
        raise ValidationError("loss-vs-model law has zero exponent; D(N) is constant")
    return PowerLaw(
        coeff=(loss_vs_n.coeff / loss_vs_d.coeff) ** (1.0 / loss_vs_d.exponent),
        exponent=loss_vs_n.exponent / loss_vs_d.exponent,
        x_name=loss_vs_n.x_name,
        y_name=loss_vs_d.x_name,
    )


def intersection(law1: PowerLaw, law2: PowerLaw) -> float:
    """The ``x > 0`` where both laws give the same ``y``."""
    gap = law2.exponent - law1.exponent
    if abs(gap) < PARALLEL_TOL:
        if math.isclose(law1.coeff, law2.coeff, rel_tol=1e-12):
            raise NoIntersectionError("laws are identical; they agree at every x")
        raise NoIntersectionError(f"exponents differ by {gap:.3g}; the laws are parallel and never cross")
    return (law1.coeff / law2.coeff) ** (1.0 / gap)


class TransferRatio(NamedTuple):
    exponent_ratio: float
    equivalent_compute: Callable[[float], float]


def transfer_compute_ratio(scratch: PowerLaw, transfer: PowerLaw) -> TransferRatio:
    """Relate from-scratch compute to transfer compute at equal loss.

    With ``L = A_s * C_s**a_s`` (scratch) and ``L = B_t * C_t**a_t``
    (transfer), equal loss means ``C_t = ((A_s / B_t) * C_s**a_s)**(1 / a_t)``,
    so ``C_t`` grows like ``C_s**(a_s / a_t)``.
    """
    if scratch.exponent >= 0 or transfer.exponent >= 0:
        raise ValidationError("both compute-loss laws must be decreasing (negative exponents)")
    ratio = scratch.exponent / transfer.exponent
    log_ratio = math.log(scratch.coeff / transfer.coeff)

    def equivalent_compute(scratch_compute: float) -> float:
        if not scratch_compute > 0:
            raise ValidationError("compute must be > 0")
        return math.exp((log_ratio + scratch.exponent * math.log(scratch_compute)) / transfer.exponent)

    return TransferRatio(ratio, equivalent_compute)
