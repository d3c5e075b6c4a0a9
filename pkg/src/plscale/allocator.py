"""Compute-allocation queries.

* single objective: optimal (N, D) for a budget from N(C) and D(C) laws,
  and the inverse budget for a target size;
* two objectives of equal size (one CLM and one MLM model): the summed budget
  ``C_sum(N)``, its inverse, and the MLM:CLM token ratio;
* CLM -> MLM transfer: effectively transferred tokens and the pre-training
  token split.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
from scipy.optimize import bisect

from . import presets
from .errors import FitError, InsufficientDataError, ValidationError
from .jointfit import JointLaw, joint_allocation
from .powerlaw import PowerLaw, derive_data_for_model
from .presets import EffectiveTokensLaw, ObjectiveLaws
from .runs import TrainingRun

CONSISTENCY_SLACK = 0.01
DUAL_BRACKET = (1e3, 1e15)
TRANSFER_CAP = 0.25


@dataclass(frozen=True)
class AllocationResult:
    n_params: float
    tokens: float
    flops: float
    law_id: str
    slack: float = 0.0  # |6 N D - flops| / flops

    @property
    def consistent(self) -> bool:
        """Whether 6ND reproduces the budget within 1%."""
        return self.slack <= CONSISTENCY_SLACK

    def to_dict(self) -> dict[str, Any]:
        return {
            "law_id": self.law_id,
            "flops": self.flops,
            "n_params": self.n_params,
            "tokens": self.tokens,
            "slack": self.slack,
        }


def allocate(n_law: PowerLaw, d_law: PowerLaw, compute: float, law_id: str = "custom") -> AllocationResult:
    """Evaluate N(C) and D(C) at ``compute``.

    The two laws are fitted independently, so ``6 N D`` only approximates the
    budget; the relative gap is reported as ``slack``.
    """
    if not compute > 0:
        raise ValidationError("compute must be > 0")
    n = n_law.coeff * compute**n_law.exponent
    d = d_law.coeff * compute**d_law.exponent
    return AllocationResult(n, d, float(compute), law_id, abs(6.0 * n * d - compute) / compute)


def allocate_joint(law: JointLaw, compute: float, law_id: str = "joint") -> AllocationResult:
    """Compute-optimal allocation on a fitted ``L(N, D)`` surface."""
    n, d = joint_allocation(law, compute)
    return AllocationResult(n, d, float(compute), law_id, abs(6.0 * n * d - compute) / compute)


def invert_compute(n_law: PowerLaw, n_params: float) -> float:
    """Budget ``C = (N / A)**(1 / alpha)`` whose optimal model size is ``n_params``."""
    if not n_params > 0:
        raise ValidationError("n_params must be > 0")
    if n_law.exponent == 0:
        raise ValidationError("N(C) law has zero exponent and cannot be inverted")
    return math.exp(math.log(n_params / n_law.coeff) / n_law.exponent)


@dataclass(frozen=True)
class DualBudget:
    c_sum: float
    c_clm: float
    c_mlm: float


def dual_budget(
    n_params: float, clm: ObjectiveLaws = presets.CLM, mlm: ObjectiveLaws = presets.MLM
) -> DualBudget:
    """Budgets at which ``n_params`` is compute-optimal for each objective, and their sum."""
    c_clm = invert_compute(clm.n_of_c, n_params)
    c_mlm = invert_compute(mlm.n_of_c, n_params)
    return DualBudget(c_clm + c_mlm, c_clm, c_mlm)


def data_for_model(laws: ObjectiveLaws) -> PowerLaw:
    """``D(N)`` obtained by eliminating the loss between ``L(N)`` and ``L(D)``."""
    return derive_data_for_model(laws.loss_of_n, laws.loss_of_d)


def token_ratio(n_params, clm: ObjectiveLaws = presets.CLM, mlm: ObjectiveLaws = presets.MLM):
    """``r(N) = D_MLM(N) / D_CLM(N)`` from the per-objective ``D(N)`` laws."""
    return data_for_model(mlm)(n_params) / data_for_model(clm)(n_params)


def token_ratio_law(clm: ObjectiveLaws = presets.CLM, mlm: ObjectiveLaws = presets.MLM) -> PowerLaw:
    d_mlm, d_clm = data_for_model(mlm), data_for_model(clm)
    return PowerLaw(d_mlm.coeff / d_clm.coeff, d_mlm.exponent - d_clm.exponent, "N", "r")


@dataclass(frozen=True)
class DualAllocation:
    n_params: float
    ratio: float
    d_mlm: float
    d_clm: float
    c_clm: float
    c_mlm: float
    preset_n_params: float  # fitted N(C_sum) shortcut
    preset_ratio: float  # fitted r(N) shortcut, at the solved N

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def dual_allocate(
    c_sum: float,
    clm: ObjectiveLaws = presets.CLM,
    mlm: ObjectiveLaws = presets.MLM,
    dual: presets.DualLaws = presets.DUAL,
    bracket: tuple[float, float] = DUAL_BRACKET,
    rtol: float = 1e-6,
) -> DualAllocation:
    """Shared model size and per-objective tokens for a total budget ``c_sum``.

    Solves ``dual_budget(N).c_sum == c_sum`` by bisection on ``log N``. The
    fitted shortcuts are evaluated alongside for comparison.
    """
    if not c_sum > 0:
        raise ValidationError("c_sum must be > 0")
    log_target = math.log(c_sum)

    def gap(log_n: float) -> float:
        return math.log(dual_budget(math.exp(log_n), clm, mlm).c_sum) - log_target

    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo > 0 or g_hi < 0:
        image = (math.exp(g_lo + log_target), math.exp(g_hi + log_target))
        raise FitError(f"c_sum={c_sum:.3g} lies outside the bracket image [{image[0]:.3g}, {image[1]:.3g}]")
    if g_lo == 0:
        log_n = lo
    elif g_hi == 0:
        log_n = hi
    else:
        # absolute tolerance on log N is a relative tolerance on N
        log_n = bisect(gap, lo, hi, xtol=rtol, rtol=4 * np.finfo(float).eps, maxiter=200)
    n = math.exp(log_n)
    budget = dual_budget(n, clm, mlm)
    d_mlm = float(data_for_model(mlm)(n))
    d_clm = float(data_for_model(clm)(n))
    return DualAllocation(
        n_params=n,
        ratio=d_mlm / d_clm,
        d_mlm=d_mlm,
        d_clm=d_clm,
        c_clm=budget.c_clm,
        c_mlm=budget.c_mlm,
        preset_n_params=float(dual.n_of_csum(c_sum)),
        preset_ratio=float(dual.token_ratio(n)),
    )


def effectively_transferred_tokens(n_params, d_f, law: EffectiveTokensLaw = presets.EFFECTIVE_TOKENS):
    """Extra from-scratch MLM tokens matched by CLM pre-training, for model size ``n_params``
    fine-tuned on ``d_f`` MLM tokens."""
    n = np.asarray(n_params, dtype=float)
    d = np.asarray(d_f, dtype=float)
    if np.any(~(n > 0)) or np.any(~(d > 0)):
        raise ValidationError("n_params and d_f must be > 0")
    out = law(n, d)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TransferPlan:
    n_params: float
    d_pre: float
    d_f: float
    d_t: float
    compute_fraction: float
    capped: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_params": self.n_params,
            "d_pre": self.d_pre,
            "d_f": self.d_f,
            "d_t": self.d_t,
            "compute_fraction": self.compute_fraction,
            "capped": self.capped,
        }


def plan_transfer(
    n_params: float,
    total_tokens: float,
    law: EffectiveTokensLaw = presets.EFFECTIVE_TOKENS,
    cap: float = TRANSFER_CAP,
    max_iter: int = 100,
    rtol: float = 1e-6,
) -> TransferPlan:
    """Split ``total_tokens`` into CLM pre-training and MLM fine-tuning.

    Pre-training gets exactly the tokens it is worth:
    ``d_pre = D_t(N, total - d_pre)``, capped at ``cap * total``. Found by
    fixed-point iteration from ``d_pre = 0``.
    """
    if not n_params > 0 or not total_tokens > 0:
        raise ValidationError("n_params and total_tokens must be > 0")
    if not 0 < cap < 1:
        raise ValidationError("cap must lie in (0, 1)")
    limit = cap * total_tokens
    d_pre = 0.0
    for _ in range(max_iter):
        proposed = float(law(n_params, total_tokens - d_pre))
        nxt = min(proposed, limit)
        if abs(nxt - d_pre) <= rtol * max(nxt, 1e-300):
            d_pre = nxt
            break
        d_pre = nxt
    else:
        raise FitError(f"transfer split did not converge in {max_iter} iterations")
    d_f = total_tokens - d_pre
    return TransferPlan(
        n_params=float(n_params),
        d_pre=d_pre,
        d_f=d_f,
        d_t=float(law(n_params, d_f)),
        compute_fraction=d_pre / total_tokens,
        capped=d_pre >= limit,
    )


def compute_fraction_sweep(
    n_params: float,
    total_tokens: float,
    fractions: Sequence[float],
    law: EffectiveTokensLaw = presets.EFFECTIVE_TOKENS,
) -> list[dict[str, float]]:
    """Rows for a pre-training-share sweep at fixed total tokens.

    For each CLM share, reports the fine-tuning tokens, the effectively
    transferred tokens and ``D_t / (D_t + D_f)``; ``excess`` is positive when
    pre-training spent more than it transferred.
    """
    rows = []
    for frac in fractions:
        if not 0 <= frac < 1:
            raise ValidationError("fractions must lie in [0, 1)")
        d_pre = float(frac) * float(total_tokens)
        d_f = float(total_tokens) - d_pre
        d_t = float(law(n_params, d_f))
        rows.append(
            {
                "fraction": float(frac),
                "d_pre": d_pre,
                "d_f": d_f,
                "d_t": d_t,
                "dt_fraction": d_t / (d_t + d_f),
                "excess": d_pre - d_t,
            }
        )
    return rows


def _interp_tokens_at_loss(tokens: np.ndarray, losses: np.ndarray, target: float) -> float | None:
    """Tokens at which a decreasing curve reaches ``target`` (log-log interpolation)."""
    if target > losses[0] or target < losses[-1]:
        return None
    # np.interp wants increasing x; losses decrease along the curve
    return float(np.exp(np.interp(np.log(target), np.log(losses[::-1]), np.log(tokens[::-1]))))


def token_distances(scratch: TrainingRun, transfer: TrainingRun) -> list[tuple[float, float, float]]:
    """``(N, D_f, D_t)`` samples from a matched scratch / transfer pair.

    For each transfer-curve point ``(D_f, L)`` the scratch curve is searched
    for the tokens ``D_s`` reaching the same loss; ``D_t = D_s - D_f``.
    Points outside the scratch curve's loss range are skipped.
    """
    if scratch.n_params != transfer.n_params:
        raise ValidationError("token distances need runs of the same model size")
    s_tokens = np.array([p.tokens_elapsed for p in scratch.curve], dtype=float)
    s_loss = np.array([p.loss for p in scratch.curve], dtype=float)
    if np.any(np.diff(s_loss) > 0):
        s_loss = np.minimum.accumulate(s_loss)
    samples = []
    for point in transfer.curve:
        if point.tokens_elapsed <= 0:
            continue
        d_s = _interp_tokens_at_loss(s_tokens, s_loss, point.loss)
        if d_s is not None:
            samples.append((float(scratch.n_params), float(point.tokens_elapsed), d_s - point.tokens_elapsed))
    return samples


def fit_effective_tokens(samples: Sequence[tuple[float, float, float]]) -> EffectiveTokensLaw:
    """Least-squares fit of ``log D_t = log k - delta log D_f - gamma log N``.

    Samples with non-positive ``D_t`` carry no log information and are dropped.
    """
    arr = np.asarray([s for s in samples if s[2] > 0], dtype=float)
    if arr.shape[0] < 3:
        raise InsufficientDataError("need >= 3 samples with positive token distance")
    log_n, log_f, log_t = np.log(arr).T
    if np.unique(log_n).size < 2 or np.unique(log_f).size < 2:
        raise InsufficientDataError("need >= 2 distinct N and >= 2 distinct D_f")
    design = np.stack([np.ones_like(log_n), log_f, log_n], axis=1)
    (log_k, slope_f, slope_n), *_ = np.linalg.lstsq(design, log_t, rcond=None)
    return EffectiveTokensLaw(k=float(np.exp(log_k)), delta=float(-slope_f), gamma=float(-slope_n))
