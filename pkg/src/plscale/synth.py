"""Deterministic synthetic run logs drawn from known laws.

Used as a brute-force oracle: generate runs from planted coefficients, feed
them through the fitting paths and check that the coefficients come back.

Every (model size, budget) cell draws its noise from its own generator keyed
by ``(seed, i_n, i_budget)``, so appending grid values never perturbs
existing cells. Curves follow the planted law along the run's own token
axis (``L(N, d)`` for a surface, ``L(6 N d)`` for a compute law) scaled by
the cell's noise factor, which keeps them monotone and ending on the final
loss.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .jointfit import JointLaw, joint_allocation
from .powerlaw import PowerLaw
from .presets import EffectiveTokensLaw
from .runs import CurvePoint, Objective, TrainingRun, TOKENS_PER_SEQUENCE

Law = PowerLaw | JointLaw


@dataclass(frozen=True)
class SynthSpec:
    """Sampling plan for synthetic runs.

    Exactly one of ``flops_grid`` (runs trained to ``D = C / 6N``) or
    ``d_grid`` (fixed token counts) is given. With ``relative_n`` the
    ``n_grid`` entries are multipliers on the surface's compute-optimal size
    at each budget.
    """

    law: Law | None
    n_grid: Sequence[float]
    flops_grid: Sequence[float] | None = None
    d_grid: Sequence[float] | None = None
    noise_sigma: float = 0.0
    seed: int = 0
    relative_n: bool = False
    curve_points: int = 16
    objective: Objective = Objective.CLM
    batch_size: int | None = None

    def __post_init__(self) -> None:
        if not self.noise_sigma >= 0:
            raise ValidationError("noise_sigma must be >= 0")
        if len(self.n_grid) == 0:
            raise ValidationError("n_grid must not be empty")
        if any(not n > 0 for n in self.n_grid):
            raise ValidationError("n_grid values must be > 0")
        if (self.flops_grid is None) == (self.d_grid is None):
            raise ValidationError("give exactly one of flops_grid or d_grid")
        grid = self.flops_grid if self.flops_grid is not None else self.d_grid
        if len(grid) == 0 or any(not g > 0 for g in grid):
            raise ValidationError("budget/token grid must be non-empty and positive")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in an unsigned 64-bit integer")
        if self.curve_points < 1:
            raise ValidationError("curve_points must be >= 1")
        if self.relative_n and (self.flops_grid is None or not isinstance(self.law, JointLaw)):
            raise ValidationError("relative_n needs a flops_grid and a JointLaw")
        object.__setattr__(self, "objective", Objective.parse(self.objective))


def cell_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def law_loss(law: Law, n_params: float, tokens):
    tokens = np.asarray(tokens, dtype=float)
    if isinstance(law, JointLaw):
        return law(n_params, tokens)
    return law(6.0 * n_params * tokens)


def _cells(spec: SynthSpec):
    """Yield ``(i_n, i_grid, N, D)`` for every cell."""
    grid = spec.flops_grid if spec.flops_grid is not None else spec.d_grid
    for j, g in enumerate(grid):
        if spec.relative_n:
            n_opt, _ = joint_allocation(spec.law, g)
        for i, n in enumerate(spec.n_grid):
            n_params = max(1, round(n * n_opt)) if spec.relative_n else max(1, round(n))
            tokens = g / (6.0 * n_params) if spec.flops_grid is not None else g
            yield i, j, n_params, max(1, round(tokens))


def _token_axis(final_tokens: int, points: int) -> list[int]:
    axis = sorted({max(1, round(final_tokens * k / points)) for k in range(1, points + 1)})
    axis[-1] = final_tokens
    return axis


def _steps(spec: SynthSpec, tokens: int) -> int | None:
    if spec.batch_size is None:
        return None
    return max(1, math.ceil(tokens / (spec.batch_size * TOKENS_PER_SEQUENCE)))


def _curve(losses, tokens, noise: float) -> tuple[CurvePoint, ...]:
    factor = math.exp(noise)
    return tuple(CurvePoint(t, float(loss) * factor) for t, loss in zip(tokens, np.atleast_1d(losses)))


def gen_runs(spec: SynthSpec) -> list[TrainingRun]:
    """One run per (N, budget) cell, sorted by N then D."""
    if spec.law is None:
        raise ValidationError("spec.law is required to generate runs")
    runs = []
    for i, j, n_params, tokens in _cells(spec):
        noise = spec.noise_sigma * cell_rng(spec.seed, i, j).standard_normal() if spec.noise_sigma else 0.0
        axis = _token_axis(tokens, spec.curve_points)
        runs.append(
            TrainingRun(
                id=f"synth-n{i:03d}-c{j:03d}",
                objective=spec.objective,
                n_params=n_params,
                curve=_curve(law_loss(spec.law, n_params, axis), axis, noise),
                steps=_steps(spec, tokens),
                pretrain_tokens=0 if spec.objective.is_transfer else None,
                batch_size=spec.batch_size,
            )
        )
    runs.sort(key=lambda r: (r.n_params, r.final_tokens, r.id))
    return runs


def gen_transfer_pair(
    scratch_law: Law,
    transfer_law: Law | EffectiveTokensLaw,
    spec: SynthSpec,
) -> list[tuple[TrainingRun, TrainingRun]]:
    """Matched (from-scratch MLM, CLM->MLM transfer) runs at identical cells.

    ``transfer_law`` is either a loss law evaluated like ``scratch_law`` or an
    :class:`EffectiveTokensLaw`, in which case the transfer run at ``D_f``
    tokens reaches the scratch loss at ``D_f + D_t(N, D_f)``. Noise draws for
    the two members of a pair are independent.
    """
    if isinstance(scratch_law, PowerLaw) and scratch_law.exponent >= 0:
        raise ValidationError("scratch law must be decreasing")
    if isinstance(transfer_law, PowerLaw) and transfer_law.exponent >= 0:
        raise ValidationError("transfer law must be decreasing")
    if spec.relative_n:
        raise ValidationError("relative_n is not supported for transfer pairs")
    pairs = []
    for i, j, n_params, tokens in _cells(spec):
        if spec.noise_sigma:
            eps_s = spec.noise_sigma * cell_rng(spec.seed, i, j, 0).standard_normal()
            eps_t = spec.noise_sigma * cell_rng(spec.seed, i, j, 1).standard_normal()
        else:
            eps_s = eps_t = 0.0
        axis = _token_axis(tokens, spec.curve_points)
        scratch_loss = law_loss(scratch_law, n_params, axis)
        if isinstance(transfer_law, EffectiveTokensLaw):
            shifted = np.asarray(axis, dtype=float) + transfer_law(float(n_params), np.asarray(axis, dtype=float))
            transfer_loss = law_loss(scratch_law, n_params, shifted)
            pretrain = round(float(transfer_law(float(n_params), float(tokens))))
        else:
            transfer_loss = law_loss(transfer_law, n_params, axis)
            pretrain = 0
        scratch = TrainingRun(
            id=f"synth-n{i:03d}-c{j:03d}-scratch",
            objective=Objective.MLM,
            n_params=n_params,
            curve=_curve(scratch_loss, axis, eps_s),
            steps=_steps(spec, tokens),
            batch_size=spec.batch_size,
        )
        transfer = TrainingRun(
            id=f"synth-n{i:03d}-c{j:03d}-transfer",
            objective=Objective.TRANSFER_CLM_TO_MLM,
            n_params=n_params,
            curve=_curve(transfer_loss, axis, eps_t),
            steps=_steps(spec, tokens),
            pretrain_tokens=pretrain,
            batch_size=spec.batch_size,
        )
        pairs.append((scratch, transfer))
    pairs.sort(key=lambda p: (p[0].n_params, p[0].final_tokens, p[0].id))
    return pairs
