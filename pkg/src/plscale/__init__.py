"""Scaling-law fitting and compute-allocation toolkit for CLM / MLM pre-training runs."""

from .allocator import (
    AllocationResult,
    DualAllocation,
    DualBudget,
    TransferPlan,
    allocate,
    allocate_joint,
    compute_fraction_sweep,
    dual_allocate,
    dual_budget,
    effectively_transferred_tokens,
    fit_effective_tokens,
    invert_compute,
    plan_transfer,
    token_distances,
    token_ratio,
)
from .errors import FitError, IngestError, InsufficientDataError, UnknownPresetError, ValidationError
from .frontier import (
    FrontierLaws,
    Interval,
    IsoFlopsGroup,
    Valley,
    fit_frontier,
    frontier_interval,
    group_isoflops,
    profile_group,
    profile_groups,
    smooth_curve,
    valley,
)
from .jointfit import (
    FitSettings,
    JointLaw,
    fit_joint,
    huber,
    joint_allocation,
    joint_eval,
    joint_objective,
    lse,
)
from .powerlaw import (
    PowerLaw,
    derive_data_for_model,
    eval_powerlaw,
    fit_powerlaw,
    intersection,
    scale_factor,
    transfer_compute_ratio,
)
from .presets import EffectiveTokensLaw, ObjectiveLaws, get_preset
from .runs import CurvePoint, ModelConfig, Objective, TrainingRun, flops, ingest_runs, load_runs, param_count
from .synth import SynthSpec, gen_runs, gen_transfer_pair

__version__ = "0.1.0"
