import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plscale import JointLaw, Objective, PowerLaw, SynthSpec, fit_frontier, gen_runs, gen_transfer_pair, group_isoflops, profile_groups
from plscale.allocator import fit_effective_tokens, token_distances
from plscale.errors import ValidationError
from plscale.jointfit import allocation_exponents
from plscale.presets import EFFECTIVE_TOKENS, JOINT_CLM
from plscale.runs import runs_to_jsonl

BUDGETS = [1e18, 3e18, 1e19, 3e19, 1e20, 3e20, 1e21]
SIZES = list(np.logspace(-0.6, 0.6, 8))  # multipliers on the optimal size


def test_zero_noise_final_losses_on_law():
    spec = SynthSpec(JOINT_CLM, n_grid=[1e8, 1e9], d_grid=[1e10, 1e11])
    for run in gen_runs(spec):
        assert run.final_loss == JOINT_CLM(run.n_params, run.final_tokens)


def test_power_law_spec_uses_compute():
    law = PowerLaw(10.0, -0.05, "C", "L")
    (run,) = gen_runs(SynthSpec(law, n_grid=[1e8], flops_grid=[6e18]))
    assert run.final_tokens == 10**10
    assert run.final_loss == pytest.approx(law(6e18), rel=1e-12)


def test_same_seed_same_bytes():
    spec = SynthSpec(JOINT_CLM, n_grid=[1e8, 3e8], flops_grid=[1e19, 1e20], noise_sigma=0.01, seed=2**63 + 5)
    assert runs_to_jsonl(gen_runs(spec)) == runs_to_jsonl(gen_runs(spec))
    other = SynthSpec(JOINT_CLM, n_grid=[1e8, 3e8], flops_grid=[1e19, 1e20], noise_sigma=0.01, seed=6)
    assert runs_to_jsonl(gen_runs(spec)) != runs_to_jsonl(gen_runs(other))


def test_extending_grid_keeps_existing_cells():
    small = SynthSpec(JOINT_CLM, n_grid=[1e8, 3e8], flops_grid=[1e19], noise_sigma=0.05, seed=9)
    large = SynthSpec(JOINT_CLM, n_grid=[1e8, 3e8, 1e9], flops_grid=[1e19, 1e20], noise_sigma=0.05, seed=9)
    by_id = {r.id: r for r in gen_runs(large)}
    for run in gen_runs(small):
        assert by_id[run.id] == run


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**64 - 1), st.floats(0, 0.1))
def test_curves_monotone_and_sorted(seed, sigma):
    spec = SynthSpec(JOINT_CLM, n_grid=[3e8, 1e8], flops_grid=[1e20, 1e19], noise_sigma=sigma, seed=seed, curve_points=8)
    runs = gen_runs(spec)
    assert [(r.n_params, r.final_tokens) for r in runs] == sorted((r.n_params, r.final_tokens) for r in runs)
    for run in runs:
        losses = [p.loss for p in run.curve]
        assert all(b <= a for a, b in zip(losses, losses[1:]))
        ratio = run.final_loss / JOINT_CLM(run.n_params, run.final_tokens)
        assert abs(np.log(ratio)) <= 10 * sigma + 1e-12


def test_batch_size_gives_steps():
    (run,) = gen_runs(SynthSpec(JOINT_CLM, n_grid=[1e8], d_grid=[1024 * 256 * 100], batch_size=256))
    assert run.steps == 100


def test_spec_validation():
    with pytest.raises(ValidationError):
        SynthSpec(JOINT_CLM, n_grid=[1e8], flops_grid=[1e19], d_grid=[1e10])
    with pytest.raises(ValidationError):
        SynthSpec(JOINT_CLM, n_grid=[], flops_grid=[1e19])
    with pytest.raises(ValidationError):
        SynthSpec(JOINT_CLM, n_grid=[1e8], flops_grid=[1e19], noise_sigma=-1)
    with pytest.raises(ValidationError):
        SynthSpec(JOINT_CLM, n_grid=[1e8], flops_grid=[1e19], seed=2**64)
    with pytest.raises(ValidationError):
        SynthSpec(PowerLaw(1, -0.1, "C", "L"), n_grid=[1.0], flops_grid=[1e19], relative_n=True)


def test_end_to_end_recovers_size_exponent():
    spec = SynthSpec(JOINT_CLM, n_grid=SIZES, flops_grid=BUDGETS, relative_n=True, noise_sigma=0.01, seed=11)
    runs = gen_runs(spec)
    assert len(runs) == 56
    grouping = group_isoflops(runs, BUDGETS, max_tokens=None, min_steps=0)
    assert not grouping.excluded
    laws = fit_frontier(profile_groups(grouping.groups))
    _, planted, _ = allocation_exponents(JOINT_CLM)
    assert laws.n_of_c.exponent == pytest.approx(planted, abs=0.02)


# ---- transfer pairs

TRANSFER_GRID = dict(n_grid=list(np.logspace(8, 11, 10)), d_grid=list(np.logspace(8, 11, 10)), curve_points=32)
STEEP = PowerLaw(1e10, -1.0, "C", "L")


def distances(pairs):
    return [s for scratch, transfer in pairs for s in token_distances(scratch, transfer)]


def test_transfer_pair_zero_noise_recovers_planted_law():
    pairs = gen_transfer_pair(JointLaw(3.365, 7.569, 0.5, 0.042, 0.099), EFFECTIVE_TOKENS, SynthSpec(None, **TRANSFER_GRID))
    fit = fit_effective_tokens(distances(pairs))
    assert fit.k == pytest.approx(EFFECTIVE_TOKENS.k, rel=0.05)
    assert fit.delta == pytest.approx(EFFECTIVE_TOKENS.delta, rel=0.05)
    assert fit.gamma == pytest.approx(EFFECTIVE_TOKENS.gamma, rel=0.05)


def test_transfer_pair_identical_laws_give_zero_distance():
    law = PowerLaw(8.0, -0.03, "C", "L")
    pairs = gen_transfer_pair(law, law, SynthSpec(None, n_grid=[1e8, 1e9], d_grid=[1e10]))
    samples = distances(pairs)
    assert samples
    assert all(d_t == pytest.approx(0, abs=1e-3 * d_f) for _, d_f, d_t in samples)


def test_transfer_pair_shape():
    pairs = gen_transfer_pair(STEEP, EFFECTIVE_TOKENS, SynthSpec(None, n_grid=[1e9, 1e8], d_grid=[1e10]))
    assert [p[0].n_params for p in pairs] == [10**8, 10**9]
    for scratch, transfer in pairs:
        assert scratch.objective is Objective.MLM
        assert transfer.objective is Objective.TRANSFER_CLM_TO_MLM
        assert transfer.pretrain_tokens > 0
        assert [p.tokens_elapsed for p in scratch.curve] == [p.tokens_elapsed for p in transfer.curve]


def test_transfer_pair_rejects_increasing_laws():
    with pytest.raises(ValidationError):
        gen_transfer_pair(PowerLaw(1, 0.1, "C", "L"), EFFECTIVE_TOKENS, SynthSpec(None, n_grid=[1e8], d_grid=[1e9]))


@pytest.mark.slow
def test_transfer_pair_noisy_recovery():
    # a steep scratch law keeps 1% loss noise from swamping the token distance
    misses = 0
    for seed in range(100):
        pairs = gen_transfer_pair(STEEP, EFFECTIVE_TOKENS, SynthSpec(None, noise_sigma=0.01, seed=seed, **TRANSFER_GRID))
        fit = fit_effective_tokens(distances(pairs))
        misses += abs(fit.delta - EFFECTIVE_TOKENS.delta) > 0.05 or abs(fit.gamma - EFFECTIVE_TOKENS.gamma) > 0.05
    assert misses == 0
