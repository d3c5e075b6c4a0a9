import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plscale import (
    PowerLaw,
    derive_data_for_model,
    eval_powerlaw,
    fit_powerlaw,
    intersection,
    scale_factor,
    transfer_compute_ratio,
)
from plscale.errors import InsufficientDataError, ValidationError
from plscale.powerlaw import NoIntersectionError
from plscale.presets import CLM, MLM, TRANSFER_MLM


def law(c, e, x="x", y="y"):
    return PowerLaw(c, e, x, y)


# ---- fit_powerlaw


def test_two_point_fit_is_exact():
    fit = fit_powerlaw([(1, 2), (10, 20)])
    assert fit.coeff == pytest.approx(2, rel=1e-12)
    assert fit.exponent == pytest.approx(1, rel=1e-12)
    assert fit.rss == pytest.approx(0, abs=1e-25)
    assert fit.n_points == 2


def test_exact_data_recovered_to_six_digits():
    x = np.logspace(18, 22, 50)
    fit = fit_powerlaw(zip(x, 1.26e-3 * x**0.578))
    assert f"{fit.coeff:.6g}" == "0.00126"
    assert f"{fit.exponent:.6g}" == "0.578"
    assert fit.rss < 1e-20


def test_constant_law():
    fit = fit_powerlaw([(1, 3.5), (5, 3.5), (50, 3.5)])
    assert fit.exponent == pytest.approx(0, abs=1e-14)
    assert fit.coeff == pytest.approx(3.5, rel=1e-12)


@pytest.mark.parametrize("points", [[], [(1, 1)], [(2, 1), (2, 3)]])
def test_fit_needs_two_distinct_x(points):
    with pytest.raises(InsufficientDataError):
        fit_powerlaw(points)


@pytest.mark.parametrize("bad", [(0, 1), (1, 0), (-1, 2), (float("nan"), 1)])
def test_fit_rejects_non_positive(bad):
    with pytest.raises(ValidationError):
        fit_powerlaw([(1, 1), (2, 2), bad])


@given(
    st.floats(0.01, 100),
    st.floats(-1.5, 1.5),
    st.floats(1e-3, 1e3),
    st.floats(1e-3, 1e3),
)
def test_fit_equivariance(coeff, exponent, ky, kx):
    x = np.logspace(0, 3, 12)
    rng = np.random.default_rng(0)
    y = coeff * x**exponent * np.exp(0.05 * rng.standard_normal(x.size))
    base = fit_powerlaw(zip(x, y))
    scaled_y = fit_powerlaw(zip(x, ky * y))
    scaled_x = fit_powerlaw(zip(kx * x, y))
    assert scaled_y.coeff == pytest.approx(ky * base.coeff, rel=1e-9)
    assert scaled_y.exponent == pytest.approx(base.exponent, abs=1e-9)
    assert scaled_x.exponent == pytest.approx(base.exponent, abs=1e-9)


# ---- evaluation


def test_eval_examples():
    assert eval_powerlaw(CLM.n_of_c, 1e21) == pytest.approx(1.73e9, rel=5e-3)
    assert eval_powerlaw(MLM.d_of_c, 1.68e22) == pytest.approx(2.61e11, rel=5e-3)
    assert eval_powerlaw(law(7.5, -0.3), 1) == 7.5
    assert eval_powerlaw(law(2, 1), np.array([1.0, 3.0])).tolist() == [2.0, 6.0]


def test_eval_rejects_non_positive_x():
    with pytest.raises(ValidationError):
        eval_powerlaw(law(1, 1), 0)


def test_inverse_round_trip():
    f = CLM.n_of_c
    assert f.inverse(f(3.3e20)) == pytest.approx(3.3e20, rel=1e-12)


def test_serialization_round_trip():
    f = fit_powerlaw([(1, 2), (10, 25), (100, 300)], "C", "N")
    assert PowerLaw.from_dict(f.to_dict()) == f
    assert set(f.to_dict()) == {"x_name", "y_name", "coeff", "exponent", "rss", "n_points"}


# ---- scale factors


@pytest.mark.parametrize(
    "fn, expected",
    [(MLM.n_of_c, 5.97), (MLM.d_of_c, 1.70), (CLM.n_of_c, 3.78), (CLM.d_of_c, 2.64)],
)
def test_scale_factor_examples(fn, expected):
    assert round(scale_factor(fn, 10), 2) == expected


def test_scale_factor_identity():
    assert scale_factor(CLM.n_of_c, 1) == 1


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(-2, 2))
def test_scale_factor_multiplicative(a, b, e):
    f = law(1, e)
    assert scale_factor(f, a * b) == pytest.approx(scale_factor(f, a) * scale_factor(f, b), rel=1e-9)


# ---- data for model


def test_data_for_model_mlm():
    d_of_n = derive_data_for_model(MLM.loss_of_n, MLM.loss_of_d)
    assert d_of_n.coeff == pytest.approx(1.29e8, rel=5e-3)
    assert d_of_n.exponent == pytest.approx(0.333, abs=1e-3)


def test_data_for_model_clm():
    d_of_n = derive_data_for_model(CLM.loss_of_n, CLM.loss_of_d)
    assert d_of_n.coeff == pytest.approx(1.53e4, rel=5e-3)
    assert d_of_n.exponent == pytest.approx(0.725, abs=1e-3)


def test_data_for_model_symmetric():
    d_of_n = derive_data_for_model(law(4, -0.1, "N", "L"), law(4, -0.1, "D", "L"))
    assert d_of_n.coeff == pytest.approx(1)
    assert d_of_n.exponent == pytest.approx(1)


def test_data_for_model_rejects_flat_loss_law():
    with pytest.raises(ValidationError):
        derive_data_for_model(law(4, -0.1), law(4, 0.0))


@given(st.floats(1e6, 1e12))
def test_data_for_model_consistent_losses(n):
    for laws in (CLM, MLM):
        d = derive_data_for_model(laws.loss_of_n, laws.loss_of_d)(n)
        assert laws.loss_of_d(d) == pytest.approx(laws.loss_of_n(n), rel=1e-10)


# ---- intersection


def test_intersection_examples():
    c = intersection(CLM.n_of_c, MLM.n_of_c)
    assert c == pytest.approx(5.77e21, rel=5e-3)
    assert intersection(law(1, 1), law(2, 0.5)) == pytest.approx(4)
    assert intersection(law(3, 2), law(3, 5)) == pytest.approx(1)


def test_intersection_errors():
    with pytest.raises(NoIntersectionError, match="parallel"):
        intersection(law(1, 1), law(2, 1 + 1e-8))
    with pytest.raises(NoIntersectionError, match="identical"):
        intersection(law(2, 1), law(2, 1))


# ---- transfer ratio


def test_transfer_ratio_mlm():
    ratio = transfer_compute_ratio(TRANSFER_MLM.scratch, TRANSFER_MLM.transfer)
    assert ratio.exponent_ratio == pytest.approx(0.895, abs=5e-4)
    assert 10**ratio.exponent_ratio == pytest.approx(7.85, abs=0.01)


def test_transfer_ratio_equivalent_compute_reaches_same_loss():
    s, t = TRANSFER_MLM.scratch, TRANSFER_MLM.transfer
    ratio = transfer_compute_ratio(s, t)
    for c in (1e18, 1e20, 1e22):
        assert t(ratio.equivalent_compute(c)) == pytest.approx(s(c), rel=1e-10)


def test_transfer_ratio_identity():
    s = TRANSFER_MLM.scratch
    ratio = transfer_compute_ratio(s, s)
    assert ratio.exponent_ratio == 1
    assert ratio.equivalent_compute(3e19) == pytest.approx(3e19, rel=1e-12)


def test_transfer_ratio_requires_decreasing_laws():
    with pytest.raises(ValidationError):
        transfer_compute_ratio(law(1, 0.1), law(1, -0.1))


# ---- noisy recovery (statistical)


def test_noisy_recovery_rate():
    x = np.logspace(18, 21, 50)
    hits = 0
    for seed in range(200):
        noise = np.random.default_rng(seed).normal(0, 0.01, x.size)
        fit = fit_powerlaw(zip(x, 1.26e-3 * x**0.578 * np.exp(noise)))
        hits += abs(fit.exponent - 0.578) <= 0.02
    assert hits / 200 >= 0.95
    assert math.isfinite(fit.rss)
