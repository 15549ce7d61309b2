import math

import numpy as np
import pytest
from scipy import stats

from app.services.evaluation_service import (
    Comb,
    EvaluationError,
    Exponential,
    FoldedNormal,
    GenericDensity,
    Shifted,
    StepDensity,
    Uniform,
    cdf,
    chebyshev_lower_bound,
    density,
    from_record,
    quantile,
    shift_pushforward,
    to_record,
)


def test_uniform_basics():
    theta = Uniform(2.0, 6.0)
    assert density(theta, 3.0) == pytest.approx(0.25)
    assert density(theta, 1.0) == 0.0
    assert cdf(theta, 4.0) == pytest.approx(0.5)
    assert quantile(theta, 0.25) == pytest.approx(3.0)
    assert theta.mean() == pytest.approx(4.0)
    assert theta.density_variation() == pytest.approx(0.5)
    assert not theta.is_nonincreasing
    assert Uniform(0.0, 1.0).is_nonincreasing


@pytest.mark.parametrize("a, b", [(-1.0, 1.0), (2.0, 2.0), (3.0, 1.0)])
def test_uniform_rejects_bad_window(a, b):
    with pytest.raises(EvaluationError):
        Uniform(a, b)


def test_quantile_rejects_levels_outside_unit_interval():
    with pytest.raises(EvaluationError):
        quantile(Uniform(0.0, 1.0), 1.0)
    with pytest.raises(EvaluationError):
        quantile(Exponential(1.0), -0.1)


def test_cdf_and_density_domain():
    theta = Exponential(2.0)
    assert cdf(theta, math.inf) == 1.0
    with pytest.raises(EvaluationError):
        cdf(theta, -1.0)
    with pytest.raises(EvaluationError):
        density(theta, -0.5)


def test_exponential_quantile_and_support():
    theta = Exponential(0.5)
    assert quantile(theta, 0.5) == pytest.approx(2.0 * math.log(2.0))
    assert theta.effective_support == pytest.approx(2.0 * math.log(1e6))
    assert theta.is_nonincreasing
    with pytest.raises(EvaluationError):
        Exponential(0.0)


def test_tail_tolerance_is_validated():
    with pytest.raises(EvaluationError):
        Uniform(0.0, 1.0, tail_tolerance=0.0)
    assert Uniform(0.0, 1.0, tail_tolerance=0.1).effective_support == pytest.approx(0.9)


def test_folded_normal_matches_scipy():
    theta = FoldedNormal(3.0, 1.0)
    law = stats.foldnorm(c=3.0, scale=1.0)
    grid = np.linspace(0.0, 8.0, 17)
    np.testing.assert_allclose(theta.pdf(grid), law.pdf(grid))
    assert theta.mean() == pytest.approx(law.mean())
    assert FoldedNormal(1.0, 2.0).is_nonincreasing
    assert not theta.is_nonincreasing


def test_folded_normal_mode_and_variation():
    theta = FoldedNormal(3.0, 1.0)
    mode = theta.mode()
    assert mode**2 >= 3.0**2 - 1.0**2
    assert theta.density_variation() == pytest.approx(2.0 * float(theta.pdf(mode)))
    assert FoldedNormal(0.0, 1.0).mode() == 0.0


def test_step_density_integrates():
    theta = StepDensity((0.25, 0.25, 0.5), bin_width=0.5)
    assert density(theta, 0.1) == pytest.approx(0.5)
    assert density(theta, 1.4) == pytest.approx(1.0)
    assert density(theta, 1.5) == 0.0
    assert cdf(theta, 0.5) == pytest.approx(0.25)
    assert cdf(theta, 1.25) == pytest.approx(0.75)
    assert theta.breakpoints(1.0) == [0.0, 0.5, 1.0]
    assert theta.density_variation() == pytest.approx((0.25 + 0.0 + 0.25 + 0.5) / 0.5)
    assert theta.effective_support == pytest.approx(1.5)


def test_step_density_rejects_bad_weights():
    with pytest.raises(EvaluationError):
        StepDensity(())
    with pytest.raises(EvaluationError):
        StepDensity((0.5, -0.5, 1.0))
    with pytest.raises(EvaluationError):
        StepDensity((0.2, 0.2))


def test_comb_cells():
    comb = Comb(2)
    assert comb.cell_count == 2
    assert comb.height == 1
    assert density(comb, 0.25) == pytest.approx(1.0)
    assert density(comb, 0.75) == 0.0
    assert density(comb, 1.25) == pytest.approx(1.0)
    assert cdf(comb, 0.5) == pytest.approx(0.5)
    assert cdf(comb, 2.0) == pytest.approx(1.0)
    assert comb.mean() == pytest.approx(0.75)
    with pytest.raises(EvaluationError):
        Comb(0)


def test_comb_cell_count_for_odd_index():
    comb = Comb(3)
    assert comb.cell_count == 5
    assert float(comb.height) == pytest.approx(3 / 5)
    assert cdf(comb, 3.0) == pytest.approx(1.0)


def test_shifted_moves_mass():
    theta = Shifted(Uniform(0.0, 2.0), 3.0)
    assert density(theta, 2.9) == 0.0
    assert density(theta, 3.5) == pytest.approx(0.5)
    assert cdf(theta, 4.0) == pytest.approx(0.5)
    assert theta.quantile(0.5) == pytest.approx(4.0)
    assert theta.mean() == pytest.approx(4.0)
    assert theta.breakpoints(10.0) == [3.0, 5.0]


def test_shift_pushforward_merges_and_keeps_identity():
    base = Exponential(1.0)
    assert shift_pushforward(base, 0.0) is base
    twice = shift_pushforward(shift_pushforward(base, 1.0), 2.0)
    assert isinstance(twice, Shifted)
    assert twice.base == base
    assert twice.t == pytest.approx(3.0)
    with pytest.raises(EvaluationError):
        shift_pushforward(base, -1.0)


def test_generic_density():
    theta = GenericDensity(lambda t: 2.0 * t, support_bound=1.0)
    assert cdf(theta, 0.5) == pytest.approx(0.25)
    assert theta.quantile(0.25) == pytest.approx(0.5, abs=1e-9)
    assert theta.mean() == pytest.approx(2.0 / 3.0)
    with pytest.raises(EvaluationError):
        GenericDensity(lambda t: 1.0, support_bound=2.0)
    with pytest.raises(EvaluationError):
        to_record(theta)


def test_chebyshev_lower_bound():
    theta = Uniform(0.0, 10.0)
    assert chebyshev_lower_bound(theta, 5.0) == pytest.approx(2.5)
    assert chebyshev_lower_bound(theta, 5.0) <= theta.mean()


@pytest.mark.parametrize(
    "theta",
    [
        Uniform(1.0, 4.0),
        Exponential(0.2),
        FoldedNormal(2.0, 0.5),
        StepDensity((0.5, 0.25, 0.25)),
        Comb(4),
        Shifted(Uniform(0.0, 1.0), 2.5, tail_tolerance=1e-4),
    ],
)
def test_records_rebuild_the_same_evaluation(theta):
    record = to_record(theta)
    assert from_record(record) == theta


def test_from_record_rejects_unknown_kinds_and_bad_parameters():
    with pytest.raises(EvaluationError):
        from_record({"kind": "cauchy", "parameters": {}})
    with pytest.raises(EvaluationError):
        from_record({"kind": "uniform", "parameters": {"a": 0.0}})
