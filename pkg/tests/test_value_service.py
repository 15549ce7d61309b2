import math

import pytest

from app.services.dynamics_service import ControlSignal
from app.services.evaluation_service import Exponential, FoldedNormal, StepDensity, Uniform
from app.services.system_catalog import (
    bang_cost,
    constant_cost,
    drift_indicator,
    relax_to_one,
    rotation,
    rotation_controlled,
    stable_point,
)
from app.services.value_service import (
    EXACT_ORACLE,
    UPPER_BOUND,
    EvaluationCatalog,
    SearchConfig,
    SearchError,
    default_catalog,
    describe,
    _piecewise_candidates,
    evaluate_cost,
    shifted_value,
    shifted_value_via_reachable,
    value,
    vstar_estimate,
)


def parity_steps(k: int, odd: bool) -> StepDensity:
    weights = [0.0] * (2 * k)
    for m in range(k):
        weights[2 * m + (1 if odd else 0)] = 1.0 / k
    return StepDensity(tuple(weights))


@pytest.mark.parametrize("k", [1, 5, 20])
def test_indicator_drift_values_are_exact(k):
    sys = drift_indicator()
    assert abs(value(sys, [0.0], parity_steps(k, odd=True)).value - 1.0) <= 1e-6
    assert abs(value(sys, [0.0], parity_steps(k, odd=False)).value) <= 1e-6
    assert shifted_value(sys, [0.0], parity_steps(k, odd=True), 1.0).value <= 1e-6


@pytest.mark.parametrize("T", [10.0, 100.0])
def test_rotation_average(T):
    estimate = value(rotation(), [1.0, 0.0], Uniform(0.0, T))
    assert estimate.bias == EXACT_ORACLE
    assert abs(estimate.value - (0.5 + math.sin(T) / (4.0 * T))) <= 2e-6
    assert abs(estimate.value - 0.5) <= 2.0 * math.pi / T


def test_relax_to_one_under_an_exponential():
    estimate = value(relax_to_one(), [0.0], Exponential(1.0))
    assert estimate.value == pytest.approx(0.5, abs=1e-5)
    eta = 1.0 - math.exp(-1.0)
    y_T = 1.0 - math.exp(-1.0)
    assert estimate.value <= y_T * eta + (1.0 - eta) + 1e-3


@pytest.mark.parametrize("k", [10, 50])
@pytest.mark.parametrize("y0", [0.0, 1.0, 5.0])
def test_bang_cost_oracle(k, y0):
    sys = bang_cost()
    estimate = value(sys, [y0], Uniform(0.0, float(k)))
    assert estimate.bias == EXACT_ORACLE
    assert abs(estimate.value - max(0.0, 0.5 - y0 / (2.0 * k))) <= 1e-3
    assert value(sys, [y0], Uniform(float(k), 2.0 * k)).value <= 1e-6
    assert value(sys, [float(k)], Uniform(0.0, float(k))).value <= 1e-6


def test_bang_cost_below_zero_pays_the_ceiling():
    assert value(bang_cost(K=7.0), [-1.0], Uniform(0.0, 5.0)).value == pytest.approx(7.0)


@pytest.mark.parametrize("y0", [0.0, 1.0])
def test_switch_search_recovers_the_oracle(y0):
    estimate = value(bang_cost(), [y0], Uniform(0.0, 10.0), SearchConfig(use_oracles=False))
    assert estimate.bias == UPPER_BOUND
    assert abs(estimate.value - (0.5 - y0 / 20.0)) <= 1e-3
    assert isinstance(estimate.witness, ControlSignal)
    assert estimate.witness.values == (1.0, -1.0)


def test_piecewise_search_on_the_stable_point():
    estimate = value(stable_point(), [0.5], Uniform(0.0, 2.0), SearchConfig(segments=2))
    assert estimate.bias == UPPER_BOUND
    assert estimate.candidates == 25
    assert 0.0 <= estimate.value <= evaluate_cost(
        stable_point(), [0.5], ControlSignal.constant(0.0, 2.0), Uniform(0.0, 2.0)
    ).value + 1e-6


def test_piecewise_classes_are_nested():
    controls = (-1.0, -0.5, 0.0, 0.5, 1.0)
    previous = set()
    for segments in range(1, 7):
        signals = {(s.breakpoints, s.values) for s in _piecewise_candidates(controls, segments, 3.0)}
        assert len(signals) == len(list(_piecewise_candidates(controls, segments, 3.0)))
        coarse = {(tuple(round(b, 9) for b in bp), v) for bp, v in previous}
        assert coarse <= {(tuple(round(b, 9) for b in bp), v) for bp, v in signals}
        previous = signals
    assert len(previous) < SearchConfig().max_candidates


@pytest.mark.parametrize(
    "theta, max_segments, grid",
    [
        (Exponential(1.0), 5, (-1.0, 0.0, 1.0)),
        (Exponential(1.0), 4, None),
        (FoldedNormal(1.0, 1.0), 3, None),
    ],
)
def test_more_segments_never_raise_the_value(theta, max_segments, grid):
    sys = rotation_controlled()
    values = [
        value(sys, [1.0, 0.0], theta, SearchConfig(segments=n, control_grid=grid)).value
        for n in range(1, max_segments + 1)
    ]
    for coarse, fine in zip(values, values[1:]):
        assert fine <= coarse + 1e-9


def test_search_budget_is_reported():
    estimate = value(stable_point(), [0.5], Uniform(0.0, 2.0), SearchConfig(segments=3, max_candidates=10))
    assert estimate.budget_exhausted
    assert estimate.candidates == 10


def test_constant_cost_value():
    assert value(constant_cost(0.3), [0.0], Exponential(0.5)).value == pytest.approx(0.3, abs=1e-6)


def test_search_config_validation():
    with pytest.raises(SearchError):
        SearchConfig(segments=0)
    with pytest.raises(SearchError):
        SearchConfig(control_grid=(0.0,) * 6)
    with pytest.raises(SearchError):
        SearchConfig(switch_grid_n=2)
    with pytest.raises(SearchError):
        SearchConfig(dt=0.0)


def test_evaluate_cost_tail_and_horizon():
    theta = Exponential(1.0)
    estimate = evaluate_cost(relax_to_one(), [0.0], ControlSignal.constant(0.0, 20.0), theta)
    assert estimate.tail_error == pytest.approx(1e-6)
    with pytest.raises(SearchError):
        evaluate_cost(relax_to_one(), [0.0], ControlSignal.constant(0.0, 1.0), theta)


def test_reachable_shift_matches_the_direct_shift():
    sys = rotation()
    theta = Uniform(0.0, 10.0)
    for t in (0.5, 1.0, 2.0):
        direct = shifted_value(sys, [1.0, 0.0], theta, t).value
        assert shifted_value_via_reachable(sys, [1.0, 0.0], theta, t).value == pytest.approx(direct, abs=1e-6)


def test_catalog_labels():
    catalog = default_catalog((1.0, 5.0))
    assert len(catalog.members) == 6
    assert catalog.labels[0] == "uniform(a=0, b=1)"
    assert describe(StepDensity((0.5, 0.5))) == "step(n=2)"
    extended = catalog.with_members(Uniform(3.0, 4.0))
    assert extended.labels[-1] == "uniform(a=3, b=4)"
    with pytest.raises(SearchError):
        EvaluationCatalog(())


def test_vstar_estimate_on_bang_cost():
    sys = bang_cost()
    estimate = vstar_estimate(sys, [0.0], default_catalog((1.0, 5.0)), (0.0, 25.0, 125.0))
    assert estimate.value <= 0.05
    assert len(estimate.inner) == 6
    with pytest.raises(SearchError):
        vstar_estimate(sys, [0.0], default_catalog((1.0,)), ())


def test_vstar_estimate_on_constant_cost():
    estimate = vstar_estimate(constant_cost(0.4), [0.0], default_catalog((1.0,)), (0.0, 1.0))
    assert estimate.value == pytest.approx(0.4, abs=1e-6)
