import numpy as np
import pytest

from app.services.dynamics_service import ControlError
from app.services.system_catalog import SYSTEMS, bang_cost, build_system, constant_cost, drift_indicator, relax_to_one


def test_every_builtin_builds():
    for name in SYSTEMS:
        sys = build_system(name)
        assert sys.name == name
        y = sys.sample_states(np.random.default_rng(0), 4)
        assert sys.f(y, sys.controls[0]).shape == y.shape
        costs = sys.g(y, sys.controls[0])
        assert costs.shape == (4,)
        assert np.all((costs >= 0) & (costs <= sys.cost_ceiling))


def test_build_system_errors():
    with pytest.raises(ControlError):
        build_system("pendulum")
    with pytest.raises(ControlError):
        build_system("rotation", speed=2.0)
    with pytest.raises(ControlError):
        bang_cost(K=1.0)
    with pytest.raises(ControlError):
        constant_cost(c=2.0)


def test_bang_cost_field_and_cost():
    sys = bang_cost(K=10.0)
    y = np.array([[1.0], [-0.5]])
    np.testing.assert_allclose(sys.f(y, 1.0), [[1.0], [-1.0]])
    np.testing.assert_allclose(sys.f(y, -1.0), [[-1.0], [-1.0]])
    np.testing.assert_allclose(sys.g(y, 1.0), [1.0, 10.0])
    np.testing.assert_allclose(sys.g(y, -1.0), [0.0, 10.0])
    assert sys.cost_ceiling == 10.0
    np.testing.assert_allclose(sys.exact_flow(np.array([1.0]), -1.0, np.array([0.5, 2.0])), [[0.5], [-1.0]])
    assert sys.cost_switches(np.array([1.5]), -1.0, 3.0) == [1.5]
    assert sys.cost_switches(np.array([1.5]), 1.0, 3.0) == []


def test_regularized_bang_cost_has_no_closed_form():
    sys = bang_cost(regularized=True)
    assert sys.exact_flow is None
    np.testing.assert_allclose(sys.f(np.array([[0.5], [2.0]]), 1.0), [[0.5], [1.0]])


def test_drift_indicator_switches_at_integers():
    sys = drift_indicator()
    assert sys.cost_switches(np.array([0.5]), 0.0, 3.0) == pytest.approx([0.5, 1.5, 2.5])
    np.testing.assert_allclose(sys.g(np.array([[0.5], [1.5], [2.5]]), 0.0), [0.0, 1.0, 0.0])


def test_relax_to_one_crosses_zero_once():
    sys = relax_to_one()
    crossing = sys.cost_switches(np.array([-1.0]), 0.0, 5.0)
    assert crossing == pytest.approx([np.log(2.0)])
    state = sys.exact_flow(np.array([-1.0]), 0.0, np.array(crossing))
    assert state[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert sys.cost_switches(np.array([0.5]), 0.0, 5.0) == []
