"""Closed-form optimal values registered per (system, evaluation family)."""

import logging
from dataclasses import dataclass
from typing import Any, Callable

from .dynamics_service import ControlSignal, ControlSystem
from .evaluation_service import Evaluation, Shifted, Uniform

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleSolution:
    value: float
    witness: ControlSignal
    oracle_id: str


def uniform_window(theta: Evaluation) -> tuple[float, float] | None:
    """(a, b) when theta is uniform on [a, b], possibly through shifts."""
    if isinstance(theta, Uniform):
        return theta.a, theta.b
    if isinstance(theta, Shifted):
        window = uniform_window(theta.base)
        if window is not None:
            return window[0] + theta.t, window[1] + theta.t
    return None


def bang_cost_uniform(sys: ControlSystem, y0: Any, theta: Evaluation) -> OracleSolution | None:
    """Push up until (b - y0) / 2, then down: the state reaches 0 exactly at b."""
    if sys.name != "bang-cost" or sys.parameters.get("regularized"):
        return None
    window = uniform_window(theta)
    if window is None:
        return None
    a, b = window
    y = float(sys.state(y0)[0])
    horizon = theta.effective_support
    if y < 0:
        return OracleSolution(sys.cost_ceiling, ControlSignal.constant(-1.0, horizon), "bang-cost/negative-state")
    switch = (b - y) / 2.0
    value = max(0.0, (b - 2.0 * a - y) / (2.0 * (b - a)))
    if switch <= 0:
        witness = ControlSignal.constant(-1.0, horizon)
    else:
        witness = ControlSignal((0.0, switch), (1.0, -1.0), max(horizon, switch))
    return OracleSolution(value, witness, "bang-cost/uniform")


ORACLES: list[Callable[[ControlSystem, Any, Evaluation], OracleSolution | None]] = [bang_cost_uniform]


def lookup_oracle(sys: ControlSystem, y0: Any, theta: Evaluation) -> OracleSolution | None:
    for oracle in ORACLES:
        solution = oracle(sys, y0, theta)
        if solution is not None:
            logger.debug("oracle %s answered for %s", solution.oracle_id, sys.name)
            return solution
    return None
