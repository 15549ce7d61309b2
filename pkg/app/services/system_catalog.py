import math
from typing import Any, Callable

import numpy as np

from .dynamics_service import ControlError, ControlSystem, InvariantSet

UNIT_CONTROLS = (-1.0, -0.5, 0.0, 0.5, 1.0)


def _rotate(y: np.ndarray, angle: np.ndarray) -> np.ndarray:
    cos, sin = np.cos(angle), np.sin(angle)
    return np.stack((cos * y[0] - sin * y[1], sin * y[0] + cos * y[1]), axis=-1)


def _circle_cost(y: np.ndarray, u: Any) -> np.ndarray:
    return (1.0 + 0.5 * y[..., 0]) / 2.0


def rotation() -> ControlSystem:
    """y' = iy on the plane with cost (1 + Re(y) / 2) / 2."""
    return ControlSystem(
        name="rotation",
        dimension=2,
        controls=(0.0,),
        vector_field=lambda y, u: np.stack((-y[..., 1], y[..., 0]), axis=-1),
        running_cost=_circle_cost,
        lipschitz=1.0,
        growth=1.0,
        exact_flow=lambda y, u, tau: _rotate(y, np.asarray(tau, dtype=float)),
        invariant_set=InvariantSet("sphere", radius=1.0),
        region=((-1.0, -1.0), (1.0, 1.0)),
    )


def rotation_controlled() -> ControlSystem:
    """y' = iyu with u in a five-point grid of [-1, 1]."""
    return ControlSystem(
        name="rotation-controlled",
        dimension=2,
        controls=UNIT_CONTROLS,
        vector_field=lambda y, u: u * np.stack((-y[..., 1], y[..., 0]), axis=-1),
        running_cost=_circle_cost,
        lipschitz=1.0,
        growth=1.0,
        exact_flow=lambda y, u, tau: _rotate(y, u * np.asarray(tau, dtype=float)),
        invariant_set=InvariantSet("sphere", radius=1.0),
        region=((-1.0, -1.0), (1.0, 1.0)),
    )


def stable_point() -> ControlSystem:
    """y' = -y + u; the box [-1, 1] is invariant."""
    return ControlSystem(
        name="stable-point",
        dimension=1,
        controls=UNIT_CONTROLS,
        vector_field=lambda y, u: -y + u,
        running_cost=lambda y, u: np.minimum(1.0, y[..., 0] ** 2),
        lipschitz=1.0,
        growth=1.0,
        exact_flow=lambda y, u, tau: (
            np.exp(-np.asarray(tau))[:, None] * y + (1.0 - np.exp(-np.asarray(tau)))[:, None] * u
        ),
        invariant_set=InvariantSet("box", lower=(-1.0,), upper=(1.0,)),
        region=((-2.0,), (2.0,)),
    )


def _integer_crossings(y: np.ndarray, u: Any, duration: float) -> list[float]:
    first = math.floor(float(y[0])) + 1
    return [n - float(y[0]) for n in range(first, first + math.ceil(duration) + 1) if n - float(y[0]) < duration]


def drift_indicator() -> ControlSystem:
    """y' = 1 with cost 1 when floor(y) is odd."""
    return ControlSystem(
        name="drift-indicator",
        dimension=1,
        controls=(0.0,),
        vector_field=lambda y, u: np.ones_like(y),
        running_cost=lambda y, u: (np.floor(y[..., 0]) % 2 == 1).astype(float),
        lipschitz=0.0,
        growth=1.0,
        exact_flow=lambda y, u, tau: y + np.asarray(tau, dtype=float)[:, None],
        cost_switches=_integer_crossings,
        region=((0.0,), (10.0,)),
    )


def _zero_crossing(y: np.ndarray, u: Any, duration: float) -> list[float]:
    if y[0] >= 0:
        return []
    crossing = math.log1p(-float(y[0]))
    return [crossing] if crossing < duration else []


def relax_to_one() -> ControlSystem:
    """Uncontrolled y' = -(y - 1) with cost clip(y, 0, 1)."""
    return ControlSystem(
        name="relax-to-one",
        dimension=1,
        controls=(0.0,),
        vector_field=lambda y, u: 1.0 - y,
        running_cost=lambda y, u: np.clip(y[..., 0], 0.0, 1.0),
        lipschitz=1.0,
        growth=1.0,
        exact_flow=lambda y, u, tau: 1.0 + (y - 1.0) * np.exp(-np.asarray(tau, dtype=float))[:, None],
        cost_switches=_zero_crossing,
        region=((-2.0,), (2.0,)),
    )


def bang_cost(K: float = 10.0, regularized: bool = False) -> ControlSystem:
    """y' = u on y >= 0 and y' = -1 below; cost 1 for u = +1, 0 for u = -1 and K below zero.

    With regularized=True the field is y on [0, 1] under u = +1, which removes the jump at 0;
    that variant has no closed-form flow.
    """
    if K <= 1:
        raise ControlError("bang-cost needs K > 1")

    def vector_field(y: np.ndarray, u: Any) -> np.ndarray:
        raw = np.where(y >= 0, u, -1.0)
        if regularized:
            return np.where((y >= 0) & (y <= 1) & (np.asarray(u) > 0), y, raw)
        return raw

    def running_cost(y: np.ndarray, u: Any) -> np.ndarray:
        return np.where(y[..., 0] < 0, K, np.where(np.asarray(u) > 0, 1.0, 0.0))

    def exact_flow(y: np.ndarray, u: Any, tau: np.ndarray) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)[:, None]
        return np.where((y >= 0) & (u > 0), y + tau, y - tau)

    def cost_switches(y: np.ndarray, u: Any, duration: float) -> list[float]:
        if u < 0 and 0 < y[0] < duration:
            return [float(y[0])]
        return []

    return ControlSystem(
        name="bang-cost",
        dimension=1,
        controls=(-1.0, 1.0),
        vector_field=vector_field,
        running_cost=running_cost,
        lipschitz=1.0,
        growth=1.0,
        exact_flow=None if regularized else exact_flow,
        cost_switches=cost_switches,
        region=((-2.0,), (2.0,)),
        cost_ceiling=K,
        parameters={"K": K, "regularized": regularized},
    )


def expanding() -> ControlSystem:
    return ControlSystem(
        name="expanding",
        dimension=1,
        controls=(0.0,),
        vector_field=lambda y, u: y,
        running_cost=lambda y, u: np.minimum(1.0, np.abs(y[..., 0])),
        lipschitz=1.0,
        growth=1.0,
        exact_flow=lambda y, u, tau: y * np.exp(np.asarray(tau, dtype=float))[:, None],
    )


def constant_cost(c: float = 0.5) -> ControlSystem:
    if not 0.0 <= c <= 1.0:
        raise ControlError("constant cost must lie in [0, 1]")
    return ControlSystem(
        name="constant-cost",
        dimension=1,
        controls=(0.0,),
        vector_field=lambda y, u: np.zeros_like(y),
        running_cost=lambda y, u: np.full(np.shape(y)[:-1], c),
        lipschitz=0.0,
        growth=0.0,
        exact_flow=lambda y, u, tau: np.repeat(y[None, :], len(np.atleast_1d(tau)), axis=0),
        parameters={"c": c},
    )


SYSTEMS: dict[str, Callable[..., ControlSystem]] = {
    "rotation": rotation,
    "rotation-controlled": rotation_controlled,
    "stable-point": stable_point,
    "drift-indicator": drift_indicator,
    "relax-to-one": relax_to_one,
    "bang-cost": bang_cost,
    "expanding": expanding,
    "constant-cost": constant_cost,
}


def build_system(name: str, **params: Any) -> ControlSystem:
    if name not in SYSTEMS:
        raise ControlError(f"unknown system {name!r}; expected one of {sorted(SYSTEMS)}")
    try:
        return SYSTEMS[name](**params)
    except TypeError as exc:
        raise ControlError(f"bad parameters for {name}: {exc}") from exc
