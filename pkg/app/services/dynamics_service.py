import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

logger = logging.getLogger(__name__)

OVERFLOW_GUARD = 1e12


class ControlError(ValueError):
    pass


class DivergenceError(ControlError):
    def __init__(self, time: float, norm: float) -> None:
        super().__init__(f"state norm {norm:.3e} exceeded {OVERFLOW_GUARD:.0e} at t={time:.6g}")
        self.time = time
        self.norm = norm


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant control: values[i] on [breakpoints[i], breakpoints[i+1]).

    The last value is held on [breakpoints[-1], horizon] and beyond.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    horizon: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.breakpoints or self.breakpoints[0] != 0.0:
            raise ControlError("control breakpoints must start at 0")
        if len(self.breakpoints) != len(self.values):
            raise ControlError("one control value per segment is required")
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ControlError("control breakpoints must be strictly increasing")
        if self.horizon < self.breakpoints[-1]:
            raise ControlError("horizon precedes the last breakpoint")

    @classmethod
    def constant(cls, value: float, horizon: float) -> "ControlSignal":
        return cls((0.0,), (value,), horizon)

    @classmethod
    def from_switches(cls, switch_times: tuple[float, ...], values: tuple[float, ...], horizon: float) -> "ControlSignal":
        """Build from interior switch times; switches outside (0, horizon) or repeating a value are dropped."""
        breakpoints, kept = [0.0], [values[0]]
        for time, value in zip(switch_times, values[1:]):
            if not 0.0 < time < horizon or time <= breakpoints[-1]:
                continue
            if value == kept[-1]:
                continue
            breakpoints.append(float(time))
            kept.append(value)
        return cls(tuple(breakpoints), tuple(kept), horizon)

    def at(self, t: Any) -> np.ndarray:
        index = np.searchsorted(self.breakpoints, np.asarray(t, dtype=float), side="right") - 1
        return np.asarray(self.values)[np.clip(index, 0, len(self.values) - 1)]

    def segments(self, T: float) -> list[tuple[float, float, float]]:
        ends = (*self.breakpoints[1:], math.inf)
        return [(a, min(b, T), v) for a, b, v in zip(self.breakpoints, ends, self.values) if a < T]

    @property
    def switch_times(self) -> tuple[float, ...]:
        return self.breakpoints[1:]

    def extended(self, horizon: float) -> "ControlSignal":
        return ControlSignal(self.breakpoints, self.values, max(horizon, self.horizon))


@dataclass(frozen=True)
class InvariantSet:
    kind: str
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    radius: float = 1.0

    def contains(self, y: Any, slack: float = 1e-9) -> bool:
        y = np.asarray(y, dtype=float)
        if self.kind == "box":
            return bool(np.all(y >= np.asarray(self.lower) - slack) and np.all(y <= np.asarray(self.upper) + slack))
        norm = np.linalg.norm(y, axis=-1)
        if self.kind == "ball":
            return bool(np.all(norm <= self.radius + slack))
        return bool(np.all(np.abs(norm - self.radius) <= slack))

    def sample(self, rng: np.random.Generator, n: int, dimension: int) -> np.ndarray:
        if self.kind == "box":
            return rng.uniform(self.lower, self.upper, size=(n, dimension))
        direction = rng.normal(size=(n, dimension))
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        if self.kind == "sphere":
            return self.radius * direction
        return self.radius * rng.uniform(size=(n, 1)) ** (1.0 / dimension) * direction


@dataclass(frozen=True)
class ControlSystem:
    """y' = f(y, u) with running cost g(y, u); states are arrays of shape (..., dimension).

    exact_flow(y, u, tau) returns the states after each duration in tau when the segment
    solution is known in closed form. cost_switches(y, u, duration) lists the times inside a
    constant-control segment where the running cost jumps.
    """

    name: str
    dimension: int
    controls: tuple[float, ...]
    vector_field: Callable[[np.ndarray, float], np.ndarray]
    running_cost: Callable[[np.ndarray, float], np.ndarray]
    lipschitz: float
    growth: float
    exact_flow: Callable[[np.ndarray, float, np.ndarray], np.ndarray] | None = None
    cost_switches: Callable[[np.ndarray, float, float], list[float]] | None = None
    invariant_set: InvariantSet | None = None
    region: tuple[tuple[float, ...], tuple[float, ...]] = ((-1.0,), (1.0,))
    cost_ceiling: float = 1.0
    parameters: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def f(self, y: Any, u: float) -> np.ndarray:
        return np.asarray(self.vector_field(np.asarray(y, dtype=float), u), dtype=float)

    def g(self, y: Any, u: Any) -> np.ndarray:
        return np.asarray(self.running_cost(np.asarray(y, dtype=float), u), dtype=float)

    def state(self, y0: Any) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y0, dtype=float))
        if y.shape != (self.dimension,):
            raise ControlError(f"{self.name} expects a state of dimension {self.dimension}, got shape {y.shape}")
        return y

    def sample_states(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.invariant_set is not None:
            return self.invariant_set.sample(rng, n, self.dimension)
        lower, upper = self.region
        return rng.uniform(lower, upper, size=(n, self.dimension))

    def step(self, y: np.ndarray, u: float, h: float) -> np.ndarray:
        if self.exact_flow is not None:
            return self.exact_flow(y, u, np.array([h]))[0]
        return rk4_step(self, y, u, h)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    control_ref: ControlSignal

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def rows(self) -> list[dict[str, float]]:
        controls = self.control_ref.at(self.times)
        rows = []
        for t, y, u in zip(self.times, self.states, controls):
            row = {"t": float(t)}
            row.update({f"y{i + 1}": float(v) for i, v in enumerate(y)})
            row["u"] = float(u)
            rows.append(row)
        return rows


def rk4_step(sys: ControlSystem, y: np.ndarray, u: float, h: float) -> np.ndarray:
    k1 = sys.f(y, u)
    k2 = sys.f(y + 0.5 * h * k1, u)
    k3 = sys.f(y + 0.5 * h * k2, u)
    k4 = sys.f(y + h * k3, u)
    return y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def segment_nodes(start: float, end: float, dt: float) -> np.ndarray:
    count = max(1, math.ceil((end - start) / dt - 1e-9))
    return np.linspace(start, end, count + 1)


def _guard(time: float, y: np.ndarray) -> None:
    norm = float(np.max(np.abs(y))) if np.all(np.isfinite(y)) else math.inf
    if norm > OVERFLOW_GUARD:
        raise DivergenceError(time, norm)


def flow_segment(sys: ControlSystem, y: np.ndarray, u: float, offsets: np.ndarray, dt: float) -> np.ndarray:
    """States at y after each offset (increasing, starting after 0) under a constant control."""
    offsets = np.asarray(offsets, dtype=float)
    if sys.exact_flow is not None:
        states = np.asarray(sys.exact_flow(y, u, offsets), dtype=float).reshape(len(offsets), sys.dimension)
        for time, state in zip(offsets, states):
            _guard(float(time), state)
        return states
    states, z, previous = [], y, 0.0
    for offset in offsets:
        for h in np.diff(segment_nodes(previous, float(offset), dt)):
            z = rk4_step(sys, z, u, float(h))
            _guard(float(offset), z)
        states.append(z)
        previous = float(offset)
    return np.array(states).reshape(len(offsets), sys.dimension)


def integrate(sys: ControlSystem, y0: Any, u: ControlSignal, T: float, dt: float) -> Trajectory:
    if T <= 0 or dt <= 0:
        raise ControlError("integrate needs T > 0 and dt > 0")
    if u.horizon < T - 1e-12:
        raise ControlError(f"control horizon {u.horizon} is shorter than T={T}")
    y = sys.state(y0)
    times, states = [0.0], [y]
    for start, end, value in u.segments(T):
        nodes = segment_nodes(start, end, dt)
        block = flow_segment(sys, y, value, nodes[1:] - start, dt)
        times.extend(nodes[1:].tolist())
        states.extend(block)
        y = block[-1]
    return Trajectory(np.array(times), np.array(states), u)


def reachable_states(
    sys: ControlSystem, y0: Any, t: float, switch_budget: int = 1, dt: float = 0.5, max_candidates: int = 200_000
) -> np.ndarray:
    """Endpoints at time t of controls with at most switch_budget switches on the dt grid."""
    if sys.dimension > 2:
        raise ControlError("reachable_states supports dimension <= 2")
    if not 0 <= switch_budget <= 3:
        raise ControlError("switch_budget must lie in 0..3")
    if t < 0 or dt <= 0:
        raise ControlError("reachable_states needs t >= 0 and dt > 0")
    y = sys.state(y0)
    if t == 0:
        return y.reshape(1, -1)
    grid = [float(x) for x in np.arange(dt, t, dt) if x < t - 1e-12]
    budget = switch_budget if len(sys.controls) > 1 else 0
    total = sum(math.comb(len(grid), c) * len(sys.controls) ** (c + 1) for c in range(budget + 1))
    if total > max_candidates:
        raise ControlError(f"{total} candidate controls exceed the budget of {max_candidates}")
    endpoints: dict[tuple[int, ...], np.ndarray] = {}
    for count in range(budget + 1):
        for switches in itertools.combinations(grid, count):
            for values in itertools.product(sys.controls, repeat=count + 1):
                signal = ControlSignal((0.0, *switches), values, t)
                endpoint = integrate(sys, y, signal, t, dt).final_state
                key = tuple(np.round(endpoint / 1e-6).astype(np.int64))
                endpoints.setdefault(key, endpoint)
    return np.array(sorted(endpoints.values(), key=lambda state: tuple(state)))


@dataclass(frozen=True)
class NonexpansiveReport:
    passed: bool
    worst_value: float
    worst_pair: tuple[tuple[float, ...], tuple[float, ...]]
    worst_control: float
    samples: int


def check_nonexpansive(sys: ControlSystem, sample_pairs: int = 200, rng_seed: int = 0) -> NonexpansiveReport:
    """max over a of min over b of <y1 - y2, f(y1, a) - f(y2, b)> on sampled pairs."""
    rng = np.random.default_rng(rng_seed)
    y1 = sys.sample_states(rng, sample_pairs)
    y2 = sys.sample_states(rng, sample_pairs)
    delta = y1 - y2
    controls = sys.controls
    scores = np.empty((len(controls), len(controls), sample_pairs))
    for i, a in enumerate(controls):
        fa = sys.f(y1, a)
        for j, b in enumerate(controls):
            scores[i, j] = np.sum(delta * (fa - sys.f(y2, b)), axis=-1)
    inner = scores.min(axis=1)
    outer = inner.max(axis=0)
    worst = int(np.argmax(outer))
    report = NonexpansiveReport(
        passed=bool(outer[worst] <= 1e-9),
        worst_value=float(outer[worst]),
        worst_pair=(tuple(y1[worst].tolist()), tuple(y2[worst].tolist())),
        worst_control=float(controls[int(np.argmax(inner[:, worst]))]),
        samples=sample_pairs,
    )
    logger.info("nonexpansive %s: passed=%s worst=%.3e", sys.name, report.passed, report.worst_value)
    return report


@dataclass(frozen=True, eq=False)
class ContractionReport:
    times: np.ndarray
    displacement: np.ndarray
    response: ControlSignal
    bound: float
    passed: bool


def check_contraction(
    sys: ControlSystem, y1: Any, y2: Any, u: ControlSignal, T: float, dt: float = 0.01
) -> ContractionReport:
    """Follow u from y1 and a greedy response from y2; the gap must not grow beyond 10 dt L."""
    x, z = sys.state(y1), sys.state(y2)
    initial = float(np.linalg.norm(x - z))
    bound = initial * (1.0 + 10.0 * dt * sys.lipschitz)
    times, gaps, responses = [0.0], [initial], []
    for start, end, a in u.segments(T):
        nodes = segment_nodes(start, end, dt)
        for left, right in zip(nodes[:-1], nodes[1:]):
            h = float(right - left)
            x = sys.step(x, a, h)
            candidates = [sys.step(z, b, h) for b in sys.controls]
            distances = [float(np.linalg.norm(x - c)) for c in candidates]
            best = int(np.argmin(distances))
            z = candidates[best]
            responses.append((float(left), sys.controls[best]))
            times.append(float(right))
            gaps.append(distances[best])
    breakpoints, values = [], []
    for time, value in responses:
        if not values or value != values[-1]:
            breakpoints.append(time)
            values.append(value)
    response = ControlSignal(tuple(breakpoints), tuple(values), T)
    displacement = np.array(gaps)
    passed = bool(np.all(displacement <= bound + 1e-12))
    if not passed:
        logger.warning("%s: displacement grew to %.6g above %.6g", sys.name, displacement.max(), bound)
    return ContractionReport(np.array(times), displacement, response, bound, passed)


@dataclass(frozen=True)
class RegularityReport:
    lipschitz: float
    growth: float
    declared_lipschitz: float
    declared_growth: float

    @property
    def within_declared(self) -> bool:
        return self.lipschitz <= self.declared_lipschitz * (1 + 1e-9) and self.growth <= self.declared_growth * (1 + 1e-9)


def estimate_regularity(
    sys: ControlSystem,
    samples: int = 1000,
    region: tuple[tuple[float, ...], tuple[float, ...]] | None = None,
    rng_seed: int = 0,
) -> RegularityReport:
    """Empirical Lipschitz and linear-growth ratios from random and nearby pairs."""
    rng = np.random.default_rng(rng_seed)
    lower, upper = region or sys.region
    y = rng.uniform(lower, upper, size=(samples, sys.dimension))
    far = rng.uniform(lower, upper, size=(samples, sys.dimension))
    direction = rng.normal(size=(samples, sys.dimension))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    near = y + 10.0 ** rng.uniform(-4.0, -1.0, size=(samples, 1)) * direction
    first = np.concatenate([y, y])
    second = np.concatenate([far, near])
    separation = np.linalg.norm(first - second, axis=-1)
    keep = separation > 0
    lipschitz, growth = 0.0, 0.0
    for u in sys.controls:
        f_first = sys.f(first, u)
        change = np.linalg.norm(f_first - sys.f(second, u), axis=-1)
        lipschitz = max(lipschitz, float(np.max(change[keep] / separation[keep])))
        growth = max(growth, float(np.max(np.linalg.norm(f_first, axis=-1) / (1.0 + np.linalg.norm(first, axis=-1)))))
    report = RegularityReport(lipschitz, growth, sys.lipschitz, sys.growth)
    if not report.within_declared:
        logger.warning(
            "%s: estimated constants L=%.4g a=%.4g exceed declared L=%.4g a=%.4g",
            sys.name,
            lipschitz,
            growth,
            sys.lipschitz,
            sys.growth,
        )
    return report
