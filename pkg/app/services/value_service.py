import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterator

import numpy as np
from scipy import integrate, optimize

from .dynamics_service import ControlSignal, ControlSystem, flow_segment, reachable_states
from .evaluation_service import Evaluation, Exponential, Uniform, cdf, shift_pushforward, to_record
from .oracle_service import lookup_oracle

logger = logging.getLogger(__name__)

UPPER_BOUND = "upper_bound"
EXACT_ORACLE = "exact_oracle"

SIMPSON_TOLERANCE = 1e-8
MAX_DOUBLINGS = 13
TIE_TOLERANCE = 1e-12


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class ValueEstimate:
    value: float
    bias: str
    tail_error: float
    witness: ControlSignal | str
    quad_error: float
    budget_exhausted: bool = False
    candidates: int = 1


@dataclass(frozen=True)
class SearchConfig:
    """Control class for the inf in V_theta.

    Two-control systems are searched over switch families; others over piecewise-constant
    controls with m equal pieces on the effective support, for every m up to `segments`.
    """

    segments: int = 3
    control_grid: tuple[float, ...] | None = None
    switch_grid_n: int = 17
    two_switch: bool = False
    max_candidates: int = 20_000
    dt: float = 0.05
    use_oracles: bool = True
    extra_candidates: tuple[ControlSignal, ...] = ()

    def __post_init__(self) -> None:
        if not 1 <= self.segments <= 6:
            raise SearchError("segments must lie in 1..6")
        if self.control_grid is not None and not 1 <= len(self.control_grid) <= 5:
            raise SearchError("control_grid must hold 1 to 5 values")
        if self.switch_grid_n < 3:
            raise SearchError("switch_grid_n must be at least 3")
        if self.dt <= 0:
            raise SearchError("dt must be positive")


@dataclass(frozen=True)
class EvaluationCatalog:
    members: tuple[Evaluation, ...]
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.members:
            raise SearchError("catalog must be nonempty")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(describe(theta) for theta in self.members))
        if len(self.labels) != len(self.members):
            raise SearchError("one label per catalog member is required")

    def with_members(self, *members: Evaluation) -> "EvaluationCatalog":
        return EvaluationCatalog(self.members + members, self.labels + tuple(describe(m) for m in members))

    def __iter__(self) -> Iterator[tuple[str, Evaluation]]:
        return iter(zip(self.labels, self.members))


def describe(theta: Evaluation) -> str:
    if theta.kind == "generic":
        return f"generic(bound={theta.support_bound:g})"
    record = to_record(theta)
    params = record["parameters"]
    if theta.kind == "shifted":
        return f"shifted({describe(theta.base)}, t={params['t']:g})"
    if theta.kind == "step":
        return f"step(n={len(params['weights'])})"
    return f"{theta.kind}(" + ", ".join(f"{k}={v:g}" for k, v in params.items()) + ")"


def default_catalog(horizons: tuple[float, ...] = (1.0, 5.0, 25.0, 125.0), tail_tolerance: float = 1e-6) -> EvaluationCatalog:
    members: list[Evaluation] = []
    for T in horizons:
        members.append(Uniform(0.0, T, tail_tolerance=tail_tolerance))
        members.append(Uniform(T, 2.0 * T, tail_tolerance=tail_tolerance))
        members.append(Exponential(1.0 / T, tail_tolerance=tail_tolerance))
    return EvaluationCatalog(tuple(members))


def _piece_integral(
    sys: ControlSystem, y: np.ndarray, u: float, theta: Evaluation, left: float, right: float, dt: float
) -> tuple[float, float, np.ndarray]:
    """Adaptive composite Simpson of g * density on [left, right] under a constant control."""
    width = right - left
    end_state = flow_segment(sys, y, u, np.array([width]), dt)[0]
    nudge = 1e-12 * max(1.0, abs(right))
    if width <= 2 * nudge:
        return 0.0, 0.0, end_state
    panels, previous, estimate = 8, None, 0.0
    for _ in range(MAX_DOUBLINGS):
        nodes = np.linspace(left, right, panels + 1)
        inner = np.clip(nodes, left + nudge, right - nudge)
        states = flow_segment(sys, y, u, inner - left, dt)
        weights = theta.pdf(inner) * sys.g(states, u)
        estimate = float(integrate.simpson(weights, x=nodes))
        if previous is not None and abs(estimate - previous) < SIMPSON_TOLERANCE:
            return estimate, abs(estimate - previous), end_state
        previous, panels = estimate, panels * 2
    logger.warning("simpson did not settle on [%.6g, %.6g] for %s", left, right, sys.name)
    return estimate, abs(estimate - previous), end_state


def evaluate_cost(sys: ControlSystem, y0: Any, u: ControlSignal, theta: Evaluation, dt: float = 0.05) -> ValueEstimate:
    horizon = theta.effective_support
    if u.horizon < horizon - 1e-9:
        raise SearchError(f"control horizon {u.horizon:.6g} is shorter than the effective support {horizon:.6g}")
    y = sys.state(y0)
    kinks = theta.breakpoints(horizon)
    total, error = [], 0.0
    for start, end, value in u.segments(horizon):
        cuts = {start, end, *(x for x in kinks if start < x < end)}
        if sys.cost_switches is not None:
            cuts.update(start + tau for tau in sys.cost_switches(y, value, end - start) if 0 < tau < end - start)
        ordered = sorted(cuts)
        for left, right in zip(ordered[:-1], ordered[1:]):
            piece, piece_error, y = _piece_integral(sys, y, value, theta, left, right, dt)
            total.append(piece)
            error += piece_error
    tail_error = (1.0 - cdf(theta, horizon)) * sys.cost_ceiling
    cost = math.fsum(total)
    cost = min(max(cost, -tail_error), sys.cost_ceiling + tail_error)
    return ValueEstimate(value=cost, bias=UPPER_BOUND, tail_error=tail_error, witness=u, quad_error=error)


def _switch_candidates(controls: tuple[float, ...], times: list[float], two_switch: bool, horizon: float) -> Iterator[ControlSignal]:
    for c in controls:
        yield ControlSignal.constant(c, horizon)
    for first, second in itertools.permutations(controls, 2):
        for tau in times:
            yield ControlSignal((0.0, tau), (first, second), horizon)
    if two_switch:
        for first, second in itertools.permutations(controls, 2):
            for tau1, tau2 in itertools.combinations(times, 2):
                yield ControlSignal((0.0, tau1, tau2), (first, second, first), horizon)


def _piecewise_candidates(controls: tuple[float, ...], segments: int, horizon: float) -> Iterator[ControlSignal]:
    # every m <= segments, coarse first, so the class only grows with segments
    seen = set()
    for m in range(1, segments + 1):
        switches = tuple(i * horizon / m for i in range(1, m))
        for values in itertools.product(controls, repeat=m):
            signal = ControlSignal.from_switches(switches, values, horizon)
            key = (tuple(round(b / horizon, 12) for b in signal.breakpoints), signal.values)
            if key not in seen:
                seen.add(key)
                yield signal


def _best(
    sys: ControlSystem, y0: Any, theta: Evaluation, candidates, search: SearchConfig
) -> tuple[ValueEstimate | None, int, bool]:
    best, count = None, 0
    for signal in candidates:
        if count >= search.max_candidates:
            logger.warning("%s: control search stopped at %d candidates", sys.name, count)
            return best, count, True
        estimate = evaluate_cost(sys, y0, signal, theta, search.dt)
        count += 1
        if best is None or estimate.value < best.value - TIE_TOLERANCE:
            best = estimate
    return best, count, False


def _refine_switch(
    sys: ControlSystem, y0: Any, theta: Evaluation, best: ValueEstimate, spacing: float, search: SearchConfig
) -> tuple[ValueEstimate, int]:
    signal = best.witness
    if not isinstance(signal, ControlSignal) or len(signal.breakpoints) != 2:
        return best, 0
    horizon, tau = signal.horizon, signal.breakpoints[1]
    lo, hi = max(tau - spacing, horizon * 1e-9), min(tau + spacing, horizon * (1 - 1e-9))
    if hi <= lo:
        return best, 0
    values = signal.values

    def objective(switch: float) -> float:
        return evaluate_cost(sys, y0, ControlSignal((0.0, float(switch)), values, horizon), theta, search.dt).value

    result = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9 * max(1.0, horizon)})
    if result.fun < best.value - TIE_TOLERANCE:
        refined = evaluate_cost(sys, y0, ControlSignal((0.0, float(result.x)), values, horizon), theta, search.dt)
        return refined, int(result.nfev)
    return best, int(result.nfev)


def value(sys: ControlSystem, y0: Any, theta: Evaluation, search: SearchConfig | None = None) -> ValueEstimate:
    """V_theta(y0): exact for uncontrolled systems and registered oracles, otherwise an upper bound."""
    search = search or SearchConfig()
    horizon = theta.effective_support
    if search.use_oracles:
        solution = lookup_oracle(sys, y0, theta)
        if solution is not None:
            check = evaluate_cost(sys, y0, solution.witness, theta, search.dt)
            mismatch = abs(check.value - solution.value)
            if mismatch > 1e-6 + check.tail_error:
                logger.warning("oracle %s disagrees with quadrature by %.3e", solution.oracle_id, mismatch)
            return ValueEstimate(solution.value, EXACT_ORACLE, check.tail_error, solution.witness, mismatch)
    if len(sys.controls) == 1:
        estimate = evaluate_cost(sys, y0, ControlSignal.constant(sys.controls[0], horizon), theta, search.dt)
        return replace(estimate, bias=EXACT_ORACLE)
    controls = tuple(search.control_grid or sys.controls)
    if len(controls) == 2:
        grid = np.linspace(0.0, horizon, search.switch_grid_n)
        times = sorted({float(x) for x in grid[1:-1]} | {x for x in theta.breakpoints(horizon) if 0 < x < horizon})
        candidates = _switch_candidates(controls, times, search.two_switch, horizon)
    else:
        candidates = _piecewise_candidates(controls, search.segments, horizon)
    extras = (signal.extended(horizon) for signal in search.extra_candidates)
    best, count, exhausted = _best(sys, y0, theta, itertools.chain(candidates, extras), search)
    if best is None:
        raise SearchError("no candidate control was evaluated")
    if len(controls) == 2 and not exhausted:
        best, evaluations = _refine_switch(sys, y0, theta, best, horizon / (search.switch_grid_n - 1), search)
        count += evaluations
    return replace(best, bias=UPPER_BOUND, budget_exhausted=exhausted, candidates=count)


def shifted_value(
    sys: ControlSystem, y0: Any, theta: Evaluation, t: float, search: SearchConfig | None = None
) -> ValueEstimate:
    """V of the pushforward of theta by s -> s + t, controls optimized on [0, t + support]."""
    return value(sys, y0, shift_pushforward(theta, t), search)


def shifted_value_via_reachable(
    sys: ControlSystem,
    y0: Any,
    theta: Evaluation,
    t: float,
    search: SearchConfig | None = None,
    switch_budget: int = 1,
    dt: float = 0.5,
) -> ValueEstimate:
    """inf over reachable states at time t of V_theta; exact for uncontrolled systems."""
    states = reachable_states(sys, y0, t, switch_budget, dt)
    estimates = [value(sys, state, theta, search) for state in states]
    return min(estimates, key=lambda e: e.value)


@dataclass(frozen=True)
class VStarEstimate:
    value: float
    member: str
    inner: tuple[tuple[str, float, float], ...]
    estimate: ValueEstimate


def vstar_estimate(
    sys: ControlSystem,
    y0: Any,
    catalog: EvaluationCatalog,
    t_grid: tuple[float, ...],
    search: SearchConfig | None = None,
) -> VStarEstimate:
    """max over catalog members of min over t_grid of the shifted value.

    The inner min over a finite grid overestimates the inf over all shifts and the outer max
    over a finite catalog underestimates the sup; only one-sided claims survive both.
    """
    if not t_grid:
        raise SearchError("t_grid must be nonempty")
    inner, best = [], None
    for label, theta in catalog:
        shifted = [(t, shifted_value(sys, y0, theta, t, search)) for t in t_grid]
        t_min, lowest = min(shifted, key=lambda item: item[1].value)
        inner.append((label, float(t_min), lowest.value))
        logger.info("vstar %s: member %s min %.6g at t=%g", sys.name, label, lowest.value, t_min)
        if best is None or lowest.value > best[2].value + TIE_TOLERANCE:
            best = (label, t_min, lowest)
    label, _, estimate = best
    return VStarEstimate(value=estimate.value, member=label, inner=tuple(inner), estimate=estimate)
