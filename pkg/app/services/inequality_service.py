import logging
from collections.abc import Mapping, Sequence
from dataclasses import replace
from typing import Any

from app.models import CheckReport

from .dynamics_service import ControlSignal, ControlSystem
from .evaluation_service import Evaluation, Uniform, shift_pushforward
from .value_service import SearchConfig, ValueEstimate, evaluate_cost, shifted_value, value
from .variation_service import indexed_family, total_variation_estimate

logger = logging.getLogger(__name__)


def _witnesses(estimates: Sequence[ValueEstimate]) -> tuple[ControlSignal, ...]:
    return tuple(e.witness for e in estimates if isinstance(e.witness, ControlSignal))


def _augmented(search: SearchConfig | None, estimates: Sequence[ValueEstimate]) -> SearchConfig:
    search = search or SearchConfig()
    return replace(search, extra_candidates=search.extra_candidates + _witnesses(estimates))


def gamma_shift_bound(
    sys: ControlSystem, y0: Any, u: ControlSignal, theta: Evaluation, t: float, dt: float = 0.05
) -> CheckReport:
    """|gamma_theta(u) - gamma_{theta shifted by t}(u)| against 2 TV_t times the cost ceiling."""
    shifted = shift_pushforward(theta, t)
    u = u.extended(shifted.effective_support)
    direct = evaluate_cost(sys, y0, u, theta, dt)
    moved = evaluate_cost(sys, y0, u, shifted, dt)
    tv = total_variation_estimate(theta, float(t))
    difference = abs(direct.value - moved.value)
    bound = 2.0 * sys.cost_ceiling * (tv.value + tv.error)
    budget = direct.tail_error + moved.tail_error + direct.quad_error + moved.quad_error
    return CheckReport(
        name="gamma-shift",
        passed=difference <= bound + budget + 1e-9,
        values={"t": t, "difference": difference, "bound": bound},
        slack={"quadrature": direct.quad_error + moved.quad_error, "tail": direct.tail_error + moved.tail_error},
    )


def shift_inequality_check(
    sys: ControlSystem, y0: Any, mu: Evaluation, t: float, search: SearchConfig | None = None, slack: float = 1e-3
) -> CheckReport:
    """V_mu(y0) <= V_{mu shifted by t}(y0) + 2 TV_t(mu), with the cost ceiling scaling the TV term."""
    shifted = shifted_value(sys, y0, mu, t, search)
    direct = value(sys, y0, mu, _augmented(search, [shifted]))
    tv = total_variation_estimate(mu, float(t))
    rhs = shifted.value + 2.0 * sys.cost_ceiling * tv.value
    budget = {
        "fixed": slack,
        "quadrature": direct.quad_error + shifted.quad_error + 2.0 * sys.cost_ceiling * tv.error,
        "tail": direct.tail_error + shifted.tail_error,
    }
    passed = direct.value <= rhs + sum(budget.values())
    if not passed:
        logger.warning("shift inequality failed for %s t=%s: %.6g > %.6g", sys.name, t, direct.value, rhs)
    return CheckReport(
        name="shift-inequality",
        passed=passed,
        values={"t": t, "value": direct.value, "shifted_value": shifted.value, "tv": tv.value, "rhs": rhs},
        slack=budget,
    )


def sandwich_check(
    sys: ControlSystem,
    y0: Any,
    family: Mapping[int, Evaluation] | Sequence[Evaluation],
    T0: float,
    t_grid: Sequence[float],
    search: SearchConfig | None = None,
    slack: float = 2e-2,
) -> CheckReport:
    """A + slack >= B_hi >= B_lo >= C - slack over a finite k range.

    A is max_k min_{t <= T0} of the shifted values, C the same over the whole t grid, and
    B_hi, B_lo the max and min of V_{theta^k} over the tail half of the k range.
    """
    items = indexed_family(family)
    grid = sorted(set(float(t) for t in t_grid) | {0.0})
    short = [t for t in grid if t <= T0]
    head_mins, full_mins, values = [], [], []
    for k, theta in items:
        shifted = {t: shifted_value(sys, y0, theta, t, search) for t in grid}
        head_mins.append(min(shifted[t].value for t in short))
        full_mins.append(min(e.value for e in shifted.values()))
        direct = value(sys, y0, theta, _augmented(search, list(shifted.values())))
        values.append(min(direct.value, shifted[0.0].value))
        logger.debug("sandwich k=%s head=%.6g full=%.6g value=%.6g", k, head_mins[-1], full_mins[-1], values[-1])
    tail = values[len(values) // 2 :]
    A, C = max(head_mins), max(full_mins)
    b_hi, b_lo = max(tail), min(tail)
    passed = A + slack >= b_hi >= b_lo >= C - slack
    return CheckReport(
        name="sandwich",
        passed=passed,
        values={"A": A, "B_hi": b_hi, "B_lo": b_lo, "C": C, "k": [k for k, _ in items]},
        slack={"fixed": slack},
    )


def nonuniform_convergence_probe(
    sys: ControlSystem,
    y0_grid: Sequence[float],
    k_grid: Sequence[int],
    search: SearchConfig | None = None,
    tolerance: float = 1e-3,
) -> tuple[list[dict[str, float]], CheckReport]:
    """Table of V under the uniform evaluations on [0, k] against max(0, 1/2 - y0 / 2k)."""
    rows = []
    for y0 in y0_grid:
        for k in sorted(k_grid):
            estimate = value(sys, [y0], Uniform(0.0, float(k)), search)
            expected = max(0.0, 0.5 - y0 / (2.0 * k))
            rows.append({"y0": float(y0), "k": int(k), "value": estimate.value, "formula": expected})
    worst = max(abs(r["value"] - r["formula"]) for r in rows)
    diagonal = [r["value"] for r in rows if r["y0"] == r["k"]]
    monotone = all(
        later["value"] >= earlier["value"] - 1e-9
        for earlier, later in zip(rows, rows[1:])
        if earlier["y0"] == later["y0"]
    )
    passed = worst <= tolerance and all(v <= 1e-6 for v in diagonal) and monotone
    report = CheckReport(
        name="nonuniform-convergence",
        passed=passed,
        values={"max_error": worst, "diagonal_max": max(diagonal, default=0.0), "monotone_in_k": monotone},
        slack={"fixed": tolerance},
    )
    return rows, report
