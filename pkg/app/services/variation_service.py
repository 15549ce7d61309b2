"""Shift total variation TV_s, the long-term condition and the related discrete-time quantities.

TV_s(theta) is the supremum over Borel Q of |theta(Q) - theta(Q + s)|. For a density f on the
half line it equals (I_s + theta([0, s])) / 2 where I_s = int_0^inf |f(t + s) - f(t)| dt.
"""

import itertools
import logging
import math
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Any

import numpy as np
from scipy import integrate, optimize

from .evaluation_service import (
    Comb,
    Evaluation,
    EvaluationError,
    Exponential,
    Shifted,
    StepDensity,
    Uniform,
    cdf,
)

logger = logging.getLogger(__name__)

ANALYTIC = "analytic"
QUADRATURE = "scheffe_quadrature"
EXACT_STEP = "exact_step"
METHODS = ("auto", ANALYTIC, QUADRATURE, EXACT_STEP)

QUADRATURE_TOLERANCE = 1e-7


class QuadratureError(RuntimeError):
    def __init__(self, message: str, estimate: float) -> None:
        super().__init__(f"{message} (error estimate {estimate:.3e})")
        self.estimate = estimate


@dataclass(frozen=True)
class ShiftIntegral:
    value: float
    error: float
    method: str


@dataclass(frozen=True)
class TVCurve:
    s_grid: tuple[float, ...]
    tv_values: tuple[float, ...]
    method: str

    def __post_init__(self) -> None:
        if len(self.s_grid) != len(self.tv_values):
            raise EvaluationError("s_grid and tv_values differ in length")
        if any(b <= a for a, b in zip(self.s_grid, self.s_grid[1:])):
            raise EvaluationError("s_grid must be increasing")
        if any(not 0.0 <= v <= 1.0 for v in self.tv_values):
            raise EvaluationError("total variation values must lie in [0, 1]")
        if self.s_grid and self.s_grid[0] == 0.0 and self.tv_values[0] != 0.0:
            raise EvaluationError("TV_0 must be 0")

    def rows(self) -> list[dict[str, Any]]:
        return [{"s": s, "tv": tv, "method": self.method} for s, tv in zip(self.s_grid, self.tv_values)]


@dataclass(frozen=True)
class SupBound:
    lower: float
    upper: float
    argmax: float
    method: str


@dataclass(frozen=True)
class LTCRow:
    k: int
    sup_tv: float
    upper: float
    argmax: float
    mass_at_S: float


def _rational(s: float | Fraction) -> Fraction:
    if isinstance(s, Fraction):
        return s
    candidate = Fraction(s).limit_denominator(10**6)
    if abs(float(candidate) - s) <= 1e-15 * max(1.0, abs(s)):
        return candidate
    return Fraction(s)


def _overlap(left: list[tuple[Fraction, Fraction]], right: list[tuple[Fraction, Fraction]]) -> Fraction:
    total = Fraction(0)
    i = j = 0
    while i < len(left) and j < len(right):
        lo = max(left[i][0], right[j][0])
        hi = min(left[i][1], right[j][1])
        if hi > lo:
            total += hi - lo
        if left[i][1] <= right[j][1]:
            i += 1
        else:
            j += 1
    return total


def comb_shift_l1(comb: Comb, s: float | Fraction) -> Fraction:
    """Exact I_s of a comb density in rational arithmetic."""
    s = _rational(s)
    cells = comb.cells()
    if s == 0:
        return Fraction(0)
    moved = [(max(a - s, Fraction(0)), b - s) for a, b in cells if b - s > 0]
    support = Fraction(comb.cell_count, comb.k)
    moved_measure = sum((b - a for a, b in moved), Fraction(0))
    return comb.height * (support + moved_measure - 2 * _overlap(cells, moved))


def _step_shift_l1(theta: StepDensity, s: float) -> float:
    edges = np.asarray(theta.breakpoints(math.inf))
    end = edges[-1]
    points = np.unique(np.concatenate([edges, edges - s]))
    points = points[(points >= 0) & (points <= end)]
    if points.size < 2:
        return 0.0
    mids = 0.5 * (points[:-1] + points[1:])
    widths = np.diff(points)
    return math.fsum(np.abs(theta.pdf(mids + s) - theta.pdf(mids)) * widths)


def support_end(theta: Evaluation) -> float:
    if isinstance(theta, Uniform):
        return theta.b
    if isinstance(theta, StepDensity):
        return len(theta.weights) * theta.bin_width
    if isinstance(theta, Comb):
        return float(theta.k)
    if isinstance(theta, Shifted):
        return support_end(theta.base) + theta.t
    bound = getattr(theta, "support_bound", None)
    return float(bound) if bound is not None else math.inf


def _quad(integrand, lower: float, upper: float, points: list[float] | None) -> tuple[float, float, list[str]]:
    limit = max(200, 4 * len(points or ()))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        if math.isinf(upper):
            value, error = integrate.quad(integrand, lower, upper, limit=limit, epsabs=1e-13, epsrel=1e-11)
        else:
            value, error = integrate.quad(
                integrand, lower, upper, points=points, limit=limit, epsabs=1e-13, epsrel=1e-11
            )
    messages = [str(w.message) for w in caught if issubclass(w.category, integrate.IntegrationWarning)]
    return value, error, messages


def _quadrature_shift_l1(theta: Evaluation, s: float) -> ShiftIntegral:
    def integrand(x: float) -> float:
        return abs(float(theta.pdf(x + s)) - float(theta.pdf(x)))

    end = support_end(theta)
    upper = end if math.isfinite(end) else theta.effective_support + s
    kinks = theta.breakpoints(upper + s)
    points = sorted({x for x in (*kinks, *(x - s for x in kinks)) if 0.0 < x < upper}) or None
    value, error, messages = _quad(integrand, 0.0, upper, points)
    if math.isinf(end):
        tail, tail_error, tail_messages = _quad(integrand, upper, math.inf, None)
        value += tail
        error += tail_error
        messages += tail_messages
    if messages or error > QUADRATURE_TOLERANCE:
        raise QuadratureError(f"shift integral of {theta.kind} at s={s} did not converge: {'; '.join(messages)}", error)
    return ShiftIntegral(value=value, error=error, method=QUADRATURE)


def _resolve_method(theta: Evaluation, method: str) -> str:
    if method not in METHODS:
        raise EvaluationError(f"unknown method {method!r}; expected one of {METHODS}")
    base = theta.base if isinstance(theta, Shifted) else theta
    if method == "auto":
        if isinstance(base, (Uniform, Exponential)):
            return ANALYTIC
        if isinstance(base, (StepDensity, Comb)):
            return EXACT_STEP
        return QUADRATURE
    if method == ANALYTIC and not isinstance(base, (Uniform, Exponential)):
        raise EvaluationError(f"no closed form for {theta.kind}")
    if method == EXACT_STEP and not isinstance(base, (StepDensity, Comb)):
        raise EvaluationError(f"{theta.kind} is not piecewise constant")
    return method


def shift_l1_estimate(theta: Evaluation, s: float, method: str = "auto") -> ShiftIntegral:
    if s < 0:
        raise EvaluationError("shift s must be nonnegative")
    method = _resolve_method(theta, method)
    if s == 0:
        return ShiftIntegral(0.0, 0.0, method)
    if method == QUADRATURE:
        return _quadrature_shift_l1(theta, s)
    if isinstance(theta, Shifted):
        tv = total_variation_estimate(theta.base, s, method)
        return ShiftIntegral(max(0.0, 2.0 * tv.value - cdf(theta, s)), 2.0 * tv.error, tv.method)
    if isinstance(theta, Uniform):
        tv = min(s, theta.b - theta.a) / (theta.b - theta.a)
        return ShiftIntegral(max(0.0, 2.0 * tv - cdf(theta, s)), 0.0, ANALYTIC)
    if isinstance(theta, Exponential):
        return ShiftIntegral(-math.expm1(-theta.rate * s), 0.0, ANALYTIC)
    if isinstance(theta, Comb):
        return ShiftIntegral(float(comb_shift_l1(theta, s)), 0.0, EXACT_STEP)
    return ShiftIntegral(_step_shift_l1(theta, s), 0.0, EXACT_STEP)


def shift_l1(theta: Evaluation, s: float) -> float:
    return shift_l1_estimate(theta, s).value


@lru_cache(maxsize=65536)
def total_variation_estimate(theta: Evaluation, s: float, method: str = "auto") -> ShiftIntegral:
    if s < 0:
        raise EvaluationError("shift s must be nonnegative")
    method = _resolve_method(theta, method)
    if s == 0:
        return ShiftIntegral(0.0, 0.0, method)
    if isinstance(theta, Shifted) and method != QUADRATURE:
        return total_variation_estimate(theta.base, s, method)
    if method == ANALYTIC and isinstance(theta, Uniform):
        return ShiftIntegral(min(s, theta.b - theta.a) / (theta.b - theta.a), 0.0, ANALYTIC)
    if method == ANALYTIC and isinstance(theta, Exponential):
        return ShiftIntegral(-math.expm1(-theta.rate * s), 0.0, ANALYTIC)
    integral = shift_l1_estimate(theta, s, method)
    value = 0.5 * (integral.value + cdf(theta, s))
    return ShiftIntegral(min(1.0, max(0.0, value)), 0.5 * integral.error, integral.method)


def total_variation_shift(theta: Evaluation, s: float, method: str = "auto") -> float:
    return total_variation_estimate(theta, float(s), method).value


def tv_curve(theta: Evaluation, s_grid: Sequence[float], method: str = "auto") -> TVCurve:
    estimates = [total_variation_estimate(theta, float(s), method) for s in s_grid]
    resolved = _resolve_method(theta, method)
    return TVCurve(tuple(float(s) for s in s_grid), tuple(e.value for e in estimates), resolved)


def sup_total_variation(theta: Evaluation, S: float, grid_n: int = 257) -> SupBound:
    """Grid maximum of TV_s on [0, S] refined near the argmax.

    The lower bound is attained; the upper bound uses TV_r <= r * Var(f) / 2 together with
    subadditivity between grid points.
    """
    if S <= 0 or grid_n < 2:
        raise EvaluationError("sup_total_variation needs S > 0 and grid_n >= 2")
    grid = np.linspace(0.0, S, grid_n)
    estimates = [total_variation_estimate(theta, float(s)) for s in grid]
    values = np.array([e.value for e in estimates])
    worst_error = max(e.error for e in estimates)
    index = int(np.argmax(values))
    best, argmax = float(values[index]), float(grid[index])
    lo, hi = float(grid[max(index - 1, 0)]), float(grid[min(index + 1, grid_n - 1)])
    refined = optimize.minimize_scalar(
        lambda s: -total_variation_shift(theta, float(s)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    if -refined.fun > best:
        best, argmax = float(-refined.fun), float(refined.x)
    step = S / (grid_n - 1)
    upper = min(1.0, float(values.max()) + step * theta.density_variation() / 2.0 + worst_error)
    return SupBound(lower=best, upper=max(upper, best), argmax=argmax, method=estimates[-1].method)


def indexed_family(family: Mapping[int, Evaluation] | Sequence[Evaluation]) -> list[tuple[int, Evaluation]]:
    if isinstance(family, Mapping):
        items = list(family.items())
    else:
        items = list(enumerate(family, start=1))
    if not items:
        raise EvaluationError("family must be nonempty")
    return items


def ltc_diagnostic(
    family: Mapping[int, Evaluation] | Sequence[Evaluation], S: float = 1.0, grid_n: int = 257
) -> list[LTCRow]:
    rows = []
    for k, theta in indexed_family(family):
        bound = sup_total_variation(theta, S, grid_n)
        mass = cdf(theta, S)
        if theta.is_nonincreasing and abs(bound.lower - mass) > 1e-6:
            logger.warning("k=%s: nonincreasing density but sup TV %.9f differs from mass %.9f", k, bound.lower, mass)
        rows.append(LTCRow(k=k, sup_tv=bound.lower, upper=bound.upper, argmax=bound.argmax, mass_at_S=mass))
        logger.debug("ltc k=%s sup=%.6g", k, bound.lower)
    return rows


def pointwise_tv_profile(
    family: Mapping[int, Evaluation] | Sequence[Evaluation], s_values: Sequence[float]
) -> list[dict[str, float]]:
    return [
        {"k": k, "s": float(s), "tv": total_variation_shift(theta, float(s))}
        for k, theta in indexed_family(family)
        for s in s_values
    ]


def _distribution(xi: Sequence[float]) -> np.ndarray:
    values = np.asarray(xi, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise EvaluationError("xi must be a nonempty sequence")
    if (values < 0).any():
        raise EvaluationError("xi must be nonnegative")
    if abs(math.fsum(values) - 1.0) > 1e-12:
        raise EvaluationError(f"xi sums to {math.fsum(values)!r}, expected 1")
    return values


def discrete_tv(xi: Sequence[float]) -> float:
    """Sum over m >= 1 of |xi_{m+1} - xi_m|, zero beyond the stored prefix."""
    values = _distribution(xi)
    return math.fsum(np.abs(np.diff(np.append(values, 0.0))))


def step_density_tv_identity(xi: Sequence[float], s: float) -> tuple[float, float]:
    if not 0.0 <= s <= 1.0:
        raise EvaluationError("s must lie in [0, 1]")
    values = _distribution(xi)
    theta = StepDensity(tuple(values))
    return shift_l1_estimate(theta, s, EXACT_STEP).value, s * discrete_tv(values)


def folded_normal_mode(m: float, sigma: float, delta: float = 1e-9) -> float:
    """Mode of the folded normal density: 0 when m <= sigma, else the root of the log-space sign function."""
    if m <= 0 or sigma <= 0:
        raise EvaluationError("folded_normal_mode needs m > 0 and sigma > 0")
    if m * m <= sigma * sigma:
        return 0.0

    def sign_function(t: float) -> float:
        if t >= m:
            return -math.inf
        return 2.0 * m * t / sigma**2 - (math.log1p(t / m) - math.log1p(-t / m))

    lo = math.sqrt(m * m - sigma * sigma) * (1.0 - delta)
    hi = m * (1.0 - delta)
    for _ in range(1100):
        if sign_function(lo) > 0:
            break
        lo /= 2.0
    else:
        raise EvaluationError(f"could not bracket the folded normal mode from below for m={m}, sigma={sigma}")
    for _ in range(200):
        if sign_function(hi) < 0:
            break
        hi = m - (m - hi) / 2.0
    else:
        raise EvaluationError(f"could not bracket the folded normal mode from above for m={m}, sigma={sigma}")
    root = optimize.bisect(sign_function, lo, hi, xtol=1e-15, maxiter=2000)
    return min(float(root), math.nextafter(m, 0.0))


@dataclass(frozen=True)
class StepFunction:
    """values[i] on [breakpoints[i], breakpoints[i+1]); the last value extends to infinity."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.breakpoints or self.breakpoints[0] != 0.0:
            raise EvaluationError("step function breakpoints must start at 0")
        if len(self.breakpoints) != len(self.values):
            raise EvaluationError("one value per breakpoint is required")
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise EvaluationError("breakpoints must be strictly increasing")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise EvaluationError("step function values must lie in [0, 1]")

    def intervals(self) -> list[tuple[float, float, float]]:
        ends = (*self.breakpoints[1:], math.inf)
        return list(zip(self.breakpoints, ends, self.values))

    def __call__(self, x: Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        index = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.asarray(self.values)[np.clip(index, 0, len(self.values) - 1)]


@dataclass(frozen=True)
class HahnReport:
    lhs_minus: float
    lhs_plus: float
    bound_minus: float
    bound_plus: float
    passed: bool

    @property
    def slack(self) -> float:
        return min(self.bound_minus - self.lhs_minus, self.bound_plus - self.lhs_plus)


def _mass(theta: Evaluation, a: float, b: float) -> float:
    return cdf(theta, max(b, 0.0)) - cdf(theta, max(a, 0.0))


def hahn_bound_check(theta: Evaluation, t: float, h: StepFunction) -> HahnReport:
    """Compare int h dtheta with the integrals of h(s - t) over [t, inf) and of h(s + t)."""
    if t < 0:
        raise EvaluationError("t must be nonnegative")
    pieces = h.intervals()
    base = math.fsum(v * _mass(theta, a, b) for a, b, v in pieces)
    delayed = math.fsum(v * _mass(theta, a + t, b + t) for a, b, v in pieces)
    advanced = math.fsum(v * _mass(theta, a - t, b - t) for a, b, v in pieces)
    tv = total_variation_estimate(theta, float(t))
    lhs_minus, lhs_plus = abs(base - delayed), abs(base - advanced)
    bound_minus, bound_plus = tv.value + tv.error, 2.0 * (tv.value + tv.error)
    passed = lhs_minus <= bound_minus + 1e-9 and lhs_plus <= bound_plus + 1e-9
    if not passed:
        logger.warning("hahn bound violated for %s at t=%s: %.3e / %.3e", theta.kind, t, lhs_minus, lhs_plus)
    return HahnReport(lhs_minus, lhs_plus, bound_minus, bound_plus, passed)


def exhaustive_interval_tv(theta: StepDensity, s: float, max_bins: int = 16) -> float:
    """Sup of |theta(Q) - theta(Q + s)| over every union Q of bins, by enumeration."""
    ratio = s / theta.bin_width
    shift = round(ratio)
    if abs(ratio - shift) > 1e-9 or shift < 0:
        raise EvaluationError("s must be a nonnegative multiple of the bin width")
    weights = np.asarray(theta.weights)
    if weights.size > max_bins:
        raise EvaluationError(f"{weights.size} bins exceed the enumeration limit of {max_bins}")
    moved = np.concatenate([weights[shift:], np.zeros(min(shift, weights.size))])
    differences = weights - moved
    masks = np.array(list(itertools.product((0.0, 1.0), repeat=weights.size)))
    return float(np.abs(masks @ differences).max())
