"""Evaluations: probability measures on the half line used to weight running costs over time."""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Callable

import numpy as np
from scipy import integrate, optimize, stats

logger = logging.getLogger(__name__)

DEFAULT_TAIL_TOLERANCE = 1e-6


class EvaluationError(ValueError):
    pass


def _as_array(t: Any) -> np.ndarray:
    return np.asarray(t, dtype=float)


@dataclass(frozen=True)
class Evaluation:
    tail_tolerance: float = field(default=DEFAULT_TAIL_TOLERANCE, kw_only=True)

    kind = "evaluation"

    def __post_init__(self) -> None:
        if not 0.0 < self.tail_tolerance < 1.0:
            raise EvaluationError("tail_tolerance must lie in (0, 1)")

    def pdf(self, t: Any) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, t: Any) -> np.ndarray:
        raise NotImplementedError

    def quantile(self, p: float) -> float:
        raise NotImplementedError

    def breakpoints(self, upper: float) -> list[float]:
        """Density discontinuities inside [0, upper]."""
        return []

    def mean(self) -> float:
        raise NotImplementedError

    def density_variation(self) -> float:
        """Total variation of the density on the real line, zero extension on the negatives."""
        raise NotImplementedError

    @property
    def is_nonincreasing(self) -> bool:
        return False

    @property
    def effective_support(self) -> float:
        return self.quantile(1.0 - self.tail_tolerance)

    def parameters(self) -> dict[str, Any]:
        return {}


def _check_probability(p: float) -> None:
    if not 0.0 <= p < 1.0:
        raise EvaluationError(f"quantile level must lie in [0, 1), got {p}")


@dataclass(frozen=True)
class Uniform(Evaluation):
    a: float
    b: float

    kind = "uniform"

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.a < 0 or self.b <= self.a:
            raise EvaluationError("uniform evaluation needs 0 <= a < b")

    @cached_property
    def _law(self):
        return stats.uniform(loc=self.a, scale=self.b - self.a)

    def pdf(self, t: Any) -> np.ndarray:
        t = _as_array(t)
        inside = (t >= self.a) & (t < self.b)
        return np.where(inside, 1.0 / (self.b - self.a), 0.0)

    def cdf(self, t: Any) -> np.ndarray:
        return self._law.cdf(_as_array(t))

    def quantile(self, p: float) -> float:
        _check_probability(p)
        return float(self.a + p * (self.b - self.a))

    def breakpoints(self, upper: float) -> list[float]:
        return [x for x in (self.a, self.b) if x <= upper]

    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    def density_variation(self) -> float:
        return 2.0 / (self.b - self.a)

    @property
    def is_nonincreasing(self) -> bool:
        return self.a == 0

    def parameters(self) -> dict[str, Any]:
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True)
class Exponential(Evaluation):
    rate: float

    kind = "exponential"

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.rate <= 0:
            raise EvaluationError("exponential rate must be positive")

    @cached_property
    def _law(self):
        return stats.expon(scale=1.0 / self.rate)

    def pdf(self, t: Any) -> np.ndarray:
        return self._law.pdf(_as_array(t))

    def cdf(self, t: Any) -> np.ndarray:
        return self._law.cdf(_as_array(t))

    def quantile(self, p: float) -> float:
        _check_probability(p)
        return float(-math.log1p(-p) / self.rate)

    def mean(self) -> float:
        return 1.0 / self.rate

    def density_variation(self) -> float:
        return 2.0 * self.rate

    @property
    def is_nonincreasing(self) -> bool:
        return True

    def parameters(self) -> dict[str, Any]:
        return {"rate": self.rate}


@dataclass(frozen=True)
class FoldedNormal(Evaluation):
    """Law of |X| with X normal of location m and scale sigma."""

    m: float
    sigma: float

    kind = "folded_normal"

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.m < 0 or self.sigma <= 0:
            raise EvaluationError("folded normal needs m >= 0 and sigma > 0")

    @cached_property
    def _law(self):
        return stats.foldnorm(c=self.m / self.sigma, scale=self.sigma)

    def pdf(self, t: Any) -> np.ndarray:
        return self._law.pdf(_as_array(t))

    def cdf(self, t: Any) -> np.ndarray:
        return self._law.cdf(_as_array(t))

    def quantile(self, p: float) -> float:
        _check_probability(p)
        return float(self._law.ppf(p))

    def mean(self) -> float:
        return float(self._law.mean())

    def mode(self) -> float:
        from app.services.variation_service import folded_normal_mode

        if self.m == 0:
            return 0.0
        return folded_normal_mode(self.m, self.sigma)

    def density_variation(self) -> float:
        return 2.0 * float(self.pdf(self.mode()))

    @property
    def is_nonincreasing(self) -> bool:
        return self.m <= self.sigma

    def parameters(self) -> dict[str, Any]:
        return {"m": self.m, "sigma": self.sigma}


@dataclass(frozen=True)
class StepDensity(Evaluation):
    """Density weights[m] / bin_width on [m * bin_width, (m + 1) * bin_width)."""

    weights: tuple[float, ...]
    bin_width: float = 1.0

    kind = "step"

    def __post_init__(self) -> None:
        super().__post_init__()
        weights = tuple(float(w) for w in self.weights)
        if not weights:
            raise EvaluationError("step density needs at least one weight")
        if any(w < 0 or not math.isfinite(w) for w in weights):
            raise EvaluationError("step weights must be finite and nonnegative")
        if self.bin_width <= 0:
            raise EvaluationError("bin_width must be positive")
        total = sum(Fraction(w) for w in weights)
        if abs(float(total) - 1.0) > 1e-9:
            raise EvaluationError(f"step weights sum to {float(total)}, expected 1")
        object.__setattr__(self, "weights", tuple(float(Fraction(w) / total) for w in weights))

    @cached_property
    def _edges(self) -> np.ndarray:
        return np.arange(len(self.weights) + 1, dtype=float) * self.bin_width

    @cached_property
    def _cumulative(self) -> np.ndarray:
        cumulative = np.concatenate([[0.0], np.cumsum(self.weights)])
        cumulative[-1] = 1.0
        return cumulative

    def pdf(self, t: Any) -> np.ndarray:
        t = _as_array(t)
        index = np.floor(t / self.bin_width).astype(int)
        inside = (t >= 0) & (index < len(self.weights))
        values = np.asarray(self.weights)[np.clip(index, 0, len(self.weights) - 1)]
        return np.where(inside, values / self.bin_width, 0.0)

    def cdf(self, t: Any) -> np.ndarray:
        return np.interp(_as_array(t), self._edges, self._cumulative)

    def quantile(self, p: float) -> float:
        _check_probability(p)
        index = int(np.searchsorted(self._cumulative, p - 1e-15, side="left"))
        return float(self._edges[min(index, len(self.weights))])

    def breakpoints(self, upper: float) -> list[float]:
        return [float(x) for x in self._edges if x <= upper]

    def mean(self) -> float:
        centers = (np.arange(len(self.weights)) + 0.5) * self.bin_width
        return float(np.dot(self.weights, centers))

    def density_variation(self) -> float:
        padded = np.concatenate([[0.0], self.weights, [0.0]])
        return float(np.abs(np.diff(padded)).sum() / self.bin_width)

    @property
    def is_nonincreasing(self) -> bool:
        return all(a >= b for a, b in zip(self.weights, self.weights[1:]))

    def parameters(self) -> dict[str, Any]:
        return {"weights": list(self.weights), "bin_width": self.bin_width}


@dataclass(frozen=True)
class Comb(Evaluation):
    """Uniform over the cells [j/k, (j+1)/k) of [0, k] with j even."""

    k: int

    kind = "comb"

    def __post_init__(self) -> None:
        super().__post_init__()
        if int(self.k) != self.k or self.k < 1:
            raise EvaluationError("comb index k must be a positive integer")

    @property
    def cell_count(self) -> int:
        return (self.k * self.k - 1) // 2 + 1

    @property
    def height(self) -> Fraction:
        return Fraction(self.k, self.cell_count)

    def cells(self) -> list[tuple[Fraction, Fraction]]:
        return [(Fraction(j, self.k), Fraction(j + 1, self.k)) for j in range(0, self.k * self.k, 2)]

    def pdf(self, t: Any) -> np.ndarray:
        t = _as_array(t)
        index = np.floor(t * self.k).astype(np.int64)
        inside = (t >= 0) & (index < self.k * self.k) & (index % 2 == 0)
        return np.where(inside, float(self.height), 0.0)

    def cdf(self, t: Any) -> np.ndarray:
        t = np.clip(_as_array(t), 0.0, float(self.k))
        index = np.floor(t * self.k).astype(np.int64)
        full = (index + 1) // 2
        partial = np.where(index % 2 == 0, t * self.k - index, 0.0)
        return np.minimum(1.0, (full + partial) / self.cell_count)

    def quantile(self, p: float) -> float:
        _check_probability(p)
        cells_needed = math.ceil(p * self.cell_count - 1e-12)
        if cells_needed <= 0:
            return 0.0
        return float(Fraction(2 * (cells_needed - 1) + 1, self.k))

    def breakpoints(self, upper: float) -> list[float]:
        limit = min(self.k * self.k, math.floor(upper * self.k))
        return [j / self.k for j in range(limit + 1)]

    def mean(self) -> float:
        total = sum((a + b) / 2 for a, b in self.cells())
        return float(total / self.cell_count)

    def density_variation(self) -> float:
        return float(2 * self.cell_count * self.height)

    @property
    def is_nonincreasing(self) -> bool:
        return self.k == 1

    def parameters(self) -> dict[str, Any]:
        return {"k": self.k}


@dataclass(frozen=True)
class Shifted(Evaluation):
    base: Evaluation
    t: float

    kind = "shifted"

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.t < 0:
            raise EvaluationError("shift must be nonnegative")

    def pdf(self, t: Any) -> np.ndarray:
        t = _as_array(t)
        return np.where(t >= self.t, self.base.pdf(np.maximum(t - self.t, 0.0)), 0.0)

    def cdf(self, t: Any) -> np.ndarray:
        t = _as_array(t)
        return np.where(t >= self.t, self.base.cdf(np.maximum(t - self.t, 0.0)), 0.0)

    def quantile(self, p: float) -> float:
        return self.base.quantile(p) + self.t

    def breakpoints(self, upper: float) -> list[float]:
        if upper < self.t:
            return []
        points = [self.t] + [x + self.t for x in self.base.breakpoints(upper - self.t)]
        return sorted(set(points))

    def mean(self) -> float:
        return self.base.mean() + self.t

    def density_variation(self) -> float:
        return self.base.density_variation()

    @property
    def is_nonincreasing(self) -> bool:
        return self.t == 0 and self.base.is_nonincreasing

    def parameters(self) -> dict[str, Any]:
        return {"base": to_record(self.base), "t": self.t}


@dataclass(frozen=True)
class GenericDensity(Evaluation):
    """A user supplied density, checked for unit mass by quadrature on [0, support_bound]."""

    density: Callable[[Any], Any]
    support_bound: float
    kinks: tuple[float, ...] = ()

    kind = "generic"

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.support_bound <= 0:
            raise EvaluationError("support_bound must be positive")
        mass, _ = integrate.quad(self._scalar_pdf, 0.0, self.support_bound, points=self._points(), limit=200)
        if abs(mass - 1.0) > 1e-6:
            raise EvaluationError(f"density integrates to {mass:.9f} on [0, {self.support_bound}]")

    def _points(self) -> list[float] | None:
        points = [x for x in self.kinks if 0 < x < self.support_bound]
        return points or None

    def _scalar_pdf(self, t: float) -> float:
        if t < 0 or t > self.support_bound:
            return 0.0
        value = float(self.density(t))
        if value < 0:
            raise EvaluationError(f"density is negative at t={t}")
        return value

    def pdf(self, t: Any) -> np.ndarray:
        t = _as_array(t)
        return np.vectorize(self._scalar_pdf, otypes=[float])(t)

    def _scalar_cdf(self, t: float) -> float:
        upper = min(max(t, 0.0), self.support_bound)
        if upper == 0.0:
            return 0.0
        points = [x for x in self.kinks if 0 < x < upper] or None
        value, _ = integrate.quad(self._scalar_pdf, 0.0, upper, points=points, limit=200)
        return min(1.0, value)

    def cdf(self, t: Any) -> np.ndarray:
        return np.vectorize(self._scalar_cdf, otypes=[float])(_as_array(t))

    def quantile(self, p: float) -> float:
        _check_probability(p)
        if p == 0.0:
            return 0.0
        if self._scalar_cdf(self.support_bound) < p:
            return self.support_bound
        return float(optimize.brentq(lambda x: self._scalar_cdf(x) - p, 0.0, self.support_bound, xtol=1e-12))

    def breakpoints(self, upper: float) -> list[float]:
        return [x for x in (*self.kinks, self.support_bound) if x <= upper]

    def mean(self) -> float:
        value, _ = integrate.quad(lambda x: x * self._scalar_pdf(x), 0.0, self.support_bound, points=self._points(), limit=200)
        return value

    def density_variation(self) -> float:
        grid = np.linspace(0.0, self.support_bound, 4097)
        values = np.concatenate([[0.0], self.pdf(grid), [0.0]])
        return float(np.abs(np.diff(values)).sum())

    def parameters(self) -> dict[str, Any]:
        return {"support_bound": self.support_bound, "kinks": list(self.kinks)}


def density(theta: Evaluation, t: float) -> float:
    if t < 0:
        raise EvaluationError("density is defined for t >= 0")
    return float(theta.pdf(t))


def cdf(theta: Evaluation, t: float) -> float:
    if t < 0:
        raise EvaluationError("cdf is defined for t >= 0")
    if math.isinf(t):
        return 1.0
    return float(theta.cdf(t))


def quantile(theta: Evaluation, p: float) -> float:
    return theta.quantile(p)


def shift_pushforward(theta: Evaluation, t: float) -> Evaluation:
    if t < 0:
        raise EvaluationError("shift must be nonnegative")
    if t == 0:
        return theta
    if isinstance(theta, Shifted):
        return Shifted(theta.base, theta.t + t, tail_tolerance=theta.tail_tolerance)
    return Shifted(theta, t, tail_tolerance=theta.tail_tolerance)


def chebyshev_lower_bound(theta: Evaluation, M: float) -> float:
    """M * theta((M, inf)), a lower bound of the mean."""
    return M * (1.0 - cdf(theta, M))


_FAMILIES: dict[str, type[Evaluation]] = {
    cls.kind: cls for cls in (Uniform, Exponential, FoldedNormal, StepDensity, Comb, Shifted)
}


def to_record(theta: Evaluation) -> dict[str, Any]:
    if isinstance(theta, GenericDensity):
        raise EvaluationError("generic densities carry a callable and cannot be serialized")
    return {"kind": theta.kind, "parameters": theta.parameters(), "tail_tolerance": theta.tail_tolerance}


def from_record(record: dict[str, Any]) -> Evaluation:
    kind = record.get("kind")
    if kind not in _FAMILIES:
        raise EvaluationError(f"unknown evaluation kind {kind!r}; expected one of {sorted(_FAMILIES)}")
    parameters = dict(record.get("parameters") or {})
    tail = float(record.get("tail_tolerance", DEFAULT_TAIL_TOLERANCE))
    try:
        if kind == "shifted":
            return Shifted(from_record(parameters["base"]), float(parameters["t"]), tail_tolerance=tail)
        if kind == "step":
            return StepDensity(
                tuple(float(w) for w in parameters["weights"]),
                float(parameters.get("bin_width", 1.0)),
                tail_tolerance=tail,
            )
        if kind == "comb":
            return Comb(int(parameters["k"]), tail_tolerance=tail)
        return _FAMILIES[kind](**{key: float(value) for key, value in parameters.items()}, tail_tolerance=tail)
    except (KeyError, TypeError) as exc:
        raise EvaluationError(f"bad parameters for {kind}: {exc}") from exc
