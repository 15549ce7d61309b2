import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from app.models import CheckReport, ExperimentConfig, ExperimentInfo, ExperimentResult

from .dynamics_service import (
    ControlSignal,
    check_contraction,
    check_nonexpansive,
    estimate_regularity,
    integrate,
)
from .evaluation_service import (
    Comb,
    Evaluation,
    Exponential,
    FoldedNormal,
    StepDensity,
    Uniform,
    cdf,
    chebyshev_lower_bound,
    shift_pushforward,
)
from .inequality_service import (
    gamma_shift_bound,
    nonuniform_convergence_probe,
    sandwich_check,
    shift_inequality_check,
)
from .report_service import (
    ReportWriter,
    control_csv,
    load_config_file,
    merge_params,
    trajectory_csv,
    tv_curve_csv,
)
from .system_catalog import bang_cost, build_system, drift_indicator, relax_to_one, rotation
from .value_service import (
    SearchConfig,
    default_catalog,
    describe,
    shifted_value,
    shifted_value_via_reachable,
    value,
    vstar_estimate,
)
from .variation_service import (
    ANALYTIC,
    QUADRATURE,
    StepFunction,
    comb_shift_l1,
    discrete_tv,
    exhaustive_interval_tv,
    folded_normal_mode,
    hahn_bound_check,
    ltc_diagnostic,
    pointwise_tv_profile,
    shift_l1_estimate,
    step_density_tv_identity,
    sup_total_variation,
    total_variation_estimate,
    total_variation_shift,
    tv_curve,
)

logger = logging.getLogger(__name__)

ALL = "all"

SWEEP_STATES: dict[str, tuple[float, ...]] = {
    "stable-point": (0.5,),
    "rotation": (1.0, 0.0),
    "rotation-controlled": (1.0, 0.0),
    "relax-to-one": (0.0,),
    "drift-indicator": (0.0,),
    "bang-cost": (1.0,),
    "constant-cost": (0.0,),
}


class UnknownExperimentError(ValueError):
    def __init__(self, experiment_id: str) -> None:
        super().__init__(f"unknown experiment {experiment_id!r}; expected one of {[*EXPERIMENTS, ALL]}")
        self.experiment_id = experiment_id


class ParameterError(ValueError):
    pass


class Params:
    def __init__(self, values: dict[str, Any]) -> None:
        self.values = dict(values)

    def _get(self, key: str, convert: Callable[[Any], Any]) -> Any:
        try:
            return convert(self.values[key])
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise ParameterError(f"parameter {key!r}: {exc}") from exc

    @staticmethod
    def _items(raw: Any) -> list[Any]:
        if isinstance(raw, str):
            return [part.strip() for part in raw.split(",") if part.strip()]
        if isinstance(raw, (list, tuple)):
            return list(raw)
        return [raw]

    def number(self, key: str) -> float:
        return self._get(key, float)

    def integer(self, key: str) -> int:
        return self._get(key, int)

    def flag(self, key: str) -> bool:
        def convert(raw: Any) -> bool:
            if isinstance(raw, str):
                return raw.strip().lower() in {"1", "true", "yes", "on"}
            return bool(raw)

        return self._get(key, convert)

    def numbers(self, key: str) -> tuple[float, ...]:
        return self._get(key, lambda raw: tuple(float(x) for x in self._items(raw)))

    def integers(self, key: str) -> tuple[int, ...]:
        return self._get(key, lambda raw: tuple(int(x) for x in self._items(raw)))

    def fractions(self, key: str) -> tuple[Fraction, ...]:
        return self._get(key, lambda raw: tuple(Fraction(str(x)) for x in self._items(raw)))

    def names(self, key: str) -> tuple[str, ...]:
        return self._get(key, lambda raw: tuple(str(x) for x in self._items(raw)))


@dataclass
class Outcome:
    tables: dict[str, list[dict[str, Any]]] = field(default_factory=dict)
    checks: list[CheckReport] = field(default_factory=list)

    def check(self, name: str, passed: bool, detail: str = "", slack: dict[str, float] | None = None, **values: Any) -> None:
        self.checks.append(CheckReport(name=name, passed=bool(passed), values=values, slack=slack or {}, detail=detail))


Body = Callable[[Params, np.random.Generator, ReportWriter, str], Outcome]


@dataclass(frozen=True)
class Experiment:
    id: str
    anchor: str
    description: str
    defaults: dict[str, Any]
    body: Body

    def info(self) -> ExperimentInfo:
        return ExperimentInfo(id=self.id, anchor=self.anchor, description=self.description, defaults=self.defaults)


EXPERIMENTS: dict[str, Experiment] = {}


def experiment(experiment_id: str, anchor: str, description: str, **defaults: Any) -> Callable[[Body], Body]:
    def register(body: Body) -> Body:
        EXPERIMENTS[experiment_id] = Experiment(experiment_id, anchor, description, defaults, body)
        return body

    return register


def get_experiment(experiment_id: str) -> Experiment:
    if experiment_id not in EXPERIMENTS:
        raise UnknownExperimentError(experiment_id)
    return EXPERIMENTS[experiment_id]


@experiment(
    "tv-curves",
    "shift total variation of uniform, exponential, folded-normal and comb evaluations",
    "TV_s curves on [0, s_max] with analytic and quadrature cross-validation.",
    s_max=1.0,
    s_points=11,
    uniform_k="2,10",
    rates="0.1,1",
    exponential_s="0.5,1,2",
    folded="1:2,3:1,5:0.5",
    comb_k=4,
)
def tv_curves(p: Params, rng: np.random.Generator, writer: ReportWriter, out: str) -> Outcome:
    outcome = Outcome()
    s_grid = np.linspace(0.0, p.number("s_max"), p.integer("s_points"))
    rows: list[dict[str, Any]] = []
    analytic_error = quadrature_error = 0.0
    for k in p.numbers("uniform_k"):
        theta = Uniform(0.0, k)
        for method in (ANALYTIC, QUADRATURE):
            curve = tv_curve(theta, s_grid, method)
            rows += [{"family": describe(theta), **row} for row in curve.rows()]
            error = max(abs(tv - s / k) for s, tv in zip(curve.s_grid, curve.tv_values))
            if method == ANALYTIC:
                analytic_error = max(analytic_error, error)
                tv_curve_csv(curve, writer.directory(out) / f"curve-uniform-{k:g}.csv")
            else:
                quadrature_error = max(quadrature_error, error)
    outcome.check("uniform-closed-form", analytic_error <= 1e-12, max_error=analytic_error)
    outcome.check("uniform-quadrature", quadrature_error <= 1e-6, max_error=quadrature_error)

    half_error = tv_error = 0.0
    for rate in p.numbers("rates"):
        theta = Exponential(rate)
        for s in p.numbers("exponential_s"):
            integral = shift_l1_estimate(theta, s, QUADRATURE)
            half_error = max(half_error, abs(0.5 * integral.value + 0.5 * math.expm1(-rate * s)))
            tv = total_variation_estimate(theta, s, QUADRATURE)
            tv_error = max(tv_error, abs(tv.value + math.expm1(-rate * s)))
        curve = tv_curve(theta, s_grid)
        rows += [{"family": describe(theta), **row} for row in curve.rows()]
    outcome.check("exponential-half-shift-integral", half_error <= 1e-6, max_error=half_error)
    outcome.check("exponential-total-variation", tv_error <= 1e-6, max_error=tv_error)

    mode_rows = []
    for pair in p.names("folded"):
        m, sigma = (float(x) for x in pair.split(":"))
        theta = FoldedNormal(m, sigma)
        mode = folded_normal_mode(m, sigma)
        grid = np.linspace(0.0, theta.effective_support, 10_000)
        slope = np.sign(np.diff(theta.pdf(grid)))
        slope = slope[slope != 0]
        unimodal = bool(np.all(np.diff(slope) <= 0))
        mode_rows.append({"m": m, "sigma": sigma, "mode": mode, "unimodal": unimodal})
        outcome.check(
            f"folded-normal-mode-{m:g}-{sigma:g}",
            mode * mode >= m * m - sigma * sigma - 1e-9 and unimodal,
            mode=mode,
            floor=math.sqrt(max(0.0, m * m - sigma * sigma)),
        )
        curve = tv_curve(theta, s_grid)
        rows += [{"family": describe(theta), **row} for row in curve.rows()]

    comb = Comb(p.integer("comb_k"))
    curve = tv_curve(comb, s_grid)
    rows += [{"family": describe(comb), **row} for row in curve.rows()]
    bounded = all(0.0 <= row["tv"] <= 1.0 for row in rows)
    outcome.check("range", bounded and all(row["tv"] == 0.0 for row in rows if row["s"] == 0.0), rows=len(rows))
    outcome.tables = {"curves": rows, "folded_modes": mode_rows}
    return outcome


@experiment(
    "ltc-families",
    "long-term condition: folded normals satisfy it iff sigma_k grows",
    "sup TV_s over s in [0, S] per family member, with closed-form and bound cross-checks.",
    k_max=20,
    S=1.0,
    grid_n=65,
    folded_m=1.0,
    folded_sigma=1.0,
    mean_threshold=5.0,
)
def ltc_families(p: Params, rng: np.random.Generator, writer: ReportWriter, out: str) -> Outcome:
    outcome = Outcome()
    ks = range(1, p.integer("k_max") + 1)
    S, grid_n = p.number("S"), p.integer("grid_n")
    families: dict[str, dict[int, Evaluation]] = {
        "uniform": {k: Uniform(0.0, float(k)) for k in ks},
        "exponential": {k: Exponential(1.0 / k) for k in ks},
        "folded-wide": {k: FoldedNormal(p.number("folded_m"), float(k)) for k in ks},
        "folded-drifting": {k: FoldedNormal(float(k), p.number("folded_sigma")) for k in ks},
    }
    rows = []
    for name, family in families.items():
        for row in ltc_diagnostic(family, S, grid_n):
            rows.append({"family": name, "k": row.k, "sup_tv": row.sup_tv, "upper": row.upper, "mass": row.mass_at_S})
    by_family = {name: [r for r in rows if r["family"] == name] for name in families}

    uniform_error = max(abs(r["sup_tv"] - min(1.0, S / r["k"])) for r in by_family["uniform"])
    outcome.check("uniform-sup", uniform_error <= 1e-9, max_error=uniform_error)
    exponential_error = max(abs(r["sup_tv"] + math.expm1(-S / r["k"])) for r in by_family["exponential"])
    outcome.check("exponential-sup", exponential_error <= 1e-9, max_error=exponential_error)
    ratio = max(
        r["sup_tv"] / (2.0 / (r["k"] * math.sqrt(2.0 * math.pi))) for r in by_family["folded-wide"]
    )
    outcome.check("folded-wide-bound", ratio <= 1.1, max_ratio=ratio, slack={"relative": 0.1})
    floor = min(r["sup_tv"] for r in by_family["folded-drifting"])
    outcome.check("folded-drifting-floor", floor >= 0.1, min_sup_tv=floor)
    consistent = all(r["sup_tv"] <= r["upper"] + 1e-12 for r in rows)
    outcome.check("sup-bracket", consistent, rows=len(rows))

    threshold = p.number("mean_threshold")
    last = max(ks)
    means = {name: family[last].mean() for name, family in families.items() if name in ("uniform", "exponential")}
    chebyshev = {name: chebyshev_lower_bound(families[name][last], threshold) for name in means}
    outcome.check(
        "mean-escapes",
        all(m > threshold for m in means.values()) and all(c > 0 for c in chebyshev.values()),
        means=means,
        chebyshev=chebyshev,
    )
    outcome.tables = {"ltc": rows}
    return outcome


@experiment(
    "discrete-link",
    "I_s of a unit step density equals s times the discrete variation of its weights",
    "Random step densities checked against the identity and against interval enumeration.",
    samples=100,
    max_length=20,
    s_points=11,
    enumeration_length=10,
    uniform_k="1,2,4,8,16",
)
def discrete_link(p: Params, rng: np.random.Generator, writer: ReportWriter, out: str) -> Outcome:
    outcome = Outcome()
    s_grid = np.linspace(0.0, 1.0, p.integer("s_points"))
    rows, worst = [], 0.0
    enumeration_gap = 0.0
    for sample in range(p.integer("samples")):
        length = int(rng.integers(1, p.integer("max_length") + 1))
        xi = rng.dirichlet(np.ones(length))
        for s in s_grid:
            integral, formula = step_density_tv_identity(xi, float(s))
            worst = max(worst, abs(integral - formula))
            rows.append({"sample": sample, "length": length, "s": float(s), "shift_l1": integral, "formula": formula})
        if length <= p.integer("enumeration_length"):
            theta = StepDensity(tuple(xi))
            for shift in (1.0, 2.0):
                gap = abs(exhaustive_interval_tv(theta, shift) - total_variation_shift(theta, shift))
                enumeration_gap = max(enumeration_gap, gap)
    outcome.check("step-identity", worst <= 1e-12, max_error=worst, slack={"absolute": 1e-12})
    outcome.check("interval-enumeration", enumeration_gap <= 1e-12, max_error=enumeration_gap)

    uniform_rows = []
    for k in p.integers("uniform_k"):
        xi = np.full(k, 1.0 / k)
        xi[-1] = 1.0 - math.fsum(xi[:-1])
        uniform_rows.append({"k": k, "discrete_tv": discrete_tv(xi), "expected": 1.0 / k})
    uniform_error = max(abs(r["discrete_tv"] - r["expected"]) for r in uniform_rows)
    outcome.check("uniform-steps", uniform_error <= 1e-12, max_error=uniform_error)
    outcome.tables = {"identity": rows, "uniform_steps": uniform_rows}
    return outcome


def _parity_steps(k: int, odd: bool) -> StepDensity:
    weights = [0.0] * (2 * k)
    for m in range(k):
        weights[2 * m + (1 if odd else 0)] = 1.0 / k
    return StepDensity(tuple(weights))


@experiment(
    "ex-0-1",
    "indicator drift: V of the odd-bin steps is 1 and of the even-bin steps is 0",
    "Exact piecewise integration of the unit drift with the odd-floor indicator cost.",
    ks="1,5,20",
    shift=1.0,
)
def ex_0_1(p: Params, rng: np.random.Generator, writer: ReportWriter, out: str) -> Outcome:
    outcome = Outcome()
    sys = drift_indicator()
    shift = p.number("shift")
    rows = []
    for k in p.integers("ks"):
        mu, nu = _parity_steps(k, odd=True), _parity_steps(k, odd=False)
        rows.append(
            {
                "k": k,
                "V_mu": value(sys, [0.0], mu).value,
                "V_nu": value(sys, [0.0], nu).value,
                "V_mu_shifted": shifted_value(sys, [0.0], mu, shift).value,
            }
        )
    worst = max(max(abs(r["V_mu"] - 1.0), abs(r["V_nu"])) for r in rows)
    outcome.check("indicator-values", worst <= 1e-6, max_error=worst, slack={"absolute": 1e-6})
    if shift == 1.0:
        moved = max(r["V_mu_shifted"] for r in rows)
        outcome.check("unit-shift-swaps-parity", moved <= 1e-6, max_value=moved)
    outcome.tables = {"values": rows}
    return outcome


@experiment(
    "rotation",
    "rotation: V under Uniform(0, T) tends to the average of the cost over the circle",
    "Values against 1/2 + sin T / 4T, norm conservation, and the reachable-state shift.",
    horizons="10,100",
    rk4_horizon=20.0,
    rk4_dt=0.01,
    reachable_t="0.5,1,2",
)
def rotation_limit(p: Params, rng: np.random.Generator, writer: ReportWriter, out: str) -> Outcome:
    outcome = Outcome()
    sys = rotation()
    rows = []
    for T in p.numbers("horizons"):
        estimate = value(sys, [1.0, 0.0], Uniform(0.0, T))
        rows.append({"T": T, "value": estimate.value, "formula": 0.5 + math.sin(T) / (4.0 * T), "bound": 2 * math.pi / T})
    outcome.check(
        "circle-average",
        all(abs(r["value"] - 0.5) <= r["bound"] for r in rows),
        errors=[abs(r["value"] - 0.5) for r in rows],
    )
    formula_error = max(abs(r["value"] - r["formula"]) for r in rows)
    outcome.check("closed-form", formula_error <= 1e-6, max_error=formula_error)

    T, dt = p.number("rk4_horizon"), p.number("rk4_dt")
    control = ControlSignal.constant(0.0, T)
    drift = {}
    for label, system in (("exact", sys), ("rk4", replace(sys, exact_flow=None))):
        path = integrate(system, [1.0, 0.0], control, T, dt)
        drift[label] = float(np.max(np.abs(np.linalg.norm(path.states, axis=-1) - 1.0)))
        if label == "rk4":
            trajectory_csv(path, writer.directory(out) / "trajectory.csv")
    outcome.check("norm-conservation", max(drift.values()) <= 1e-6, **drift)

    theta = Uniform(0.0, 10.0)
    gaps = []
    for t in p.numbers("reachable_t"):
        direct = shifted_value(sys, [1.0, 0.0], theta, t).value
        reached = shifted_value_via_reachable(sys, [1.0, 0.0], theta, t).value
        gaps.append(abs(direct - reached))
    outcome.check("reachable-shift", max(gaps) <= 1e-6, max_gap=max(gaps))
    outcome.tables = {"values": rows}
    return outcome


@experiment(
    "counter-1",
    "without the long-term condition the uniform limit fails: V* >= 1 - 2 eps",
    "Relax-to-one values under late uniforms and fixed-rate exponentials.",
    epsilon=0.01,
    y0=0.0,
    window=5.0,
    rate=1.0,
    T=1.0,
    catalog_horizons="1,5",
    t_grid="0,1,5,25",
)
def counter_1(p: Params, rng: np.random.Generator, writer: ReportWriter, out: str) -> Outcome:
    outcome = Outcome()
    sys = relax_to_one()
    eps, y0 = p.number("epsilon"), p.number("y0")
    if not 0 < eps < 1 or y0 >= 1:
        raise ParameterError("counter-1 needs 0 < epsilon < 1 and y0 < 1")
    late_start = max(0.0, math.log((1.0 - y0) / eps))
    late = Uniform(late_start, late_start + p.number("window"))
    t_grid = p.numbers("t_grid")
    floor = min(shifted_value(sys, [y0], late, t).value for t in t_grid)
    outcome.check("late-uniform-floor", floor >= 1.0 - 2.0 * eps, min_value=floor, late_start=late_start)
    catalog = default_catalog(p.numbers("catalog_horizons")).with_members(late)
    estimate = vstar_estimate(sys, [y0], catalog, t_grid)
    outcome.check("vstar-floor", estimate.value >= 1.0 - 2.0 * eps, vstar=estimate.value, member=estimate.member)

    rate, T = p.number("rate"), p.number("T")
    theta = Exponential(rate)
    exponential_value = value(sys, [y0], theta).value
    eta = cdf(theta, T)
    y_T = 1.0 + (y0 - 1.0) * math.exp(-T)
    bound = y_T * eta + (1.0 - eta)
    outcome.check(
        "fixed-rate-bound",
        exponential_value <= bound + 1e-3 and bound < 1.0,
        value=exponential_value,
        bound=bound,
        slack={"absolute": 1e-3},
    )
    sup = sup_total_variation(theta, 1.0, 33)
    outcome.check("fixed-rate-not-ltc", sup.lower >= 0.5, sup_tv=sup.lower)
    outcome.tables = {
        "vstar": [{"member": label, "t_min": t, "min_value": v} for label, t, v in estimate.inner],
        "fixed_rate": [{"rate": rate, "T": T, "value": exponential_value, "eta": eta, "bound": bound}],
    }
    return outcome


@experiment(
    "counter-2",
    "bang-cost: V = max(0, 1/2 - y0/2k) and convergence that is not uniform in y0",
    "Oracle tables, a switch-search cross-check, the V* estimate and the non-uniformity probe.",
    K=10.0,
    ks="10,50",
    y0s="0,1,5",
    catalog_horizons="1,5,25",
    t_grid="0,5,25,125,500",
    probe_ks="10,20,50",
    probe_y0s="0,5,10,20",
    regularity_samples=4000,
)
def counter_2(p: Params, rng: np.random.Generator, writer: ReportWriter, out: str) -> Outcome:
    outcome = Outcome()
    sys = bang_cost(p.number("K"))
    rows = []
    for k in p.integers("ks"):
        for y0 in (*p.numbers("y0s"), float(k)):
            rows.append(
                {
                    "k": k,
                    "y0": y0,
                    "V_near": value(sys, [y0], Uniform(0.0, float(k))).value,
                    "formula": max(0.0, 0.5 - y0 / (2.0 * k)),
                    "V_far": value(sys, [y0], Uniform(float(k), 2.0 * k)).value,
                }
            )
    near_error = max(abs(r["V_near"] - r["formula"]) for r in rows)
    outcome.check("near-window-values", near_error <= 1e-3, max_error=near_error, slack={"absolute": 1e-3})
    far = max(abs(r["V_far"]) for r in rows)
    outcome.check("far-window-values", far <= 1e-6, max_value=far)

    k = p.integers("ks")[0]
    search = SearchConfig(use_oracles=False)
    gaps = []
    for y0 in (0.0, 1.0):
        searched = value(sys, [y0], Uniform(0.0, float(k)), search).value
        gaps.append(abs(searched - max(0.0, 0.5 - y0 / (2.0 * k))))
    outcome.check("switch-search-matches-oracle", max(gaps) <= 1e-3, gaps=gaps)
    witness = value(sys, [0.0], Uniform(0.0, float(k))).witness
    if isinstance(witness, ControlSignal):
        control_csv(sys, [0.0], witness, writer.directory(out) / "witness.csv")

    estimate = vstar_estimate(sys, [0.0], default_catalog(p.numbers("catalog_horizons")), p.numbers("t_grid"))
    outcome.check("vstar-small", estimate.value <= 0.05, vstar=estimate.value, member=estimate.member)

    probe_rows, probe = nonuniform_convergence_probe(sys, p.numbers("probe_y0s"), p.integers("probe_ks"))
    outcome.checks.append(probe)
    regularity = estimate_regularity(sys, p.integer("regularity_samples"), ((-2.0,), (2.0,)), int(rng.integers(2**31)))
    outcome.check("discontinuous-field", regularity.lipschitz > 10.0, lipschitz=regularity.lipschitz)
    outcome.tables = {
        "values": rows,
        "vstar": [{"member": label, "t_min": t, "min_value": v} for label, t, v in estimate.inner],
        "nonuniform": probe_rows,
    }
    return outcome


@experiment(
    "nonexpansive",
    "nonexpansive fields: controlled rotation and the stable point pass, y' = y fails",
    "Pairwise inner-product test, greedy contraction tracking, invariance and regularity estimates.",
    sample_pairs=200,
    contraction_pairs=50,
    T=5.0,
    dt=0.01,
    segments=3,
)
def nonexpansive(p: Params, rng: np.random.Generator, writer: ReportWriter, out: str) -> Outcome:
    outcome = Outcome()
    seed = int(rng.integers(2**31))
    rows = []
    for name, expected in (("rotation-controlled", True), ("stable-point", True), ("expanding", False)):
        report = check_nonexpansive(build_system(name), p.integer("sample_pairs"), seed)
        rows.append({"system": name, "passed": report.passed, "worst": report.worst_value})
        outcome.check(f"nonexpansive-{name}", report.passed is expected, worst=report.worst_value, expected=expected)

    T, dt, segments = p.number("T"), p.number("dt"), p.integer("segments")
    contraction_rows = []
    for name in ("rotation-controlled", "stable-point"):
        sys = build_system(name)
        failures, invariant = 0, True
        for pair in range(p.integer("contraction_pairs")):
            y1, y2 = sys.sample_states(rng, 2)
            switches = tuple(sorted(rng.uniform(0.0, T, segments - 1)))
            values = tuple(float(v) for v in rng.choice(sys.controls, segments))
            u = ControlSignal.from_switches(switches, values, T)
            report = check_contraction(sys, y1, y2, u, T, dt)
            failures += not report.passed
            invariant &= sys.invariant_set.contains(integrate(sys, y1, u, T, dt).states)
            contraction_rows.append({"system": name, "pair": pair, "max_gap": float(report.displacement.max()), "bound": report.bound})
        outcome.check(f"contraction-{name}", failures == 0, failures=failures)
        outcome.check(f"invariant-{name}", invariant)
        regularity = estimate_regularity(sys, 1000, rng_seed=seed)
        outcome.check(
            f"regularity-{name}", regularity.within_declared, lipschitz=regularity.lipschitz, growth=regularity.growth
        )
    outcome.tables = {"nonexpansive": rows, "contraction": contraction_rows}
    return outcome


@experiment(
    "ltc-prime",
    "comb densities: I_{1/k} >= 2 - 1/k while rational shifts vanish along k = n!",
    "Exact rational shift integrals of comb densities.",
    ks="2,4,8",
    ns="2,3,4,5",
    s="1/2",
    rational_shifts="1/2,1/3,1/4",
    allow_n6=False,
)
def ltc_prime(p: Params, rng: np.random.Generator, writer: ReportWriter, out: str) -> Outcome:
    outcome = Outcome()
    ns = p.integers("ns")
    if any(n >= 6 for n in ns) and not p.flag("allow_n6"):
        raise ParameterError("n >= 6 builds (n!)^2 cells; set allow_n6=true to run it")
    comb_rows = []
    for k in p.integers("ks"):
        integral = comb_shift_l1(Comb(k), Fraction(1, k))
        comb_rows.append({"k": k, "I": float(integral), "lower": 2.0 - 1.0 / k})
        outcome.check(f"comb-{k}-lower-bound", integral >= 2 - Fraction(1, k), I=float(integral))

    s = p.fractions("s")[0]
    factorial_rows = []
    for n in ns:
        k = math.factorial(n)
        integral = comb_shift_l1(Comb(k), s)
        factorial_rows.append({"n": n, "k": k, "s": str(s), "I": float(integral), "bound": 2.0 / k})
        if n >= 4:
            outcome.check(f"sliver-{n}", integral <= Fraction(2, k), I=float(integral), bound=2.0 / k)

    family = {n: Comb(math.factorial(n)) for n in ns}
    shifts = p.fractions("rational_shifts")
    profile = pointwise_tv_profile(family, [float(x) for x in shifts])
    vanishing = []
    for n, comb in family.items():
        for shift in shifts:
            cells = shift * comb.k
            if cells.denominator == 1 and cells.numerator % 2 == 0:
                integral = comb_shift_l1(comb, shift)
                vanishing.append(integral <= 2 * shift / comb.k)
        spike = total_variation_shift(comb, 1.0 / comb.k)
        outcome.check(f"sup-stays-large-{n}", spike >= 1.0 - 1.0 / comb.k**2, tv=spike)
    outcome.check("rational-shifts-vanish", all(vanishing), checked=len(vanishing))
    outcome.tables = {"comb": comb_rows, "factorial": factorial_rows, "profile": profile}
    return outcome


def _random_evaluation(rng: np.random.Generator) -> Evaluation:
    kind = int(rng.integers(5))
    if kind == 0:
        a = float(rng.uniform(0.0, 3.0))
        return Uniform(a, a + float(rng.uniform(0.1, 5.0)))
    if kind == 1:
        return Exponential(float(rng.uniform(0.1, 3.0)))
    if kind == 2:
        return FoldedNormal(float(rng.uniform(0.1, 3.0)), float(rng.uniform(0.5, 2.0)))
    if kind == 3:
        length = int(rng.integers(1, 12))
        return StepDensity(tuple(rng.dirichlet(np.ones(length))), float(rng.uniform(0.2, 1.5)))
    return Comb(int(rng.integers(1, 5)))


def _random_step_function(rng: np.random.Generator) -> StepFunction:
    n = int(rng.integers(1, 11))
    breakpoints = (0.0, *sorted(float(x) for x in rng.uniform(0.0, 10.0, n - 1)))
    return StepFunction(breakpoints, tuple(float(v) for v in rng.uniform(0.0, 1.0, n)))


@experiment(
    "inequalities",
    "Hahn-type bounds, the shift inequality, the gamma-shift bound and the sandwich chain",
    "Randomized and grid sweeps of every inequality tying values to shift total variation.",
    hahn_cases=1000,
    gamma_cases=200,
    t_values="0,0.5,1,2",
    systems="stable-point,rotation,rotation-controlled,relax-to-one,drift-indicator,bang-cost,constant-cost",
    gamma_systems="stable-point,rotation-controlled,relax-to-one,drift-indicator",
    catalog_horizons="1,5",
    segments=2,
    subadditivity_n=20,
    sandwich_ks="5,10,20,40",
    T0=1.0,
    rotation_t_grid="0,0.5,1,2,4,8",
    bang_t_grid="0,0.5,1,2,5,10,20,40,80",
)
def inequalities(p: Params, rng: np.random.Generator, writer: ReportWriter, out: str) -> Outcome:
    outcome = Outcome()
    hahn_slack = math.inf
    hahn_failures = 0
    for _ in range(p.integer("hahn_cases")):
        report = hahn_bound_check(_random_evaluation(rng), float(rng.uniform(0.0, 2.0)), _random_step_function(rng))
        hahn_failures += not report.passed
        hahn_slack = min(hahn_slack, report.slack)
    outcome.check("hahn-bound", hahn_failures == 0, failures=hahn_failures, min_slack=hahn_slack)

    catalog = default_catalog(p.numbers("catalog_horizons"))
    search = SearchConfig(segments=p.integer("segments"))
    shift_rows = []
    for name in p.names("systems"):
        sys = build_system(name)
        for label, mu in catalog:
            for t in p.numbers("t_values"):
                report = shift_inequality_check(sys, list(SWEEP_STATES[name]), mu, t, search)
                shift_rows.append({"system": name, "member": label, "passed": report.passed, **report.values})
    shift_failures = sum(not row["passed"] for row in shift_rows)
    outcome.check("shift-inequality", shift_failures == 0, failures=shift_failures, cases=len(shift_rows))

    gamma_failures = 0
    gamma_systems = [build_system(name) for name in p.names("gamma_systems")]
    members = catalog.members
    for case in range(p.integer("gamma_cases")):
        sys = gamma_systems[case % len(gamma_systems)]
        theta = members[int(rng.integers(len(members)))]
        t = float(rng.uniform(0.0, 2.0))
        horizon = shift_pushforward(theta, t).effective_support
        switches = tuple(sorted(float(x) for x in rng.uniform(0.0, horizon, 3)))
        values = tuple(float(v) for v in rng.choice(sys.controls, 4))
        u = ControlSignal.from_switches(switches, values, horizon)
        gamma_failures += not gamma_shift_bound(sys, sys.sample_states(rng, 1)[0], u, theta, t).passed
    outcome.check("gamma-shift", gamma_failures == 0, failures=gamma_failures)

    grid = np.linspace(0.0, 2.0, p.integer("subadditivity_n"))
    sub_slack, push_slack = math.inf, math.inf
    for theta in members:
        for s in grid:
            tv_s = total_variation_shift(theta, float(s))
            for t in grid:
                tv_sum = total_variation_shift(theta, float(s + t))
                sub_slack = min(sub_slack, tv_s + total_variation_shift(theta, float(t)) - tv_sum)
                moved = total_variation_shift(shift_pushforward(theta, float(t)), float(s))
                push_slack = min(push_slack, tv_s + cdf(theta, float(s)) - moved)
    outcome.check("subadditivity", sub_slack >= -1e-9, min_slack=sub_slack)
    outcome.check("pushforward-bound", push_slack >= -1e-9, min_slack=push_slack)

    ks, T0 = p.integers("sandwich_ks"), p.number("T0")
    chains = (
        ("rotation", rotation(), [1.0, 0.0], {k: Uniform(0.0, float(k)) for k in ks}, p.numbers("rotation_t_grid")),
        ("bang-cost-near", bang_cost(), [0.0], {k: Uniform(0.0, float(k)) for k in ks}, p.numbers("bang_t_grid")),
        ("bang-cost-far", bang_cost(), [0.0], {k: Uniform(float(k), 2.0 * k) for k in ks}, p.numbers("bang_t_grid")),
    )
    sandwich_rows = []
    for label, sys, y0, family, t_grid in chains:
        report = sandwich_check(sys, y0, family, T0, t_grid)
        outcome.checks.append(report.model_copy(update={"name": f"sandwich-{label}"}))
        sandwich_rows.append({"chain": label, **{k: v for k, v in report.values.items() if k != "k"}})
    outcome.tables = {"shift_inequality": shift_rows, "sandwich": sandwich_rows}
    return outcome


class ExperimentRunner:
    def __init__(self) -> None:
        self.out_dir = os.getenv("MEANVALUE_OUT_DIR", "results")
        self.seed = int(os.getenv("MEANVALUE_SEED", "20240617"))
        self.workers = max(1, int(os.getenv("MEANVALUE_WORKERS", "1")))
        self.config_file = os.getenv("MEANVALUE_EXPERIMENTS_FILE", "data/experiments.json")

    def experiments(self) -> list[ExperimentInfo]:
        return [e.info() for e in EXPERIMENTS.values()]

    def resolve(self, experiment_id: str) -> list[Experiment]:
        if experiment_id == ALL:
            return list(EXPERIMENTS.values())
        return [get_experiment(experiment_id)]

    def params_for(self, experiment: Experiment, overrides: dict[str, Any]) -> dict[str, Any]:
        file_layer = load_config_file(self.config_file).get(experiment.id, {})
        merged = merge_params(experiment.defaults, file_layer, overrides)
        unknown = sorted(set(merged) - set(experiment.defaults))
        if unknown:
            raise ParameterError(f"{experiment.id} does not take {unknown}; known: {sorted(experiment.defaults)}")
        return merged

    def run(self, config: ExperimentConfig) -> list[ExperimentResult]:
        if config.experiment_id == ALL and config.params:
            raise ParameterError(f"'{ALL}' takes no --param overrides; set {sorted(config.params)} in the config file")
        experiments = self.resolve(config.experiment_id)
        seed = self.seed if config.seed is None else config.seed
        writer = ReportWriter(config.out_dir or self.out_dir)
        jobs = [(e, self.params_for(e, config.params)) for e in experiments]

        def run_one(job: tuple[Experiment, dict[str, Any]]) -> ExperimentResult:
            return self._run_one(job[0], job[1], seed, writer, config.report_format)

        if len(jobs) == 1 or self.workers == 1:
            return [run_one(job) for job in jobs]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(run_one, jobs))

    def _run_one(
        self, experiment: Experiment, params: dict[str, Any], seed: int, writer: ReportWriter, report_format: str
    ) -> ExperimentResult:
        index = list(EXPERIMENTS).index(experiment.id)
        rng = np.random.default_rng([seed, index])
        logger.info("running %s (seed %d)", experiment.id, seed)
        outcome = experiment.body(Params(params), rng, writer, experiment.id)
        artifacts = writer.write_tables(experiment.id, outcome.tables)
        result = ExperimentResult(
            experiment_id=experiment.id,
            passed=all(check.passed for check in outcome.checks),
            anchor=experiment.anchor,
            checks=outcome.checks,
            config={"experiment_id": experiment.id, "seed": seed, "params": params, "report_format": report_format},
        )
        artifacts += writer.write_summary(result, report_format)
        result.artifacts = artifacts
        if not result.passed:
            failed = [check.name for check in outcome.checks if not check.passed]
            logger.warning("%s failed: %s", experiment.id, ", ".join(failed))
        return result
