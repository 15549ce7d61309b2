from fastapi import FastAPI, HTTPException

from app.models import (
    ExperimentConfig,
    ExperimentInfo,
    ExperimentResult,
    LTCRequest,
    LTCResponse,
    TotalVariationRequest,
    TotalVariationResponse,
    ValueRequest,
    ValueResponse,
)
from app.services.dynamics_service import ControlSignal
from app.services.evaluation_service import from_record
from app.services.experiment_service import ExperimentRunner, UnknownExperimentError
from app.services.system_catalog import build_system
from app.services.value_service import SearchConfig, shifted_value
from app.services.variation_service import QuadratureError, ltc_diagnostic, total_variation_estimate

app = FastAPI(title="meanvalue")
experiment_runner = ExperimentRunner()


def bad_request(exc: Exception) -> HTTPException:
    return HTTPException(status_code=400, detail=str(exc))


@app.get("/")
def root() -> dict:
    return {"status": "ok", "service": "meanvalue"}


@app.get("/health")
def health() -> dict:
    return {"status": "healthy", "experiments": len(experiment_runner.experiments())}


@app.get("/api/v1/experiments", response_model=list[ExperimentInfo])
def list_experiments() -> list[ExperimentInfo]:
    return experiment_runner.experiments()


@app.post("/api/v1/experiments/run", response_model=list[ExperimentResult])
def run_experiment(payload: ExperimentConfig) -> list[ExperimentResult]:
    try:
        return experiment_runner.run(payload)
    except UnknownExperimentError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc
    except (ValueError, QuadratureError) as exc:
        raise bad_request(exc) from exc


@app.post("/api/v1/measures/total-variation", response_model=TotalVariationResponse)
def total_variation(payload: TotalVariationRequest) -> TotalVariationResponse:
    try:
        theta = from_record(payload.evaluation.model_dump())
        estimates = [(s, total_variation_estimate(theta, float(s), payload.method)) for s in payload.s_values]
    except (ValueError, QuadratureError) as exc:
        raise bad_request(exc) from exc
    return TotalVariationResponse(
        kind=theta.kind,
        method=estimates[-1][1].method,
        points=[{"s": s, "tv": e.value, "error": e.error} for s, e in estimates],
    )


@app.post("/api/v1/measures/ltc", response_model=LTCResponse)
def ltc(payload: LTCRequest) -> LTCResponse:
    try:
        family = [from_record(record.model_dump()) for record in payload.family]
        rows = ltc_diagnostic(family, payload.S, payload.grid_n)
    except (ValueError, QuadratureError) as exc:
        raise bad_request(exc) from exc
    return LTCResponse(
        rows=[
            {"k": r.k, "sup_tv": r.sup_tv, "upper": r.upper, "argmax": r.argmax, "mass_at_S": r.mass_at_S}
            for r in rows
        ]
    )


@app.post("/api/v1/values/value", response_model=ValueResponse)
def value_endpoint(payload: ValueRequest) -> ValueResponse:
    try:
        sys = build_system(payload.system, **payload.system_params)
        theta = from_record(payload.evaluation.model_dump())
        estimate = shifted_value(sys, payload.y0, theta, payload.shift, SearchConfig(segments=payload.segments))
    except (ValueError, QuadratureError) as exc:
        raise bad_request(exc) from exc
    witness = estimate.witness
    if isinstance(witness, ControlSignal):
        witness = {"breakpoints": list(witness.breakpoints), "values": list(witness.values), "horizon": witness.horizon}
    return ValueResponse(
        value=estimate.value,
        bias=estimate.bias,
        tail_error=estimate.tail_error,
        quad_error=estimate.quad_error,
        budget_exhausted=estimate.budget_exhausted,
        witness=witness,
    )
