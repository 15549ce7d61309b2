from typing import Any, Literal

from pydantic import BaseModel, Field


class EvaluationRecord(BaseModel):
    kind: str = Field(..., min_length=1)
    parameters: dict[str, Any] = Field(default_factory=dict)
    tail_tolerance: float = Field(default=1e-6, gt=0, lt=1)


class CheckReport(BaseModel):
    name: str
    passed: bool
    values: dict[str, Any] = Field(default_factory=dict)
    slack: dict[str, float] = Field(default_factory=dict)
    detail: str = ""


class ExperimentConfig(BaseModel):
    experiment_id: str = Field(..., min_length=1)
    params: dict[str, Any] = Field(default_factory=dict)
    out_dir: str | None = None
    seed: int | None = None
    report_format: Literal["csv", "text-summary"] = "csv"


class ExperimentInfo(BaseModel):
    id: str
    anchor: str
    description: str
    defaults: dict[str, Any] = Field(default_factory=dict)


class ExperimentResult(BaseModel):
    experiment_id: str
    passed: bool
    anchor: str
    checks: list[CheckReport] = Field(default_factory=list)
    artifacts: list[str] = Field(default_factory=list)
    config: dict[str, Any] = Field(default_factory=dict)


class TotalVariationRequest(BaseModel):
    evaluation: EvaluationRecord
    s_values: list[float] = Field(..., min_length=1)
    method: str = Field(default="auto")


class TotalVariationResponse(BaseModel):
    kind: str
    method: str
    points: list[dict[str, Any]]


class LTCRequest(BaseModel):
    family: list[EvaluationRecord] = Field(..., min_length=1)
    S: float = Field(default=1.0, gt=0)
    grid_n: int = Field(default=257, ge=2, le=4097)


class LTCResponse(BaseModel):
    rows: list[dict[str, Any]]


class ValueRequest(BaseModel):
    system: str = Field(..., min_length=1)
    system_params: dict[str, Any] = Field(default_factory=dict)
    y0: list[float] = Field(..., min_length=1)
    evaluation: EvaluationRecord
    shift: float = Field(default=0.0, ge=0)
    segments: int = Field(default=3, ge=1, le=6)


class ValueResponse(BaseModel):
    value: float
    bias: str
    tail_error: float
    quad_error: float
    budget_exhausted: bool
    witness: dict[str, Any] | str
