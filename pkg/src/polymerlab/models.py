"""Pydantic request/response models: the wire format of the experiment API.

Every experiment is fully described by one request model; the CLI, the HTTP
service and the replay machinery all speak these models, so a run is
reproducible from its serialized config alone.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

Command = Literal[
    "moments",
    "second-moment-scan",
    "schedule",
    "poisson",
    "pair-prob",
    "hitting",
    "lclt",
    "qlarge",
    "confinement",
]


class RequestBase(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0, lt=2**64)
    threads: int = Field(default=0, ge=0)  # 0: use POLYMERLAB_THREADS or 1


class MomentsRequest(RequestBase):
    beta_hat: float = Field(gt=0)
    N: int = Field(ge=1)
    q: int = Field(ge=1)
    replicates: int = Field(default=100_000, ge=2)


class SecondMomentScanRequest(RequestBase):
    beta_hat: float = Field(gt=0, lt=1)
    N_values: list[int] = Field(min_length=1)


class ScheduleRequest(RequestBase):
    gamma: float = Field(gt=0, lt=1)
    epsilon0: float = Field(default=0.01, gt=0, lt=1)
    delta: float = Field(default=0.01, gt=0, lt=1)
    M: int = Field(default=100, ge=1)
    nu1: int = Field(ge=1)
    nu2: int = Field(ge=1)
    alpha: int = Field(ge=1)
    N: int = Field(ge=2)
    q: int = Field(default=4, ge=2)
    mode: Literal["log_N", "binom_q"] = "log_N"
    allow_big: bool = False


class PoissonRequest(RequestBase):
    q0: int = Field(ge=2)
    l: int = Field(ge=1)
    t1: int = Field(ge=0)
    nu2: int = Field(default=10, ge=1)
    M: float = Field(default=8.0, gt=0)
    replicates: int = Field(default=2000, ge=2)


class PairProbRequest(RequestBase):
    l: int = Field(ge=0)
    t1: int = Field(ge=0)
    nu2: int = Field(default=10, ge=1)
    M: float = Field(default=8.0, gt=0)
    replicates: int = Field(default=20_000, ge=2)
    x: list[list[int]] = Field(default=[[0, 0], [0, 0]])
    y: list[list[int]] = Field(default=[[0, 0], [0, 0]])


class HittingRequest(RequestBase):
    a: float = Field(gt=0)
    r: float = Field(default=0.0, ge=0)
    t1: float = Field(ge=0)
    t2: float = Field(gt=0)
    step: float = Field(default=1e-2, gt=0)
    refinement_radius: Optional[float] = None
    crossing_correction: bool = True
    replicates: int = Field(default=100_000, ge=2)


class LcltRequest(RequestBase):
    times: list[int] = Field(default=[100, 1000], min_length=1)
    radius_multiple: float = Field(default=3.0, gt=0)


class QlargeRequest(RequestBase):
    beta_hat: float = Field(gt=0)
    N: int = Field(ge=1)
    q: int = Field(ge=2)
    replicates: int = Field(default=100_000, ge=2)


class ConfinementRequest(RequestBase):
    q: int = Field(ge=1)
    delta: float = Field(gt=0, lt=1)
    epsilon0: float = Field(default=0.01, gt=0, lt=1)
    gamma: float = Field(gt=0, lt=1)
    alpha: int = Field(ge=1)
    nu1: int = Field(ge=1)
    nu2: int = Field(ge=1)
    N: int = Field(ge=2)
    mode: Literal["log_N", "binom_q"] = "log_N"
    replicates: int = Field(default=2000, ge=2)


REQUEST_MODELS: dict[str, type[RequestBase]] = {
    "moments": MomentsRequest,
    "second-moment-scan": SecondMomentScanRequest,
    "schedule": ScheduleRequest,
    "poisson": PoissonRequest,
    "pair-prob": PairProbRequest,
    "hitting": HittingRequest,
    "lclt": LcltRequest,
    "qlarge": QlargeRequest,
    "confinement": ConfinementRequest,
}


class Metric(BaseModel):
    model_config = ConfigDict(extra="forbid")

    value: float
    std_error: Optional[float] = None


class Series(BaseModel):
    model_config = ConfigDict(extra="forbid")

    header: list[str]
    rows: list[list[float]]


class ResultRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: Command
    version: str
    config: dict
    metrics: dict[str, Metric]
    series: Optional[Series] = None
    tables: dict[str, dict] = Field(default_factory=dict)
    summary: str
    wall_time_s: float


class ErrorBody(BaseModel):
    category: str
    message: str
    exit_code: int
