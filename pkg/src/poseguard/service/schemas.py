"""Pydantic request/response models for the review API."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator


class ValidationSummary(BaseModel):
    excluded: bool
    invalid_frame_fraction: float
    label_coverage: float
    signal_gap_s: dict[str, float]


class SessionEntry(BaseModel):
    session_id: str
    readable: bool
    error: str | None = None
    fps: float | None = None
    duration_s: float | None = None
    gender: str | None = None
    n_labels: int | None = None
    validation: ValidationSummary | None = None


class SessionList(BaseModel):
    sessions: list[SessionEntry]


class AngleStatsOut(BaseModel):
    mu: float
    sigma: float
    valid_count: int


class LabelOut(BaseModel):
    label: str
    start_s: float
    end_s: float


class LocalAverage(BaseModel):
    """Window means on the server's stride grid (window-center timestamps)."""

    w: int
    window_unit: str
    stride: int
    timestamps: list[float]
    yaw: list[float | None]
    pitch: list[float | None]
    roll: list[float | None]


class AngleTrace(BaseModel):
    session_id: str
    fps: float
    duration_s: float
    downsample: int
    frames: list[int]
    timestamps: list[float]
    yaw: list[float]
    pitch: list[float]
    roll: list[float]
    stats: dict[str, AngleStatsOut] | None
    labels: list[LabelOut]
    local_average: LocalAverage | None = None


class DecisionIn(BaseModel):
    start_s: float = Field(ge=0)
    end_s: float
    verdict: Literal["accepted", "rejected"]
    reviewer: str = "anonymous"
    params: dict | None = None

    @model_validator(mode="after")
    def _ordered(self) -> "DecisionIn":
        if self.end_s <= self.start_s:
            raise ValueError("end_s must be after start_s")
        return self


class DecisionRecord(BaseModel):
    session_id: str
    start_s: float
    end_s: float
    verdict: str
    reviewer: str
    decided_at: str
    params: dict | None = None


class DecisionList(BaseModel):
    decisions: list[DecisionRecord]


class SweepJobOut(BaseModel):
    job_id: str
    status: Literal["pending", "running", "done", "failed"]
    poll: str
    error: str | None = None
    grid: dict | None = None


class ErrorBody(BaseModel):
    code: str
    message: str


class ErrorEnvelope(BaseModel):
    error: ErrorBody
