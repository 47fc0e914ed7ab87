"""Pydantic request/response models for the HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class FramePose(BaseModel):
    rotation: list[float] = Field(min_length=4, max_length=4,
                                  description="unit quaternion (w, x, y, z)")
    translation: list[float] = Field(min_length=3, max_length=3)


class FkRequest(BaseModel):
    angles: list[float]
    velocities: list[float] | None = None


class FkResponse(BaseModel):
    frames: list[FramePose]
    humeral_pose: list[float]
    euler_zyx: list[float]
    gimbal_adjacent: bool


class JacobianRequest(BaseModel):
    angles: list[float]
    link: int | None = None


class JacobianResponse(BaseModel):
    jacobian: list[list[float]]


class CouplingRequest(BaseModel):
    theta1: float


class CouplingResponse(BaseModel):
    theta_2_1: float
    theta_2_2: float
    theta_3: float
    theta2_total: float


class AxisVerdictModel(BaseModel):
    value: float
    min_rad: float
    max_rad: float
    within: bool


class RomCheckRequest(BaseModel):
    angles: list[float]


class RomCheckResponse(BaseModel):
    axes: dict[str, AxisVerdictModel]
    ok: bool


class RomLimitsResponse(BaseModel):
    axes: dict[str, dict[str, float]]   # name -> {min, max, joint}


class GhSweepRequest(BaseModel):
    start: float = 0.0
    stop: float = 1.0
    steps: int = Field(default=101, ge=2, le=100000)
    gain: float | None = None           # override the configured coupling gain


class GhSweepResponse(BaseModel):
    theta1: list[float]
    displacement: list[list[float]]     # rows of (forward, lateral, vertical) m


class RomSweepRequest(BaseModel):
    steps: int = Field(default=121, ge=2, le=100000)
    margin_rad: float = 0.35


class RomSweepRow(BaseModel):
    axis: str
    angle: float
    within: bool


class RomSweepResponse(BaseModel):
    rows: list[RomSweepRow]


class MasterPoseModel(BaseModel):
    shoulder_q: list[float] = Field(min_length=4, max_length=4)
    wrist_q: list[float] = Field(default=[1.0, 0.0, 0.0, 0.0], min_length=4, max_length=4)
    elbow: float = 0.0
    fingers: list[float] = Field(default=[0.0] * 6, min_length=6, max_length=6)
    shoulder_w: list[float] = Field(default=[0.0] * 3, min_length=3, max_length=3)
    wrist_w: list[float] = Field(default=[0.0] * 3, min_length=3, max_length=3)
    elbow_v: float = 0.0
    finger_v: list[float] = Field(default=[0.0] * 6, min_length=6, max_length=6)


class FollowerStateModel(BaseModel):
    angles: list[float] = Field(min_length=13, max_length=13)
    velocities: list[float] = Field(default=[0.0] * 13, min_length=13, max_length=13)


class CtlStepRequest(BaseModel):
    master: MasterPoseModel
    follower: FollowerStateModel
    wrench_upper: list[float] | None = Field(default=None, min_length=6, max_length=6)
    wrench_forearm: list[float] | None = Field(default=None, min_length=6, max_length=6)
    preset: str = "default"


class CtlStepResponse(BaseModel):
    torques: list[float]
    shoulder_error_angle: float
    reference: MasterPoseModel


class BenchDriftRequest(BaseModel):
    seeds: int = Field(default=20, ge=1, le=10000)
    out_dir: str | None = None


class DriftRow(BaseModel):
    phase: str
    axis: str
    system: str
    max_deviation: float
    avg_deviation: float
    static_max_deviation: float
    static_avg_deviation: float


class BenchDriftResponse(BaseModel):
    rows: list[DriftRow]
    encoder_phase_invariant: bool
    csv_path: str | None = None
    spectrum_path: str | None = None


class StreamSummary(BaseModel):
    stream_id: int
    name: str
    dims: int
    units: str
    records: int
    first_timestamp_us: int | None
    last_timestamp_us: int | None


class LogInspectRequest(BaseModel):
    path: str


class LogInspectResponse(BaseModel):
    path: str
    total_records: int
    streams: list[StreamSummary]


class MasterFramesRequest(BaseModel):
    path: str


class MasterFramesResponse(BaseModel):
    times_us: list[int]
    frames: list[list[float]]   # 28-float master payloads


class LogExportRequest(BaseModel):
    path: str
    out_dir: str


class LogExportResponse(BaseModel):
    files: list[str]


class StatusResponse(BaseModel):
    name: str
    version: str
    config_path: str
    live_controller: bool
    followers: list[int]
