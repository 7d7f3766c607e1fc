"""Pydantic request/response models shared by the HTTP service and the CLI.

Audio travels as base64-encoded WAV bytes; every response model mirrors a
core result structure. Config models convert to the core dataclasses via
their to_* methods.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from pydantic import BaseModel, Field
from scipy.io import wavfile

from .doa import DoaEstimatorConfig
from .evaluate import BenchConfig, ExperimentConfig
from .position import DistanceGrid, PositionEstimatorConfig
from .sim import ScenarioConfig
from .srp import SrpGrid

SCHEMA_VERSION = 1


def encode_wav(sample_rate: float, signals) -> str:
    buf = io.BytesIO()
    x = np.asarray(signals, dtype=np.float32)
    wavfile.write(buf, int(sample_rate), x.T if x.ndim == 2 else x)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_wav(data: str) -> tuple[float, np.ndarray]:
    rate, x = wavfile.read(io.BytesIO(base64.b64decode(data)))
    if x.dtype == np.int16:
        x = x / 32768.0
    elif x.dtype == np.int32:
        x = x / 2147483648.0
    else:
        x = x.astype(float)
    if x.ndim == 2:
        x = x.T
    return float(rate), x


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str


class ScenarioConfigModel(BaseModel):
    mode: str = "distributed"
    room: tuple[float, float, float] = (6.0, 6.0, 2.4)
    mic_count: int = 6
    source_distances: list[float] = Field(default_factory=lambda: [2.0, 2.0])
    snr_db: float | None = 20.0
    reflection_order: int = 1
    reflection_coeff: float = 0.5
    sample_rate: float = 16000.0
    duration: float = 5.0
    nu: float = 343.0

    def to_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            mode=self.mode,
            room=tuple(self.room),
            mic_count=self.mic_count,
            source_distances=tuple(self.source_distances),
            snr_db=self.snr_db,
            reflection_order=self.reflection_order,
            reflection_coeff=self.reflection_coeff,
            sample_rate=self.sample_rate,
            duration=self.duration,
            nu=self.nu,
        )


class SimulateRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scenario: ScenarioConfigModel = Field(default_factory=ScenarioConfigModel)
    seed: int = 0
    include_wav: bool = True


class SimulateResponse(BaseModel):
    sidecar: dict
    sample_rate: float
    wav_base64: str | None = None


class PositionParams(BaseModel):
    candidates: int = 3
    gamma: float = 30.0
    interp: int = 20
    frame_len: int = 512
    nu: float = 343.0
    alpha_max: float = 6.0
    alpha_step: float = 0.01
    min_diff: int | None = None
    reference: int | None = None
    reference_mode: str = "distributed"

    def to_config(self, sources: int) -> PositionEstimatorConfig:
        return PositionEstimatorConfig(
            sources=sources,
            candidates=self.candidates,
            gamma=self.gamma,
            interp=self.interp,
            frame_len=self.frame_len,
            nu=self.nu,
            grid=DistanceGrid(max=self.alpha_max, step=self.alpha_step),
            min_combination_diff=self.min_diff,
            reference=self.reference,
            reference_mode=self.reference_mode,
        )


class DoaParams(BaseModel):
    candidates: int = 2
    gamma: float = 50.0
    interp: int = 20
    frame_len: int = 512
    nu: float = 343.0
    min_diff: int | None = None
    reference: int | None = None
    reference_mode: str = "compact"

    def to_config(self, sources: int) -> DoaEstimatorConfig:
        return DoaEstimatorConfig(
            sources=sources,
            candidates=self.candidates,
            gamma=self.gamma,
            interp=self.interp,
            frame_len=self.frame_len,
            nu=self.nu,
            min_combination_diff=self.min_diff,
            reference=self.reference,
            reference_mode=self.reference_mode,
        )


class SrpGridModel(BaseModel):
    coarse_step: float
    fine_step: float
    fine_extent: float
    beta: int
    exclusion: float

    def to_grid(self, kind: str) -> SrpGrid:
        return SrpGrid(
            kind=kind,
            coarse_step=self.coarse_step,
            fine_step=self.fine_step,
            fine_extent=self.fine_extent,
            beta=self.beta,
            exclusion=self.exclusion,
        )

    @classmethod
    def position_default(cls) -> "SrpGridModel":
        return cls(coarse_step=0.10, fine_step=0.01, fine_extent=0.10, beta=3, exclusion=0.50)

    @classmethod
    def doa_default(cls) -> "SrpGridModel":
        return cls(coarse_step=5.0, fine_step=0.5, fine_extent=10.0, beta=2, exclusion=20.0)


class PositionEstimateRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    wav_base64: str
    mic_positions: list[list[float]]  # (M, 3) absolute coordinates
    method: str = "edm"  # edm | srp
    sources: int = 1
    room: tuple[float, float, float] = (6.0, 6.0, 2.4)
    params: PositionParams = Field(default_factory=PositionParams)
    srp_grid: SrpGridModel = Field(default_factory=SrpGridModel.position_default)


class PositionEstimateModel(BaseModel):
    position: list[float]
    cost: float | None = None
    ref_distance: float | None = None
    combination: list[int] | None = None
    degenerate: bool = False


class PositionEstimateResponse(BaseModel):
    method: str
    estimates: list[PositionEstimateModel]
    shortfall: bool
    runtime_ms: float


class DoaEstimateRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    wav_base64: str
    mic_positions: list[list[float]]
    method: str = "edm"
    sources: int = 1
    params: DoaParams = Field(default_factory=DoaParams)
    srp_grid: SrpGridModel = Field(default_factory=SrpGridModel.doa_default)


class DoaEstimateModel(BaseModel):
    direction: list[float]
    azimuth_deg: float
    elevation_deg: float
    cost: float | None = None
    combination: list[int] | None = None


class DoaEstimateResponse(BaseModel):
    method: str
    estimates: list[DoaEstimateModel]
    shortfall: bool
    runtime_ms: float


class EvalRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    methods: list[str] = Field(default_factory=lambda: ["edm-pos", "srp-pos"])
    distances: list[float] = Field(default_factory=lambda: [2.0])
    runs: int = 10
    base_seed: int = 0
    workers: int = 1
    fixed_distances: list[float] = Field(default_factory=lambda: [2.0])
    scenario: ScenarioConfigModel = Field(default_factory=ScenarioConfigModel)
    position_params: PositionParams = Field(default_factory=PositionParams)
    doa_params: DoaParams = Field(default_factory=DoaParams)
    srp_position_grid: SrpGridModel = Field(default_factory=SrpGridModel.position_default)
    srp_doa_grid: SrpGridModel = Field(default_factory=SrpGridModel.doa_default)
    check: bool = False

    def to_config(self) -> ExperimentConfig:
        return ExperimentConfig(
            methods=tuple(self.methods),
            distances=tuple(self.distances),
            runs=self.runs,
            base_seed=self.base_seed,
            workers=self.workers,
            fixed_distances=tuple(self.fixed_distances),
            scenario=self.scenario.to_config(),
            position_estimator=self.position_params.to_config(sources=1),
            doa_estimator=self.doa_params.to_config(sources=1),
            srp_position_grid=self.srp_position_grid.to_grid("position"),
            srp_doa_grid=self.srp_doa_grid.to_grid("doa"),
        )


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str


class EvalResponse(BaseModel):
    report: dict
    csv: str
    checks: list[CheckResult] = Field(default_factory=list)


class BenchRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    repetitions: int = 5
    distance: float = 2.0
    methods: list[str] = Field(default_factory=lambda: ["edm-pos", "srp-pos", "edm-doa", "srp-doa"])
    scenario: ScenarioConfigModel = Field(default_factory=ScenarioConfigModel)
    position_params: PositionParams = Field(default_factory=PositionParams)
    doa_params: DoaParams = Field(default_factory=DoaParams)
    srp_position_grid: SrpGridModel = Field(default_factory=SrpGridModel.position_default)
    srp_doa_grid: SrpGridModel = Field(default_factory=SrpGridModel.doa_default)

    def to_config(self) -> BenchConfig:
        return BenchConfig(
            seed=self.seed,
            repetitions=self.repetitions,
            distance=self.distance,
            methods=tuple(self.methods),
            scenario=self.scenario.to_config(),
            position_estimator=self.position_params.to_config(sources=1),
            doa_estimator=self.doa_params.to_config(sources=1),
            srp_position_grid=self.srp_position_grid.to_grid("position"),
            srp_doa_grid=self.srp_doa_grid.to_grid("doa"),
        )


class BenchResponse(BaseModel):
    report: dict


class CurvesRequest(BaseModel):
    schema_version: int = SCHEMA_VERSION
    wav_base64: str
    mic_positions: list[list[float]]
    mode: str = "position"  # position | doa
    position_params: PositionParams = Field(default_factory=PositionParams)
    doa_params: DoaParams = Field(default_factory=DoaParams)


class CurvesResponse(BaseModel):
    mode: str
    csv: str
