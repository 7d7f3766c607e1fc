"""FastAPI service wrapping the estimation, simulation and evaluation core.

Each endpoint delegates to a plain handler function operating on the
pydantic models from schemas.py; the CLI reuses the same handlers when run
without a server.
"""

from __future__ import annotations

import io
import time

import numpy as np
from fastapi import FastAPI, HTTPException

from . import __version__
from .doa import estimate_doas_from_signals
from .errors import InfeasibleScenario, InvalidInput
from .evaluate import evaluation_checks, run_experiment, bench as run_bench
from .geometry import MicArray
from .position import (
    DistanceGrid,
    candidate_set_from_signals,
    cost_curves,
    estimate_positions_from_signals,
)
from .doa import sorted_direction_costs
from .schemas import (
    BenchRequest,
    BenchResponse,
    CheckResult,
    CurvesRequest,
    CurvesResponse,
    DoaEstimateModel,
    DoaEstimateRequest,
    DoaEstimateResponse,
    EvalRequest,
    EvalResponse,
    HealthResponse,
    PositionEstimateModel,
    PositionEstimateRequest,
    PositionEstimateResponse,
    SimulateRequest,
    SimulateResponse,
    decode_wav,
    encode_wav,
)
from .sim import render_scenario, scenario_sidecar
from .srp import srp_doas_from_signals, srp_positions_from_signals


def handle_simulate(req: SimulateRequest) -> SimulateResponse:
    scenario, signals = render_scenario(req.scenario.to_config(), req.seed)
    return SimulateResponse(
        sidecar=scenario_sidecar(scenario),
        sample_rate=scenario.config.sample_rate,
        wav_base64=encode_wav(scenario.config.sample_rate, signals) if req.include_wav else None,
    )


def _load_signals(req) -> tuple[np.ndarray, float, MicArray]:
    rate, signals = decode_wav(req.wav_base64)
    if signals.ndim == 1:
        signals = signals[None, :]
    array = MicArray.from_positions(np.asarray(req.mic_positions, dtype=float).T)
    if signals.shape[0] != array.count:
        raise InvalidInput(
            f"{signals.shape[0]} channels but {array.count} microphone positions"
        )
    return signals, rate, array


def handle_estimate_position(req: PositionEstimateRequest) -> PositionEstimateResponse:
    signals, rate, array = _load_signals(req)
    t0 = time.perf_counter()
    if req.method == "edm":
        batch = estimate_positions_from_signals(
            signals, rate, array, req.params.to_config(req.sources)
        )
        estimates = [
            PositionEstimateModel(
                position=e.position.tolist(),
                cost=e.cost,
                ref_distance=e.ref_distance,
                combination=list(e.combination),
                degenerate=e.degenerate,
            )
            for e in batch.estimates
        ]
        shortfall = batch.shortfall
    elif req.method == "srp":
        values, shortfall = srp_positions_from_signals(
            signals,
            rate,
            array,
            req.room,
            req.sources,
            req.srp_grid.to_grid("position"),
            nu=req.params.nu,
            frame_len=req.params.frame_len,
        )
        estimates = [
            PositionEstimateModel(position=v.location.tolist(), cost=v.value) for v in values
        ]
    else:
        raise InvalidInput(f"unknown method {req.method!r}")
    return PositionEstimateResponse(
        method=req.method,
        estimates=estimates,
        shortfall=shortfall,
        runtime_ms=1000.0 * (time.perf_counter() - t0),
    )


def handle_estimate_doa(req: DoaEstimateRequest) -> DoaEstimateResponse:
    signals, rate, array = _load_signals(req)
    t0 = time.perf_counter()
    if req.method == "edm":
        batch = estimate_doas_from_signals(signals, rate, array, req.params.to_config(req.sources))
        estimates = [
            DoaEstimateModel(
                direction=e.direction.tolist(),
                azimuth_deg=float(np.degrees(e.azimuth)),
                elevation_deg=float(np.degrees(e.elevation)),
                cost=e.cost,
                combination=list(e.combination),
            )
            for e in batch.estimates
        ]
        shortfall = batch.shortfall
    elif req.method == "srp":
        values, shortfall = srp_doas_from_signals(
            signals,
            rate,
            array,
            req.sources,
            req.srp_grid.to_grid("doa"),
            nu=req.params.nu,
            frame_len=req.params.frame_len,
        )
        estimates = []
        for v in values:
            az = float(np.degrees(np.arctan2(v.location[1], v.location[0])))
            el = float(np.degrees(np.arcsin(np.clip(v.location[2], -1, 1))))
            estimates.append(
                DoaEstimateModel(
                    direction=v.location.tolist(), azimuth_deg=az, elevation_deg=el, cost=v.value
                )
            )
    else:
        raise InvalidInput(f"unknown method {req.method!r}")
    return DoaEstimateResponse(
        method=req.method,
        estimates=estimates,
        shortfall=shortfall,
        runtime_ms=1000.0 * (time.perf_counter() - t0),
    )


def handle_eval(req: EvalRequest) -> EvalResponse:
    result = run_experiment(req.to_config())
    checks = []
    if req.check:
        checks = [
            CheckResult(name=n, passed=p, detail=d) for n, p, d in evaluation_checks(result)
        ]
    return EvalResponse(report=result.aggregate(), csv=result.csv(), checks=checks)


def handle_bench(req: BenchRequest) -> BenchResponse:
    return BenchResponse(report=run_bench(req.to_config()))


def handle_curves(req: CurvesRequest) -> CurvesResponse:
    rate, signals = decode_wav(req.wav_base64)
    if signals.ndim == 1:
        signals = signals[None, :]
    array = MicArray.from_positions(np.asarray(req.mic_positions, dtype=float).T)
    buf = io.StringIO()
    if req.mode == "position":
        params = req.position_params
        cset = candidate_set_from_signals(
            signals,
            rate,
            array,
            candidates=params.candidates,
            gamma=params.gamma,
            interp=params.interp,
            frame_len=params.frame_len,
            nu=params.nu,
            reference=params.reference,
            reference_mode=params.reference_mode,
        )
        buf.write("q,alpha,J\n")
        grid = DistanceGrid(max=params.alpha_max, step=params.alpha_step)
        for q, dists, costs in cost_curves(array, cset, grid, params.nu):
            for a, j in zip(dists, costs):
                buf.write(f"{q},{a:.6g},{j:.9g}\n")
    elif req.mode == "doa":
        params = req.doa_params
        cset = candidate_set_from_signals(
            signals,
            rate,
            array,
            candidates=params.candidates,
            gamma=params.gamma,
            interp=params.interp,
            frame_len=params.frame_len,
            nu=params.nu,
            reference=params.reference,
            reference_mode=params.reference_mode,
        )
        buf.write("rank,q,I\n")
        for rank, (q, cost) in enumerate(sorted_direction_costs(array, cset, params.nu)):
            buf.write(f"{rank},{q},{cost:.9g}\n")
    else:
        raise InvalidInput(f"unknown mode {req.mode!r}")
    return CurvesResponse(mode=req.mode, csv=buf.getvalue())


app = FastAPI(title="edmloc", version=__version__)


def _wrap(handler, request):
    try:
        return handler(request)
    except (InvalidInput, InfeasibleScenario) as exc:
        raise HTTPException(status_code=422, detail=str(exc))


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(version=__version__)


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest) -> SimulateResponse:
    return _wrap(handle_simulate, req)


@app.post("/estimate/position", response_model=PositionEstimateResponse)
def estimate_position(req: PositionEstimateRequest) -> PositionEstimateResponse:
    return _wrap(handle_estimate_position, req)


@app.post("/estimate/doa", response_model=DoaEstimateResponse)
def estimate_doa(req: DoaEstimateRequest) -> DoaEstimateResponse:
    return _wrap(handle_estimate_doa, req)


@app.post("/eval", response_model=EvalResponse)
def evaluate(req: EvalRequest) -> EvalResponse:
    return _wrap(handle_eval, req)


@app.post("/bench", response_model=BenchResponse)
def bench_endpoint(req: BenchRequest) -> BenchResponse:
    return _wrap(handle_bench, req)


@app.post("/curves", response_model=CurvesResponse)
def curves(req: CurvesRequest) -> CurvesResponse:
    return _wrap(handle_curves, req)
