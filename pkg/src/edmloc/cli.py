"""Command-line client for the localization service.

Every subcommand builds the same request models the HTTP API uses and
either calls the in-process handlers or, with --server, posts them to a
running instance.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx
import numpy as np

from . import __version__
from .schemas import (
    BenchRequest,
    BenchResponse,
    CurvesRequest,
    CurvesResponse,
    DoaEstimateRequest,
    DoaEstimateResponse,
    DoaParams,
    EvalRequest,
    EvalResponse,
    PositionEstimateRequest,
    PositionEstimateResponse,
    PositionParams,
    ScenarioConfigModel,
    SimulateRequest,
    SimulateResponse,
    SrpGridModel,
    decode_wav,
    encode_wav,
)
from . import service
from .signals import read_wav, write_wav


def _dispatch(server: str | None, path: str, request, response_model, handler):
    if server:
        resp = httpx.post(server.rstrip("/") + path, json=request.model_dump(mode="json"), timeout=None)
        resp.raise_for_status()
        return response_model.model_validate(resp.json())
    return handler(request)


def _load_mic_positions(path: str) -> list[list[float]]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, list):
        return data
    if "mic_positions" in data:
        return data["mic_positions"]
    if "scenario" in data and "mic_positions" in data["scenario"]:
        return data["scenario"]["mic_positions"]
    raise click.ClickException(f"no microphone positions found in {path}")


def _read_signals(wav_paths) -> tuple[float, np.ndarray]:
    rates = []
    channels = []
    for p in wav_paths:
        rate, x = read_wav(p)
        rates.append(rate)
        channels.append(x if x.ndim == 2 else x[None, :])
    if len(set(rates)) != 1:
        raise click.ClickException("sample rates differ between WAV files")
    n = min(c.shape[1] for c in channels)
    return rates[0], np.vstack([c[:, :n] for c in channels])


@click.group()
@click.version_option(__version__)
def main():
    """EDM-based multi-source localization toolkit."""


server_option = click.option("--server", default=None, help="Base URL of a running service; default runs in-process.")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="Scenario config JSON.")
@click.option("--mode", type=click.Choice(["distributed", "compact"]), default="distributed")
@click.option("--d1", type=float, default=2.0, help="Source 1 distance to the array centroid [m].")
@click.option("--d2", type=float, default=2.0, help="Source 2 distance to the array centroid [m].")
@click.option("--seed", type=int, default=0)
@click.option("--snr", type=float, default=20.0, help="Reverberant SNR in dB; omit noise with --no-noise.")
@click.option("--no-noise", is_flag=True, default=False)
@click.option("--duration", type=float, default=5.0)
@click.option("--out-wav", type=click.Path(), default="scenario.wav", show_default=True)
@click.option("--out-truth", type=click.Path(), default="scenario.truth.json", show_default=True)
@server_option
def simulate(config_path, mode, d1, d2, seed, snr, no_noise, duration, out_wav, out_truth, server):
    """Synthesize a seeded scenario to a WAV file plus a truth sidecar."""
    if config_path:
        scenario = ScenarioConfigModel.model_validate(json.loads(Path(config_path).read_text()))
    else:
        scenario = ScenarioConfigModel(
            mode=mode,
            source_distances=[d1, d2],
            snr_db=None if no_noise else snr,
            duration=duration,
        )
    req = SimulateRequest(scenario=scenario, seed=seed, include_wav=True)
    resp = _dispatch(server, "/simulate", req, SimulateResponse, service.handle_simulate)
    rate, signals = decode_wav(resp.wav_base64)
    write_wav(out_wav, rate, signals)
    Path(out_truth).write_text(json.dumps(resp.sidecar, indent=2))
    click.echo(f"wrote {out_wav} ({signals.shape[0]} channels) and {out_truth}")


@main.command()
@click.argument("wav", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--mics", "mics_path", required=True, type=click.Path(exists=True), help="JSON with microphone positions (or a truth sidecar).")
@click.option("--mode", type=click.Choice(["position", "doa"]), default="position")
@click.option("--method", type=click.Choice(["edm", "srp"]), default="edm")
@click.option("--sources", type=int, default=1, help="Number of sources to estimate.")
@click.option("--candidates", type=int, default=None, help="Candidate TDOAs per microphone pair.")
@click.option("--gamma", type=float, default=None, help="Exponential GCC peak weighting.")
@click.option("--interp-factor", type=int, default=20, help="GCC lag interpolation factor.")
@click.option("--alpha-max", type=float, default=6.0, help="Distance search upper bound [m].")
@click.option("--alpha-step", type=float, default=0.01, help="Distance grid step [m].")
@click.option("--min-diff", type=int, default=None, help="Minimum differing candidates between selected combinations.")
@click.option("--speed-of-sound", type=float, default=343.0)
@click.option("--room", nargs=3, type=float, default=(6.0, 6.0, 2.4), help="Room size for SRP position grids.")
@click.option("--coarse-step", type=float, default=None, help="SRP coarse step [m or deg].")
@click.option("--fine-step", type=float, default=None, help="SRP fine step [m or deg].")
@click.option("--fine-extent", type=float, default=None, help="SRP fine half-extent [m or deg].")
@click.option("--beta", type=int, default=None, help="SRP coarse candidates.")
@click.option("--exclusion", type=float, default=None, help="SRP exclusion radius [m or deg].")
@server_option
def estimate(wav, mics_path, mode, method, sources, candidates, gamma, interp_factor,
             alpha_max, alpha_step, min_diff, speed_of_sound, room, coarse_step,
             fine_step, fine_extent, beta, exclusion, server):
    """Estimate source positions or DOAs from WAV recordings."""
    rate, signals = _read_signals(wav)
    wav_b64 = encode_wav(rate, signals)
    mics = _load_mic_positions(mics_path)

    if mode == "position":
        params = PositionParams(
            candidates=3 if candidates is None else candidates,
            gamma=30.0 if gamma is None else gamma,
            interp=interp_factor,
            alpha_max=alpha_max,
            alpha_step=alpha_step,
            min_diff=min_diff,
            nu=speed_of_sound,
        )
        grid = SrpGridModel.position_default()
        grid = grid.model_copy(update={
            k: v for k, v in dict(coarse_step=coarse_step, fine_step=fine_step,
                                  fine_extent=fine_extent, beta=beta, exclusion=exclusion).items()
            if v is not None
        })
        req = PositionEstimateRequest(
            wav_base64=wav_b64, mic_positions=mics, method=method,
            sources=sources, room=tuple(room), params=params, srp_grid=grid,
        )
        resp = _dispatch(server, "/estimate/position", req, PositionEstimateResponse, service.handle_estimate_position)
    else:
        params = DoaParams(
            candidates=2 if candidates is None else candidates,
            gamma=50.0 if gamma is None else gamma,
            interp=interp_factor,
            min_diff=min_diff,
            nu=speed_of_sound,
        )
        grid = SrpGridModel.doa_default()
        grid = grid.model_copy(update={
            k: v for k, v in dict(coarse_step=coarse_step, fine_step=fine_step,
                                  fine_extent=fine_extent, beta=beta, exclusion=exclusion).items()
            if v is not None
        })
        req = DoaEstimateRequest(
            wav_base64=wav_b64, mic_positions=mics, method=method,
            sources=sources, params=params, srp_grid=grid,
        )
        resp = _dispatch(server, "/estimate/doa", req, DoaEstimateResponse, service.handle_estimate_doa)
    click.echo(resp.model_dump_json(indent=2))


@main.command(name="eval")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="EvalRequest JSON.")
@click.option("--methods", default="edm-pos,srp-pos", show_default=True)
@click.option("--distances", default="2.0", show_default=True, help="Comma-separated source-1 distances [m].")
@click.option("--runs", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--workers", type=int, default=1)
@click.option("--check", is_flag=True, default=False, help="Run accuracy checks; exit nonzero on failure.")
@click.option("--out-csv", type=click.Path(), default="eval_runs.csv", show_default=True)
@click.option("--out-report", type=click.Path(), default="eval_report.json", show_default=True)
@server_option
def eval_cmd(config_path, methods, distances, runs, seed, workers, check, out_csv, out_report, server):
    """Run a seeded batch experiment and write per-run CSV plus a report."""
    if config_path:
        req = EvalRequest.model_validate(json.loads(Path(config_path).read_text()))
        if check:
            req.check = True
    else:
        method_list = [m.strip() for m in methods.split(",") if m.strip()]
        scenario_mode = "compact" if all(m.endswith("doa") for m in method_list) else "distributed"
        req = EvalRequest(
            methods=method_list,
            distances=[float(d) for d in distances.split(",")],
            runs=runs,
            base_seed=seed,
            workers=workers,
            scenario=ScenarioConfigModel(mode=scenario_mode),
            check=check,
        )
    resp = _dispatch(server, "/eval", req, EvalResponse, service.handle_eval)
    Path(out_csv).write_text(resp.csv)
    Path(out_report).write_text(json.dumps(resp.report, indent=2))
    click.echo(f"wrote {out_csv} and {out_report}")
    for entry in resp.report["entries"]:
        click.echo(
            f"  {entry['method']:8s} d1={entry['distance_m']:.2g} m: "
            f"median {entry['median']:.3f} {resp.report['unit']} "
            f"(n={entry['count']}, mean runtime {entry['mean_runtime_ms']:.0f} ms)"
        )
    failed = False
    for c in resp.checks:
        status = "PASS" if c.passed else "FAIL"
        click.echo(f"  [{status}] {c.name}: {c.detail}")
        failed |= not c.passed
    if failed:
        sys.exit(1)


@main.command()
@click.option("--repetitions", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0)
@click.option("--methods", default="edm-pos,srp-pos,edm-doa,srp-doa", show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Optional JSON output path.")
@server_option
def bench(repetitions, seed, methods, out, server):
    """Benchmark estimator-only runtimes on a fixed scenario."""
    req = BenchRequest(
        repetitions=repetitions,
        seed=seed,
        methods=[m.strip() for m in methods.split(",") if m.strip()],
    )
    resp = _dispatch(server, "/bench", req, BenchResponse, service.handle_bench)
    text = json.dumps(resp.report, indent=2)
    if out:
        Path(out).write_text(text)
    click.echo(text)


@main.command(name="dump-curves")
@click.argument("wav", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--mics", "mics_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["position", "doa"]), default="position")
@click.option("--out", type=click.Path(), default=None, help="CSV output path; default stdout.")
@server_option
def dump_curves(wav, mics_path, mode, out, server):
    """Dump per-combination cost curves (position) or sorted costs (doa)."""
    rate, signals = _read_signals(wav)
    req = CurvesRequest(
        wav_base64=encode_wav(rate, signals),
        mic_positions=_load_mic_positions(mics_path),
        mode=mode,
    )
    resp = _dispatch(server, "/curves", req, CurvesResponse, service.handle_curves)
    if out:
        Path(out).write_text(resp.csv)
        click.echo(f"wrote {out}")
    else:
        click.echo(resp.csv, nl=False)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("edmloc.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
