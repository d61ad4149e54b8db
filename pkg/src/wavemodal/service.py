"""HTTP JSON API over a pipeline run directory.

Read endpoints expose spectrogram tiles, regions, components, modal
sets, and FRFs; the region write endpoint validates the upload and
triggers re-identification from the decompose stage onward, serialized
per run directory.
"""

from __future__ import annotations

import json
import threading

import numpy as np
from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse

from .pipeline import PipelineRun, load_run
from .timefreq import RegionError, regions_from_json, regions_to_json

API_PREFIX = "/api/v1"


def region_diagnostics(exc: RegionError) -> dict:
    return {
        "code": "invalid-regions",
        "message": str(exc),
        "region_ids": list(exc.region_ids),
        "time_s": exc.time_s,
    }


def create_app(run: PipelineRun | str) -> FastAPI:
    if not isinstance(run, PipelineRun):
        run = load_run(run)
    app = FastAPI(title="wavemodal run service", version="1")
    lock = threading.Lock()
    state = {"status": "idle", "detail": ""}

    def spectrogram_or_404(drive: int, channel: int):
        spectra = run.spectra.get(drive)
        if spectra is None or channel >= len(spectra):
            return None
        return spectra[channel]

    @app.get(API_PREFIX + "/manifest")
    def manifest():
        return run.manifest.to_json_dict()

    @app.get(API_PREFIX + "/status")
    def status():
        return state

    @app.get(API_PREFIX + "/spectrograms")
    def spectrograms():
        return [
            {"drive": d, "channels": len(run.spectra[d])}
            for d in sorted(run.spectra)
        ]

    @app.get(API_PREFIX + "/spectrograms/{drive}/{channel}/meta")
    def spectrogram_meta(drive: int, channel: int):
        S = spectrogram_or_404(drive, channel)
        if S is None:
            return JSONResponse({"detail": "no such spectrogram"}, status_code=404)
        return {
            "n_freq": S.n_freq,
            "n_time": S.n_time,
            "dt": S.dt,
            "omega_c": S.wavelet.center_frequency,
            "f_min": S.grid.f_min,
            "f_max": S.grid.f_max,
            "freqs_hz": S.grid.values.tolist(),
            "coi_hz": S.coi.tolist(),
            "coi_min_hz": float(S.coi.min()),
            "label": S.label,
        }

    @app.get(API_PREFIX + "/spectrograms/{drive}/{channel}/tile")
    def spectrogram_tile(drive: int, channel: int, max_w: int = 512,
                         max_h: int = 256):
        S = spectrogram_or_404(drive, channel)
        if S is None:
            return JSONResponse({"detail": "no such spectrogram"}, status_code=404)
        mag = np.abs(S.values)
        step_f = max(1, int(np.ceil(S.n_freq / max_h)))
        step_t = max(1, int(np.ceil(S.n_time / max_w)))
        tile = mag[::step_f, ::step_t].astype("<f4")
        headers = {
            "X-Tile-Shape": f"{tile.shape[0]},{tile.shape[1]}",
            "X-Freq-Range": f"{S.grid.f_min},{S.grid.f_max}",
            "X-Time-Range": f"0,{(S.n_time - 1) * S.dt}",
        }
        return Response(tile.tobytes(), media_type="application/octet-stream",
                        headers=headers)

    @app.get(API_PREFIX + "/regions/{drive}")
    def get_regions(drive: int):
        regions = run.regions.get(drive)
        if regions is None:
            return JSONResponse({"detail": "no regions"}, status_code=404)
        return regions_to_json(regions)

    @app.post(API_PREFIX + "/regions/{drive}")
    def post_regions(drive: int, payload: list[dict]):
        if drive not in run.spectra:
            return JSONResponse({"detail": "no such drive"}, status_code=404)
        try:
            regions = regions_from_json(payload)
        except (KeyError, ValueError, TypeError) as exc:
            detail = (region_diagnostics(exc) if isinstance(exc, RegionError)
                      else {"code": "malformed-regions", "message": str(exc)})
            return JSONResponse({"detail": detail}, status_code=422)
        with lock:
            state["status"] = "recomputing"
            state["detail"] = f"drive {drive}"
            try:
                summary = run.rerun_from_regions(drive, regions)
            except RegionError as exc:
                state["status"] = "error"
                state["detail"] = str(exc)
                return JSONResponse({"detail": region_diagnostics(exc)},
                                    status_code=422)
            except Exception as exc:
                state["status"] = "error"
                state["detail"] = str(exc)
                return JSONResponse(
                    {"detail": {"code": "recompute-failed", "message": str(exc)}},
                    status_code=500,
                )
            state["status"] = "idle"
            state["detail"] = ""
        return summary

    @app.get(API_PREFIX + "/components/{drive}")
    def components(drive: int):
        cs = run.components.get(drive)
        if cs is None:
            return JSONResponse({"detail": "not decomposed"}, status_code=404)
        return {
            "n_dof": cs.n_dof,
            "n_modes": cs.n_modes,
            "dt": cs.dt,
            "edge_guard_s": cs.edge_guard_s.tolist(),
            "series": [
                [cs.component(i, j).samples.tolist()
                 for j in range(cs.n_modes)]
                for i in range(cs.n_dof)
            ],
        }

    @app.get(API_PREFIX + "/modal/fused")
    def fused():
        if run.fusion is None:
            return JSONResponse({"detail": "not fused"}, status_code=404)
        return run.summary()

    @app.get(API_PREFIX + "/modal/{drive}")
    def modal(drive: int):
        ms = run.modal_sets.get(drive)
        if ms is None:
            return JSONResponse({"detail": "not identified"}, status_code=404)
        return ms.to_json_dict()

    @app.get(API_PREFIX + "/fusion")
    def fusion_report():
        if run.fusion is None:
            return JSONResponse({"detail": "not fused"}, status_code=404)
        return run.fusion.report_dict()

    @app.get(API_PREFIX + "/frf/measured/{drive}")
    def frf_measured(drive: int):
        H = run.measured.get(drive)
        if H is None:
            return JSONResponse({"detail": "no measured FRF"}, status_code=404)
        return _frf_json(H)

    @app.get(API_PREFIX + "/frf/reconstructed")
    def frf_reconstructed():
        if run.reconstructed is None:
            return JSONResponse({"detail": "not reconstructed"}, status_code=404)
        return _frf_json(run.reconstructed)

    return app


def _frf_json(H) -> dict:
    return {
        "freqs_hz": H.freqs.tolist(),
        "kind": H.kind,
        "values": [
            [
                {"re": H.values[i, j].real.tolist(),
                 "im": H.values[i, j].imag.tolist()}
                for j in range(H.n_in)
            ]
            for i in range(H.n_out)
        ],
    }


def serve_api(run_dir, port: int = 8709, host: str = "127.0.0.1"):
    """Blocking entry point used by the CLI serve subcommand."""
    import uvicorn

    app = create_app(run_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
