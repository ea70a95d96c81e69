"""HTTP forecast service.

Wraps one loaded checkpoint and dataset. Ensembles are cached by
(patch, start, horizon, scenarios, seed) and referenced by a stable id so
follow-up queries reuse them; generation per key is single-flight, so
concurrent identical requests share one computation. JSON endpoints:

    GET  /health                liveness
    GET  /patches               patch layout and series extent
    GET  /model                 checkpoint config and parameter count
    POST /forecast              ensemble summary (mean/std) + ensemble id
    GET  /ensemble/{id}         full ensemble as a GSFE text file
    POST /query/area            flood-probability query over a polygon
    POST /query/route           route (threshold 0) variant
"""

from __future__ import annotations

import hashlib
import threading
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from tidecast import gsf
from tidecast.dataset import FloodDataset, load_dataset
from tidecast.model import Checkpoint, Forecaster, load_model
from tidecast.query import (
    PatchLayout,
    QueryPolygon,
    area_flood_probability,
    cells_overlapping,
    route_flood_probability,
)
from tidecast.sampling import ForecastEnsemble


class ForecastRequest(BaseModel):
    patch_id: str
    start: str = Field(description="ISO-8601 first forecast hour")
    horizon: int = Field(default=12, ge=1)
    scenarios: int = Field(default=8, ge=1)
    seed: int = 0


class ForecastParams(BaseModel):
    start: str
    horizon: int = Field(default=12, ge=1)
    scenarios: int = Field(default=8, ge=1)
    seed: int = 0


class AreaQueryRequest(BaseModel):
    polygon: list[tuple[float, float]]
    threshold: float = Field(default=0.0, description="feet")
    horizon: int = Field(default=12, ge=1)
    ensemble_ids: Optional[list[str]] = None
    forecast: Optional[ForecastParams] = None


class RouteQueryRequest(BaseModel):
    polygon: list[tuple[float, float]]
    horizon: int = Field(default=12, ge=1)
    ensemble_ids: Optional[list[str]] = None
    forecast: Optional[ForecastParams] = None


class ServiceState:
    """Loaded model + dataset and the keyed ensemble cache."""

    def __init__(self, model: Forecaster | None, ckpt: Checkpoint | None,
                 data: FloodDataset | None):
        self.model = model
        self.ckpt = ckpt
        self.data = data
        self.cache: dict[str, ForecastEnsemble] = {}
        self._cache_lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        self.request_log: list[str] = []

    def layout(self) -> list[PatchLayout]:
        return [
            PatchLayout(p.patch_id, p.series.origin, p.series.grid_size)
            for p in self.data.patches
        ]

    def ensemble_key(self, patch_id: str, start: str, horizon: int,
                     scenarios: int, seed: int) -> str:
        ckpt_id = self.ckpt.checkpoint_id if self.ckpt else "-"
        text = f"{ckpt_id}|{patch_id}|{start}|{horizon}|{scenarios}|{seed}"
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def get_or_compute(self, patch_id: str, start: str, horizon: int,
                       scenarios: int, seed: int) -> tuple[str, ForecastEnsemble]:
        key = self.ensemble_key(patch_id, start, horizon, scenarios, seed)
        with self._cache_lock:
            if key in self.cache:
                return key, self.cache[key]
            lock = self._key_locks.setdefault(key, threading.Lock())
        with lock:
            with self._cache_lock:
                if key in self.cache:
                    return key, self.cache[key]
            ens = self._compute(patch_id, start, horizon, scenarios, seed)
            with self._cache_lock:
                self.cache[key] = ens
            return key, ens

    def _compute(self, patch_id: str, start: str, horizon: int,
                 scenarios: int, seed: int) -> ForecastEnsemble:
        from tidecast.cli import _forecast_ensemble

        return _forecast_ensemble(
            self.model, self.ckpt, self.data, patch_id, start, horizon, scenarios, seed
        )


def create_app(ckpt_path=None, data_dir=None, state: ServiceState | None = None) -> FastAPI:
    if state is None:
        model, ckpt = (None, None) if ckpt_path is None else load_model(ckpt_path)
        data = None if data_dir is None else load_dataset(data_dir)
        state = ServiceState(model, ckpt, data)
    app = FastAPI(title="tidecast forecast service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = state

    def require_model() -> None:
        if state.model is None or state.data is None:
            raise HTTPException(status_code=503, detail="model not loaded")

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model_loaded": state.model is not None,
            "data_loaded": state.data is not None,
        }

    @app.get("/patches")
    def patches():
        require_model()
        return [
            {
                "patch_id": p.patch_id,
                "origin": list(p.series.origin),
                "grid_size": p.series.grid_size,
                "timesteps": p.series.num_steps,
                "start": np.datetime_as_string(p.series.timestamps[0], unit="s"),
                "cell_size_m": p.series.cell_size_m,
            }
            for p in state.data.patches
        ]

    @app.get("/model")
    def model_info():
        require_model()
        return {
            "checkpoint_id": state.ckpt.checkpoint_id,
            "config": state.ckpt.config.to_json_dict(),
            "parameter_count": state.model.parameter_count(),
            "epoch": state.ckpt.epoch,
        }

    @app.post("/forecast")
    def forecast(req: ForecastRequest):
        require_model()
        try:
            state.data.patch(req.patch_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown patch {req.patch_id!r}")
        try:
            start = np.datetime64(req.start, "s")
        except ValueError:
            raise HTTPException(status_code=422, detail=f"bad timestamp {req.start!r}")
        try:
            key, ens = state.get_or_compute(
                req.patch_id, str(start), req.horizon, req.scenarios, req.seed
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        state.request_log.append(f"forecast {req.patch_id} {req.start} -> {key}")
        return {
            "ensemble_id": key,
            "patch_id": ens.patch_id,
            "start": np.datetime_as_string(ens.start, unit="s"),
            "horizon": ens.horizon,
            "scenarios": ens.num_members,
            "seed": req.seed,
            "checkpoint_id": ens.checkpoint_id,
            "mean": ens.mean().tolist(),
            "std": ens.std().tolist(),
        }

    @app.get("/ensemble/{ensemble_id}", response_class=PlainTextResponse)
    def ensemble(ensemble_id: str):
        with state._cache_lock:
            ens = state.cache.get(ensemble_id)
        if ens is None:
            raise HTTPException(status_code=404, detail=f"unknown ensemble {ensemble_id!r}")
        return gsf.ensemble_to_text(ens)

    def resolve_ensembles(polygon: QueryPolygon, ensemble_ids, params: ForecastParams | None,
                          horizon: int):
        needed = cells_overlapping(polygon, state.layout())
        ensembles: dict[str, np.ndarray] = {}
        used_ids: dict[str, str] = {}
        if ensemble_ids:
            for eid in ensemble_ids:
                with state._cache_lock:
                    ens = state.cache.get(eid)
                if ens is None:
                    raise HTTPException(status_code=404, detail=f"unknown ensemble {eid!r}")
                ensembles[ens.patch_id] = ens.members
                used_ids[ens.patch_id] = eid
        elif params is not None:
            for patch_id in needed:
                try:
                    key, ens = state.get_or_compute(
                        patch_id, str(np.datetime64(params.start, "s")),
                        max(horizon, params.horizon), params.scenarios, params.seed,
                    )
                except ValueError as exc:
                    raise HTTPException(status_code=422, detail=str(exc))
                ensembles[patch_id] = ens.members
                used_ids[patch_id] = key
        else:
            raise HTTPException(
                status_code=422, detail="query needs ensemble_ids or forecast parameters"
            )
        missing = sorted(set(needed) - set(ensembles))
        if missing:
            raise HTTPException(
                status_code=422, detail=f"no ensembles for patches {missing}"
            )
        return ensembles, used_ids

    def run_query(kind: str, body) -> dict:
        require_model()
        try:
            polygon = QueryPolygon(tuple(tuple(v) for v in body.polygon), kind=kind)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        ensembles, used_ids = resolve_ensembles(
            polygon, body.ensemble_ids, body.forecast, body.horizon
        )
        try:
            if kind == "area":
                result = area_flood_probability(
                    polygon, body.threshold, body.horizon, ensembles, state.layout()
                )
            else:
                result = route_flood_probability(
                    polygon, body.horizon, ensembles, state.layout()
                )
        except (KeyError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        payload = result.to_json_dict()
        payload["ensemble_ids"] = used_ids
        return payload

    @app.post("/query/area")
    def query_area(body: AreaQueryRequest):
        return run_query("area", body)

    @app.post("/query/route")
    def query_route(body: RouteQueryRequest):
        return run_query("route", body)

    return app
