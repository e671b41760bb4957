"""HTTP service exposing calibration, simulation, ingestion, and exports.

One request is one full computation ("batch" semantics); interactive clients
simply re-submit on input change.  Results are cached by a content hash of
the request body, so identical requests (including seeds) return
byte-identical responses, and the table exports for a job are served from the
same cache entry.  The cache is the only mutable state; restarting the
service loses nothing but cached results.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Optional

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import __version__
from .boundaries import calibrate_all
from .configio import (
    export_design_table,
    export_performance_table,
    parse_parameter_mapping,
)
from .errors import (
    CalibrationError,
    ComputationAborted,
    DatasetError,
    TimeLimitError,
    ValidationError,
)
from .ingest import estimate_population, parse_dataset
from .model import DesignKind, MonteCarloConfig, build_schedule
from .report import render_report
from .simulate import estimate_performance

_DESIGN_TABLE_NAMES = {
    DesignKind.ADAPTIVE: "design_ad",
    DesignKind.STANDARD_COMBINED: "design_sc",
    DesignKind.STANDARD_SUBPOP1: "design_ss",
}


@dataclass(frozen=True)
class ServiceSettings:
    """Deployment knobs, settable via CLI flags or environment."""

    workers: int = 2
    cache_capacity: int = 64
    time_limit_max_s: float = 90.0
    assets_dir: Optional[str] = None


class ResultCache:
    """A small, thread-safe LRU cache of finished jobs."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._lock = threading.Lock()
        self._entries: "OrderedDict[str, dict]" = OrderedDict()

    def get(self, job_id: str) -> Optional[dict]:
        with self._lock:
            entry = self._entries.get(job_id)
            if entry is not None:
                self._entries.move_to_end(job_id)
            return entry

    def put(self, job_id: str, entry: dict) -> None:
        with self._lock:
            self._entries[job_id] = entry
            self._entries.move_to_end(job_id)
            while len(self._entries) > self.capacity:
                self._entries.popitem(last=False)


def _job_id(endpoint: str, body: Mapping) -> str:
    canonical = json.dumps({"endpoint": endpoint, "body": body},
                           sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _jsonable(value):
    """Make numpy scalars/arrays JSON-safe; infinities become 'Inf' strings."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isinf(value):
            return "Inf" if value > 0 else "-Inf"
        if math.isnan(value):
            return None
        return value
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _schedule_payload(sched) -> dict:
    return {
        "subpop1": sched.subpop1,
        "subpop2": sched.subpop2,
        "combined": sched.combined,
        "k_star": sched.k_star,
    }


def _table_payload(table) -> dict:
    return {
        "efficacy_subpop1": table.efficacy_subpop1,
        "efficacy_combined": table.efficacy_combined,
        "futility_subpop1": table.futility_subpop1,
        "futility_subpop2": table.futility_subpop2,
        "futility_combined": table.futility_combined,
        "constants": table.constants,
        "flags": list(table.flags),
        "diagnostics": table.diagnostics,
    }


def _performance_payload(grid) -> dict:
    payload = {"p2t": grid.p2t, "effects": grid.effects, "iterations": grid.iterations,
               "seed": grid.seed, "wall_time_s": grid.wall_time_s, "designs": {}}
    for kind, perf in grid.designs.items():
        payload["designs"][kind.value] = {
            name: getattr(perf, name)
            for name in ("reject_h0c", "reject_h0c_se", "reject_h01", "reject_h01_se",
                         "reject_any", "reject_any_se", "expected_total",
                         "expected_total_se", "expected_subpop1", "expected_subpop2",
                         "expected_duration", "expected_duration_se")
        }
    return payload


def create_app(settings: ServiceSettings = ServiceSettings()) -> FastAPI:
    app = FastAPI(title="enrichplan", version=__version__)
    cache = ResultCache(settings.cache_capacity)
    pool = ThreadPoolExecutor(max_workers=settings.workers)

    @app.exception_handler(ValidationError)
    async def _validation_handler(_request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(DatasetError)
    async def _dataset_handler(_request, exc):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(CalibrationError)
    async def _calibration_handler(_request, exc):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(TimeLimitError)
    async def _timeout_handler(_request, exc):
        return JSONResponse(status_code=408, content={"error": str(exc)})

    @app.exception_handler(ComputationAborted)
    async def _aborted_handler(_request, exc):
        # The client has typically disconnected already; nobody reads this.
        return JSONResponse(status_code=408, content={"error": str(exc)})

    async def _run_cancellable(request: Request, fn):
        """Run ``fn(abort_event)`` on the worker pool, aborting on disconnect."""
        abort = threading.Event()
        loop = asyncio.get_running_loop()
        future = loop.run_in_executor(pool, fn, abort)
        while True:
            done, _ = await asyncio.wait({future}, timeout=0.2)
            if done:
                return future.result()
            if await request.is_disconnected():
                abort.set()

    def _effective_mc(mc: MonteCarloConfig) -> MonteCarloConfig:
        limit = settings.time_limit_max_s
        if mc.time_limit_s is not None:
            limit = min(mc.time_limit_s, settings.time_limit_max_s)
        return replace(mc, time_limit_s=limit)

    def _json_bytes(payload: dict) -> bytes:
        return json.dumps(_jsonable(payload), separators=(",", ":")).encode("utf-8")

    @app.get("/api/v1/health")
    async def health():
        return {"status": "ok", "service": "enrichplan", "version": __version__}

    @app.post("/api/v1/designs")
    async def designs(request: Request):
        body = await request.json()
        if not isinstance(body, dict):
            raise ValidationError("request body must be a JSON object of parameters")
        job = _job_id("designs", body)
        cached = cache.get(job)
        if cached is not None:
            return Response(content=cached["response"], media_type="application/json")
        spec, pop, mc, warnings = parse_parameter_mapping(body)

        def compute(_abort):
            tables = calibrate_all(spec, pop, mc)
            schedules = {kind: build_schedule(spec, pop, kind) for kind in DesignKind}
            return tables, schedules

        tables, schedules = await _run_cancellable(request, compute)
        payload = {
            "job_id": job,
            "calibration_seed": mc.calibration_seed,
            "warnings": warnings,
            "designs": {
                kind.value: {
                    "schedule": _schedule_payload(schedules[kind]),
                    "boundaries": _table_payload(tables[kind]),
                }
                for kind in DesignKind
            },
        }
        exports = {name: export_design_table(tables[kind], schedules[kind]).encode("utf-8")
                   for kind, name in _DESIGN_TABLE_NAMES.items()}
        exports["report"] = render_report(tables, schedules).encode("utf-8")
        response = _json_bytes(payload)
        cache.put(job, {"response": response, "exports": exports})
        return Response(content=response, media_type="application/json")

    @app.post("/api/v1/performance")
    async def performance(request: Request):
        body = await request.json()
        if not isinstance(body, dict):
            raise ValidationError("request body must be a JSON object of parameters")
        job = _job_id("performance", body)
        cached = cache.get(job)
        if cached is not None:
            return Response(content=cached["response"], media_type="application/json")
        params = {k: v for k, v in body.items() if k != "p2t_grid"}
        explicit_grid = body.get("p2t_grid")
        spec, pop, mc, warnings = parse_parameter_mapping(params)
        mc = _effective_mc(mc)

        def compute(abort):
            tables = calibrate_all(spec, pop, mc)
            schedules = {kind: build_schedule(spec, pop, kind) for kind in DesignKind}
            grid = estimate_performance(spec, pop, tables, mc,
                                        p2t_values=explicit_grid,
                                        abort_check=abort.is_set)
            return tables, schedules, grid

        tables, schedules, grid = await _run_cancellable(request, compute)
        payload = {
            "job_id": job,
            "calibration_seed": mc.calibration_seed,
            "warnings": warnings,
            "performance": _performance_payload(grid),
        }
        exports = {"performance": export_performance_table(grid).encode("utf-8"),
                   "report": render_report(tables, schedules, grid).encode("utf-8")}
        response = _json_bytes(payload)
        cache.put(job, {"response": response, "exports": exports})
        return Response(content=response, media_type="application/json")

    @app.post("/api/v1/ingest")
    async def ingest(request: Request):
        raw = await request.body()
        text = raw.decode("utf-8-sig", errors="replace")
        content_type = request.headers.get("content-type", "")
        if "json" in content_type:
            document = json.loads(text)
            if not isinstance(document, dict) or "data" not in document:
                raise ValidationError('JSON ingest body must be {"data": "<csv text>"}')
            text = str(document["data"])
        records = parse_dataset(text)
        estimate = estimate_population(records)
        return {
            "n_records": len(records),
            "pi1": estimate.params.pi1,
            "p1c": estimate.params.p1c,
            "p1t": estimate.params.p1t,
            "p2c": estimate.params.p2c,
            "p2t": estimate.p2t,
            "counts": estimate.counts,
            "warnings": list(estimate.warnings),
        }

    @app.get("/api/v1/export/{job_id}/{table}")
    async def export(job_id: str, table: str):
        entry = cache.get(job_id)
        if entry is None or table not in entry["exports"]:
            return JSONResponse(status_code=404,
                                content={"error": f"unknown job or table: {job_id}/{table}"})
        media = "text/html" if table == "report" else "text/csv"
        return Response(content=entry["exports"][table], media_type=media)

    if settings.assets_dir:
        app.mount("/", StaticFiles(directory=settings.assets_dir, html=True), name="ui")

    return app
