"""HTTP service over the harness. Every route maps one-to-one onto a CLI subcommand."""

from __future__ import annotations

import logging

import numpy as np
from fastapi import FastAPI, HTTPException

from ..harness import runner
from ..harness.config import ConfigError, dump_config
from ..harness.presets import PRESETS
from ..random_field import Unsupported
from ..surrogate import ArtifactError
from .schemas import (CompareRequest, CompareResponse, ErrorRow, EstimateRequest, EstimateResponse,
                      OfflineRequest, OfflineResponse, PresetList, ReportRequest, ReportResponse)

log = logging.getLogger(__name__)

app = FastAPI(title="stomsfem", version="0.1.0")


def _resolve(ref):
    try:
        return ref.resolve()
    except (ConfigError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc


def _guard(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ArtifactError as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from exc
    except Unsupported as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except FileNotFoundError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc


@app.get("/health")
def health():
    return {"status": "ok"}


@app.get("/presets", response_model=PresetList)
def presets():
    return PresetList(presets=sorted(PRESETS))


@app.get("/presets/{name}")
def preset(name: str):
    if name not in PRESETS:
        raise HTTPException(status_code=404, detail=f"unknown preset {name!r}")
    return {"name": name, "yaml": dump_config(PRESETS[name]())}


@app.post("/offline", response_model=OfflineResponse)
def offline(req: OfflineRequest):
    cfg = _resolve(req)
    if cfg.method not in runner.SURROGATE_METHODS:
        raise HTTPException(status_code=400, detail=f"method {cfg.method!r} has no offline stage")
    bank, path = _guard(runner.offline, cfg)
    return OfflineResponse(offline_dir=str(path), offline_seconds=bank.offline_seconds,
                           n_patches=len(bank.surrogates), n_distinct=len(bank.unique()),
                           local_dims_histogram=np.bincount(bank.local_dims()).tolist())


@app.post("/estimate", response_model=EstimateResponse)
def estimate(req: EstimateRequest):
    cfg = _resolve(req)
    res = _guard(runner.estimate, cfg, req.kind, req.n_samples, req.build_offline, True, req.calibrate_cost)
    return EstimateResponse(outputs=res.outputs, summary=res.summary, cost=res.ledger.as_dict())


@app.post("/compare", response_model=CompareResponse)
def compare(req: CompareRequest):
    cfg = _resolve(req)
    res = _guard(runner.compare, cfg, req.against, req.n_samples, req.build_offline)
    rows = [ErrorRow(method=m, N=n, error=e) for m, n, e in res.summary.pop("rows")]
    return CompareResponse(outputs=res.outputs, rows=rows, summary=res.summary)


@app.post("/report", response_model=ReportResponse)
def report(req: ReportRequest):
    out = req.output_dir if req.output_dir is not None else _resolve(req.config).output_dir
    return ReportResponse(report=_guard(runner.report, out))
