"""HTTP service exposing the decoding pipeline.

Thin handlers over the experiment layer: every endpoint takes a pydantic
request, does filesystem work on the service host, and returns a JSON
response. Domain errors map to structured 4xx responses. The CLI calls
the same handler functions in-process when no server is configured, so
both transports run identical code.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__, experiment, ingest, io
from .errors import InvalidInput, SpdEmgError
from . import schemas as s

app = FastAPI(title="spdemg", version=__version__)


@app.exception_handler(SpdEmgError)
def _domain_error_handler(_: Request, exc: SpdEmgError) -> JSONResponse:
    return JSONResponse(
        status_code=422,
        content={"error": type(exc).__name__, "message": str(exc)},
    )


@app.get("/health", response_model=s.HealthResponse)
def health() -> s.HealthResponse:
    return s.HealthResponse(status="ok", version=__version__)


@app.post("/v1/ingest", response_model=s.IngestResponse)
def ingest_data(req: s.IngestRequest) -> s.IngestResponse:
    if req.demo:
        result = experiment.write_demo_bundle(req.output_dir, seed=req.seed)
    else:
        if req.source is None:
            raise InvalidInput("ingest needs either a source directory or demo=true")
        result = ingest.convert_source_dir(req.source, req.output_dir)
    return s.IngestResponse(**result)


@app.post("/v1/validate", response_model=s.ValidateResponse)
def validate_data(req: s.ValidateRequest) -> s.ValidateResponse:
    detail: dict = {}
    if req.recording is not None:
        rec = io.load_recording(io.resolve_path(req.recording))
        detail["recording"] = {
            "channels": rec.channels,
            "n_samples": rec.n_samples,
            "sample_rate": rec.sample_rate,
        }
    if req.manifest is not None:
        manifest = io.load_manifest(io.resolve_path(req.manifest))
        rec = io.manifest_recording(io.resolve_path(req.manifest), manifest)
        for t in manifest.trials:
            if t.end_sample > rec.n_samples:
                raise InvalidInput(f"trial {t.label!r} extends past the recording")
        detail["manifest"] = {
            "session_id": manifest.session_id,
            "n_trials": len(manifest.trials),
            "n_classes": manifest.n_classes,
        }
    if not detail:
        raise InvalidInput("nothing to validate; pass a recording and/or manifest")
    return s.ValidateResponse(ok=True, detail=detail)


def _resolved_manifests(paths):
    return [io.resolve_path(p) for p in paths]


@app.post("/v1/run", response_model=s.RunResponse)
def run(req: s.RunRequest) -> s.RunResponse:
    config = req.config.to_config(seed_override=req.seed)
    report = experiment.run_experiment(
        config, _resolved_manifests(req.manifests), checkpoint_out=req.checkpoint_out
    )
    if req.output is not None:
        io.write_metrics(req.output, report)
    return s.RunResponse(
        metrics=io.to_jsonable(report), output=req.output, checkpoint=req.checkpoint_out
    )


@app.post("/v1/train", response_model=s.RunResponse)
def train(req: s.TrainRequest) -> s.RunResponse:
    config = req.config.to_config(seed_override=req.seed)
    if config.model not in ("spdnet", "gru"):
        raise InvalidInput(f"model kind {config.model!r} is not trainable")
    report = experiment.run_experiment(
        config, _resolved_manifests(req.manifests), checkpoint_out=req.checkpoint_out
    )
    if req.output is not None:
        io.write_metrics(req.output, report)
    return s.RunResponse(
        metrics=io.to_jsonable(report), output=req.output, checkpoint=req.checkpoint_out
    )


@app.post("/v1/eval", response_model=s.RunResponse)
def eval_checkpoint(req: s.EvalRequest) -> s.RunResponse:
    config = req.config.to_config()
    report = experiment.evaluate_checkpoint(
        io.resolve_path(req.checkpoint), config, _resolved_manifests(req.manifests)
    )
    if req.output is not None:
        io.write_metrics(req.output, report)
    return s.RunResponse(metrics=io.to_jsonable(report), output=req.output,
                         checkpoint=req.checkpoint)


@app.post("/v1/export-distances", response_model=s.ExportDistancesResponse)
def export_distances(req: s.ExportDistancesRequest) -> s.ExportDistancesResponse:
    config = req.config.to_config()
    result = experiment.export_distances(
        _resolved_manifests(req.manifests), config, req.output
    )
    return s.ExportDistancesResponse(**result)


@app.post("/v1/analyze/diag-ratio", response_model=s.AnalysisResponse)
def analyze_diag_ratio(req: s.DiagRatioRequest) -> s.AnalysisResponse:
    result = experiment.analyze_diag_ratio(
        io.resolve_path(req.checkpoint),
        _resolved_manifests(req.manifests),
        req.config.to_config(),
        csv_out=req.csv_out,
    )
    return s.AnalysisResponse(result=io.to_jsonable(result))


@app.post("/v1/analyze/basis-angle", response_model=s.AnalysisResponse)
def analyze_basis_angle(req: s.BasisAngleRequest) -> s.AnalysisResponse:
    result = experiment.analyze_basis_angle(
        [io.resolve_path(c) for c in req.checkpoints], csv_out=req.csv_out
    )
    return s.AnalysisResponse(result=io.to_jsonable(result))


@app.post("/v1/analyze/importance", response_model=s.AnalysisResponse)
def analyze_importance(req: s.ImportanceRequest) -> s.AnalysisResponse:
    result = experiment.analyze_importance(
        io.resolve_path(req.checkpoint),
        _resolved_manifests(req.manifests),
        req.config.to_config(),
        csv_out=req.csv_out,
        per_trial_column=req.per_trial_column,
    )
    return s.AnalysisResponse(result=io.to_jsonable(result))


@app.post("/v1/analyze/collapse", response_model=s.AnalysisResponse)
def analyze_collapse(req: s.CollapseRequest) -> s.AnalysisResponse:
    result = experiment.analyze_collapse(io.resolve_path(req.metrics))
    return s.AnalysisResponse(result=io.to_jsonable(result))


# The CLI resolves handlers by route path for in-process dispatch.
HANDLERS = {
    "/v1/ingest": (s.IngestRequest, ingest_data),
    "/v1/validate": (s.ValidateRequest, validate_data),
    "/v1/run": (s.RunRequest, run),
    "/v1/train": (s.TrainRequest, train),
    "/v1/eval": (s.EvalRequest, eval_checkpoint),
    "/v1/export-distances": (s.ExportDistancesRequest, export_distances),
    "/v1/analyze/diag-ratio": (s.DiagRatioRequest, analyze_diag_ratio),
    "/v1/analyze/basis-angle": (s.BasisAngleRequest, analyze_basis_angle),
    "/v1/analyze/importance": (s.ImportanceRequest, analyze_importance),
    "/v1/analyze/collapse": (s.CollapseRequest, analyze_collapse),
}
