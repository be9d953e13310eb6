from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
import logging

from config import configure_logging, settings
from dispersion import ClassificationError
from experiments import jsonable, run_dispersion_audit, run_growth_fit, run_solve, run_theorem
from nonlinear import BlowupDetected, NoConvergence
import schemas

logger = logging.getLogger(__name__)

configure_logging()
settings.validate()

# Create FastAPI app
app = FastAPI(title="Zakharov Instability Lab")


def envelope(report: schemas.Report) -> dict:
    """Wrap a report; PARTIAL when any row did not verify."""
    statuses = {row.get("status", schemas.RowStatus.OK.value) for row in report.rows}
    status = "PARTIAL" if statuses - {schemas.RowStatus.OK.value} else "OK"
    return {"status": status, "data": jsonable(report.model_dump(mode="json"))}


# Global Custom Error Handlers
@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    """Convert 422 to 400."""
    return JSONResponse(
        status_code=400,
        content={"status": "ERROR", "error": "VALIDATION_ERROR", "message": f"Invalid run configuration: {str(exc)}"},
    )


@app.exception_handler(ClassificationError)
async def classification_exception_handler(request: Request, exc: ClassificationError):
    return JSONResponse(
        status_code=400,
        content={"status": "ERROR", "error": "NO_UNSTABLE_MODE", "message": str(exc)},
    )


@app.exception_handler(NoConvergence)
async def convergence_exception_handler(request: Request, exc: NoConvergence):
    return JSONResponse(
        status_code=422,
        content={"status": "ERROR", "error": "NO_CONVERGENCE", "message": str(exc), "log": exc.log},
    )


@app.exception_handler(BlowupDetected)
async def blowup_exception_handler(request: Request, exc: BlowupDetected):
    return JSONResponse(
        status_code=422,
        content={"status": "ERROR", "error": "BLOWUP_DETECTED", "message": str(exc), "time": exc.time},
    )


@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    """Catch all unhandled exceptions."""
    logger.exception(f"Unhandled error on {request.url.path}: {exc}")
    return JSONResponse(
        status_code=500,
        content={"status": "ERROR", "error": "INTERNAL_SERVER_ERROR", "message": "An unexpected error occurred."},
    )


# ============================================
# ENDPOINTS
# ============================================

@app.get("/")
async def health():
    """Health check endpoint."""
    return {"status": "ok", "service": "zakharov-instability-lab", "schema_version": settings.SCHEMA_VERSION}


@app.post("/dispersion")
async def dispersion(cfg: schemas.ExperimentConfig):
    """Eigen-structure audit of the p = 1 block across k_list."""
    logger.info(f"[ENDPOINT] POST /dispersion k_list={cfg.k_list}")
    report = await run_in_threadpool(run_dispersion_audit, cfg)
    return envelope(report)


@app.post("/growth", response_model=schemas.ApiResponse[schemas.GrowthFit])
async def growth(request: schemas.GrowthRequest):
    """Growth-rate fit against σ at a single k."""
    logger.info(f"[ENDPOINT] POST /growth k={request.k} direct={request.direct}")
    fit = await run_in_threadpool(run_growth_fit, request.config, request.k, request.direct)
    return {"status": "OK", "data": fit}


@app.post("/theorem")
async def theorem(cfg: schemas.ExperimentConfig):
    """Desk-scale instability family; rows that fail the cross-check come back PARTIAL."""
    logger.info(f"[ENDPOINT] POST /theorem k_list={cfg.k_list}")
    report, _ = await run_in_threadpool(run_theorem, cfg)
    return envelope(report)


@app.post("/solve")
async def solve(request: schemas.SolveRequest):
    """Picard solve with the per-sample norm trace."""
    logger.info(f"[ENDPOINT] POST /solve k={request.config.k}")
    report, tables = await run_in_threadpool(run_solve, request.config, request.T, request.steps)
    data = report.model_dump(mode="json")
    data["trace"] = tables["norms"].to_dict(orient="records")
    return {"status": "OK", "data": jsonable(data)}
