"""FastAPI wrapper around the core toolkit."""

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import DataError, InfeasibleError, ValidationError
from . import handlers, schemas

app = FastAPI(
    title="drtarget",
    version=__version__,
    description=(
        "Demand-response targeting: synthetic populations, temperature-response "
        "fitting, and reliability-maximizing portfolio selection."
    ),
)


@app.exception_handler(ValidationError)
async def _validation_error(_: Request, exc: ValidationError):
    return JSONResponse(status_code=422, content={"detail": str(exc)})


@app.exception_handler(DataError)
async def _data_error(_: Request, exc: DataError):
    return JSONResponse(status_code=400, content={"detail": str(exc)})


@app.exception_handler(InfeasibleError)
async def _infeasible_error(_: Request, exc: InfeasibleError):
    return JSONResponse(status_code=409, content={"detail": str(exc)})


@app.get("/v1/health", response_model=schemas.HealthResponse)
def health():
    return handlers.handle_health()


@app.post("/v1/synth", response_model=schemas.SynthResponse)
def synth(req: schemas.SynthRequest):
    return handlers.handle_synth(req)


@app.post("/v1/fit", response_model=schemas.FitResponse)
def fit(req: schemas.FitRequest):
    return handlers.handle_fit(req)


@app.post("/v1/select", response_model=schemas.SelectResponse)
def select(req: schemas.SelectRequest):
    return handlers.handle_select(req)


@app.post("/v1/tradeoff", response_model=schemas.TradeoffResponse)
def tradeoff_endpoint(req: schemas.TradeoffRequest):
    return handlers.handle_tradeoff(req)
