"""HTTP facade over the solver library.

:func:`create_app` builds a FastAPI application exposing the same four
operations as the command line: solve one query (``/check``), build a
model from a generator family (``/generate``), run a benchmark suite
(``/bench``) and filter its results for hard instances (``/hardness``).
Model documents and suite files travel in request bodies as plain text;
exact values travel as strings (``"1/3"``) so nothing is rounded at the
transport layer.

The command line talks to this app in process by default, so every
feature works without a running server; ``mdpmc serve`` exposes the
same app over a socket.  Suite and hardness requests resolve model
paths on the server's filesystem, relative to ``base_dir``.
"""

from __future__ import annotations

import time
from typing import Dict, List, Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .bench import (
    check_model,
    format_value,
    hardness_report,
    parse_algorithm_spec,
    parse_objective_spec,
    parse_suite,
    run_suite,
    write_csv,
)
from .formats import parse_model, write_model
from .gen import generate
from .model import ModelError, TimeoutExceeded


class CheckRequest(BaseModel):
    model: str = Field(description="model document text")
    objective: str = Field(description="reach:{min|max}:<label> or reward:{min|max}")
    algorithm: str = Field(default="pi", description="name or name[key=value,...]")
    timeout: Optional[float] = Field(default=None, gt=0, description="seconds")


class CheckResponse(BaseModel):
    value: str
    solver_status: str
    iterations: int
    lower: Optional[str] = None
    upper: Optional[str] = None
    flags: List[str] = []
    build_ms: float
    solve_ms: float
    num_states: int
    num_core: int


class GenerateRequest(BaseModel):
    family: str
    params: Dict[str, object] = Field(default_factory=dict)


class GenerateResponse(BaseModel):
    model: str
    states: int


class BenchRequest(BaseModel):
    suite: str = Field(description="suite file text")
    timeout: Optional[float] = Field(default=None, gt=0)
    base_dir: str = "."


class BenchResponse(BaseModel):
    csv: str
    rows: int


class HardnessRequest(BaseModel):
    csv: str = Field(description="results CSV text")
    floor_ms: float = 1000.0
    base_dir: str = "."


class HardEntry(BaseModel):
    model: str
    objective: str
    solve_ms: float
    build_ms: float


class HardnessResponse(BaseModel):
    instances: List[HardEntry]


def create_app() -> FastAPI:
    app = FastAPI(title="mdpmc", version=__version__)

    @app.exception_handler(TimeoutExceeded)
    async def on_timeout(request, exc):
        return JSONResponse(
            status_code=408,
            content={"detail": str(exc), "iterations": exc.iterations or 0},
        )

    @app.exception_handler(ModelError)
    async def on_model_error(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/check", response_model=CheckResponse)
    def check(req: CheckRequest) -> CheckResponse:
        mdp = parse_model(req.model)
        objective = parse_objective_spec(req.objective)
        algorithm = parse_algorithm_spec(req.algorithm)
        deadline = time.monotonic() + req.timeout if req.timeout is not None else None
        out = check_model(mdp, objective, algorithm, deadline=deadline)
        return CheckResponse(
            value=format_value(out.value),
            solver_status=out.status,
            iterations=out.iterations,
            lower=None if out.lower is None else format_value(out.lower),
            upper=None if out.upper is None else format_value(out.upper),
            flags=list(out.flags),
            build_ms=out.build_ms,
            solve_ms=out.solve_ms,
            num_states=out.num_states,
            num_core=out.num_core,
        )

    @app.post("/generate", response_model=GenerateResponse)
    def generate_model(req: GenerateRequest) -> GenerateResponse:
        model = generate(req.family, req.params)
        return GenerateResponse(model=write_model(model), states=model.num_states)

    @app.post("/bench", response_model=BenchResponse)
    def bench(req: BenchRequest) -> BenchResponse:
        rows = parse_suite(req.suite)
        records = run_suite(rows, timeout=req.timeout, base_dir=req.base_dir)
        return BenchResponse(csv=write_csv(records), rows=len(records))

    @app.post("/hardness", response_model=HardnessResponse)
    def hardness(req: HardnessRequest) -> HardnessResponse:
        found = hardness_report(req.csv, floor_ms=req.floor_ms, base_dir=req.base_dir)
        return HardnessResponse(
            instances=[
                HardEntry(
                    model=h.model,
                    objective=h.objective,
                    solve_ms=h.solve_ms,
                    build_ms=h.build_ms,
                )
                for h in found
            ]
        )

    return app


__all__ = [
    "BenchRequest",
    "BenchResponse",
    "CheckRequest",
    "CheckResponse",
    "GenerateRequest",
    "GenerateResponse",
    "HardEntry",
    "HardnessRequest",
    "HardnessResponse",
    "create_app",
]
