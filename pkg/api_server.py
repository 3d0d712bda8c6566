"""
FastAPI server for lmflow
Runs the optimization methods and the invariant suite over HTTP, with
Server-Sent Events streaming of individual iterations
"""

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse, Response
from pydantic import BaseModel, Field
from typing import List, Dict, Any, Optional
import json
import math

import numpy as np

import config
from errors import ConfigurationError, LMFlowError
from harness import (
    CertificationBundle,
    Experiment,
    ExperimentSpec,
    Problem,
    default_spec,
    prepare_experiment,
    verify_all,
)
from objective import instance_from_dict
from optimizer import Method, RunConfig, StepRecord, iterate, optimize

app = FastAPI(title="lmflow API", version="1.0.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=config.CORS_ORIGINS,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# Request/Response Models
class SolveRequest(BaseModel):
    problem: Problem = "quadratic"
    problem_params: Dict[str, float] = Field(default_factory=dict)
    seed: int = config.DEFAULT_SEED
    run: RunConfig
    instance: Optional[Dict[str, Any]] = None  # JSON instance document, replaces generation
    include_records: bool = False


class SolveResult(BaseModel):
    label: str
    status: str
    iterations: int
    avg_step: Optional[float] = None
    avg_backtracks: Optional[float] = None
    f_star: float
    final_f: float
    final_f_gap: float
    final_grad_norm: float
    dissipation_violations: int
    records: Optional[List[StepRecord]] = None


class VerifyRequest(BaseModel):
    problem: Problem = "nonconvex_pl"
    problem_params: Dict[str, float] = Field(default_factory=dict)
    seed: int = config.DEFAULT_SEED
    methods: Optional[List[Method]] = None  # restrict the default grid
    eps: float = Field(default=config.EPS, gt=0)
    max_iter: int = Field(default=config.MAX_ITER, gt=0)
    lipschitz_scale: float = Field(default=1.0, gt=0)


def _finite(value: float) -> Optional[float]:
    """JSON has no nan/inf"""
    return value if value is not None and math.isfinite(value) else None


def _experiment(request: SolveRequest) -> Experiment:
    spec = ExperimentSpec(
        problem=request.problem,
        problem_params=request.problem_params,
        methods=[request.run],
        seed=request.seed,
    )
    try:
        instance = instance_from_dict(request.instance) if request.instance is not None else None
        return prepare_experiment(spec, instance=instance)
    except (ConfigurationError, KeyError) as e:
        raise HTTPException(status_code=400, detail=f"Invalid problem: {e}")


def run_solve_streaming(experiment: Experiment, run: RunConfig):
    """
    Yields one SSE `step` event per iteration, then a `summary` event.
    Errors during the run are sent as an `error` event.
    """
    f, f_star = experiment.f, experiment.f_star

    yield f"data: {json.dumps({'type': 'status', 'message': f'Running {run.label} on {experiment.spec.problem}', 'f_star': f_star})}\n\n"

    last: Optional[StepRecord] = None
    iterations = 0
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            for record, _ in iterate(f, experiment.x0, run):
                last = record
                iterations = record.k
                event = {"type": "step", **{k: _finite(v) if isinstance(v, float) else v for k, v in record.model_dump().items()}}
                yield f"data: {json.dumps(event)}\n\n"

        summary = {
            "type": "summary",
            "label": run.label,
            "iterations": iterations,
            "final_f": _finite(last.f),
            "final_f_gap": _finite(last.f - f_star),
            "final_grad_norm": _finite(last.grad_norm),
            "converged": last.grad_norm < run.eps,
        }
        yield f"data: {json.dumps(summary)}\n\n"

    except LMFlowError as e:
        yield f"data: {json.dumps({'type': 'error', 'message': f'{type(e).__name__}: {e}'})}\n\n"


@app.get("/")
async def root():
    """Health check endpoint"""
    return {
        "status": "online",
        "service": "lmflow API",
        "version": "1.0.0",
        "methods": [m.value for m in Method],
    }


@app.post("/solve", response_model=SolveResult)
def solve(request: SolveRequest):
    """
    Run one method to completion and return its summary
    (and every StepRecord when include_records is set)
    """
    experiment = _experiment(request)
    run = request.run

    try:
        with np.errstate(over="ignore", invalid="ignore"):
            trajectory = optimize(experiment.f, experiment.x0, run)
    except LMFlowError as e:
        raise HTTPException(status_code=422, detail=f"{type(e).__name__}: {e}")

    last = trajectory.records[-1]
    result = SolveResult(
        label=run.label,
        status=trajectory.status,
        iterations=trajectory.iterations,
        avg_step=trajectory.avg_step,
        avg_backtracks=trajectory.avg_backtracks,
        f_star=experiment.f_star,
        final_f=last.f,
        final_f_gap=last.f - experiment.f_star,
        final_grad_norm=last.grad_norm,
        dissipation_violations=trajectory.dissipation_violations,
        records=trajectory.records if request.include_records else None,
    )
    # nan and inf serialize as null
    return Response(content=result.model_dump_json(), media_type="application/json")


@app.post("/solve/stream")
def solve_stream(request: SolveRequest):
    """
    Stream one method's iterations as Server-Sent Events
    """
    experiment = _experiment(request)
    return StreamingResponse(
        run_solve_streaming(experiment, request.run),
        media_type="text/event-stream",
    )


@app.post("/verify", response_model=CertificationBundle)
def verify(request: VerifyRequest):
    """
    Run the invariant suite over the default method grid for one problem
    """
    try:
        spec = default_spec(
            request.problem,
            seed=request.seed,
            eps=request.eps,
            max_iter=request.max_iter,
            problem_params=request.problem_params,
            lipschitz_scale=request.lipschitz_scale,
        )
    except ConfigurationError as e:
        raise HTTPException(status_code=400, detail=str(e))

    if request.methods:
        spec.methods = [m for m in spec.methods if m.method in request.methods]

    print(f"\n{'='*80}")
    print(f"VERIFY REQUEST: {spec.problem} (seed {spec.seed}, {len(spec.methods)} methods)")
    print(f"{'='*80}\n")

    bundle = verify_all(spec, verbose=False)
    return Response(content=bundle.model_dump_json(), media_type="application/json")


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=config.PORT)
