"""HTTP surface over the deployment manager."""

from __future__ import annotations

from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..errors import (
    AllocationError,
    BenchError,
    DeployError,
    EphemstoreError,
    InventoryError,
    PlanError,
    PortCollisionError,
    StageError,
    StoreError,
    VerificationError,
)
from . import schemas
from .manager import BusyDeploymentError, DeploymentManager, UnknownDeploymentError

_STATUS_BY_ERROR = [
    # most specific first; starlette picks the closest registered ancestor
    (UnknownDeploymentError, 404),
    (BusyDeploymentError, 409),
    (PortCollisionError, 409),
    (VerificationError, 400),
    (InventoryError, 422),
    (AllocationError, 422),
    (PlanError, 422),
    (BenchError, 422),
    (DeployError, 400),
    (StageError, 400),
    (StoreError, 400),
    (EphemstoreError, 400),
]


def create_app(manager: DeploymentManager | None = None) -> FastAPI:
    mgr = manager if manager is not None else DeploymentManager()

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        mgr.teardown_all()

    app = FastAPI(title="ephemstore", lifespan=lifespan)
    app.state.manager = mgr

    def _handler(status: int):
        async def handle(_: Request, exc: Exception) -> JSONResponse:
            body = schemas.ErrorBody(error=str(exc), kind=type(exc).__name__)
            return JSONResponse(status_code=status, content=body.model_dump())

        return handle

    for exc_type, status in _STATUS_BY_ERROR:
        app.add_exception_handler(exc_type, _handler(status))

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "deployments": len(mgr.list_deployments())}

    @app.post("/plans")
    def make_plan(req: schemas.PlanRequest) -> schemas.PlanResponse:
        return mgr.plan(req)

    @app.post("/deployments")
    def create_deployment(req: schemas.DeployRequest) -> schemas.DeploymentRecord:
        return mgr.create_deployment(req)

    @app.get("/deployments")
    def list_deployments() -> list[schemas.DeploymentRecord]:
        return mgr.list_deployments()

    @app.get("/deployments/{deployment_id}")
    def get_deployment(deployment_id: str) -> schemas.DeploymentRecord:
        return mgr.get_record(deployment_id)

    @app.post("/deployments/{deployment_id}/attach")
    def attach(deployment_id: str, req: schemas.AttachRequest) -> schemas.AttachResponse:
        return mgr.attach(deployment_id, req)

    @app.post("/deployments/{deployment_id}/stage")
    def stage(deployment_id: str, req: schemas.StageRequest) -> schemas.StageResponse:
        return mgr.stage(deployment_id, req)

    @app.post("/deployments/{deployment_id}/bench")
    def bench(deployment_id: str, req: schemas.BenchRequest) -> schemas.BenchResponse:
        return mgr.bench(req, deployment_id)

    @app.post("/bench/baseline")
    def bench_baseline(req: schemas.BenchRequest) -> schemas.BenchResponse:
        return mgr.bench(req, None)

    @app.post("/deployments/{deployment_id}/teardown")
    def teardown(deployment_id: str) -> schemas.TeardownResponse:
        return mgr.teardown_deployment(deployment_id)

    return app
