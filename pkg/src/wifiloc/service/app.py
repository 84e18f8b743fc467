"""HTTP/JSON surface of the localization service."""
from __future__ import annotations

import hmac
import logging
from contextlib import asynccontextmanager
from typing import Any

from fastapi import Body, Depends, FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .config import ServiceConfig
from .core import LocalizationService, ServiceError

logger = logging.getLogger(__name__)


def create_app(config: ServiceConfig | None = None,
               service: LocalizationService | None = None) -> FastAPI:
    """Build the app around ``service`` (created from ``config`` when not
    given).  The service is closed when the app shuts down."""
    if service is None:
        service = LocalizationService(config or ServiceConfig())
    token = service.config.token

    @asynccontextmanager
    async def lifespan(app):
        yield
        service.close()

    app = FastAPI(title="wifiloc", version="1", lifespan=lifespan)
    app.state.service = service

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse({"detail": exc.detail}, status_code=exc.status)

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        errors = [{"loc": list(e.get("loc", ())), "msg": e.get("msg", "")} for e in exc.errors()]
        return JSONResponse({"detail": "malformed request", "errors": errors}, status_code=400)

    def authorize(request: Request):
        if token is None:
            return
        header = request.headers.get("authorization", "")
        scheme, _, given = header.partition(" ")
        if scheme.lower() != "bearer" or not hmac.compare_digest(given.encode(), token.encode()):
            raise ServiceError(401, "missing or invalid bearer token")

    api = [Depends(authorize)]

    @app.get("/healthz")
    def healthz():
        installed = service.installed
        return {"status": "ok", "model_version": installed[0] if installed else None}

    # handlers are plain functions so they run in the worker thread pool

    @app.post("/api/v1/track", dependencies=api)
    def track(body: dict[str, Any] = Body(...)):
        return service.track(body)

    @app.post("/api/v1/learn", dependencies=api)
    def learn(body: dict[str, Any] = Body(...)):
        return service.learn(body)

    @app.post("/api/v1/train", dependencies=api)
    def train(body: dict[str, Any] | None = Body(None)):
        return service.train(body)

    @app.get("/api/v1/history", dependencies=api)
    def history(device_id: str | None = None,
                start: int | None = Query(None, alias="from"),
                end: int | None = Query(None, alias="to"),
                limit: int = 100, offset: int = 0):
        rows, total = service.history(device_id, start, end, limit, offset)
        return JSONResponse(rows, headers={"X-Total-Count": str(total)})

    @app.get("/api/v1/model", dependencies=api)
    def model():
        return service.model_info()

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    host, port = config.address()
    app = create_app(config)
    logger.info("serving on %s:%d, data in %s", host, port, config.data_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
