"""HTTP scoring service: model listing, scoring, and what-if endpoints.

Endpoints (JSON in/out):

* ``GET  /v1/models`` - available bundles with client-facing form descriptors
* ``POST /v1/score``  - ``{"model": id, "features": {...}, "horizon_years": 10,
  "lenient": false}`` -> risk, per-feature contributions, version, flags
* ``POST /v1/whatif`` - score adds ``"overrides": {...}`` -> base, modified, delta

Bundles are immutable after load; scoring is pure, so concurrent identical
requests return identical results.  Errors use a ``{code, message, details}``
body.  Requests are logged with latency; log level comes from the
``SURVWRIGHT_LOG`` environment variable.
"""

from __future__ import annotations

import logging
import os
import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .bundle import BundleError, MissingFeaturesError, ModelBundle, feature_descriptors

logger = logging.getLogger(__name__)


def _error(status: int, code: str, message: str, details=None) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"code": code, "message": message,
                                 "details": details or {}})


def bundle_id(bundle: ModelBundle) -> str:
    return f"{bundle.model_kind}-{bundle.variant}-{bundle.sex_scope}"


def create_app(bundles: dict[str, ModelBundle] | list[ModelBundle]) -> FastAPI:
    if isinstance(bundles, list):
        bundles = {bundle_id(b): b for b in bundles}
    if not bundles:
        raise BundleError("at least one bundle is required")

    app = FastAPI(title="survwright scoring service")

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        started = time.perf_counter()
        response = await call_next(request)
        logger.info("%s %s -> %d (%.1f ms)", request.method, request.url.path,
                    response.status_code, 1000 * (time.perf_counter() - started))
        return response

    @app.get("/v1/models")
    def list_models():
        return {
            "models": [
                {
                    "id": mid,
                    "model_kind": b.model_kind,
                    "variant": b.variant,
                    "sex_scope": b.sex_scope,
                    "version": b.version,
                    "created_at": b.created_at,
                    "features": feature_descriptors(b),
                }
                for mid, b in bundles.items()
            ]
        }

    async def _read_body(request: Request):
        try:
            return await request.json(), None
        except Exception as exc:  # malformed JSON
            return None, _error(400, "bad_json", f"malformed JSON body: {exc}")

    def _resolve(body: dict):
        mid = body.get("model")
        if mid is None and len(bundles) == 1:
            mid = next(iter(bundles))
        if mid not in bundles:
            return None, _error(404, "unknown_model",
                                f"unknown model {mid!r}",
                                {"available": sorted(bundles)})
        return bundles[mid], None

    @app.post("/v1/score")
    async def score(request: Request):
        body, err = await _read_body(request)
        if err:
            return err
        bundle, err = _resolve(body)
        if err:
            return err
        try:
            result = bundle.score(
                body.get("features", {}),
                horizon=float(body.get("horizon_years", 10.0)),
                lenient=bool(body.get("lenient", False)),
            )
        except MissingFeaturesError as exc:
            return _error(422, "missing_features", str(exc), {"names": exc.names})
        except (BundleError, ValueError) as exc:
            return _error(422, "bad_request", str(exc))
        return result

    @app.post("/v1/whatif")
    async def whatif(request: Request):
        body, err = await _read_body(request)
        if err:
            return err
        bundle, err = _resolve(body)
        if err:
            return err
        try:
            result = bundle.whatif(
                body.get("features", {}),
                body.get("overrides", {}),
                horizon=float(body.get("horizon_years", 10.0)),
                lenient=bool(body.get("lenient", False)),
            )
        except MissingFeaturesError as exc:
            return _error(422, "missing_features", str(exc), {"names": exc.names})
        except (BundleError, ValueError) as exc:
            return _error(422, "bad_request", str(exc))
        return result

    return app


def configure_logging() -> None:
    level = os.environ.get("SURVWRIGHT_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")


def serve(bundles, bind: str = "127.0.0.1:8099", static_dir=None) -> None:
    """Run the service with uvicorn; blocks until interrupted."""
    import uvicorn

    configure_logging()
    app = create_app(bundles)
    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    host, _, port = bind.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8099))
