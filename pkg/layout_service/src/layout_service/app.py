"""The HTTP app: POST /detect and GET /healthz.

The service reports 503 from both endpoints until its backend finishes
loading; afterwards /healthz carries the active mode. Request bodies are
PNG page renders, capped at 32 MiB.
"""

from __future__ import annotations

import io
import json
import logging
import os
import threading
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from PIL import Image

from layout_service.detector import StubDetector, TorchScriptDetector

logger = logging.getLogger(__name__)

MAX_BODY_BYTES = 32 * 1024 * 1024

STUB_FIXTURE_ENV = "LAYOUT_STUB_FIXTURE"
MODEL_PATH_ENV = "LAYOUT_MODEL_PATH"
CLASS_MAP_ENV = "LAYOUT_CLASS_MAP"
CLASS_NAMES_ENV = "LAYOUT_CLASS_NAMES"


class ServiceState:
    """Backend holder with an explicit loading phase."""

    def __init__(self, *, stub_fixture: str | None = None, model_path: str | None = None,
                 class_map_path: str | None = None, class_names: list[str] | None = None):
        self.stub_fixture = stub_fixture
        self.model_path = model_path
        self.class_map_path = class_map_path
        self.class_names = class_names or []
        self.detector = None
        self.load_error: str | None = None
        self._lock = threading.Lock()

    @classmethod
    def from_env(cls) -> "ServiceState":
        class_names: list[str] = []
        names_raw = os.environ.get(CLASS_NAMES_ENV, "")
        if names_raw:
            class_names = [n.strip() for n in names_raw.split(",") if n.strip()]
        return cls(
            stub_fixture=os.environ.get(STUB_FIXTURE_ENV) or None,
            model_path=os.environ.get(MODEL_PATH_ENV) or None,
            class_map_path=os.environ.get(CLASS_MAP_ENV) or None,
            class_names=class_names,
        )

    @property
    def ready(self) -> bool:
        return self.detector is not None

    @property
    def mode(self) -> str:
        return self.detector.mode if self.detector else "loading"

    def load(self) -> None:
        with self._lock:
            if self.detector is not None:
                return
            try:
                if self.stub_fixture:
                    self.detector = StubDetector(self.stub_fixture)
                elif self.model_path:
                    class_map = None
                    if self.class_map_path:
                        class_map = json.loads(Path(self.class_map_path).read_text())
                    self.detector = TorchScriptDetector(
                        self.model_path, self.class_names, class_map
                    )
                else:
                    raise RuntimeError(
                        f"no backend configured: set {STUB_FIXTURE_ENV} or {MODEL_PATH_ENV}"
                    )
                self.load_error = None
                logger.info("layout backend ready: %s", self.mode)
            except Exception as exc:
                self.load_error = str(exc)
                logger.error("backend load failed: %s", exc)


def create_app(state: ServiceState | None = None) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.service.load()
        yield

    app = FastAPI(title="layout-service", lifespan=lifespan)
    app.state.service = state if state is not None else ServiceState.from_env()

    @app.get("/healthz")
    def healthz():
        service = app.state.service
        if not service.ready:
            detail = {"status": "loading"}
            if service.load_error:
                detail = {"status": "error", "error": service.load_error}
            return JSONResponse(detail, status_code=503)
        return {"status": "ok", "mode": service.mode}

    @app.post("/detect")
    async def detect(request: Request, dpi: int = Query(default=250, gt=0)):
        service = app.state.service
        body = await request.body()
        if len(body) > MAX_BODY_BYTES:
            return JSONResponse({"error": "too-large"}, status_code=413)
        if not service.ready:
            return JSONResponse({"error": "model-not-loaded"}, status_code=503)
        try:
            image = Image.open(io.BytesIO(body))
            image.load()
            if image.format != "PNG":
                raise ValueError(f"expected PNG, got {image.format}")
        except Exception as exc:
            return JSONResponse(
                {"error": "invalid-image", "detail": str(exc)}, status_code=400
            )
        boxes = service.detector.detect(image, dpi)
        return {"boxes": [box.to_dict() for box in boxes]}

    return app
