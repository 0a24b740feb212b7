"""Integration with the promote pipeline, via its CLI and the wire contract.

The stub service is loaded with exactly the boxes the pipeline's geometry
heuristic finds on the fixture page, so a service-backed run must reproduce
the heuristic run's bundle byte for byte (modulo meta.json, which records
the backend). Killing the service exercises the heuristic fallback.
"""

import io
import json
import os
import subprocess
import sys
import threading
import time
from pathlib import Path

import httpx
import pytest
import uvicorn
from PIL import Image
from reportlab.lib.utils import ImageReader
from reportlab.pdfgen import canvas as rl_canvas

from layout_service.app import ServiceState, create_app

REPO_ROOT = Path(__file__).resolve().parents[2]
MOCK_PROMOTE = REPO_ROOT / "tests" / "data" / "mock_promote.json"


def fixture_paper(tmp_path) -> Path:
    """Same shape as the primary suite's end-to-end fixture paper."""
    buf = io.BytesIO()
    c = rl_canvas.Canvas(buf, pagesize=(612, 792))
    c.setFont("Helvetica", 16)
    c.drawString(72, 740, "On the Acceleration of Gadgets")
    c.setFont("Helvetica", 10)
    c.drawString(72, 716, "Ada Lovelace (Analytical Engines Inc.)")
    c.setFont("Helvetica", 12)
    c.drawString(72, 680, "1 Introduction")
    c.setFont("Helvetica", 10)
    c.drawString(72, 655, "Gadgets are everywhere but slow.")
    c.drawString(72, 643, "We accelerate them with a cooling trick.")
    c.drawImage(ImageReader(Image.new("RGB", (60, 40), (200, 30, 30))),
                72, 420, width=220, height=160)
    c.drawString(72, 400, "Figure 1: throughput before and after the trick")
    c.setFont("Helvetica", 12)
    c.drawString(72, 360, "2 Results")
    c.setFont("Helvetica", 10)
    c.drawString(72, 335, "We observe a 2.1x speedup on the gadget suite.")
    c.save()
    path = tmp_path / "paper.pdf"
    path.write_bytes(buf.getvalue())
    return path


def heuristic_boxes_fixture(pdf_path: Path, out_path: Path) -> None:
    """Stub fixture mirroring what the pipeline's heuristic detects (test scaffolding)."""
    from autopr.ingest import extract_text
    from autopr.visual import heuristic_detect, render_pages

    raw = extract_text(pdf_path)
    page = render_pages(pdf_path.read_bytes(), dpi=250)[0]
    boxes = heuristic_detect(page, raw.pages[0])
    out_path.write_text(
        json.dumps(
            {
                "boxes": [
                    {"cls": b.cls, "x0": b.x0, "y0": b.y0, "x1": b.x1, "y1": b.y1,
                     "score": b.confidence}
                    for b in boxes
                ]
            }
        )
    )


class RunningService:
    def __init__(self, state: ServiceState):
        config = uvicorn.Config(create_app(state), host="127.0.0.1", port=0,
                                log_level="error")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self) -> str:
        self.thread.start()
        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            if self.server.started and self.server.servers:
                sockets = self.server.servers[0].sockets
                if sockets:
                    port = sockets[0].getsockname()[1]
                    return f"http://127.0.0.1:{port}"
            time.sleep(0.02)
        raise RuntimeError("service did not start")

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=10)


def run_promote(pdf: Path, out: Path, *extra: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "autopr.cli", "promote", str(pdf),
         "--platform", "twitter", "--out", str(out),
         "--mock-llm", str(MOCK_PROMOTE), "--seed", "11", *extra],
        capture_output=True,
        text=True,
        cwd=str(REPO_ROOT),
    )


def bundle_snapshot(root: Path) -> dict:
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != "meta.json"
    }


def test_stub_service_reproduces_heuristic_bundle(tmp_path):
    pdf = fixture_paper(tmp_path)

    reference_out = tmp_path / "reference"
    result = run_promote(pdf, reference_out, "--layout-backend", "heuristic")
    assert result.returncode == 0, result.stderr
    status = json.loads(result.stdout.strip().splitlines()[-1])
    assert status["valid"] is True and status["assets"] == 1

    fixture_path = tmp_path / "stub_boxes.json"
    heuristic_boxes_fixture(pdf, fixture_path)

    with RunningService(ServiceState(stub_fixture=str(fixture_path))) as base_url:
        health = httpx.get(f"{base_url}/healthz", timeout=5)
        assert health.status_code == 200
        assert health.json() == {"status": "ok", "mode": "stub"}

        service_out = tmp_path / "via_service"
        result = run_promote(pdf, service_out, "--layout-backend", "service",
                             "--service-url", base_url)
        assert result.returncode == 0, result.stderr
        assert "falling back" not in result.stderr

    assert bundle_snapshot(service_out) == bundle_snapshot(reference_out)
    meta = json.loads((service_out / "meta.json").read_text())
    assert meta["layout_backend"] == "service"


def test_dead_service_falls_back_to_heuristic(tmp_path):
    pdf = fixture_paper(tmp_path)

    reference_out = tmp_path / "reference"
    assert run_promote(pdf, reference_out, "--layout-backend", "heuristic").returncode == 0

    # Start, then stop the service: the port is now dead mid-run.
    fixture_path = tmp_path / "stub_boxes.json"
    heuristic_boxes_fixture(pdf, fixture_path)
    with RunningService(ServiceState(stub_fixture=str(fixture_path))) as base_url:
        pass  # service has exited; base_url now refuses connections

    fallback_out = tmp_path / "fallback"
    result = run_promote(pdf, fallback_out, "--layout-backend", "service",
                         "--service-url", base_url)
    assert result.returncode == 0, result.stderr
    assert "falling back to heuristic" in result.stderr

    snapshot = bundle_snapshot(fallback_out)
    assert snapshot == bundle_snapshot(reference_out)
    # The bundle still passes validation (criterion-6 conditions).
    status = json.loads(result.stdout.strip().splitlines()[-1])
    assert status["valid"] is True


def synthetic_drawn_page(tmp_path) -> tuple[bytes, tuple[int, int, int, int]]:
    """A page image with one drawn figure; returns (png bytes, truth rect)."""
    width, height = 1200, 1600
    image = Image.new("RGB", (width, height), "white")
    figure = Image.new("RGB", (500, 380), (40, 90, 200))
    image.paste(figure, (150, 200))
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue(), (150, 200, 650, 580)


def iou(a, b) -> float:
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0, ix1 - ix0) * max(0, iy1 - iy0)
    union = ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)
    return inter / union if union else 0.0


@pytest.mark.skipif(
    not os.environ.get("LAYOUT_MODEL_PATH"),
    reason="model-mode smoke needs detector weights (set LAYOUT_MODEL_PATH)",
)
def test_model_mode_smoke(tmp_path):
    png, truth = synthetic_drawn_page(tmp_path)
    state = ServiceState(
        model_path=os.environ["LAYOUT_MODEL_PATH"],
        class_map_path=os.environ.get("LAYOUT_CLASS_MAP") or None,
        class_names=[
            n.strip()
            for n in os.environ.get("LAYOUT_CLASS_NAMES", "").split(",")
            if n.strip()
        ],
    )
    with RunningService(state) as base_url:
        health = httpx.get(f"{base_url}/healthz", timeout=30)
        assert health.json()["mode"] == "model"
        response = httpx.post(f"{base_url}/detect", params={"dpi": 250}, content=png,
                              timeout=120)
    assert response.status_code == 200
    figures = [b for b in response.json()["boxes"] if b["cls"] == "figure"]
    assert any(iou((b["x0"], b["y0"], b["x1"], b["y1"]), truth) >= 0.5 for b in figures)
