"""Shared fixtures: synthetic PDF builders with ground-truth records, mock gateways.

The PDF builders use reportlab, so the generator side of every geometry
oracle is independent of the package's own reader.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import pytest
from PIL import Image
from reportlab.lib.pagesizes import letter
from reportlab.lib.utils import ImageReader
from reportlab.pdfbase.pdfmetrics import stringWidth
from reportlab.pdfgen import canvas as rl_canvas

from autopr.gateway import GatewayConfig, LLMGateway, MockTransport


@dataclass
class TextRecord:
    """Ground truth for one drawn string, PDF points, bottom-left origin."""

    page: int
    x: float
    y: float  # baseline
    text: str
    font_size: float
    width: float  # exact metric width from reportlab


@dataclass
class ImageRecord:
    page: int
    x: float
    y: float
    width: float
    height: float


@dataclass
class PdfFixture:
    data: bytes
    page_size: tuple[float, float]
    texts: list[TextRecord] = field(default_factory=list)
    images: list[ImageRecord] = field(default_factory=list)


class PdfBuilder:
    """Canvas wrapper that records everything it draws."""

    def __init__(self, page_size=letter, font="Helvetica"):
        self.buffer = io.BytesIO()
        self.canvas = rl_canvas.Canvas(self.buffer, pagesize=page_size)
        self.page_size = page_size
        self.font = font
        self.page = 0
        self.texts: list[TextRecord] = []
        self.images: list[ImageRecord] = []

    def text(self, x: float, y: float, content: str, size: float = 10) -> "PdfBuilder":
        self.canvas.setFont(self.font, size)
        self.canvas.drawString(x, y, content)
        self.texts.append(
            TextRecord(
                page=self.page,
                x=x,
                y=y,
                text=content,
                font_size=size,
                width=stringWidth(content, self.font, size),
            )
        )
        return self

    def paragraph(self, x: float, top_y: float, lines: list[str], size: float = 10,
                  leading: float | None = None) -> "PdfBuilder":
        """Consecutive same-size lines; the reader should merge them into one block."""
        leading = leading if leading is not None else 1.2 * size
        for i, line in enumerate(lines):
            self.text(x, top_y - i * leading, line, size)
        return self

    def image(self, x: float, y: float, width: float, height: float,
              color=(200, 40, 40), px=(60, 40)) -> "PdfBuilder":
        img = Image.new("RGB", px, color)
        self.canvas.drawImage(ImageReader(img), x, y, width=width, height=height)
        self.images.append(ImageRecord(page=self.page, x=x, y=y, width=width, height=height))
        return self

    def new_page(self) -> "PdfBuilder":
        self.canvas.showPage()
        self.page += 1
        return self

    def build(self) -> PdfFixture:
        self.canvas.save()
        return PdfFixture(
            data=self.buffer.getvalue(),
            page_size=self.page_size,
            texts=self.texts,
            images=self.images,
        )


@pytest.fixture
def pdf_builder():
    return PdfBuilder


def make_mock_gateway(script: dict | None = None, transport: MockTransport | None = None,
                      **kwargs) -> tuple[LLMGateway, MockTransport]:
    """Gateway over a scripted transport; backoff sleeps are no-ops."""
    transport = transport if transport is not None else MockTransport(script or {})
    gateway = LLMGateway(
        GatewayConfig.mock_all_roles(),
        transport,
        sleeper=lambda s: None,
        **kwargs,
    )
    return gateway, transport


@pytest.fixture
def mock_gateway():
    return make_mock_gateway


# Per-criterion pass/fail lines collected by the acceptance suite and echoed
# after the run, outside pytest's capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def rect_iou(a, b) -> float:
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0.0, ix1 - ix0) * max(0.0, iy1 - iy0)
    if inter == 0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)
