"""Page rendering, layout detection, asset cropping, and figure-caption pairing.

Layout boxes come from either the HTTP layout service (wire contract below)
or a geometry heuristic that needs no model: caption boxes from text blocks
matching a caption pattern, figure boxes from embedded image placements,
table boxes from clusters of column-aligned rows. Pairing associates each
visual with at most one caption by vertical proximity, greedily over all
candidates in ascending gap order.

Service wire contract (consumed): ``POST {base}/detect?dpi=N`` with a PNG
body returns ``{"boxes":[{"cls","x0","y0","x1","y1","score"}]}`` in pixel
coordinates, top-left origin; ``GET {base}/healthz`` reports readiness.
"""

from __future__ import annotations

import io
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import httpx
from PIL import Image

from autopr.errors import (
    IoFailureError,
    ServiceSchemaViolationError,
    ServiceUnreachableError,
)
from autopr.ingest import PageBlocks
from autopr.pdf.raster import page_pixel_size, rasterize_page
from autopr.pdf.reader import parse_pdf

logger = logging.getLogger(__name__)

__all__ = [
    "PageImage",
    "LayoutBox",
    "VisualUnit",
    "render_pages",
    "detect_layout",
    "heuristic_detect",
    "crop_components",
    "pair_components",
    "canonical_order",
    "CAPTION_PATTERN",
    "VERTICAL_GAP_RATIO",
    "MIN_HORIZONTAL_OVERLAP",
]

# Pairing thresholds. The vertical gap limit is relative to page height so it
# survives dpi changes; the horizontal overlap floor keeps captions from an
# adjacent column out.
VERTICAL_GAP_RATIO = 0.08
MIN_HORIZONTAL_OVERLAP = 0.30

CAPTION_PATTERN = re.compile(r"^(Figure|Fig\.|Table)\s+\d+")

SERVICE_TIMEOUT_S = 30.0

_MISSING_CAPTION_TEXT = "(caption text unavailable)"


@dataclass
class PageImage:
    """One rendered page; dimensions follow round(inches * dpi)."""

    page_index: int
    width_px: int
    height_px: int
    dpi: int
    image: Image.Image

    def png_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.image.save(buf, format="PNG")
        return buf.getvalue()


@dataclass(frozen=True)
class LayoutBox:
    """Detected region in page pixels, top-left origin."""

    cls: str  # figure | table | caption | other
    x0: int
    y0: int
    x1: int
    y1: int
    confidence: float = 1.0
    text: str = ""  # caption boxes carry their extracted text when known

    def __post_init__(self):
        if self.cls not in ("figure", "table", "caption", "other"):
            raise ValueError(f"unknown layout class {self.cls!r}")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError("degenerate layout rect")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must be in [0, 1]")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass
class VisualUnit:
    """A figure or table crop paired with its caption (possibly empty)."""

    id: str
    cls: str
    page_index: int
    visual_rect: tuple[int, int, int, int]
    caption: str = ""
    caption_rect: tuple[int, int, int, int] | None = None
    asset: Path | None = None
    source_index: int = -1  # position of the visual box in its page's list


def render_pages(pdf: bytes | str | Path, dpi: int = 250) -> list[PageImage]:
    """Render every page to an RGB image at the given density (default 250).

    A page that fails to render is skipped with a warning; the rest keep
    their original indices.
    """
    if isinstance(pdf, (str, Path)):
        pdf = Path(pdf).read_bytes()
    if dpi <= 0:
        raise ValueError("dpi must be positive")
    document = parse_pdf(pdf)
    pages: list[PageImage] = []
    for page in document.pages:
        try:
            image = rasterize_page(page, dpi)
        except Exception as exc:
            logger.warning("render failure on page %d: %s", page.index, exc)
            continue
        width_px, height_px = page_pixel_size(page.width_pt, page.height_pt, dpi)
        pages.append(
            PageImage(
                page_index=page.index,
                width_px=width_px,
                height_px=height_px,
                dpi=dpi,
                image=image,
            )
        )
    return pages


def _clamp_box(cls: str, x0, y0, x1, y1, score, text, width: int, height: int) -> LayoutBox | None:
    x0 = max(0, min(int(round(x0)), width))
    x1 = max(0, min(int(round(x1)), width))
    y0 = max(0, min(int(round(y0)), height))
    y1 = max(0, min(int(round(y1)), height))
    if x1 <= x0 or y1 <= y0:
        return None
    return LayoutBox(
        cls=cls,
        x0=x0,
        y0=y0,
        x1=x1,
        y1=y1,
        confidence=min(max(float(score), 0.0), 1.0),
        text=text,
    )


def _boxes_from_service(payload, page: PageImage) -> list[LayoutBox]:
    if not isinstance(payload, dict) or not isinstance(payload.get("boxes"), list):
        raise ServiceSchemaViolationError("layout service response missing 'boxes' list")
    boxes: list[LayoutBox] = []
    for i, entry in enumerate(payload["boxes"]):
        if not isinstance(entry, dict):
            raise ServiceSchemaViolationError(f"boxes[{i}] is not an object")
        try:
            cls = entry["cls"]
            coords = [float(entry[k]) for k in ("x0", "y0", "x1", "y1")]
            score = float(entry.get("score", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ServiceSchemaViolationError(f"boxes[{i}] malformed: {exc}") from exc
        if cls not in ("figure", "table", "caption", "other"):
            raise ServiceSchemaViolationError(f"boxes[{i}] has unknown class {cls!r}")
        box = _clamp_box(cls, *coords, score, "", page.width_px, page.height_px)
        if box is not None:
            boxes.append(box)
    return boxes


def detect_layout(
    page: PageImage,
    backend: str = "heuristic",
    *,
    blocks: PageBlocks | None = None,
    service_url: str | None = None,
    min_confidence: float = 0.0,
    client: httpx.Client | None = None,
) -> list[LayoutBox]:
    """Detect layout boxes for one page via the service or the heuristic.

    The service backend posts the page PNG to the detection sidecar (30 s
    timeout, one retry) and validates the response against the wire schema.
    The heuristic backend never fails on valid input but needs the page's
    text blocks.
    """
    if backend == "service":
        if not service_url:
            raise ServiceUnreachableError("no layout service URL configured")
        boxes = _detect_via_service(page, service_url, client)
    elif backend == "heuristic":
        if blocks is None:
            raise ValueError("heuristic backend requires the page's text blocks")
        boxes = heuristic_detect(page, blocks)
    else:
        raise ValueError(f"unknown layout backend {backend!r}")
    return [b for b in boxes if b.confidence >= min_confidence]


def _detect_via_service(
    page: PageImage, service_url: str, client: httpx.Client | None
) -> list[LayoutBox]:
    owned = client is None
    client = client or httpx.Client()
    url = f"{service_url.rstrip('/')}/detect"
    payload = page.png_bytes()
    last_error: Exception | None = None
    try:
        for _ in range(2):  # one retry
            try:
                response = client.post(
                    url,
                    params={"dpi": page.dpi},
                    content=payload,
                    headers={"Content-Type": "image/png"},
                    timeout=SERVICE_TIMEOUT_S,
                )
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = RuntimeError(f"HTTP {response.status_code}")
                continue
            if response.status_code != 200:
                raise ServiceSchemaViolationError(
                    f"layout service returned HTTP {response.status_code}"
                )
            try:
                data = response.json()
            except ValueError as exc:
                raise ServiceSchemaViolationError("layout service returned non-JSON") from exc
            return _boxes_from_service(data, page)
        raise ServiceUnreachableError(f"layout service unreachable: {last_error}")
    finally:
        if owned:
            client.close()


def _pt_to_px(rect, scale: float) -> tuple[float, float, float, float]:
    return (rect[0] * scale, rect[1] * scale, rect[2] * scale, rect[3] * scale)


def heuristic_detect(page: PageImage, blocks: PageBlocks) -> list[LayoutBox]:
    """Model-free layout detection from extraction geometry.

    Caption boxes: text blocks matching the caption pattern. Figure boxes:
    embedded-image regions recorded during extraction. Table boxes: runs of
    three or more consecutive multi-column blocks sharing at least two
    column positions.
    """
    if blocks.page_index != page.page_index:
        raise ValueError("blocks belong to a different page")
    scale = page.dpi / 72.0
    boxes: list[LayoutBox] = []

    for region in blocks.image_regions:
        box = _clamp_box(
            "figure", *_pt_to_px(region, scale), 1.0, "", page.width_px, page.height_px
        )
        if box is not None:
            boxes.append(box)

    caption_flags = [bool(CAPTION_PATTERN.match(b.text)) for b in blocks.blocks]
    for block, is_caption in zip(blocks.blocks, caption_flags):
        if not is_caption:
            continue
        box = _clamp_box(
            "caption",
            *_pt_to_px(block.rect, scale),
            1.0,
            block.text,
            page.width_px,
            page.height_px,
        )
        if box is not None:
            boxes.append(box)

    boxes.extend(_detect_tables(page, blocks, caption_flags, scale))
    return canonical_order(boxes)


def _shared_columns(a: tuple[float, ...], b: tuple[float, ...], tol: float = 2.0) -> int:
    return sum(1 for x in a if any(abs(x - y) <= tol for y in b))


def _detect_tables(
    page: PageImage, blocks: PageBlocks, caption_flags: list[bool], scale: float
) -> list[LayoutBox]:
    tables: list[LayoutBox] = []
    cluster: list = []

    def flush():
        if len(cluster) >= 3:
            rect = (
                min(b.rect[0] for b in cluster),
                min(b.rect[1] for b in cluster),
                max(b.rect[2] for b in cluster),
                max(b.rect[3] for b in cluster),
            )
            box = _clamp_box(
                "table", *_pt_to_px(rect, scale), 1.0, "", page.width_px, page.height_px
            )
            if box is not None:
                tables.append(box)
        cluster.clear()

    for block, is_caption in zip(blocks.blocks, caption_flags):
        if is_caption or len(block.columns) < 2:
            flush()
            continue
        if cluster and _shared_columns(cluster[0].columns, block.columns) < 2:
            flush()
        cluster.append(block)
    flush()
    return tables


def canonical_order(boxes: list[LayoutBox]) -> list[LayoutBox]:
    """Reading-order sort; value-based, so it is permutation invariant."""
    return sorted(boxes, key=lambda b: (b.y0, b.x0, b.y1, b.x1, b.cls))


def crop_components(
    page: PageImage, boxes: list[LayoutBox], out_dir: str | Path
) -> dict[int, Path]:
    """Crop each figure/table box to a PNG named ``p{page}_{class}_{k}.png``.

    Returns a map from box index (within ``boxes``) to the written path.
    ``k`` counts boxes of the same class in list order, so callers that want
    stable names across runs should pass boxes in canonical order.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailureError(f"cannot create crop directory {out_dir}: {exc}") from exc
    class_counters: dict[str, int] = {}
    result: dict[int, Path] = {}
    for index, box in enumerate(boxes):
        if box.cls not in ("figure", "table"):
            continue
        if box.x1 > page.width_px or box.y1 > page.height_px:
            raise ValueError(f"box {index} exceeds page bounds")
        k = class_counters.get(box.cls, 0)
        class_counters[box.cls] = k + 1
        crop = page.image.crop((box.x0, box.y0, box.x1, box.y1))
        path = out_dir / f"p{page.page_index}_{box.cls}_{k}.png"
        try:
            crop.save(path, format="PNG")
        except OSError as exc:
            raise IoFailureError(f"cannot write crop {path}: {exc}") from exc
        result[index] = path
    return result


def _vertical_gap(visual: LayoutBox, caption: LayoutBox) -> float:
    if caption.y0 >= visual.y1:
        return float(caption.y0 - visual.y1)
    if visual.y0 >= caption.y1:
        return float(visual.y0 - caption.y1)
    return 0.0


def _horizontal_overlap_ok(a: LayoutBox, b: LayoutBox) -> bool:
    overlap = min(a.x1, b.x1) - max(a.x0, b.x0)
    if overlap <= 0:
        return False
    return overlap >= MIN_HORIZONTAL_OVERLAP * min(a.width, b.width)


def _direction_preference(visual: LayoutBox, caption: LayoutBox) -> int:
    below = caption.y0 >= visual.y1
    above = visual.y0 >= caption.y1
    if visual.cls == "figure":
        return 0 if below else 1
    return 0 if above else 1


def pair_components(
    boxes_by_page: dict[int, list[LayoutBox]],
    page_heights: dict[int, int],
) -> list[VisualUnit]:
    """Pair visuals with captions per page by nearest vertical neighbor.

    Candidates must share the page, have vertical gap at most 8% of page
    height, and overlap horizontally by at least 30% of the narrower box.
    Pairs are chosen greedily in ascending gap order, each caption used at
    most once; gap ties prefer the conventional caption side (below figures,
    above tables), then the earlier caption in reading order. Unmatched
    visuals still become units, with an empty caption.
    """
    units: list[VisualUnit] = []
    for page_index in sorted(boxes_by_page):
        boxes = canonical_order(boxes_by_page[page_index])
        threshold = VERTICAL_GAP_RATIO * page_heights[page_index]
        visuals = [(i, b) for i, b in enumerate(boxes) if b.cls in ("figure", "table")]
        captions = [(i, b) for i, b in enumerate(boxes) if b.cls == "caption"]

        candidates = []
        for v_pos, (v_idx, visual) in enumerate(visuals):
            for c_pos, (c_idx, caption) in enumerate(captions):
                gap = _vertical_gap(visual, caption)
                if gap > threshold or not _horizontal_overlap_ok(visual, caption):
                    continue
                candidates.append(
                    (gap, _direction_preference(visual, caption), c_pos, v_pos)
                )
        candidates.sort()

        chosen: dict[int, int] = {}  # visual position -> caption position
        used_captions: set[int] = set()
        for gap, _pref, c_pos, v_pos in candidates:
            if v_pos in chosen or c_pos in used_captions:
                continue
            chosen[v_pos] = c_pos
            used_captions.add(c_pos)

        class_counters: dict[str, int] = {}
        for v_pos, (v_idx, visual) in enumerate(visuals):
            k = class_counters.get(visual.cls, 0)
            class_counters[visual.cls] = k + 1
            unit = VisualUnit(
                id=f"p{page_index}_{visual.cls}_{k}",
                cls=visual.cls,
                page_index=page_index,
                visual_rect=(visual.x0, visual.y0, visual.x1, visual.y1),
                source_index=v_idx,
            )
            if v_pos in chosen:
                _, caption = captions[chosen[v_pos]]
                unit.caption = caption.text or _MISSING_CAPTION_TEXT
                unit.caption_rect = (caption.x0, caption.y0, caption.x1, caption.y1)
            units.append(unit)
    return units
