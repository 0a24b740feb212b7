"""End-to-end promote flow: ingest, visuals, synthesis, adaptation, packaging.

The stages wire together here; each stage stays independently usable. With
the service layout backend unavailable, detection falls back to the
geometry heuristic with a warning so a promote run never depends on the
sidecar being up.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from autopr.adapt import (
    PackagedPost,
    ValidationReport,
    adapt_platform,
    get_profile,
    package,
    validate_package,
)
from autopr.errors import ServiceUnreachableError
from autopr.gateway import LLMGateway
from autopr.ingest import (
    PageBlocks,
    RawDocumentText,
    SummaryBudget,
    extract_text,
    hierarchical_summarize,
    parse_structure,
)
from autopr.prompts import PromptLibrary, load_default_prompts
from autopr.synthesis import (
    InterleavedDraft,
    TextSegment,
    analyze_visuals,
    baseline_promote,
    combine_interleaved,
    draft_logical,
    enrich_text,
)
from autopr.visual import (
    LayoutBox,
    PageImage,
    VisualUnit,
    canonical_order,
    crop_components,
    detect_layout,
    pair_components,
    render_pages,
)

logger = logging.getLogger(__name__)

__all__ = ["PromoteOptions", "PromoteOutcome", "promote", "plain_text_of"]


@dataclass
class PromoteOptions:
    platform: str
    out_dir: Path
    layout_backend: str = "heuristic"  # "service" | "heuristic"
    service_url: str | None = None
    dpi: int = 250
    min_confidence: float = 0.30
    seed: int | None = None
    baseline: bool = False
    budget: SummaryBudget = field(default_factory=lambda: SummaryBudget(8000, 512))
    concurrency: int = 4
    temperature: float = 0.7


@dataclass
class PromoteOutcome:
    post: PackagedPost
    validation: ValidationReport
    units: list
    warnings: list


def plain_text_of(raw: RawDocumentText) -> str:
    """The document's text blocks joined in reading order."""
    return "\n\n".join(block.text for page in raw.pages for block in page.blocks)


def _resolve_caption_texts(
    boxes: list[LayoutBox], blocks: PageBlocks, dpi: int
) -> list[LayoutBox]:
    """Fill caption-box text from overlapping extracted blocks (service boxes)."""
    scale = dpi / 72.0
    resolved: list[LayoutBox] = []
    for box in boxes:
        if box.cls != "caption" or box.text:
            resolved.append(box)
            continue
        texts = []
        for block in blocks.blocks:
            cx = (block.rect[0] + block.rect[2]) / 2 * scale
            cy = (block.rect[1] + block.rect[3]) / 2 * scale
            if box.x0 <= cx <= box.x1 and box.y0 <= cy <= box.y1:
                texts.append(block.text)
        resolved.append(
            LayoutBox(
                cls=box.cls,
                x0=box.x0,
                y0=box.y0,
                x1=box.x1,
                y1=box.y1,
                confidence=box.confidence,
                text=" ".join(texts),
            )
        )
    return resolved


def _detect_with_fallback(
    page: PageImage, blocks: PageBlocks, options: PromoteOptions, warnings: list
) -> list[LayoutBox]:
    if options.layout_backend == "service":
        try:
            boxes = detect_layout(
                page,
                "service",
                service_url=options.service_url,
                min_confidence=options.min_confidence,
            )
            return _resolve_caption_texts(boxes, blocks, options.dpi)
        except ServiceUnreachableError as exc:
            message = f"layout service unreachable, falling back to heuristic: {exc}"
            warnings.append(message)
            logger.warning(message)
    return detect_layout(
        page, "heuristic", blocks=blocks, min_confidence=options.min_confidence
    )


def _extract_visual_units(
    pdf: bytes, raw: RawDocumentText, options: PromoteOptions, staging: Path, warnings: list
) -> list[VisualUnit]:
    pages = render_pages(pdf, options.dpi)
    blocks_by_index = {p.page_index: p for p in raw.pages}
    boxes_by_page: dict[int, list[LayoutBox]] = {}
    heights: dict[int, int] = {}
    crops: dict[tuple[int, int], Path] = {}
    for page in pages:
        blocks = blocks_by_index.get(page.page_index)
        if blocks is None:
            continue
        boxes = canonical_order(_detect_with_fallback(page, blocks, options, warnings))
        boxes_by_page[page.page_index] = boxes
        heights[page.page_index] = page.height_px
        for index, path in crop_components(page, boxes, staging).items():
            crops[(page.page_index, index)] = path
    units = pair_components(boxes_by_page, heights)
    for unit in units:
        unit.asset = crops.get((unit.page_index, unit.source_index))
    kept = [u for u in units if u.asset is not None]
    if len(kept) != len(units):
        warnings.append("dropped visual units without cropped assets")
    return kept


def _write_meta(out_dir: Path, options: PromoteOptions, gateway: LLMGateway, extra: dict) -> None:
    meta = {
        "platform": options.platform,
        "layout_backend": options.layout_backend,
        "baseline": options.baseline,
        "seed": options.seed,
        "model_roles": {
            role.value: endpoint.endpoint_id
            for role, endpoint in sorted(
                gateway.config.endpoints.items(), key=lambda kv: kv[0].value
            )
        },
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    meta.update(extra)
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def promote(
    pdf: bytes | str | Path,
    options: PromoteOptions,
    gateway: LLMGateway,
    prompts: PromptLibrary | None = None,
) -> PromoteOutcome:
    """Turn a paper PDF into a packaged, platform-adapted post bundle."""
    prompts = prompts if prompts is not None else load_default_prompts()
    profile = get_profile(options.platform)
    if isinstance(pdf, (str, Path)):
        pdf = Path(pdf).read_bytes()

    warnings: list[str] = []
    out_dir = Path(options.out_dir)
    raw = extract_text(pdf)

    if options.baseline:
        enriched = baseline_promote(
            plain_text_of(raw),
            options.platform,
            gateway,
            temperature=options.temperature,
            seed=options.seed,
        )
        draft = InterleavedDraft(
            platform=options.platform, segments=[TextSegment(enriched.text)]
        )
        post = package(draft, [], out_dir)
        _write_meta(out_dir, options, gateway, {"stages": ["baseline"]})
        return PromoteOutcome(
            post=post, validation=validate_package(post, profile), units=[], warnings=warnings
        )

    tree = parse_structure(raw)
    summary = hierarchical_summarize(
        tree,
        options.budget,
        gateway,
        prompts,
        seed=options.seed,
        concurrency=options.concurrency,
    )

    with tempfile.TemporaryDirectory(prefix="autopr-crops-") as staging:
        units = _extract_visual_units(pdf, raw, options, Path(staging), warnings)

        logical = draft_logical(
            summary, gateway, prompts, temperature=options.temperature, seed=options.seed
        )
        analyses = analyze_visuals(
            units,
            gateway,
            prompts,
            temperature=options.temperature,
            seed=options.seed,
            concurrency=options.concurrency,
        )
        enriched = enrich_text(
            logical,
            summary,
            options.platform,
            gateway,
            prompts,
            temperature=options.temperature,
            seed=options.seed,
        )
        warnings.extend(enriched.warnings)
        interleaved = combine_interleaved(
            enriched,
            logical,
            analyses,
            options.platform,
            gateway,
            prompts,
            temperature=options.temperature,
            seed=options.seed,
            max_figures=profile.max_figures,
        )
        warnings.extend(interleaved.warnings)
        adapted = adapt_platform(
            interleaved,
            profile,
            gateway,
            prompts,
            temperature=options.temperature,
            seed=options.seed,
        )
        post = package(adapted, units, out_dir)

    _write_meta(
        out_dir,
        options,
        gateway,
        {
            "stages": ["extract", "summarize", "visuals", "synthesize", "adapt", "package"],
            "summary_mode": summary.mode,
            "summary_calls": summary.calls_made,
            "visual_units": len(units),
        },
    )
    return PromoteOutcome(
        post=post,
        validation=validate_package(post, profile),
        units=units,
        warnings=warnings,
    )
