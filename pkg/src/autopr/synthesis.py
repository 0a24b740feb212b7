"""Stage-2 content synthesis agents and the direct-prompt baseline.

Four cooperating agents turn the digest and visual units into an
interleaved draft: a logical drafting agent produces a structured,
style-agnostic brief; a vision agent explains each figure; an enriching
agent restyles the brief for the target platform; a combination agent
weaves text and figure placeholders into the final pre-adaptation draft.

Figure placeholders use the line-anchored token ``[[FIGURE:<unit-id>]]``;
anything else the combination model emits on a placeholder line is dropped
with a warning rather than propagated.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from autopr.errors import (
    EmptyAnalysisError,
    EmptyInputError,
    IoFailureError,
    StructureValidationError,
    UnknownPlatformError,
)
from autopr.gateway import (
    ChatMessage,
    CompletionRequest,
    ImagePart,
    ModelRole,
    TextPart,
    derive_seed,
)
from autopr.ingest import DocumentSummary
from autopr.visual import VisualUnit

logger = logging.getLogger(__name__)

__all__ = [
    "DraftHeader",
    "LogicalDraft",
    "VisualAnalysis",
    "EnrichedPost",
    "TextSegment",
    "FigureSegment",
    "InterleavedDraft",
    "draft_logical",
    "analyze_visual",
    "analyze_visuals",
    "enrich_text",
    "combine_interleaved",
    "baseline_promote",
    "placeholder_token",
    "BASELINE_TRUNCATION_CHARS",
    "BASELINE_INSTRUCTION",
    "REQUIRED_SECTIONS",
]

REQUIRED_SECTIONS = (
    "research-question",
    "core-contributions",
    "key-method",
    "key-results",
)

_SECTION_HINTS = {
    "research-question": ("research question",),
    "core-contributions": ("core contribution", "contributions"),
    "key-method": ("key method", "method"),
    "key-results": ("key result", "results"),
}

PLACEHOLDER_LINE = re.compile(r"^\s*\[\[FIGURE:([A-Za-z0-9_.\-]+)\]\]\s*$")

BASELINE_TRUNCATION_CHARS = 80_000
BASELINE_INSTRUCTION = (
    "Based on the following research paper content, generate a social media "
    "post to promote it."
)


def placeholder_token(unit_id: str) -> str:
    return f"[[FIGURE:{unit_id}]]"


@dataclass
class DraftHeader:
    post_title: str = ""
    authors: str = ""
    paper_title: str = ""
    source: str = ""


@dataclass
class LogicalDraft:
    header: DraftHeader
    sections: dict  # required keys: REQUIRED_SECTIONS
    raw_text: str


@dataclass
class VisualAnalysis:
    unit_id: str
    analysis: str


@dataclass
class EnrichedPost:
    platform: str
    text: str
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class TextSegment:
    text: str


@dataclass(frozen=True)
class FigureSegment:
    unit_id: str


@dataclass
class InterleavedDraft:
    platform: str
    segments: list = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def placeholder_ids(self) -> list[str]:
        return [s.unit_id for s in self.segments if isinstance(s, FigureSegment)]

    def text_content(self) -> str:
        return "\n".join(s.text for s in self.segments if isinstance(s, TextSegment))


def _text_request(role, prompt, *, temperature, seed, max_output_tokens=4096):
    return CompletionRequest(
        role=role,
        messages=(ChatMessage(author="user", parts=(TextPart(prompt),)),),
        temperature=temperature,
        max_output_tokens=max_output_tokens,
        seed=seed,
    )


# --- logical drafting ---

_HEADER_FIELDS = {
    "post title": "post_title",
    "title": "post_title",
    "authors": "authors",
    "paper": "paper_title",
    "source": "source",
}


def _match_section(heading: str) -> str | None:
    lowered = re.sub(r"[^a-z ]", "", heading.lower()).strip()
    for key, hints in _SECTION_HINTS.items():
        if any(hint in lowered for hint in hints):
            return key
    return None


def parse_draft(text: str) -> LogicalDraft:
    """Parse the drafting model's output into header and required sections."""
    header = DraftHeader()
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in text.splitlines():
        stripped = line.strip()
        heading = None
        if stripped.startswith("#"):
            heading = stripped.lstrip("#").strip()
        if heading is not None:
            if ":" in heading:
                label, _, value = heading.partition(":")
                if _HEADER_FIELDS.get(label.strip().lower()) == "post_title":
                    header.post_title = value.strip()
                    current = None
                    continue
            matched = _match_section(heading)
            current = matched
            if matched is not None:
                sections.setdefault(matched, [])
            continue
        if ":" in stripped and current is None:
            label, _, value = stripped.partition(":")
            attr = _HEADER_FIELDS.get(label.strip().lower())
            if attr is not None and not getattr(header, attr):
                setattr(header, attr, value.strip())
                continue
        if current is not None and stripped:
            sections[current].append(stripped)
    flattened = {key: "\n".join(lines).strip() for key, lines in sections.items()}
    return LogicalDraft(header=header, sections=flattened, raw_text=text)


def missing_sections(draft: LogicalDraft) -> list[str]:
    return [key for key in REQUIRED_SECTIONS if not draft.sections.get(key)]


def draft_logical(
    summary: DocumentSummary,
    gateway,
    prompts,
    *,
    role: ModelRole = ModelRole.TEXT_SYNTHESIS,
    temperature: float = 0.7,
    seed: int | None = None,
) -> LogicalDraft:
    """Produce the structured, style-agnostic draft from the digest.

    Retries once with a corrective instruction if a required section is
    missing, then fails. Author and institution strings pass through the
    model untouched by construction; nothing is rewritten locally.
    """
    if not summary.text.strip():
        raise EmptyInputError("summary is empty")
    prompt = prompts.render("draft", summary=summary.text)
    response = gateway.complete(
        _text_request(role, prompt, temperature=temperature, seed=derive_seed(seed, "draft:0"))
    )
    draft = parse_draft(response.text)
    missing = missing_sections(draft)
    if not missing:
        return draft
    corrective = (
        prompt
        + "\n\nYour previous answer was missing these required sections: "
        + ", ".join(missing)
        + ". Respond again with every required section present and non-empty."
    )
    response = gateway.complete(
        _text_request(
            role, corrective, temperature=temperature, seed=derive_seed(seed, "draft:1")
        )
    )
    draft = parse_draft(response.text)
    missing = missing_sections(draft)
    if missing:
        raise StructureValidationError(
            f"draft is missing required sections after retry: {', '.join(missing)}"
        )
    return draft


# --- visual analysis ---

def analyze_visual(
    unit: VisualUnit,
    gateway,
    prompts,
    *,
    role: ModelRole = ModelRole.VISION_ANALYSIS,
    temperature: float = 0.7,
    seed: int | None = None,
) -> VisualAnalysis:
    """Explain one figure or table with the vision model.

    The crop travels at high detail; the caption text rides along in the
    prompt. Units without captions are analyzed from the image alone.
    """
    if unit.asset is None:
        raise IoFailureError(f"visual unit {unit.id} has no cropped asset")
    try:
        image = ImagePart.from_file(unit.asset, detail="high")
    except OSError as exc:
        raise IoFailureError(f"cannot read asset for {unit.id}: {exc}") from exc
    prompt = prompts.render("figure_analysis", caption=unit.caption or "(none)")
    request = CompletionRequest(
        role=role,
        messages=(ChatMessage(author="user", parts=(TextPart(prompt),)),),
        temperature=temperature,
        max_output_tokens=1024,
        seed=derive_seed(seed, f"vision:{unit.id}"),
    )
    result = gateway.complete_with_images(request, [image])
    if not result.text.strip():
        raise EmptyAnalysisError(f"vision model returned empty analysis for {unit.id}")
    return VisualAnalysis(unit_id=unit.id, analysis=result.text.strip())


def analyze_visuals(
    units,
    gateway,
    prompts,
    *,
    role: ModelRole = ModelRole.VISION_ANALYSIS,
    temperature: float = 0.7,
    seed: int | None = None,
    concurrency: int = 4,
) -> list[VisualAnalysis]:
    """Analyze several units, concurrently, preserving input order."""
    units = list(units)
    if not units:
        return []
    if concurrency > 1 and len(units) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            return list(
                pool.map(
                    lambda u: analyze_visual(
                        u, gateway, prompts, role=role, temperature=temperature, seed=seed
                    ),
                    units,
                )
            )
    return [
        analyze_visual(u, gateway, prompts, role=role, temperature=temperature, seed=seed)
        for u in units
    ]


# --- platform enrichment ---

def enrich_text(
    draft: LogicalDraft,
    summary: DocumentSummary,
    platform: str,
    gateway,
    prompts,
    *,
    role: ModelRole = ModelRole.TEXT_SYNTHESIS,
    temperature: float = 0.7,
    seed: int | None = None,
) -> EnrichedPost:
    """Restyle the draft into the platform's native text-only voice.

    Hashtag absence is a recorded warning, not a failure: it is a scored
    quality downstream. Placeholder tokens are illegal here and stripped.
    """
    key = f"enrich_{platform}"
    if not prompts.has(key):
        raise UnknownPlatformError(f"no enrichment template for platform {platform!r}")
    prompt = prompts.render(key, draft=draft.raw_text, summary=summary.text)
    result = gateway.complete(
        _text_request(role, prompt, temperature=temperature, seed=derive_seed(seed, "enrich"))
    )
    warnings: list[str] = []
    lines = result.text.splitlines()
    kept = [line for line in lines if not PLACEHOLDER_LINE.match(line)]
    if len(kept) != len(lines):
        warnings.append("enriched post contained figure placeholders; stripped")
        logger.warning("enrich_text(%s): stripped placeholder lines", platform)
    text = "\n".join(kept)
    if not re.search(r"#\w", text):
        warnings.append("enriched post contains no hashtags")
        logger.warning("enrich_text(%s): no hashtags in output", platform)
    return EnrichedPost(platform=platform, text=text, warnings=warnings)


# --- visual-text combination ---

def combine_interleaved(
    enriched: EnrichedPost,
    draft: LogicalDraft,
    analyses,
    platform: str,
    gateway,
    prompts,
    *,
    role: ModelRole = ModelRole.COMBINATION,
    temperature: float = 0.7,
    seed: int | None = None,
    max_figures: int = 4,
) -> InterleavedDraft:
    """Weave figure placeholders into a rewritten story.

    Placeholder lines naming unknown or repeated units are dropped with a
    warning; the count is clamped to the platform's figure limit by keeping
    the first ones. With no analyses the result is a text-only draft.
    """
    key = f"combine_{platform}"
    if not prompts.has(key):
        raise UnknownPlatformError(f"no combination template for platform {platform!r}")
    analyses = list(analyses)
    known_ids = [a.unit_id for a in analyses]
    if len(set(known_ids)) != len(known_ids):
        raise ValueError("analyses reference duplicate units")
    figures_list = "\n".join(
        f"{placeholder_token(a.unit_id)} {a.analysis}" for a in analyses
    ) or "(no figures available)"
    prompt = prompts.render(
        key,
        enriched=enriched.text,
        draft=draft.raw_text,
        figures=figures_list,
        max_figures=str(max_figures),
    )
    result = gateway.complete(
        _text_request(role, prompt, temperature=temperature, seed=derive_seed(seed, "combine"))
    )
    return _scan_segments(result.text, platform, set(known_ids), max_figures)


def _scan_segments(
    text: str, platform: str, known_ids: set[str], max_figures: int
) -> InterleavedDraft:
    draft = InterleavedDraft(platform=platform)
    buffer: list[str] = []
    placed: list[str] = []

    def flush_text():
        chunk = "\n".join(buffer).strip("\n")
        buffer.clear()
        if chunk.strip():
            draft.segments.append(TextSegment(chunk))

    for line in text.splitlines():
        match = PLACEHOLDER_LINE.match(line)
        if match is None:
            buffer.append(line)
            continue
        unit_id = match.group(1)
        if unit_id not in known_ids:
            draft.warnings.append(f"dropped placeholder for unknown unit {unit_id!r}")
            logger.warning("combine(%s): unknown placeholder %s", platform, unit_id)
            continue
        if unit_id in placed:
            draft.warnings.append(f"dropped repeated placeholder for unit {unit_id!r}")
            continue
        if len(placed) >= max_figures:
            draft.warnings.append(
                f"dropped placeholder for {unit_id!r}: figure limit {max_figures} reached"
            )
            continue
        flush_text()
        placed.append(unit_id)
        draft.segments.append(FigureSegment(unit_id))
    flush_text()
    return draft


# --- direct-prompt baseline ---

def baseline_promote(
    raw_text: str,
    platform: str,
    gateway,
    *,
    role: ModelRole = ModelRole.TEXT_SYNTHESIS,
    temperature: float = 0.7,
    seed: int | None = None,
) -> EnrichedPost:
    """One-shot baseline: truncate the paper text and ask for a post.

    No platform styling, no structure validation; the input is cut to
    exactly the first 80,000 characters.
    """
    truncated = raw_text[:BASELINE_TRUNCATION_CHARS]
    prompt = f"{BASELINE_INSTRUCTION}\n\n{truncated}"
    result = gateway.complete(
        _text_request(
            role,
            prompt,
            temperature=temperature,
            seed=derive_seed(seed, "baseline"),
            max_output_tokens=2048,
        )
    )
    return EnrichedPost(platform=platform, text=result.text)
