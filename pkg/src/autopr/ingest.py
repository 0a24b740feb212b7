"""PDF text ingestion: positioned blocks, section tree, and budgeted summarization.

The extraction step recovers paragraph-level text blocks with geometry so
later stages can detect headings by font size, captions by pattern, and
figure regions by drawing geometry. Summarization condenses the section
tree into a digest that always fits the model's context budget: one pass
when possible, otherwise chunked summaries combined level by level.
"""

from __future__ import annotations

import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from autopr.errors import ChunkTooLargeError, ConfigError, EmptyInputError
from autopr.gateway import ChatMessage, CompletionRequest, ModelRole, TextPart, derive_seed
from autopr.pdf.reader import parse_pdf
from autopr.tokens import estimate_tokens

__all__ = [
    "TextBlock",
    "PageBlocks",
    "RawDocumentText",
    "SectionNode",
    "SectionTree",
    "SummaryBudget",
    "DocumentSummary",
    "extract_text",
    "parse_structure",
    "estimate_tokens",
    "hierarchical_summarize",
    "PROMPT_OVERHEAD_TOKENS",
]

# Estimated tokens reserved per call for the instruction scaffold around the
# content; keeps every budget check conservative.
PROMPT_OVERHEAD_TOKENS = 800

# A block is a heading when its font is at least this multiple of the modal
# body size, or when it looks like a numbered section title.
HEADING_FONT_RATIO = 1.15
_NUMBERED_HEADING = re.compile(r"^(\d+(?:\.\d+)*)[.)]?\s+\S")


@dataclass
class TextBlock:
    """One paragraph-level block with geometry (points, top-left origin)."""

    text: str
    rect: tuple[float, float, float, float]
    font_size: float
    columns: tuple[float, ...] = ()  # run left-edges when the line had several runs

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "rect": list(self.rect),
            "font_size": self.font_size,
            "columns": list(self.columns),
        }


@dataclass
class PageBlocks:
    page_index: int
    width_pt: float
    height_pt: float
    blocks: list[TextBlock] = field(default_factory=list)
    image_regions: list[tuple[float, float, float, float]] = field(default_factory=list)


@dataclass
class RawDocumentText:
    pages: list[PageBlocks]

    def all_blocks(self) -> list[TextBlock]:
        return [block for page in self.pages for block in page.blocks]


@dataclass
class SectionNode:
    title: str
    level: int
    paragraphs: list[str] = field(default_factory=list)
    children: list["SectionNode"] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "level": self.level,
            "paragraphs": list(self.paragraphs),
            "children": [child.to_dict() for child in self.children],
        }


@dataclass
class SectionTree:
    """Document outline; a synthetic level-0 root holds any preamble text."""

    root: SectionNode

    def walk(self):
        stack = [self.root]
        while stack:
            node = stack.pop(0)
            yield node
            stack[:0] = node.children

    def all_paragraphs(self) -> list[str]:
        return [p for node in self.walk() for p in node.paragraphs]

    def is_empty(self) -> bool:
        return not self.all_paragraphs() and not self.root.children

    def full_text(self) -> str:
        parts = []
        for node in self.walk():
            if node.title:
                parts.append(node.title)
            parts.extend(node.paragraphs)
        return "\n\n".join(parts)

    def to_dict(self) -> dict:
        return self.root.to_dict()

    @classmethod
    def from_dict(cls, data: dict) -> "SectionTree":
        def build(entry: dict) -> SectionNode:
            return SectionNode(
                title=entry.get("title", ""),
                level=int(entry.get("level", 0)),
                paragraphs=list(entry.get("paragraphs", [])),
                children=[build(c) for c in entry.get("children", [])],
            )

        return cls(root=build(data))


# --- extraction ---

@dataclass
class _Line:
    x0: float
    x1: float
    baseline: float  # PDF coords, origin bottom-left
    font_size: float
    runs: list  # of (x, text)

    @property
    def text(self) -> str:
        return " ".join(t for _, t in sorted(self.runs, key=lambda r: r[0]))


def _group_lines(runs) -> list[_Line]:
    lines: list[_Line] = []
    for run in sorted(runs, key=lambda r: (-r.y, r.x)):
        target = None
        for line in lines:
            if abs(line.baseline - run.y) <= 0.3 * max(line.font_size, run.font_size):
                target = line
                break
        if target is None:
            lines.append(
                _Line(
                    x0=run.x,
                    x1=run.x + run.width,
                    baseline=run.y,
                    font_size=run.font_size,
                    runs=[(run.x, run.text)],
                )
            )
        else:
            target.runs.append((run.x, run.text))
            target.x0 = min(target.x0, run.x)
            target.x1 = max(target.x1, run.x + run.width)
            target.font_size = max(target.font_size, run.font_size)
    lines.sort(key=lambda ln: (-ln.baseline, ln.x0))
    return lines


def _line_rect(line: _Line, page_height: float) -> tuple[float, float, float, float]:
    top = page_height - line.baseline - 0.8 * line.font_size
    bottom = page_height - line.baseline + 0.25 * line.font_size
    return (line.x0, top, line.x1, bottom)


def _clamp_rect(rect, width: float, height: float):
    x0, y0, x1, y1 = rect
    x0 = min(max(x0, 0.0), width)
    x1 = min(max(x1, 0.0), width)
    y0 = min(max(y0, 0.0), height)
    y1 = min(max(y1, 0.0), height)
    return (min(x0, x1), min(y0, y1), max(x0, x1) or 1e-6, max(y0, y1) or 1e-6)


def _merge_lines_to_blocks(lines: list[_Line], page_height: float) -> list[TextBlock]:
    """Adjacent single-run lines with matching size and left edge form one block.

    Multi-run lines (table rows, column layouts) stay separate so downstream
    heuristics can see their column structure.
    """
    blocks: list[TextBlock] = []
    group: list[_Line] = []

    def flush():
        if not group:
            return
        rects = [_line_rect(ln, page_height) for ln in group]
        rect = (
            min(r[0] for r in rects),
            min(r[1] for r in rects),
            max(r[2] for r in rects),
            max(r[3] for r in rects),
        )
        columns = tuple(sorted(x for x, _ in group[0].runs)) if len(group[0].runs) > 1 else ()
        blocks.append(
            TextBlock(
                text=" ".join(ln.text for ln in group),
                rect=rect,
                font_size=group[0].font_size,
                columns=columns,
            )
        )
        group.clear()

    for line in lines:
        if group:
            prev = group[-1]
            mergeable = (
                len(line.runs) == 1
                and len(prev.runs) == 1
                and abs(line.font_size - prev.font_size) <= 0.2
                and 0 <= (prev.baseline - line.baseline) <= 1.6 * prev.font_size
                and abs(line.x0 - prev.x0) <= 2.0 * prev.font_size
            )
            if not mergeable:
                flush()
        group.append(line)
    flush()
    return blocks


def extract_text(pdf: bytes | str | Path) -> RawDocumentText:
    """Extract paragraph-level text blocks (with geometry) from a PDF.

    Accepts raw bytes or a filesystem path. Every extractable text run lands
    in exactly one block; blocks are ordered top-to-bottom per page.
    """
    if isinstance(pdf, (str, Path)):
        pdf = Path(pdf).read_bytes()
    document = parse_pdf(pdf)
    pages: list[PageBlocks] = []
    for page in document.pages:
        lines = _group_lines(page.runs)
        blocks = _merge_lines_to_blocks(lines, page.height_pt)
        for block in blocks:
            block.rect = _clamp_rect(block.rect, page.width_pt, page.height_pt)
        regions = [
            _clamp_rect(
                (img.x0, page.height_pt - img.y1, img.x1, page.height_pt - img.y0),
                page.width_pt,
                page.height_pt,
            )
            for img in page.images
        ]
        pages.append(
            PageBlocks(
                page_index=page.index,
                width_pt=page.width_pt,
                height_pt=page.height_pt,
                blocks=blocks,
                image_regions=regions,
            )
        )
    return RawDocumentText(pages=pages)


# --- structure parsing ---

def _modal_font_size(blocks: list[TextBlock]) -> float:
    weights: dict[float, int] = {}
    for block in blocks:
        size = round(block.font_size, 1)
        weights[size] = weights.get(size, 0) + len(block.text)
    if not weights:
        return 12.0
    # Heaviest size (by covered characters) wins; ties resolve smaller.
    return sorted(weights, key=lambda s: (-weights[s], s))[0]


def _heading_level(block: TextBlock, modal: float, size_ranks: dict[float, int]) -> int | None:
    match = _NUMBERED_HEADING.match(block.text)
    numbered_depth = (
        match.group(1).count(".") + 1 if match is not None and len(block.text) <= 100 else None
    )
    font_rank = None
    if block.font_size >= HEADING_FONT_RATIO * modal and not block.columns:
        font_rank = size_ranks[round(block.font_size, 1)]
    if font_rank is not None and numbered_depth is not None:
        # Font establishes the base level; deeper numbering nests below it.
        return font_rank + numbered_depth - 1
    if font_rank is not None:
        return font_rank
    return numbered_depth


def parse_structure(raw: RawDocumentText) -> SectionTree:
    """Detect headings and build the section outline.

    Headings are blocks whose font size is at least 1.15x the modal body
    size, or blocks matching a numbered-title pattern. Body text attaches to
    the nearest preceding heading; text before any heading lands on the
    synthetic root.
    """
    blocks = raw.all_blocks()
    if not blocks:
        raise EmptyInputError("document has no text blocks")
    modal = _modal_font_size(blocks)
    heading_sizes = sorted(
        {
            round(b.font_size, 1)
            for b in blocks
            if b.font_size >= HEADING_FONT_RATIO * modal and not b.columns
        },
        reverse=True,
    )
    size_ranks = {size: idx + 1 for idx, size in enumerate(heading_sizes)}

    root = SectionNode(title="", level=0)
    stack = [root]
    for block in blocks:
        level = _heading_level(block, modal, size_ranks)
        if level is None:
            stack[-1].paragraphs.append(block.text)
            continue
        while stack[-1].level >= level:
            stack.pop()
        node = SectionNode(title=block.text, level=stack[-1].level + 1)
        stack[-1].children.append(node)
        stack.append(node)
    return SectionTree(root=root)


# --- summarization ---

@dataclass(frozen=True)
class SummaryBudget:
    per_call_token_limit: int
    target_summary_tokens: int = 512

    def __post_init__(self):
        if self.per_call_token_limit <= 0 or self.target_summary_tokens <= 0:
            raise ValueError("budget values must be positive")
        if self.target_summary_tokens >= self.per_call_token_limit:
            raise ValueError("target_summary_tokens must be below per_call_token_limit")

    @property
    def content_tokens(self) -> int:
        return self.per_call_token_limit - PROMPT_OVERHEAD_TOKENS


@dataclass
class DocumentSummary:
    text: str
    mode: str  # "single-pass" | "hierarchical"
    depth: int
    calls_made: int


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def split_within_budget(text: str, limit_tokens: int) -> list[str]:
    """Split one oversized passage at paragraph, then sentence boundaries."""
    if estimate_tokens(text) <= limit_tokens:
        return [text]
    pieces: list[str] = []
    for paragraph in text.split("\n\n"):
        if estimate_tokens(paragraph) <= limit_tokens:
            pieces.append(paragraph)
            continue
        for sentence in _SENTENCE_SPLIT.split(paragraph):
            if estimate_tokens(sentence) > limit_tokens:
                raise ChunkTooLargeError(
                    f"a single sentence ({estimate_tokens(sentence)} tokens) exceeds the "
                    f"{limit_tokens}-token content budget"
                )
            pieces.append(sentence)
    return _pack_greedy(pieces, limit_tokens, joiner="\n\n")


def _pack_greedy(items: list[str], limit_tokens: int, *, joiner: str) -> list[str]:
    """Concatenate consecutive items while the joined text stays in budget."""
    groups: list[str] = []
    current = ""
    for item in items:
        candidate = item if not current else current + joiner + item
        if current and estimate_tokens(candidate) > limit_tokens:
            groups.append(current)
            current = item
        else:
            current = candidate
    if current:
        groups.append(current)
    return groups


def build_chunks(tree: SectionTree, budget: SummaryBudget) -> list[str]:
    """Section-aligned chunks, each within the content budget.

    Chunk coverage is exact: the paragraphs across all chunks are the
    tree's paragraphs, in document order, with no loss or duplication.
    """
    units: list[str] = []
    for node in tree.walk():
        unit_parts = ([node.title] if node.title else []) + list(node.paragraphs)
        if not unit_parts:
            continue
        unit = "\n\n".join(unit_parts)
        units.extend(split_within_budget(unit, budget.content_tokens))
    return _pack_greedy(units, budget.content_tokens, joiner="\n\n")


def _default_prompts():
    from autopr.prompts import load_default_prompts

    return load_default_prompts()


def hierarchical_summarize(
    tree: SectionTree,
    budget: SummaryBudget,
    gateway,
    prompts=None,
    *,
    role: ModelRole = ModelRole.TEXT_SYNTHESIS,
    seed: int | None = None,
    concurrency: int = 1,
) -> DocumentSummary:
    """Summarize a section tree within a per-call token budget.

    Content that fits the window is summarized in a single pass. Longer
    documents are split into section-aligned chunks, each chunk summarized
    independently, and the partial summaries combined level by level until
    one call suffices. Every issued request stays within the budget.
    """
    if tree.is_empty():
        raise EmptyInputError("cannot summarize an empty section tree")
    if budget.content_tokens <= 0:
        raise ConfigError("per_call_token_limit leaves no room for content")
    prompts = prompts if prompts is not None else _default_prompts()

    calls = 0
    calls_lock = threading.Lock()

    def issue(template_key: str, content: str, tag: str) -> str:
        nonlocal calls
        prompt = prompts.render(
            template_key, content=content, target_tokens=str(budget.target_summary_tokens)
        )
        if estimate_tokens(prompt) > budget.per_call_token_limit:
            raise ChunkTooLargeError("rendered prompt exceeds the per-call token limit")
        with calls_lock:
            calls += 1
        request = CompletionRequest(
            role=role,
            messages=(ChatMessage(author="user", parts=(TextPart(prompt),)),),
            max_output_tokens=budget.target_summary_tokens * 2,
            seed=derive_seed(seed, tag),
        )
        return gateway.complete(request).text

    def issue_level(template_key: str, contents: list[str], level: int) -> list[str]:
        if concurrency > 1 and len(contents) > 1:
            with ThreadPoolExecutor(max_workers=concurrency) as pool:
                return list(
                    pool.map(
                        lambda pair: issue(template_key, pair[1], f"sum:L{level}:{pair[0]}"),
                        enumerate(contents),
                    )
                )
        return [issue(template_key, c, f"sum:L{level}:{i}") for i, c in enumerate(contents)]

    full = tree.full_text()
    if estimate_tokens(full) <= budget.content_tokens:
        text = issue("summarize_chunk", full, "sum:single")
        return DocumentSummary(text=text, mode="single-pass", depth=0, calls_made=calls)

    chunks = build_chunks(tree, budget)
    summaries = issue_level("summarize_chunk", chunks, level=0)
    depth = 0
    while len(summaries) > 1:
        groups = _pack_greedy(summaries, budget.content_tokens, joiner="\n\n")
        if len(groups) >= len(summaries):
            raise ChunkTooLargeError(
                "combine level cannot merge any summaries within the budget"
            )
        depth += 1
        summaries = issue_level("summarize_combine", groups, level=depth)
    return DocumentSummary(text=summaries[0], mode="hierarchical", depth=depth, calls_made=calls)
