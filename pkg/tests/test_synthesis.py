"""Stage-2 agents: drafting, vision analysis, enrichment, combination, baseline."""

from pathlib import Path

import pytest
from PIL import Image

from autopr.errors import (
    EmptyAnalysisError,
    StructureValidationError,
    UnknownPlatformError,
)
from autopr.ingest import DocumentSummary
from autopr.prompts import load_default_prompts
from autopr.synthesis import (
    BASELINE_INSTRUCTION,
    BASELINE_TRUNCATION_CHARS,
    FigureSegment,
    TextSegment,
    analyze_visual,
    analyze_visuals,
    baseline_promote,
    combine_interleaved,
    draft_logical,
    enrich_text,
    parse_draft,
)
from autopr.visual import VisualUnit

from conftest import make_mock_gateway

PROMPTS = load_default_prompts()

GOOD_DRAFT = """# Post Title: Gadgets, Faster
Authors: Ada Lovelace (Analytical Engines Inc.)
Paper: On the Acceleration of Gadgets
Source: arXiv

## Research Question
How can gadgets go faster without melting?

## Core Contributions
A cooling trick that doubles speed.

## Key Method
Dynamic thermal budgeting across cores.

## Key Results
2.1x speedup on the gadget suite.
"""

SUMMARY = DocumentSummary(text="A digest of the paper.", mode="single-pass", depth=0, calls_made=1)


def unit_with_asset(tmp_path: Path, unit_id="p0_figure_0", caption="Figure 1: x") -> VisualUnit:
    path = tmp_path / f"{unit_id}.png"
    Image.new("RGB", (40, 30), (90, 90, 200)).save(path)
    return VisualUnit(
        id=unit_id,
        cls="figure",
        page_index=0,
        visual_rect=(0, 0, 40, 30),
        caption=caption,
        caption_rect=(0, 30, 40, 40) if caption else None,
        asset=path,
    )


# --- draft_logical ---

def test_well_formed_draft_parses_four_sections():
    gateway, transport = make_mock_gateway({"default": {"text": GOOD_DRAFT}})
    draft = draft_logical(SUMMARY, gateway, PROMPTS, seed=1)
    assert set(draft.sections) == {
        "research-question", "core-contributions", "key-method", "key-results"
    }
    assert draft.header.post_title == "Gadgets, Faster"
    assert draft.header.authors == "Ada Lovelace (Analytical Engines Inc.)"
    assert len(transport.calls) == 1


def test_missing_section_retried_once_then_succeeds():
    incomplete = GOOD_DRAFT.replace("## Key Results\n2.1x speedup on the gadget suite.\n", "")
    gateway, transport = make_mock_gateway(
        {"default": {"sequence": [{"text": incomplete}, {"text": GOOD_DRAFT}]}}
    )
    draft = draft_logical(SUMMARY, gateway, PROMPTS, seed=1)
    assert draft.sections["key-results"]
    assert len(transport.calls) == 2
    assert "missing these required sections" in str(transport.calls[1])


def test_two_failures_raise_structure_validation():
    incomplete = "# Post Title: X\n## Research Question\nonly one section"
    gateway, transport = make_mock_gateway({"default": {"text": incomplete}})
    with pytest.raises(StructureValidationError):
        draft_logical(SUMMARY, gateway, PROMPTS, seed=1)
    assert len(transport.calls) == 2


def test_parse_draft_accepts_decorated_headings():
    text = GOOD_DRAFT.replace("## Core Contributions", "## 🚀 Core Contributions")
    parsed = parse_draft(text)
    assert parsed.sections["core-contributions"] == "A cooling trick that doubles speed."


# --- analyze_visual ---

def test_stub_vision_passthrough(tmp_path):
    gateway, transport = make_mock_gateway({"default": {"text": "shows accuracy rising"}})
    unit = unit_with_asset(tmp_path)
    analysis = analyze_visual(unit, gateway, PROMPTS, seed=2)
    assert analysis.unit_id == unit.id
    assert analysis.analysis == "shows accuracy rising"
    payload = transport.calls[0]
    kinds = [p["type"] for p in payload["messages"][-1]["content"]]
    assert "image_url" in kinds


def test_empty_caption_unit_still_succeeds(tmp_path):
    gateway, _ = make_mock_gateway({"default": {"text": "an uncaptioned figure"}})
    unit = unit_with_asset(tmp_path, caption="")
    unit.caption_rect = None
    analysis = analyze_visual(unit, gateway, PROMPTS, seed=2)
    assert analysis.analysis


def test_empty_analysis_rejected(tmp_path):
    gateway, _ = make_mock_gateway({"default": {"text": "   "}})
    unit = unit_with_asset(tmp_path)
    with pytest.raises(EmptyAnalysisError):
        analyze_visual(unit, gateway, PROMPTS, seed=2)


def test_concurrent_analyses_bijective_with_inputs(tmp_path):
    gateway, _ = make_mock_gateway({"default": {"echo_last_user": True}})
    units = [unit_with_asset(tmp_path, unit_id=f"p0_figure_{i}", caption=f"Figure {i}: c")
             for i in range(3)]
    analyses = analyze_visuals(units, gateway, PROMPTS, seed=3, concurrency=3)
    assert [a.unit_id for a in analyses] == [u.id for u in units]
    assert sorted(a.unit_id for a in analyses) == sorted(u.id for u in units)


# --- enrich_text ---

def make_draft() -> "LogicalDraft":
    return parse_draft(GOOD_DRAFT)


def test_enrich_routes_platform():
    gateway, _ = make_mock_gateway({"default": {"text": "A post with #hashtags"}})
    post = enrich_text(make_draft(), SUMMARY, "twitter", gateway, PROMPTS, seed=4)
    assert post.platform == "twitter"
    assert post.warnings == []


def test_enrich_unknown_platform_guard():
    gateway, _ = make_mock_gateway()
    with pytest.raises(UnknownPlatformError):
        enrich_text(make_draft(), SUMMARY, "myspace", gateway, PROMPTS, seed=4)


def test_enrich_hashtag_free_output_warns_but_returns():
    gateway, _ = make_mock_gateway({"default": {"text": "No tags whatsoever."}})
    post = enrich_text(make_draft(), SUMMARY, "twitter", gateway, PROMPTS, seed=4)
    assert post.text == "No tags whatsoever."
    assert any("hashtag" in w for w in post.warnings)


def test_enrich_strips_placeholder_lines():
    gateway, _ = make_mock_gateway(
        {"default": {"text": "Intro #ok\n[[FIGURE:p0_figure_0]]\nOutro"}}
    )
    post = enrich_text(make_draft(), SUMMARY, "twitter", gateway, PROMPTS, seed=4)
    assert "[[FIGURE" not in post.text
    assert any("placeholder" in w for w in post.warnings)


# --- combine_interleaved ---

def analyses_for(ids):
    from autopr.synthesis import VisualAnalysis

    return [VisualAnalysis(unit_id=i, analysis=f"analysis of {i}") for i in ids]


def test_combine_segments_oracle():
    output = (
        "Opening hook\n"
        "[[FIGURE:p0_figure_0]]\n"
        "Middle text\n"
        "[[FIGURE:p0_figure_1]]\n"
        "Closing #tag"
    )
    gateway, _ = make_mock_gateway({"default": {"text": output}})
    from autopr.synthesis import EnrichedPost

    draft = combine_interleaved(
        EnrichedPost(platform="twitter", text="styled"),
        make_draft(),
        analyses_for(["p0_figure_0", "p0_figure_1"]),
        "twitter",
        gateway,
        PROMPTS,
        seed=5,
    )
    kinds = [type(s).__name__ for s in draft.segments]
    assert kinds == ["TextSegment", "FigureSegment", "TextSegment", "FigureSegment",
                     "TextSegment"]
    assert draft.placeholder_ids() == ["p0_figure_0", "p0_figure_1"]


def test_combine_drops_unknown_placeholder():
    output = "Text\n[[FIGURE:nonexistent]]\nMore"
    gateway, _ = make_mock_gateway({"default": {"text": output}})
    from autopr.synthesis import EnrichedPost

    draft = combine_interleaved(
        EnrichedPost(platform="twitter", text="styled"),
        make_draft(),
        analyses_for(["p0_figure_0"]),
        "twitter",
        gateway,
        PROMPTS,
        seed=5,
    )
    assert draft.placeholder_ids() == []
    assert any("unknown unit" in w for w in draft.warnings)
    assert draft.text_content() == "Text\nMore"


def test_combine_empty_analyses_text_only():
    gateway, _ = make_mock_gateway({"default": {"text": "Just text, no figures."}})
    from autopr.synthesis import EnrichedPost

    draft = combine_interleaved(
        EnrichedPost(platform="rednote", text="styled"),
        make_draft(),
        [],
        "rednote",
        gateway,
        PROMPTS,
        seed=5,
    )
    assert draft.placeholder_ids() == []
    assert len(draft.segments) == 1


def test_combine_clamps_to_figure_limit():
    ids = [f"p0_figure_{i}" for i in range(6)]
    output = "\n".join(f"[[FIGURE:{i}]]" for i in ids)
    gateway, _ = make_mock_gateway({"default": {"text": "lead\n" + output}})
    from autopr.synthesis import EnrichedPost

    draft = combine_interleaved(
        EnrichedPost(platform="twitter", text="styled"),
        make_draft(),
        analyses_for(ids),
        "twitter",
        gateway,
        PROMPTS,
        seed=5,
        max_figures=4,
    )
    assert draft.placeholder_ids() == ids[:4]


# --- baseline ---

def test_baseline_truncates_to_exactly_80k():
    gateway, transport = make_mock_gateway({"default": {"text": "a post"}})
    raw = "x" * (BASELINE_TRUNCATION_CHARS + 1)  # 80,001 chars
    baseline_promote(raw, "twitter", gateway, seed=6)
    payload_text = transport.calls[0]["messages"][0]["content"][0]["text"]
    assert payload_text == f"{BASELINE_INSTRUCTION}\n\n" + "x" * BASELINE_TRUNCATION_CHARS


def test_baseline_short_input_unmodified():
    gateway, transport = make_mock_gateway({"default": {"text": "a post"}})
    baseline_promote("short text", "twitter", gateway, seed=6)
    payload_text = transport.calls[0]["messages"][0]["content"][0]["text"]
    assert payload_text == f"{BASELINE_INSTRUCTION}\n\nshort text"


def test_baseline_echo_round_trip():
    gateway, _ = make_mock_gateway({"default": {"echo_last_user": True}})
    post = baseline_promote("the paper text", "rednote", gateway, seed=6)
    assert post.text.endswith("the paper text")
    assert post.platform == "rednote"
