"""Platform adaptation (sentinel shielding, position policy) and packaging."""

import json
from pathlib import Path

import pytest
from PIL import Image

from autopr.adapt import (
    PLATFORM_PROFILES,
    PlatformProfile,
    adapt_platform,
    get_profile,
    load_packaged_post,
    package,
    validate_package,
)
from autopr.errors import (
    SentinelCorruptionError,
    UnknownPlatformError,
    UnresolvedPlaceholderError,
)
from autopr.prompts import load_default_prompts
from autopr.synthesis import FigureSegment, InterleavedDraft, TextSegment
from autopr.visual import VisualUnit

from conftest import make_mock_gateway

PROMPTS = load_default_prompts()

# An identity model: returns exactly the content between the prompt markers.
IDENTITY_SCRIPT = {"default": {"extract_between": ["---BEGIN POST---\n", "\n---END POST---"]}}


def draft_with(segments, platform="twitter") -> InterleavedDraft:
    return InterleavedDraft(platform=platform, segments=list(segments))


def make_units(tmp_path: Path, ids) -> list[VisualUnit]:
    units = []
    for i, unit_id in enumerate(ids):
        path = tmp_path / f"{unit_id}.png"
        Image.new("RGB", (30 + i, 20), (10 * i, 200, 100)).save(path)
        units.append(
            VisualUnit(
                id=unit_id,
                cls="figure",
                page_index=0,
                visual_rect=(0, 0, 30 + i, 20),
                caption=f"Figure {i}",
                caption_rect=(0, 20, 30, 30),
                asset=path,
            )
        )
    return units


# --- adapt_platform ---

def test_identity_inline_is_byte_identical():
    gateway, _ = make_mock_gateway(IDENTITY_SCRIPT)
    draft = draft_with(
        [TextSegment("Intro text"), FigureSegment("p0_figure_0"), TextSegment("Outro")],
        platform="twitter",
    )
    adapted = adapt_platform(draft, PLATFORM_PROFILES["twitter"], gateway, PROMPTS, seed=1)
    assert adapted.segments == draft.segments


def test_identity_trailing_moves_placeholders_to_end_in_order():
    gateway, _ = make_mock_gateway(IDENTITY_SCRIPT)
    draft = draft_with(
        [
            TextSegment("One"),
            FigureSegment("p0_figure_0"),
            TextSegment("Two"),
            FigureSegment("p0_figure_1"),
            TextSegment("Three"),
        ],
        platform="rednote",
    )
    adapted = adapt_platform(draft, PLATFORM_PROFILES["rednote"], gateway, PROMPTS, seed=1)
    assert adapted.segments == [
        TextSegment("One"),
        TextSegment("Two"),
        TextSegment("Three"),
        FigureSegment("p0_figure_0"),
        FigureSegment("p0_figure_1"),
    ]


def test_figure_limit_keeps_first_four():
    gateway, _ = make_mock_gateway(IDENTITY_SCRIPT)
    segments = [TextSegment("lead")]
    for i in range(6):
        segments.append(FigureSegment(f"p0_figure_{i}"))
    draft = draft_with(segments, platform="twitter")
    adapted = adapt_platform(draft, PLATFORM_PROFILES["twitter"], gateway, PROMPTS, seed=1)
    assert adapted.placeholder_ids() == [f"p0_figure_{i}" for i in range(4)]


def test_sentinel_corruption_retries_then_fails():
    # The "model" eats the sentinel line both times.
    gateway, transport = make_mock_gateway({"default": {"text": "rewrote everything away"}})
    draft = draft_with([TextSegment("text"), FigureSegment("p0_figure_0")])
    with pytest.raises(SentinelCorruptionError):
        adapt_platform(draft, PLATFORM_PROFILES["twitter"], gateway, PROMPTS, seed=1)
    assert len(transport.calls) == 2


def test_sentinel_corruption_recovers_on_retry():
    good = "kept text\n<<KEEP-0>>\nmore text"
    gateway, transport = make_mock_gateway(
        {"default": {"sequence": [{"text": "no sentinel"}, {"text": good}]}}
    )
    draft = draft_with([TextSegment("text"), FigureSegment("p0_figure_0")])
    adapted = adapt_platform(draft, PLATFORM_PROFILES["twitter"], gateway, PROMPTS, seed=1)
    assert adapted.placeholder_ids() == ["p0_figure_0"]
    assert len(transport.calls) == 2


def test_platform_mismatch_rejected():
    gateway, _ = make_mock_gateway(IDENTITY_SCRIPT)
    draft = draft_with([TextSegment("x")], platform="twitter")
    with pytest.raises(UnknownPlatformError):
        adapt_platform(draft, PLATFORM_PROFILES["rednote"], gateway, PROMPTS, seed=1)


def test_placeholder_conservation_under_identity(tmp_path):
    gateway, _ = make_mock_gateway(IDENTITY_SCRIPT)
    ids = [f"p0_figure_{i}" for i in range(3)]
    draft = draft_with(
        [TextSegment("a"), *(FigureSegment(i) for i in ids), TextSegment("b")],
        platform="rednote",
    )
    adapted = adapt_platform(draft, PLATFORM_PROFILES["rednote"], gateway, PROMPTS, seed=1)
    assert sorted(adapted.placeholder_ids()) == sorted(ids)


# --- package ---

def test_package_two_placeholders(tmp_path):
    units = make_units(tmp_path, ["p0_figure_0", "p0_figure_1"])
    draft = draft_with(
        [
            TextSegment("Hello"),
            FigureSegment("p0_figure_0"),
            TextSegment("World"),
            FigureSegment("p0_figure_1"),
        ]
    )
    out = tmp_path / "bundle"
    post = package(draft, units, out)
    assert post.markdown.count("![") == 2
    assert len(post.assets) == 2
    assert (out / "post.md").read_text() == post.markdown
    manifest = json.loads((out / "manifest.json").read_text())
    assert [m["path"] for m in manifest] == sorted(m["path"] for m in manifest)
    for record in manifest:
        assert (out / record["path"]).stat().st_size == record["bytes"]


def test_package_text_only(tmp_path):
    draft = draft_with([TextSegment("Just text")])
    post = package(draft, [], tmp_path / "bundle")
    assert "![" not in post.markdown
    assert post.assets == []
    assert json.loads((tmp_path / "bundle" / "manifest.json").read_text()) == []


def test_package_unresolved_placeholder(tmp_path):
    draft = draft_with([FigureSegment("missing_unit")])
    with pytest.raises(UnresolvedPlaceholderError):
        package(draft, [], tmp_path / "bundle")


def test_markdown_numbers_figures_by_appearance(tmp_path):
    units = make_units(tmp_path, ["p0_figure_0", "p0_figure_1"])
    draft = draft_with([FigureSegment("p0_figure_1"), FigureSegment("p0_figure_0")])
    post = package(draft, units, tmp_path / "bundle")
    lines = [l for l in post.markdown.splitlines() if l.startswith("![")]
    assert lines[0] == "![figure 1](assets/p0_figure_1.png)"
    assert lines[1] == "![figure 2](assets/p0_figure_0.png)"


# --- validate_package ---

def test_validate_clean_bundle(tmp_path):
    units = make_units(tmp_path, ["p0_figure_0"])
    draft = draft_with([TextSegment("t"), FigureSegment("p0_figure_0")])
    post = package(draft, units, tmp_path / "bundle")
    report = validate_package(post)
    assert report.ok
    assert report.violations == []


def test_validate_missing_asset_reference(tmp_path):
    units = make_units(tmp_path, ["p0_figure_0"])
    draft = draft_with([TextSegment("t"), FigureSegment("p0_figure_0")])
    post = package(draft, units, tmp_path / "bundle")
    post.markdown += "\n![broken](assets/ghost.png)\n"
    report = validate_package(post)
    assert len(report.violations) == 1
    assert "ghost.png" in report.violations[0]


def test_validate_orphan_asset(tmp_path):
    units = make_units(tmp_path, ["p0_figure_0"])
    draft = draft_with([TextSegment("t"), FigureSegment("p0_figure_0")])
    post = package(draft, units, tmp_path / "bundle")
    post.markdown = "no image tags at all\n"
    report = validate_package(post)
    assert len(report.violations) == 1
    assert "never referenced" in report.violations[0]


def test_validate_detects_tampered_asset(tmp_path):
    units = make_units(tmp_path, ["p0_figure_0"])
    draft = draft_with([TextSegment("t"), FigureSegment("p0_figure_0")])
    post = package(draft, units, tmp_path / "bundle")
    asset_path = post.root / post.assets[0].path
    asset_path.write_bytes(b"corrupted")
    report = validate_package(post)
    assert any("mismatch" in v for v in report.violations)


def test_max_chars_is_soft_warning(tmp_path):
    draft = draft_with([TextSegment("y" * 50)])
    post = package(draft, [], tmp_path / "bundle")
    tight = PlatformProfile(id="twitter", max_figures=4, placeholder_position="inline",
                            max_chars=10)
    report = validate_package(post, tight)
    assert report.ok  # warning, not violation
    assert report.warnings


def test_roundtrip_package_validate(tmp_path):
    units = make_units(tmp_path, ["p0_figure_0", "p0_figure_1", "p0_figure_2"])
    draft = draft_with(
        [
            TextSegment("intro"),
            FigureSegment("p0_figure_0"),
            FigureSegment("p0_figure_1"),
            TextSegment("middle"),
            FigureSegment("p0_figure_2"),
        ],
        platform="rednote",
    )
    post = package(draft, units, tmp_path / "bundle")
    assert validate_package(post).ok


def test_load_packaged_post_roundtrip(tmp_path):
    units = make_units(tmp_path, ["p0_figure_0"])
    draft = draft_with([TextSegment("t"), FigureSegment("p0_figure_0")])
    out = tmp_path / "bundle"
    package(draft, units, out)
    loaded = load_packaged_post(out)
    assert loaded.markdown == (out / "post.md").read_text()
    assert len(loaded.assets) == 1
    assert validate_package(loaded).ok


def test_get_profile_guard():
    with pytest.raises(UnknownPlatformError):
        get_profile("myspace")
    assert get_profile("twitter").max_figures == 4
