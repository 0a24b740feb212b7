"""Platform adaptation and publication bundle packaging.

The adaptation pass rewrites the interleaved draft's text to the platform's
norms while figure placeholders ride through the model shielded as sentinel
tokens; afterwards the placeholder-position policy and figure limit apply.
Packaging turns placeholders into Markdown image tags, copies the referenced
crops into a relocatable ``assets/`` directory, and records a hashed
manifest so bundle integrity is checkable.
"""

from __future__ import annotations

import hashlib
import json
import re
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from autopr.errors import (
    IoFailureError,
    SentinelCorruptionError,
    UnknownPlatformError,
    UnresolvedPlaceholderError,
)
from autopr.gateway import ChatMessage, CompletionRequest, ModelRole, TextPart, derive_seed
from autopr.synthesis import FigureSegment, InterleavedDraft, TextSegment

__all__ = [
    "PlatformProfile",
    "PLATFORM_PROFILES",
    "get_profile",
    "AssetRecord",
    "PackagedPost",
    "ValidationReport",
    "adapt_platform",
    "package",
    "validate_package",
    "load_packaged_post",
]


@dataclass(frozen=True)
class PlatformProfile:
    id: str
    max_figures: int
    placeholder_position: str  # "inline" | "trailing"
    max_chars: int | None = None

    def __post_init__(self):
        if self.max_figures < 1:
            raise ValueError("max_figures must be at least 1")
        if self.placeholder_position not in ("inline", "trailing"):
            raise ValueError(f"unknown placeholder position {self.placeholder_position!r}")


# Twitter allows four images per post and reads figures inline with the
# thread; rednote posts carry a trailing gallery of three or four images.
PLATFORM_PROFILES = {
    "twitter": PlatformProfile(
        id="twitter", max_figures=4, placeholder_position="inline", max_chars=25_000
    ),
    "rednote": PlatformProfile(
        id="rednote", max_figures=4, placeholder_position="trailing", max_chars=None
    ),
}


def get_profile(platform: str) -> PlatformProfile:
    profile = PLATFORM_PROFILES.get(platform)
    if profile is None:
        raise UnknownPlatformError(f"unknown platform {platform!r}")
    return profile


_SENTINEL_TEMPLATE = "<<KEEP-{index}>>"
_SENTINEL_LINE = re.compile(r"^\s*<<KEEP-(\d+)>>\s*$")


def _clamp_figures(draft: InterleavedDraft, limit: int) -> InterleavedDraft:
    kept = InterleavedDraft(platform=draft.platform, warnings=list(draft.warnings))
    count = 0
    for segment in draft.segments:
        if isinstance(segment, FigureSegment):
            count += 1
            if count > limit:
                continue
        kept.segments.append(segment)
    return kept


def _flatten_with_sentinels(draft: InterleavedDraft) -> tuple[str, list[str]]:
    parts: list[str] = []
    unit_ids: list[str] = []
    for segment in draft.segments:
        if isinstance(segment, TextSegment):
            parts.append(segment.text)
        else:
            parts.append(_SENTINEL_TEMPLATE.format(index=len(unit_ids)))
            unit_ids.append(segment.unit_id)
    return "\n".join(parts), unit_ids


def _rebuild_from_sentinels(
    text: str, unit_ids: list[str], platform: str
) -> InterleavedDraft | None:
    """Split adapted text back into segments; None when sentinels are damaged."""
    draft = InterleavedDraft(platform=platform)
    buffer: list[str] = []
    seen: list[int] = []

    def flush():
        chunk = "\n".join(buffer)
        buffer.clear()
        chunk = chunk.strip("\n")
        if chunk.strip():
            draft.segments.append(TextSegment(chunk))

    for line in text.splitlines():
        match = _SENTINEL_LINE.match(line)
        if match is None:
            buffer.append(line)
            continue
        index = int(match.group(1))
        if index >= len(unit_ids) or index in seen:
            return None
        flush()
        seen.append(index)
        draft.segments.append(FigureSegment(unit_ids[index]))
    flush()
    if len(seen) != len(unit_ids) or seen != sorted(seen):
        return None
    return draft


def _apply_position_policy(draft: InterleavedDraft, profile: PlatformProfile) -> InterleavedDraft:
    if profile.placeholder_position == "inline":
        return draft
    texts = [s for s in draft.segments if isinstance(s, TextSegment)]
    figures = [s for s in draft.segments if isinstance(s, FigureSegment)]
    return InterleavedDraft(
        platform=draft.platform, segments=[*texts, *figures], warnings=list(draft.warnings)
    )


def adapt_platform(
    draft: InterleavedDraft,
    profile: PlatformProfile,
    gateway,
    prompts,
    *,
    role: ModelRole = ModelRole.TEXT_SYNTHESIS,
    temperature: float = 0.7,
    seed: int | None = None,
) -> InterleavedDraft:
    """Rewrite the draft text to platform norms, preserving figure anchors.

    Placeholders are substituted with sentinel tokens before the model sees
    the text and restored afterwards; a damaged sentinel triggers one retry,
    then fails. The figure limit is enforced before adaptation and the
    placeholder-position policy after.
    """
    if draft.platform != profile.id:
        raise UnknownPlatformError(
            f"draft platform {draft.platform!r} does not match profile {profile.id!r}"
        )
    key = f"adapt_{profile.id}"
    clamped = _clamp_figures(draft, profile.max_figures)
    flattened, unit_ids = _flatten_with_sentinels(clamped)
    prompt = prompts.render(key, content=flattened)

    rebuilt = None
    for attempt in range(2):
        result = gateway.complete(
            CompletionRequest(
                role=role,
                messages=(ChatMessage(author="user", parts=(TextPart(prompt),)),),
                temperature=temperature,
                max_output_tokens=4096,
                seed=derive_seed(seed, f"adapt:{attempt}"),
            )
        )
        rebuilt = _rebuild_from_sentinels(result.text, unit_ids, profile.id)
        if rebuilt is not None:
            break
    if rebuilt is None:
        raise SentinelCorruptionError(
            "adaptation model altered shielded placeholder tokens twice"
        )
    rebuilt.warnings = list(clamped.warnings)
    return _apply_position_policy(rebuilt, profile)


# --- packaging ---

@dataclass(frozen=True)
class AssetRecord:
    path: str  # bundle-relative, e.g. "assets/p0_figure_0.png"
    size_bytes: int
    sha256: str


@dataclass
class PackagedPost:
    markdown: str
    assets: list[AssetRecord]
    platform: str
    root: Path | None = None

    def has_images(self) -> bool:
        return bool(self.assets)

    def image_paths(self) -> list[Path]:
        if self.root is None:
            return []
        return [self.root / record.path for record in self.assets]


_IMAGE_TAG = re.compile(r"!\[[^\]]*\]\(([^)]+)\)")


def _sha256_file(path: Path) -> str:
    hasher = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


def package(
    draft: InterleavedDraft, units, out_dir: str | Path
) -> PackagedPost:
    """Write the publication bundle: post.md, assets/, manifest.json.

    Placeholders become Markdown image tags pointing into the relative
    ``assets/`` directory; referenced crops are copied in and recorded in a
    hashed manifest. Text-only drafts produce a bundle with no image tags
    and an empty manifest.
    """
    out_dir = Path(out_dir)
    by_id = {unit.id: unit for unit in units}
    for unit_id in draft.placeholder_ids():
        if unit_id not in by_id or by_id[unit_id].asset is None:
            raise UnresolvedPlaceholderError(f"placeholder {unit_id!r} has no visual unit")

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailureError(f"cannot create bundle directory {out_dir}: {exc}") from exc

    chunks: list[str] = []
    records: list[AssetRecord] = []
    copied: set[str] = set()
    figure_number = 0
    for segment in draft.segments:
        if isinstance(segment, TextSegment):
            chunks.append(segment.text)
            continue
        unit = by_id[segment.unit_id]
        figure_number += 1
        rel_path = f"assets/{Path(unit.asset).name}"
        if rel_path not in copied:
            copied.add(rel_path)
            target = out_dir / rel_path
            try:
                target.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(unit.asset, target)
            except OSError as exc:
                raise IoFailureError(f"cannot copy asset {unit.asset}: {exc}") from exc
            records.append(
                AssetRecord(
                    path=rel_path,
                    size_bytes=target.stat().st_size,
                    sha256=_sha256_file(target),
                )
            )
        chunks.append(f"![{unit.cls} {figure_number}](assets/{Path(unit.asset).name})")

    markdown = "\n\n".join(chunks) + "\n"
    records.sort(key=lambda r: r.path)
    post = PackagedPost(markdown=markdown, assets=records, platform=draft.platform, root=out_dir)
    try:
        (out_dir / "post.md").write_text(markdown)
        (out_dir / "manifest.json").write_text(
            json.dumps(
                [
                    {"path": r.path, "bytes": r.size_bytes, "sha256": r.sha256}
                    for r in records
                ],
                indent=2,
            )
            + "\n"
        )
    except OSError as exc:
        raise IoFailureError(f"cannot write bundle files: {exc}") from exc
    return post


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_package(post: PackagedPost, profile: PlatformProfile | None = None) -> ValidationReport:
    """Check bundle invariants: tag/manifest agreement and asset integrity.

    An over-length post (when the platform caps characters) is a soft
    warning, not a violation; thread splitting is out of scope.
    """
    report = ValidationReport()
    referenced = [m.group(1) for m in _IMAGE_TAG.finditer(post.markdown)]
    manifest_paths = {record.path for record in post.assets}

    for path in referenced:
        if path not in manifest_paths:
            report.violations.append(f"markdown references {path!r} not in manifest")
    for record in post.assets:
        if record.path not in referenced:
            report.violations.append(f"manifest asset {record.path!r} is never referenced")
        if post.root is not None:
            target = post.root / record.path
            if not target.is_file():
                report.violations.append(f"asset file missing: {record.path}")
            elif (
                target.stat().st_size != record.size_bytes
                or _sha256_file(target) != record.sha256
            ):
                report.violations.append(f"asset content mismatch: {record.path}")

    if profile is None and post.platform in PLATFORM_PROFILES:
        profile = PLATFORM_PROFILES[post.platform]
    if profile is not None and profile.max_chars is not None:
        if len(post.markdown) > profile.max_chars:
            report.warnings.append(
                f"post length {len(post.markdown)} exceeds platform cap {profile.max_chars}"
            )
    return report


def load_packaged_post(bundle_dir: str | Path) -> PackagedPost:
    """Read a bundle from disk (post.md + manifest.json)."""
    bundle_dir = Path(bundle_dir)
    post_path = bundle_dir / "post.md"
    manifest_path = bundle_dir / "manifest.json"
    if not post_path.is_file():
        raise IoFailureError(f"no post.md under {bundle_dir}")
    markdown = post_path.read_text()
    records: list[AssetRecord] = []
    if manifest_path.is_file():
        for entry in json.loads(manifest_path.read_text()):
            records.append(
                AssetRecord(
                    path=entry["path"],
                    size_bytes=int(entry["bytes"]),
                    sha256=entry["sha256"],
                )
            )
    platform = ""
    meta_path = bundle_dir / "meta.json"
    if meta_path.is_file():
        platform = json.loads(meta_path.read_text()).get("platform", "")
    return PackagedPost(markdown=markdown, assets=records, platform=platform, root=bundle_dir)
