"""Benchmark harness: dataset loading, evaluation orchestration, aggregation.

A dataset manifest pairs source PDFs with reference posts and weighted
factual checklists. Evaluating one candidate runs the full criterion suite
(rubrics with repeat averaging, the factual checklist, and three pairwise
perspectives against the reference), assembles the three dimension scores,
and folds them into a weighted composite. Aggregation produces the
table-shaped CSV summary plus a JSON report.

Also here: the human-score consensus rule used during annotation and the
Pearson/Spearman coefficients used to validate a judge against humans.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from autopr.adapt import PackagedPost
from autopr.errors import (
    ConsensusInputError,
    CorrelationError,
    DuplicateIdError,
    EmptyInputError,
    LengthMismatchError,
    MissingFileError,
    SchemaViolationError,
    UnknownPlatformError,
)
from autopr.judge import (
    CRITERIA,
    ChecklistItem,
    compare_pair,
    score_authorship_title,
    score_checklist,
    score_rubric,
    win_rate,
)

__all__ = [
    "ReferencePost",
    "BenchPair",
    "CompositeWeights",
    "EvalReport",
    "ConsensusResult",
    "load_dataset",
    "merge_human_scores",
    "evaluate_post",
    "compute_correlation",
    "aggregate",
    "AggregateSummary",
    "CRITERION_ORDER",
]

# Report/CSV column order mirrors the benchmark table: fidelity pair,
# engagement block, alignment block.
CRITERION_ORDER = [
    "authorship-title",
    "checklist",
    "hook",
    "logical-attr",
    "visual-attr",
    "cta",
    "prof-pref",
    "broad-pref",
    "context-rel",
    "vis-txt-integ",
    "hashtag",
    "plat-pref",
]

ENGAGEMENT_MEMBERS = ["hook", "logical-attr", "visual-attr", "cta", "prof-pref", "broad-pref"]
ALIGNMENT_MEMBERS = ["context-rel", "vis-txt-integ", "hashtag", "plat-pref"]

KNOWN_PLATFORMS = ("twitter", "rednote")


@dataclass
class ReferencePost:
    text: str
    images: list = field(default_factory=list)


@dataclass
class BenchPair:
    paper_id: str
    pdf: Path
    platform: str
    reference_post: ReferencePost
    checklist: list
    human_scores: dict | None = None


@dataclass(frozen=True)
class CompositeWeights:
    alpha_fidelity: float = 1 / 3
    alpha_align: float = 1 / 3
    alpha_engage: float = 1 / 3

    def __post_init__(self):
        values = (self.alpha_fidelity, self.alpha_align, self.alpha_engage)
        if any(v < 0 for v in values):
            raise ValueError("composite weights must be non-negative")
        if sum(values) == 0:
            raise ValueError("composite weights must not all be zero")

    @classmethod
    def parse(cls, text: str) -> "CompositeWeights":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError("expected three comma-separated weights")
        return cls(*(float(p) for p in parts))


@dataclass
class EvalReport:
    paper_id: str
    platform: str
    criteria: dict  # criterion id -> normalized score (0-100), present keys only
    fidelity: float
    engagement: float
    alignment: float
    composite: float
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "paper_id": self.paper_id,
            "platform": self.platform,
            "criteria": dict(self.criteria),
            "dimensions": {
                "fidelity": self.fidelity,
                "engagement": self.engagement,
                "alignment": self.alignment,
            },
            "composite": self.composite,
            "skipped": list(self.skipped),
        }


# --- dataset ---

def _fail(index: int, field_name: str, message: str) -> SchemaViolationError:
    return SchemaViolationError(f"pairs[{index}].{field_name}: {message}")


def load_dataset(path: str | Path) -> list[BenchPair]:
    """Load and validate a dataset manifest.

    Referenced files must exist (relative paths resolve against the manifest
    directory) and paper ids must be unique.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"dataset manifest not found: {path}")
    try:
        data = json.loads(path.read_text())
    except ValueError as exc:
        raise SchemaViolationError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("pairs"), list):
        raise SchemaViolationError("manifest must be an object with a 'pairs' list")

    base = path.parent
    pairs: list[BenchPair] = []
    seen_ids: set[str] = set()
    for index, entry in enumerate(data["pairs"]):
        if not isinstance(entry, dict):
            raise _fail(index, "", "record is not an object")
        paper_id = entry.get("paper_id")
        if not isinstance(paper_id, str) or not paper_id:
            raise _fail(index, "paper_id", "must be a non-empty string")
        if paper_id in seen_ids:
            raise DuplicateIdError(f"duplicate paper_id {paper_id!r} at pairs[{index}]")
        seen_ids.add(paper_id)

        platform = entry.get("platform")
        if platform not in KNOWN_PLATFORMS:
            raise _fail(index, "platform", f"must be one of {KNOWN_PLATFORMS}")

        pdf_field = entry.get("pdf")
        if not isinstance(pdf_field, str) or not pdf_field:
            raise _fail(index, "pdf", "must be a path string")
        pdf_path = (base / pdf_field).resolve()
        if not pdf_path.is_file():
            raise MissingFileError(f"pairs[{index}].pdf: file not found: {pdf_path}")

        ref = entry.get("reference_post")
        if not isinstance(ref, dict) or not isinstance(ref.get("text"), str):
            raise _fail(index, "reference_post", "must be an object with a 'text' string")
        images = []
        for j, img in enumerate(ref.get("images", []) or []):
            img_path = (base / img).resolve()
            if not img_path.is_file():
                raise MissingFileError(
                    f"pairs[{index}].reference_post.images[{j}]: file not found: {img_path}"
                )
            images.append(img_path)

        checklist_field = entry.get("checklist")
        if not isinstance(checklist_field, list) or not checklist_field:
            raise _fail(index, "checklist", "must be a non-empty list")
        checklist = []
        for j, item in enumerate(checklist_field):
            description = item.get("description") if isinstance(item, dict) else None
            weight = item.get("weight") if isinstance(item, dict) else None
            if not isinstance(description, str) or not description:
                raise _fail(index, f"checklist[{j}].description", "must be a non-empty string")
            if not isinstance(weight, int) or isinstance(weight, bool) or not 1 <= weight <= 5:
                raise _fail(index, f"checklist[{j}].weight", "must be an integer in [1, 5]")
            checklist.append(ChecklistItem(description=description, weight=weight))

        human_scores = entry.get("human_scores")
        if human_scores is not None:
            if not isinstance(human_scores, dict):
                raise _fail(index, "human_scores", "must be an object")
            for crit, scores in human_scores.items():
                if (
                    not isinstance(scores, list)
                    or len(scores) != 3
                    or not all(isinstance(s, int) and 0 <= s <= 5 for s in scores)
                ):
                    raise _fail(
                        index, f"human_scores[{crit}]", "must be three integers in [0, 5]"
                    )

        pairs.append(
            BenchPair(
                paper_id=paper_id,
                pdf=pdf_path,
                platform=platform,
                reference_post=ReferencePost(text=ref["text"], images=images),
                checklist=checklist,
                human_scores=human_scores,
            )
        )
    return pairs


# --- human-score consensus ---

@dataclass
class ConsensusResult:
    consensus: float | None
    needs_deliberation: bool


def merge_human_scores(scores) -> ConsensusResult:
    """Panel-of-three consensus: mean when the spread is small.

    A spread (max - min) of at most 2 points averages out; a larger spread
    is flagged for deliberative reconciliation instead of silently merged.
    """
    scores = list(scores)
    if len(scores) != 3:
        raise ConsensusInputError(f"expected exactly 3 scores, got {len(scores)}")
    for s in scores:
        if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s <= 5:
            raise ConsensusInputError(f"scores must be integers in [0, 5], got {s!r}")
    if max(scores) - min(scores) <= 2:
        return ConsensusResult(consensus=sum(scores) / 3, needs_deliberation=False)
    return ConsensusResult(consensus=None, needs_deliberation=True)


# --- evaluation ---

def _mean_present(values: list[float]) -> float:
    return sum(values) / len(values)


def composite_score(
    fidelity: float, engagement: float, alignment: float, weights: CompositeWeights
) -> float:
    total = weights.alpha_fidelity + weights.alpha_align + weights.alpha_engage
    return (
        weights.alpha_fidelity * fidelity
        + weights.alpha_align * alignment
        + weights.alpha_engage * engagement
    ) / total


def evaluate_post(
    candidate: PackagedPost,
    pair: BenchPair,
    weights: CompositeWeights,
    gateway,
    prompts,
    *,
    temperature: float = 0.3,
    seed: int | None = None,
) -> EvalReport:
    """Run the full criterion suite for one candidate against its pair.

    Image-requiring criteria are skipped (and listed) for text-only
    candidates; dimension means are taken over the present members only,
    mirroring how benchmark tables blank those cells.
    """
    if candidate.platform != pair.platform:
        raise UnknownPlatformError(
            f"candidate platform {candidate.platform!r} != pair platform {pair.platform!r}"
        )
    criteria: dict[str, float] = {}
    skipped: list[str] = []

    authorship = score_authorship_title(
        candidate, gateway, prompts, temperature=temperature, seed=seed
    )
    criteria["authorship-title"] = authorship.normalized
    criteria["checklist"] = (
        score_checklist(
            candidate, pair.checklist, gateway, prompts, temperature=temperature, seed=seed
        )
        * 100.0
    )

    for criterion_id in ("hook", "logical-attr", "visual-attr", "cta",
                         "context-rel", "vis-txt-integ", "hashtag"):
        criterion = CRITERIA[criterion_id]
        if criterion.requires_images and not candidate.has_images():
            skipped.append(criterion_id)
            continue
        result = score_rubric(
            candidate,
            criterion,
            gateway,
            prompts,
            platform=pair.platform,
            temperature=temperature,
            seed=seed,
        )
        criteria[criterion_id] = result.normalized

    for criterion_id, perspective in (
        ("prof-pref", "professional-interest"),
        ("broad-pref", "broader-interest"),
        ("plat-pref", "platform-interest"),
    ):
        judgment = compare_pair(
            candidate,
            pair.reference_post,
            perspective,
            gateway,
            prompts,
            platform=pair.platform,
            temperature=temperature,
            seed=seed,
        )
        criteria[criterion_id] = win_rate([judgment])

    fidelity = _mean_present([criteria["authorship-title"], criteria["checklist"]])
    engagement = _mean_present([criteria[c] for c in ENGAGEMENT_MEMBERS if c in criteria])
    alignment = _mean_present([criteria[c] for c in ALIGNMENT_MEMBERS if c in criteria])
    return EvalReport(
        paper_id=pair.paper_id,
        platform=pair.platform,
        criteria=criteria,
        fidelity=fidelity,
        engagement=engagement,
        alignment=alignment,
        composite=composite_score(fidelity, engagement, alignment, weights),
        skipped=skipped,
    )


# --- judge validation ---

def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=float)
    sorted_values = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = float(np.sqrt((xc * xc).sum() * (yc * yc).sum()))
    if denom == 0.0:
        raise CorrelationError("correlation undefined for constant input")
    return float((xc * yc).sum() / denom)


def compute_correlation(xs, ys) -> tuple[float, float]:
    """Pearson and Spearman (average-rank ties) coefficients."""
    x = np.asarray(list(xs), dtype=float)
    y = np.asarray(list(ys), dtype=float)
    if len(x) != len(y):
        raise LengthMismatchError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise CorrelationError("need at least 3 points")
    pearson = _pearson(x, y)
    spearman = _pearson(_average_ranks(x), _average_ranks(y))
    return (pearson, spearman)


# --- aggregation ---

DIMENSION_COLUMNS = ["fidelity", "engagement", "alignment", "composite"]


@dataclass
class AggregateSummary:
    criterion_means: dict  # criterion id -> mean over reports where present
    dimension_means: dict
    average: float  # mean of the present per-criterion means

    def to_dict(self) -> dict:
        return {
            "criterion_means": dict(self.criterion_means),
            "dimension_means": dict(self.dimension_means),
            "average": self.average,
        }


def aggregate(reports) -> AggregateSummary:
    """Masked per-criterion means plus their overall average."""
    reports = list(reports)
    if not reports:
        raise EmptyInputError("no reports to aggregate")
    criterion_means: dict[str, float] = {}
    for criterion_id in CRITERION_ORDER:
        values = [r.criteria[criterion_id] for r in reports if criterion_id in r.criteria]
        if values:
            criterion_means[criterion_id] = _mean_present(values)
    dimension_means = {
        "fidelity": _mean_present([r.fidelity for r in reports]),
        "engagement": _mean_present([r.engagement for r in reports]),
        "alignment": _mean_present([r.alignment for r in reports]),
        "composite": _mean_present([r.composite for r in reports]),
    }
    average = _mean_present(list(criterion_means.values()))
    return AggregateSummary(
        criterion_means=criterion_means, dimension_means=dimension_means, average=average
    )


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def summary_csv(reports) -> str:
    """Table-shaped CSV: one row per report plus a final mean row."""
    reports = list(reports)
    if not reports:
        raise EmptyInputError("no reports to summarize")
    summary = aggregate(reports)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    header = (
        ["paper_id"]
        + [c.replace("-", "_") for c in CRITERION_ORDER]
        + DIMENSION_COLUMNS
        + ["avg"]
    )
    writer.writerow(header)
    for report in reports:
        row_values = [report.criteria.get(c) for c in CRITERION_ORDER]
        present = [v for v in row_values if v is not None]
        writer.writerow(
            [report.paper_id]
            + [_fmt(v) for v in row_values]
            + [
                _fmt(report.fidelity),
                _fmt(report.engagement),
                _fmt(report.alignment),
                _fmt(report.composite),
            ]
            + [_fmt(_mean_present(present))]
        )
    writer.writerow(
        ["mean"]
        + [_fmt(summary.criterion_means.get(c)) for c in CRITERION_ORDER]
        + [_fmt(summary.dimension_means[d]) for d in DIMENSION_COLUMNS]
        + [_fmt(summary.average)]
    )
    return buffer.getvalue()
