"""LLM-as-judge primitives: rubric scoring, factual checklists, pairwise preference.

Scalar criteria are scored by querying the judge several times (three by
default) and averaging; the weighted factual checklist follows the
weighted-mean formula; pairwise preference presents each pair twice in
swapped order and records a tie when the picks disagree, which neutralizes
positional bias by construction.

Judge output parsing is deterministic: the last in-range number is the
rating (the prompts ask for a trailing "Score: X" line), an unparseable
response earns exactly one re-ask, then the call fails.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from autopr.adapt import PackagedPost
from autopr.errors import (
    EmptyChecklistError,
    EmptyInputError,
    ImagesRequiredError,
    PickUnparseableError,
    RatingUnparseableError,
    VerdictUnparseableError,
)
from autopr.gateway import (
    ChatMessage,
    CompletionRequest,
    ImagePart,
    ModelRole,
    TextPart,
    derive_seed,
)

__all__ = [
    "RubricCriterion",
    "CRITERIA",
    "RubricResult",
    "ChecklistItem",
    "Verdict",
    "PreferenceJudgment",
    "PERSPECTIVES",
    "score_rubric",
    "score_checklist",
    "weighted_checklist_score",
    "score_authorship_title",
    "compare_pair",
    "win_rate",
]


@dataclass(frozen=True)
class RubricCriterion:
    id: str
    prompt_key: str
    scale_max: float = 5.0
    repeats: int = 3
    requires_images: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.scale_max <= 0:
            raise ValueError("scale_max must be positive")


CRITERIA = {
    "hook": RubricCriterion("hook", "judge_hook"),
    "logical-attr": RubricCriterion("logical-attr", "judge_logical_attr"),
    "visual-attr": RubricCriterion("visual-attr", "judge_visual_attr", requires_images=True),
    "cta": RubricCriterion("cta", "judge_cta"),
    "context-rel": RubricCriterion("context-rel", "judge_context_rel"),
    "vis-txt-integ": RubricCriterion("vis-txt-integ", "judge_vis_txt_integ", requires_images=True),
    "hashtag": RubricCriterion("hashtag", "judge_hashtag"),
    "authorship-title": RubricCriterion("authorship-title", "judge_authorship_title"),
}

PERSPECTIVES = {
    "platform-interest": "judge_pair_platform",
    "professional-interest": "judge_pair_professional",
    "broader-interest": "judge_pair_broader",
}


@dataclass
class RubricResult:
    criterion_id: str
    ratings: list[float]
    mean: float
    normalized: float  # mean / scale_max * 100


@dataclass(frozen=True)
class ChecklistItem:
    description: str
    weight: int

    def __post_init__(self):
        if not isinstance(self.weight, int) or not (1 <= self.weight <= 5):
            raise ValueError(f"checklist weight must be an integer in [1, 5], got {self.weight!r}")


@dataclass
class Verdict:
    item_index: int
    raw: int
    normalized: float


@dataclass
class PreferenceJudgment:
    pass_1_pick: str  # "first-position" | "second-position"
    pass_2_pick: str
    outcome: str  # "a-wins" | "b-wins" | "tie"


def _content_of(post) -> tuple[str, list]:
    """Normalize a candidate/reference post to (text, image paths)."""
    if isinstance(post, str):
        return post, []
    if isinstance(post, PackagedPost):
        return post.markdown, post.image_paths()
    text = getattr(post, "text", None)
    if text is not None:
        return text, list(getattr(post, "images", []) or [])
    raise TypeError(f"cannot judge object of type {type(post)!r}")


_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


def _numbers_in_range(text: str, lo: float, hi: float) -> list[float]:
    values = []
    for token in _NUMBER.findall(text):
        value = float(token)
        if lo <= value <= hi:
            values.append(value)
    return values


def parse_rating(text: str, scale_max: float) -> float | None:
    """The last number within [0, scale_max] in the response."""
    values = _numbers_in_range(text, 0.0, scale_max)
    return values[-1] if values else None


def parse_two_subscores(text: str, scale_max: float) -> tuple[float, float] | None:
    """The first two in-range numbers (subscores precede any final average)."""
    values = _numbers_in_range(text, 0.0, scale_max)
    if len(values) < 2:
        return None
    return values[0], values[1]


_PICK = re.compile(r"(?i)\bpost\s*([ab])\b")


def parse_pick(text: str) -> str | None:
    matches = _PICK.findall(text)
    if not matches:
        return None
    return "first-position" if matches[-1].lower() == "a" else "second-position"


def _judge_call(
    gateway,
    prompt: str,
    images: list,
    *,
    temperature: float,
    seed: int | None,
) -> str:
    message = ChatMessage(author="user", parts=(TextPart(prompt),))
    request = CompletionRequest(
        role=ModelRole.JUDGE,
        messages=(message,),
        temperature=temperature,
        max_output_tokens=1024,
        seed=seed,
    )
    if images:
        parts = [ImagePart.from_file(p, detail="high") for p in images]
        return gateway.complete_with_images(request, parts).text
    return gateway.complete(request).text


def score_rubric(
    post,
    criterion: RubricCriterion,
    gateway,
    prompts,
    *,
    platform: str | None = None,
    temperature: float = 0.3,
    seed: int | None = None,
) -> RubricResult:
    """Score one criterion with repeat averaging.

    Image-requiring criteria demand a post with at least one image. Each
    repeat is an independent call; an unparseable response gets one re-ask.
    """
    text, images = _content_of(post)
    if criterion.requires_images and not images:
        raise ImagesRequiredError(
            f"criterion {criterion.id} requires a post with at least one image"
        )
    platform = platform or getattr(post, "platform", "") or "unknown"
    prompt = prompts.render(
        criterion.prompt_key, post_content=text, platform_source=platform
    )
    send_images = images if criterion.requires_images else []

    if criterion.id == "authorship-title":
        parse = lambda response: _average_subscores(response, criterion.scale_max)
    else:
        parse = lambda response: parse_rating(response, criterion.scale_max)

    ratings: list[float] = []
    for repeat in range(criterion.repeats):
        rating = None
        for attempt in range(2):
            response = _judge_call(
                gateway,
                prompt,
                send_images,
                temperature=temperature,
                seed=derive_seed(seed, f"judge:{criterion.id}:rep{repeat}:try{attempt}"),
            )
            rating = parse(response)
            if rating is not None:
                break
        if rating is None:
            raise RatingUnparseableError(
                f"judge response for {criterion.id} had no usable rating after re-ask"
            )
        ratings.append(rating)
    mean = sum(ratings) / len(ratings)
    return RubricResult(
        criterion_id=criterion.id,
        ratings=ratings,
        mean=mean,
        normalized=mean / criterion.scale_max * 100.0,
    )


def _average_subscores(response: str, scale_max: float) -> float | None:
    subscores = parse_two_subscores(response, scale_max)
    if subscores is None:
        return None
    return (subscores[0] + subscores[1]) / 2.0


def score_authorship_title(
    post,
    gateway,
    prompts,
    *,
    temperature: float = 0.3,
    seed: int | None = None,
) -> RubricResult:
    """Attribution clarity and title presentation, averaged, then repeat-averaged."""
    return score_rubric(
        post,
        CRITERIA["authorship-title"],
        gateway,
        prompts,
        temperature=temperature,
        seed=seed,
    )


def weighted_checklist_score(weights, normalized_verdicts) -> float:
    """The aggregation formula alone: sum(w_i * v_i) / sum(w_i).

    Scale-invariant in the weights and monotone in every verdict; verdicts
    are expected in [0, 1].
    """
    weights = list(weights)
    verdicts = list(normalized_verdicts)
    if not weights or len(weights) != len(verdicts):
        raise EmptyChecklistError("weights and verdicts must be non-empty and aligned")
    total = float(sum(weights))
    if total <= 0:
        raise ValueError("weights must sum to a positive value")
    return sum(w * v for w, v in zip(weights, verdicts)) / total


def score_checklist(
    post,
    checklist,
    gateway,
    prompts,
    *,
    max_score: int = 5,
    temperature: float = 0.3,
    seed: int | None = None,
) -> float:
    """Weighted factual checklist score in [0, 1].

    One verdict per item, normalized by the verdict scale, aggregated by
    ``weighted_checklist_score``.
    """
    checklist = list(checklist)
    if not checklist:
        raise EmptyChecklistError("checklist has no items")
    if max_score <= 0:
        raise ValueError("max_score must be positive")
    text, _ = _content_of(post)

    verdicts: list[Verdict] = []
    for index, item in enumerate(checklist):
        prompt = prompts.render(
            "judge_factual",
            description=item.description,
            max_score=str(max_score),
            post_content=text,
        )
        raw = None
        for attempt in range(2):
            response = _judge_call(
                gateway,
                prompt,
                [],
                temperature=temperature,
                seed=derive_seed(seed, f"judge:factual:{index}:try{attempt}"),
            )
            value = parse_rating(response, float(max_score))
            if value is not None:
                raw = int(round(value))
                break
        if raw is None:
            raise VerdictUnparseableError(
                f"no usable verdict for checklist item {index} after re-ask"
            )
        verdicts.append(Verdict(item_index=index, raw=raw, normalized=raw / max_score))
    return weighted_checklist_score(
        (item.weight for item in checklist), (v.normalized for v in verdicts)
    )


def compare_pair(
    post_a,
    post_b,
    perspective: str,
    gateway,
    prompts,
    *,
    platform: str | None = None,
    temperature: float = 0.3,
    seed: int | None = None,
) -> PreferenceJudgment:
    """Swap-order pairwise preference.

    The pair is judged twice, positions exchanged on the second pass. Only a
    consistent choice names a winner; disagreement is a tie.
    """
    key = PERSPECTIVES.get(perspective)
    if key is None:
        raise ValueError(f"unknown perspective {perspective!r}")
    text_a, _ = _content_of(post_a)
    text_b, _ = _content_of(post_b)
    if not text_a.strip() or not text_b.strip():
        raise EmptyInputError("both posts must be non-empty")
    platform = platform or getattr(post_a, "platform", "") or "unknown"

    def one_pass(first: str, second: str, tag: str) -> str:
        prompt = prompts.render(
            key, post_a_content=first, post_b_content=second, platform_source=platform
        )
        for attempt in range(2):
            response = _judge_call(
                gateway,
                prompt,
                [],
                temperature=temperature,
                seed=derive_seed(seed, f"judge:pair:{perspective}:{tag}:try{attempt}"),
            )
            pick = parse_pick(response)
            if pick is not None:
                return pick
        raise PickUnparseableError(f"no usable pick in pass {tag} after re-ask")

    pick_1 = one_pass(text_a, text_b, "pass1")
    pick_2 = one_pass(text_b, text_a, "pass2")

    winner_1 = "a" if pick_1 == "first-position" else "b"
    winner_2 = "b" if pick_2 == "first-position" else "a"
    if winner_1 == winner_2 == "a":
        outcome = "a-wins"
    elif winner_1 == winner_2 == "b":
        outcome = "b-wins"
    else:
        outcome = "tie"
    return PreferenceJudgment(pass_1_pick=pick_1, pass_2_pick=pick_2, outcome=outcome)


def win_rate(outcomes) -> float:
    """Win percentage with half credit for ties: (wins + ties/2) / n * 100."""
    outcomes = [o.outcome if isinstance(o, PreferenceJudgment) else o for o in outcomes]
    if not outcomes:
        raise EmptyInputError("win_rate needs at least one outcome")
    wins = sum(1 for o in outcomes if o == "a-wins")
    ties = sum(1 for o in outcomes if o == "tie")
    return (wins + 0.5 * ties) / len(outcomes) * 100.0
