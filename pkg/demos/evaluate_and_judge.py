"""Tour of the evaluation harness and its judge primitives, all on mocks.

Shows the closed-form pieces first (weighted checklist, win rate, consensus,
correlations), then runs a full evaluate_post with a scripted judge and
prints how the criterion scores roll up into the three dimensions and the
weighted composite.

Run from the repository root:

    python demos/evaluate_and_judge.py
"""

from pathlib import Path

from autopr.adapt import PackagedPost
from autopr.bench import (
    BenchPair,
    CompositeWeights,
    ReferencePost,
    compute_correlation,
    evaluate_post,
    merge_human_scores,
)
from autopr.gateway import GatewayConfig, LLMGateway, load_mock_script
from autopr.judge import ChecklistItem, PreferenceJudgment, weighted_checklist_score, win_rate
from autopr.prompts import load_default_prompts

REPO_ROOT = Path(__file__).resolve().parents[1]


def closed_form_tour() -> None:
    print("== closed-form pieces ==")
    weights = [5, 3, 1]
    verdicts = [1.0, 0.5, 0.0]
    print(f"checklist weights={weights}, verdicts={verdicts} ->",
          f"{weighted_checklist_score(weights, verdicts):.5f}")

    outcomes = [
        PreferenceJudgment("first-position", "second-position", "a-wins"),
        PreferenceJudgment("first-position", "first-position", "tie"),
        PreferenceJudgment("second-position", "second-position", "b-wins"),
    ]
    print(f"win rate over [win, tie, loss] -> {win_rate(outcomes):.1f}%")

    print("consensus [3,4,5] ->", merge_human_scores([3, 4, 5]))
    print("consensus [1,3,5] ->", merge_human_scores([1, 3, 5]))

    xs, ys = [1, 2, 3, 4, 5], [2, 1, 4, 3, 5]
    pearson, spearman = compute_correlation(xs, ys)
    print(f"correlation of {xs} vs {ys}: pearson={pearson:.4f} spearman={spearman:.4f}")


def full_evaluation() -> None:
    print("\n== full criterion suite with a scripted judge ==")
    transport = load_mock_script(REPO_ROOT / "tests" / "data" / "mock_judge.json")
    gateway = LLMGateway(GatewayConfig.mock_all_roles(), transport)
    prompts = load_default_prompts()

    candidate = PackagedPost(
        markdown="Gadgets got 2.1x faster thanks to one trick. #gadgets #research",
        assets=[],
        platform="twitter",
    )
    pair = BenchPair(
        paper_id="demo",
        pdf=Path("unused.pdf"),
        platform="twitter",
        reference_post=ReferencePost(text="A human-written reference post about gadgets."),
        checklist=[
            ChecklistItem("mentions the 2.1x speedup", 5),
            ChecklistItem("credits Ada Lovelace", 3),
        ],
    )
    report = evaluate_post(candidate, pair, CompositeWeights(), gateway, prompts, seed=1)
    for criterion, value in sorted(report.criteria.items()):
        print(f"  {criterion:>18}: {value:6.2f}")
    print(f"  skipped (text-only candidate): {report.skipped}")
    print(f"  fidelity={report.fidelity:.2f} engagement={report.engagement:.2f} "
          f"alignment={report.alignment:.2f}")
    print(f"  composite (equal weights) = {report.composite:.2f}")


if __name__ == "__main__":
    closed_form_tour()
    full_evaluation()
