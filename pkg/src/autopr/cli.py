"""Command-line entry point: promote, extract, evaluate, compare, report.

Every failure exits with the stable code of its error class and writes one
machine-readable JSON record to stderr; see the error table in the README.
``--mock-llm`` swaps in the scripted transport, making every command run
deterministically with no network or keys.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from autopr.adapt import load_packaged_post
from autopr.bench import (
    CompositeWeights,
    EvalReport,
    aggregate,
    evaluate_post,
    load_dataset,
    summary_csv,
)
from autopr.errors import (
    AutoPRError,
    ConfigError,
    MissingCandidateError,
    UnreadableInputError,
)
from autopr.gateway import GatewayConfig, LLMGateway, derive_seed, load_mock_script
from autopr.ingest import extract_text, parse_structure
from autopr.judge import PERSPECTIVES, compare_pair
from autopr.pipeline import PromoteOptions, promote
from autopr.prompts import PromptLibrary, load_default_prompts

CONFIG_ENV = "AUTOPR_CONFIG"


def _fail(error: AutoPRError) -> None:
    sys.stderr.write(json.dumps(error.record()) + "\n")
    sys.exit(error.exit_code)


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except AutoPRError as error:
            _fail(error)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _load_prompts(prompts_dir: str | None) -> PromptLibrary:
    if prompts_dir:
        return PromptLibrary.from_dir(prompts_dir)
    return load_default_prompts()


def _build_gateway(
    config_path: str | None,
    mock_script: str | None,
    cache_dir: str | None,
    concurrency: int,
) -> LLMGateway:
    if mock_script:
        transport = load_mock_script(mock_script)
        config = GatewayConfig.mock_all_roles()
        return LLMGateway(
            config, transport, cache_dir=cache_dir, max_concurrency=concurrency
        )
    config_path = config_path or os.environ.get(CONFIG_ENV)
    if not config_path:
        raise ConfigError(
            f"no endpoint config: pass --config, set {CONFIG_ENV}, or use --mock-llm"
        )
    config = GatewayConfig.from_file(config_path)
    return LLMGateway(config, cache_dir=cache_dir, max_concurrency=concurrency)


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help=f"Endpoint config file (JSON/TOML); defaults to ${CONFIG_ENV}.")(fn)
    fn = click.option("--prompts", "prompts_dir", type=click.Path(), default=None,
                      help="Prompt templates directory; defaults to the packaged set.")(fn)
    fn = click.option("--mock-llm", "mock_script", type=click.Path(), default=None,
                      help="Scripted mock endpoint file; replaces every model call.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Run seed for reproducibility.")(fn)
    fn = click.option("--concurrency", type=int, default=8, show_default=True,
                      help="Global model-call concurrency limit.")(fn)
    fn = click.option("--cache-dir", type=click.Path(), default=None,
                      help="Response cache directory (used when a seed is set).")(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Turn research papers into platform-ready posts, and score the results."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@main.command()
@click.argument("pdf", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the section tree JSON here instead of stdout.")
@_guarded
def extract(pdf: str, out_path: str | None) -> None:
    """Parse a PDF into a section tree (JSON)."""
    tree = parse_structure(extract_text(Path(pdf)))
    payload = json.dumps(tree.to_dict(), indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(payload)
    else:
        click.echo(payload, nl=False)


@main.command(name="promote")
@click.argument("pdf", type=click.Path(exists=True, dir_okay=False))
@click.option("--platform", required=True, help="Target platform id (twitter|rednote).")
@click.option("--out", "out_dir", type=click.Path(), required=True,
              help="Bundle output directory.")
@click.option("--layout-backend", type=click.Choice(["service", "heuristic"]),
              default="heuristic", show_default=True)
@click.option("--service-url", default=None,
              help="Layout service base URL (with --layout-backend service).")
@click.option("--baseline", is_flag=True, help="Direct-prompt baseline instead of the pipeline.")
@click.option("--dpi", type=int, default=250, show_default=True)
@_common_options
@_guarded
def promote_cmd(
    pdf: str,
    platform: str,
    out_dir: str,
    layout_backend: str,
    service_url: str | None,
    baseline: bool,
    dpi: int,
    config_path: str | None,
    prompts_dir: str | None,
    mock_script: str | None,
    seed: int | None,
    concurrency: int,
    cache_dir: str | None,
) -> None:
    """Generate a platform-adapted post bundle from a paper PDF."""
    gateway = _build_gateway(config_path, mock_script, cache_dir, concurrency)
    prompts = _load_prompts(prompts_dir)
    options = PromoteOptions(
        platform=platform,
        out_dir=Path(out_dir),
        layout_backend=layout_backend,
        service_url=service_url,
        dpi=dpi,
        seed=seed,
        baseline=baseline,
        concurrency=concurrency,
    )
    outcome = promote(Path(pdf), options, gateway, prompts)
    for warning in outcome.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(
        json.dumps(
            {
                "bundle": str(outcome.post.root),
                "platform": outcome.post.platform,
                "assets": len(outcome.post.assets),
                "valid": outcome.validation.ok,
                "violations": outcome.validation.violations,
            }
        )
    )
    if not outcome.validation.ok:
        sys.exit(1)


@main.command()
@click.argument("candidates_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--alpha", default="1,1,1", show_default=True,
              help="Composite weights: fidelity,align,engage.")
@_common_options
@_guarded
def evaluate(
    candidates_dir: str,
    dataset_path: str,
    out_dir: str,
    alpha: str,
    config_path: str | None,
    prompts_dir: str | None,
    mock_script: str | None,
    seed: int | None,
    concurrency: int,
    cache_dir: str | None,
) -> None:
    """Score candidate bundles against a dataset with the judge suite.

    Candidate bundles live in per-paper-id subdirectories of CANDIDATES_DIR.
    Writes report.json and summary.csv under --out; exits nonzero if any
    pair lacks a candidate (partial reports are still written).
    """
    try:
        weights = CompositeWeights.parse(alpha)
    except ValueError as exc:
        raise ConfigError(f"bad --alpha: {exc}") from exc
    gateway = _build_gateway(config_path, mock_script, cache_dir, concurrency)
    prompts = _load_prompts(prompts_dir)
    pairs = load_dataset(dataset_path)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    missing: list[str] = []
    runnable = []
    for pair in pairs:
        bundle_dir = Path(candidates_dir) / pair.paper_id
        if not (bundle_dir / "post.md").is_file():
            missing.append(pair.paper_id)
            continue
        candidate = load_packaged_post(bundle_dir)
        if not candidate.platform:  # bundle without meta.json: trust the dataset
            candidate.platform = pair.platform
        runnable.append((pair, candidate))

    def run_one(item):
        pair, candidate = item
        return evaluate_post(
            candidate,
            pair,
            weights,
            gateway,
            prompts,
            seed=derive_seed(seed, f"eval:{pair.paper_id}"),
        )

    # Pairs run concurrently up to the gateway's limit; a failing pair is
    # recorded and isolated rather than aborting the rest.
    reports: list[EvalReport] = []
    failures: list[tuple[str, AutoPRError]] = []
    with ThreadPoolExecutor(max_workers=max(1, min(concurrency, len(runnable) or 1))) as pool:
        futures = [pool.submit(run_one, item) for item in runnable]
        for (pair, _), future in zip(runnable, futures):
            try:
                reports.append(future.result())
            except AutoPRError as error:
                failures.append((pair.paper_id, error))

    if reports:
        payload = {
            "reports": [r.to_dict() for r in reports],
            "aggregate": aggregate(reports).to_dict(),
        }
        (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
        (out / "summary.csv").write_text(summary_csv(reports))
    for paper_id, error in failures:
        sys.stderr.write(
            json.dumps({"error": error.code, "message": str(error), "paper_id": paper_id})
            + "\n"
        )
    if missing:
        _fail(MissingCandidateError(f"no candidate bundle for: {', '.join(missing)}"))
    if failures:
        sys.exit(failures[0][1].exit_code)
    click.echo(json.dumps({"reports": len(reports), "out": str(out)}))


@main.command()
@click.argument("bundle_a", type=click.Path(exists=True))
@click.argument("bundle_b", type=click.Path(exists=True))
@click.option("--perspective", type=click.Choice(sorted(PERSPECTIVES)),
              default="platform-interest", show_default=True)
@click.option("--platform", default=None, help="Platform context for the judge prompt.")
@_common_options
@_guarded
def compare(
    bundle_a: str,
    bundle_b: str,
    perspective: str,
    platform: str | None,
    config_path: str | None,
    prompts_dir: str | None,
    mock_script: str | None,
    seed: int | None,
    concurrency: int,
    cache_dir: str | None,
) -> None:
    """Pairwise-judge two post bundles (swap-order protocol)."""
    gateway = _build_gateway(config_path, mock_script, cache_dir, concurrency)
    prompts = _load_prompts(prompts_dir)

    def read(path: str):
        p = Path(path)
        try:
            if p.is_dir():
                return load_packaged_post(p)
            return p.read_text()
        except OSError as exc:
            raise UnreadableInputError(f"cannot read post {path}: {exc}") from exc

    post_a, post_b = read(bundle_a), read(bundle_b)
    judgment = compare_pair(
        post_a, post_b, perspective, gateway, prompts, platform=platform, seed=seed
    )
    click.echo(
        json.dumps(
            {
                "outcome": judgment.outcome,
                "pass_1_pick": judgment.pass_1_pick,
                "pass_2_pick": judgment.pass_2_pick,
            }
        )
    )


@main.command()
@click.argument("report_files", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_guarded
def report(report_files: tuple[str, ...], out_dir: str) -> None:
    """Re-aggregate one or more report.json files into a combined summary.csv."""
    reports: list[EvalReport] = []
    for path in report_files:
        payload = json.loads(Path(path).read_text())
        for entry in payload.get("reports", []):
            reports.append(
                EvalReport(
                    paper_id=entry["paper_id"],
                    platform=entry.get("platform", ""),
                    criteria=entry["criteria"],
                    fidelity=entry["dimensions"]["fidelity"],
                    engagement=entry["dimensions"]["engagement"],
                    alignment=entry["dimensions"]["alignment"],
                    composite=entry["composite"],
                    skipped=entry.get("skipped", []),
                )
            )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(summary_csv(reports))
    (out / "report.json").write_text(
        json.dumps(
            {"reports": [r.to_dict() for r in reports], "aggregate": aggregate(reports).to_dict()},
            indent=2,
        )
        + "\n"
    )
    click.echo(json.dumps({"reports": len(reports), "out": str(out)}))


if __name__ == "__main__":
    main()
