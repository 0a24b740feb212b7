"""Structure parsing and budgeted summarization, with an independent recursion oracle."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autopr.errors import ChunkTooLargeError, EmptyInputError
from autopr.ingest import (
    PROMPT_OVERHEAD_TOKENS,
    PageBlocks,
    RawDocumentText,
    SectionNode,
    SectionTree,
    SummaryBudget,
    TextBlock,
    build_chunks,
    estimate_tokens,
    extract_text,
    hierarchical_summarize,
    parse_structure,
)

from conftest import PdfBuilder, make_mock_gateway


def block(text: str, size: float = 10.0, y: float = 0.0) -> TextBlock:
    return TextBlock(text=text, rect=(72, y, 300, y + size), font_size=size)


def raw_doc(blocks: list[TextBlock]) -> RawDocumentText:
    return RawDocumentText(
        pages=[PageBlocks(page_index=0, width_pt=612, height_pt=792, blocks=blocks)]
    )


# --- estimate_tokens ---

def test_token_estimator_fixed_points():
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcdefgh") == 2  # ceil(8/4)
    assert estimate_tokens("abcdefghi") == 3  # ceil(9/4)


@given(st.text(max_size=500), st.text(max_size=100))
def test_token_estimator_monotone(base, extra):
    assert estimate_tokens(base + extra) >= estimate_tokens(base)
    assert estimate_tokens(base) == math.ceil(len(base) / 4) if base else True


# --- parse_structure ---

def test_font_size_headings_split_sections():
    raw = raw_doc(
        [
            block("Intro", size=14, y=700),
            block("body A", size=10, y=680),
            block("Method", size=14, y=650),
            block("body B", size=10, y=630),
        ]
    )
    tree = parse_structure(raw)
    sections = tree.root.children
    assert [s.title for s in sections] == ["Intro", "Method"]
    assert all(s.level == 1 for s in sections)
    assert [s.paragraphs for s in sections] == [["body A"], ["body B"]]
    assert tree.root.paragraphs == []


def test_uniform_font_no_numbering_yields_root_only_tree():
    raw = raw_doc([block(f"paragraph {i}") for i in range(4)])
    tree = parse_structure(raw)
    assert tree.root.children == []
    assert tree.root.paragraphs == [f"paragraph {i}" for i in range(4)]


def test_empty_section_retained():
    raw = raw_doc(
        [
            block("Results", size=14),
            block("Conclusion", size=14),
            block("final words, with enough body text to dominate the size mode", size=10),
        ]
    )
    tree = parse_structure(raw)
    titles = [s.title for s in tree.root.children]
    assert titles == ["Results", "Conclusion"]
    assert tree.root.children[0].paragraphs == []
    assert tree.root.children[1].paragraphs == [
        "final words, with enough body text to dominate the size mode"
    ]


def test_numbered_headings_nest_by_depth():
    raw = raw_doc(
        [
            block("1 Introduction", size=10),
            block("some text", size=10),
            block("1.1 Background", size=10),
            block("more text", size=10),
            block("2 Approach", size=10),
        ]
    )
    tree = parse_structure(raw)
    top = tree.root.children
    assert [n.title for n in top] == ["1 Introduction", "2 Approach"]
    sub = top[0].children
    assert [n.title for n in sub] == ["1.1 Background"]
    assert sub[0].level == top[0].level + 1 == 2


def test_child_level_is_parent_plus_one_even_when_numbering_jumps():
    raw = raw_doc(
        [
            block("1 Top", size=10),
            block("1.1.1 Deep jump", size=10),  # declared depth 3 under depth 1
            block("text", size=10),
        ]
    )
    tree = parse_structure(raw)
    parent = tree.root.children[0]
    child = parent.children[0]
    assert child.level == parent.level + 1


def test_structure_from_real_pdf_end_to_end():
    builder = PdfBuilder()
    builder.text(72, 720, "Understanding Gadgets", 16)
    builder.text(72, 690, "Preamble text before any section.", 10)
    builder.text(72, 650, "1 Introduction", 12)
    builder.paragraph(72, 620, ["Gadgets are devices.", "They are everywhere."], 10)
    builder.text(72, 560, "2 Findings", 12)
    builder.text(72, 530, "Gadgets beep.", 10)
    tree = parse_structure(extract_text(builder.build().data))
    # 16pt title ranks above the 12pt numbered sections.
    assert tree.root.children[0].title == "Understanding Gadgets"
    inner = tree.root.children[0].children
    assert [n.title for n in inner] == ["1 Introduction", "2 Findings"]
    paragraphs = tree.all_paragraphs()
    assert "Gadgets are devices. They are everywhere." in paragraphs
    assert "Preamble text before any section." in paragraphs


# --- chunking ---

def tree_of(paragraphs_by_section: dict[str, list[str]]) -> SectionTree:
    root = SectionNode(title="", level=0)
    for title, paragraphs in paragraphs_by_section.items():
        root.children.append(
            SectionNode(title=title, level=1, paragraphs=list(paragraphs))
        )
    return SectionTree(root=root)


@settings(max_examples=50, deadline=None)
@given(
    st.dictionaries(
        st.text(st.characters(categories=["L"]), min_size=3, max_size=8),
        st.lists(
            st.text(st.characters(categories=["L", "N"]), min_size=1, max_size=400),
            min_size=0,
            max_size=5,
        ),
        min_size=1,
        max_size=6,
    )
)
def test_chunk_coverage_no_loss_no_duplication(sections):
    tree = tree_of(sections)
    if tree.is_empty():
        return
    budget = SummaryBudget(per_call_token_limit=PROMPT_OVERHEAD_TOKENS + 150,
                           target_summary_tokens=64)
    chunks = build_chunks(tree, budget)
    # Paragraph-safe inputs (every unit under the split threshold) must
    # reproduce the document parts exactly once, in order.
    parts = [p for chunk in chunks for p in chunk.split("\n\n")]
    expected = tree.full_text().split("\n\n")
    assert parts == expected
    for chunk in chunks:
        assert estimate_tokens(chunk) <= budget.content_tokens


def test_oversized_sentence_raises_chunk_too_large():
    tree = tree_of({"S": ["x" * 5000]})  # one 5000-char "sentence", no punctuation
    budget = SummaryBudget(per_call_token_limit=PROMPT_OVERHEAD_TOKENS + 100,
                           target_summary_tokens=64)
    with pytest.raises(ChunkTooLargeError):
        build_chunks(tree, budget)


def test_oversized_paragraph_splits_at_sentences():
    sentence = "This is a sentence that repeats. "
    tree = tree_of({"S": [(sentence * 40).strip()]})
    budget = SummaryBudget(per_call_token_limit=PROMPT_OVERHEAD_TOKENS + 100,
                           target_summary_tokens=64)
    chunks = build_chunks(tree, budget)
    assert len(chunks) > 1
    for chunk in chunks:
        assert estimate_tokens(chunk) <= budget.content_tokens


# --- hierarchical summarization ---

SUMMARY_TEXT = "s" * 2000  # a deterministic 500-token mock summary


def summarizing_gateway():
    return make_mock_gateway({"default": {"text": SUMMARY_TEXT}})


def test_small_document_single_pass():
    tree = tree_of({"Intro": ["word " * 800]})  # ~1000 tokens
    budget = SummaryBudget(per_call_token_limit=8000, target_summary_tokens=500)
    gateway, transport = summarizing_gateway()
    summary = hierarchical_summarize(tree, budget, gateway, seed=7)
    assert summary.mode == "single-pass"
    assert summary.depth == 0
    assert summary.calls_made == 1
    assert len(transport.calls) == 1


def simulate_recursion_calls(chunks: list[str], budget: SummaryBudget,
                             mock_summary: str) -> tuple[int, int]:
    """Independent oracle: replay the chunk/combine recursion by simulation.

    Returns (total calls, combine depth). Uses only the public estimator and
    the greedy packing rule stated for the combine fan-in.
    """
    calls = len(chunks)
    texts = [mock_summary] * len(chunks)
    depth = 0
    while len(texts) > 1:
        groups: list[str] = []
        current = ""
        for text in texts:
            candidate = text if not current else current + "\n\n" + text
            if current and estimate_tokens(candidate) > budget.content_tokens:
                groups.append(current)
                current = text
            else:
                current = candidate
        if current:
            groups.append(current)
        depth += 1
        calls += len(groups)
        texts = [mock_summary] * len(groups)
    return calls, depth


def test_large_document_matches_recursion_oracle():
    # ~100k tokens of synthetic paragraphs.
    paragraphs = [("w" * 79 + " ") * 50] * 100  # 100 x ~1000 tokens
    tree = tree_of({f"S{i}": [p] for i, p in enumerate(paragraphs)})
    budget = SummaryBudget(per_call_token_limit=8000, target_summary_tokens=500)
    assert estimate_tokens(tree.full_text()) >= 100_000

    gateway, transport = summarizing_gateway()
    summary = hierarchical_summarize(tree, budget, gateway, seed=3)

    chunks = build_chunks(tree, budget)
    expected_calls, expected_depth = simulate_recursion_calls(chunks, budget, SUMMARY_TEXT)
    assert summary.mode == "hierarchical"
    assert summary.calls_made == expected_calls
    assert summary.depth == expected_depth
    assert summary.depth >= 1
    assert summary.depth <= math.ceil(math.log2(len(chunks))) + 1

    # Budget safety: every issued request stays within the per-call limit.
    for payload in transport.calls:
        text = "\n".join(
            part["text"]
            for message in payload["messages"]
            for part in message["content"]
            if part["type"] == "text"
        )
        assert estimate_tokens(text) <= budget.per_call_token_limit


def test_summarize_empty_tree_rejected():
    gateway, _ = summarizing_gateway()
    with pytest.raises(EmptyInputError):
        hierarchical_summarize(
            SectionTree(root=SectionNode(title="", level=0)),
            SummaryBudget(8000, 500),
            gateway,
        )


def test_summarize_deterministic_with_mock():
    tree = tree_of({f"S{i}": ["alpha beta " * 400] for i in range(20)})
    budget = SummaryBudget(per_call_token_limit=2000, target_summary_tokens=200)
    results = []
    for _ in range(2):
        gateway, _ = make_mock_gateway({"default": {"text": "t" * 600}})
        results.append(hierarchical_summarize(tree, budget, gateway, seed=11))
    assert results[0] == results[1]


def test_budget_validation():
    with pytest.raises(ValueError):
        SummaryBudget(per_call_token_limit=100, target_summary_tokens=100)
    with pytest.raises(ValueError):
        SummaryBudget(per_call_token_limit=0, target_summary_tokens=10)
