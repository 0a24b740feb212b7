"""Deterministic token estimation shared by budgeting and accounting.

Provider tokenizers disagree with each other and change over time; a fixed
chars/4 ceiling keeps every budget check reproducible and oracle-checkable.
"""

from __future__ import annotations

import math

__all__ = ["estimate_tokens"]

CHARS_PER_TOKEN = 4


def estimate_tokens(text: str) -> int:
    """Estimated token count: ceil(len(text) / 4), 0 for empty text."""
    if not text:
        return 0
    return math.ceil(len(text) / CHARS_PER_TOKEN)
