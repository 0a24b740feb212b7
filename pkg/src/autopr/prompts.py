"""Prompt template library.

Templates live as plain text files in a directory, one per key, with
``{name}`` slots. The packaged defaults are working templates; swap the
directory (CLI ``--prompts``) to change any agent's or judge's wording
without touching code. Rendering is strict: a missing template or an
unfilled slot raises instead of emitting a broken prompt.
"""

from __future__ import annotations

import string
from pathlib import Path

from autopr.errors import PromptError

__all__ = ["PromptLibrary", "load_default_prompts", "DEFAULT_PROMPTS_DIR"]

DEFAULT_PROMPTS_DIR = Path(__file__).parent / "data" / "prompts"

_formatter = string.Formatter()


def _required_slots(template: str) -> set[str]:
    try:
        return {name for _, name, _, _ in _formatter.parse(template) if name}
    except ValueError as exc:
        raise PromptError(f"malformed template: {exc}") from exc


class PromptLibrary:
    def __init__(self, templates: dict[str, str]):
        self._templates = dict(templates)

    @classmethod
    def from_dir(cls, path: str | Path) -> "PromptLibrary":
        path = Path(path)
        if not path.is_dir():
            raise PromptError(f"prompts directory not found: {path}")
        return cls({p.stem: p.read_text() for p in sorted(path.glob("*.txt"))})

    def keys(self) -> list[str]:
        return sorted(self._templates)

    def has(self, key: str) -> bool:
        return key in self._templates

    def render(self, key: str, **slots: str) -> str:
        template = self._templates.get(key)
        if template is None:
            raise PromptError(f"no prompt template named {key!r}")
        missing = _required_slots(template) - set(slots)
        if missing:
            raise PromptError(f"template {key!r} missing slots: {sorted(missing)}")
        return template.format(**{k: str(v) for k, v in slots.items()})


_default_library: PromptLibrary | None = None


def load_default_prompts() -> PromptLibrary:
    global _default_library
    if _default_library is None:
        _default_library = PromptLibrary.from_dir(DEFAULT_PROMPTS_DIR)
    return _default_library
