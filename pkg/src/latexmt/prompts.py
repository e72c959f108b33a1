"""Loading and rendering of the agent prompt templates.

Templates live as plain text under ``latexmt/data/prompts`` and use a
single literal slot, ``{tgt_language}``, replaced by the human-readable
target language name.  Plain ``str.replace`` is used instead of
``str.format`` because the templates are full of LaTeX braces.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path

TEMPLATE_NAMES = (
    "translator",
    "corrector",
    "filter",
    "terminology",
    "summarizer",
    "completeness",
)


@lru_cache(maxsize=None)
def _packaged(name: str) -> str:
    ref = resources.files("latexmt").joinpath("data", "prompts", f"{name}.txt")
    return ref.read_text(encoding="utf-8")


def load_template(name: str, prompt_dir: Path | str | None = None) -> str:
    """Return the raw template text; *prompt_dir* overrides packaged assets."""
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown prompt template: {name!r}")
    if prompt_dir is not None:
        override = Path(prompt_dir) / f"{name}.txt"
        if override.is_file():
            return override.read_text(encoding="utf-8")
    return _packaged(name)


def render(name: str, tgt_language: str = "", prompt_dir: Path | str | None = None) -> str:
    """Template text with the ``{tgt_language}`` slot filled in."""
    text = load_template(name, prompt_dir)
    if tgt_language:
        text = text.replace("{tgt_language}", tgt_language)
    return text
