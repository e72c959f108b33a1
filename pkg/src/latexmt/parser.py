"""LaTeX project parsing: merge, protect, split.

The pipeline runs in a fixed order so that later passes see the tokens of
earlier ones:

1. ``merge_project``       - inline \\input/\\include files between boundary tokens
2. ``extract_captions``    - swap caption bodies inside floats for CAP tokens
3. ``extract_environments``- swap top-level environment blocks for ENV tokens
4. ``split_sections``      - cut the remaining text at sectioning commands
5. ``enumerate_units``     - one flat, ordered list of translation units

All scanning is comment-aware (an unescaped ``%`` hides the rest of the
line) and verbatim-aware (``%`` inside ``verbatim``-like environments is
literal).  Structural problems such as unbalanced braces or a stray
``\\end`` are recorded as warning strings, never raised.
"""

from __future__ import annotations

import dataclasses
import re
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

from .errors import InclusionCycle, MissingMainFile
from .placeholders import (
    KIND_CAP,
    KIND_ENV,
    PlaceholderMap,
    TOKEN_RE,
    cap_token,
    env_token,
    file_begin_token,
    file_end_token,
)

GRAN_SECTION = "SECTION_CONTEXT"
GRAN_ENVIRONMENT = "ENVIRONMENT"
GRAN_CAPTION = "CAPTION"

STATUS_PENDING = "PENDING"
STATUS_TRANSLATED = "TRANSLATED"
STATUS_VALIDATED = "VALIDATED"
STATUS_FAILED = "FAILED"

# Environments whose bodies are taken verbatim by TeX; '%' inside them is
# not a comment and nothing inside them should be scanned structurally.
VERBATIM_ENVS = frozenset(
    {
        "verbatim",
        "verbatim*",
        "Verbatim",
        "Verbatim*",
        "lstlisting",
        "minted",
        "comment",
        "filecontents",
        "filecontents*",
    }
)

# Environments that may legitimately carry a \caption.
FLOAT_ENVS = frozenset(
    {
        "figure",
        "figure*",
        "table",
        "table*",
        "sidewaysfigure",
        "sidewaystable",
        "wrapfigure",
        "wraptable",
        "subfigure",
        "subtable",
        "algorithm",
        "algorithm*",
        "listing",
    }
)

_BEGIN_RE = re.compile(r"\\begin\s*\{([^{}]*)\}")
_BEGIN_OR_END_RE = re.compile(r"\\(begin|end)\s*\{([^{}]*)\}")
_BEGIN_DOC_RE = re.compile(r"\\begin\s*\{document\}")
_END_DOC_RE = re.compile(r"\\end\s*\{document\}")
_CAPTION_RE = re.compile(r"\\caption(of)?\*?(?![A-Za-z@])")
_SECTION_RE = re.compile(r"\\(?:part|chapter|section|subsection|subsubsection)\*?(?![A-Za-z@])")
_INCLUDE_RE = re.compile(r"\\(?:input|include)\b\s*\{\s*([^{}%]+?)\s*\}")


# --------------------------------------------------------------------------
# low-level scanning


def comment_spans(text: str) -> list[tuple[int, int]]:
    """Return sorted (start, end) spans of commented-out text.

    A span runs from an unescaped ``%`` to the end of that line, excluding
    the newline itself (TeX eats it, but for our purposes the line boundary
    must survive).  Percent signs inside verbatim-like environments do not
    open comments.
    """
    spans: list[tuple[int, int]] = []
    in_verbatim: str | None = None
    offset = 0
    for line in text.splitlines(keepends=True):
        content_len = len(line.rstrip("\r\n"))
        if in_verbatim is not None:
            if f"\\end{{{in_verbatim}}}" in line:
                in_verbatim = None
            offset += len(line)
            continue
        cut = _comment_start(line, content_len)
        scan_end = content_len if cut is None else cut
        for m in _BEGIN_RE.finditer(line, 0, scan_end):
            name = m.group(1)
            if name in VERBATIM_ENVS:
                if f"\\end{{{name}}}" in line[m.end():scan_end]:
                    continue  # opened and closed on the same line
                in_verbatim = name
                break
        if cut is not None and in_verbatim is None:
            spans.append((offset + cut, offset + content_len))
        offset += len(line)
    return spans


def _comment_start(line: str, limit: int) -> int | None:
    i = 0
    while i < limit:
        ch = line[i]
        if ch == "\\":
            i += 2
            continue
        if ch == "%":
            return i
        i += 1
    return None


def _span_index(spans: list[tuple[int, int]]):
    """Build a fast pos -> containing-span lookup over sorted spans."""
    starts = [s for s, _ in spans]

    def lookup(pos: int) -> tuple[int, int] | None:
        i = bisect_right(starts, pos) - 1
        if i >= 0 and spans[i][0] <= pos < spans[i][1]:
            return spans[i]
        return None

    return lookup


def _escaped(text: str, pos: int) -> bool:
    """True when the backslash at *pos* is itself escaped (``\\\\begin``...)."""
    n = 0
    j = pos - 1
    while j >= 0 and text[j] == "\\":
        n += 1
        j -= 1
    return n % 2 == 1


def _match_group(text: str, open_pos: int, span_at) -> int | None:
    """Index of the ``}`` closing the ``{`` at *open_pos*, or None."""
    depth = 0
    i = open_pos
    n = len(text)
    while i < n:
        span = span_at(i)
        if span is not None:
            i = span[1]
            continue
        ch = text[i]
        if ch == "\\":
            i += 2
            continue
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i
        i += 1
    return None


def _match_optional(text: str, open_pos: int, span_at) -> int | None:
    """Index of the ``]`` closing the ``[`` at *open_pos*, or None.

    Brackets inside brace groups do not count, so ``[short {a]b}]`` closes
    at the final bracket.
    """
    bracket = 0
    brace = 0
    i = open_pos
    n = len(text)
    while i < n:
        span = span_at(i)
        if span is not None:
            i = span[1]
            continue
        ch = text[i]
        if ch == "\\":
            i += 2
            continue
        if ch == "{":
            brace += 1
        elif ch == "}":
            brace -= 1
        elif brace == 0:
            if ch == "[":
                bracket += 1
            elif ch == "]":
                bracket -= 1
                if bracket == 0:
                    return i
        i += 1
    return None


def _skip_ws(text: str, i: int) -> int:
    n = len(text)
    while i < n and text[i] in " \t\r\n":
        i += 1
    return i


def _find_env_end(text: str, search_from: int, name: str, span_at) -> int | None:
    """Position just past the ``\\end{name}`` matching an already-seen begin.

    Handles nesting of the same environment name; matches inside comments
    are ignored.
    """
    pattern = re.compile(r"\\(begin|end)\s*\{" + re.escape(name) + r"\}")
    depth = 1
    for m in pattern.finditer(text, search_from):
        if span_at(m.start()) is not None or _escaped(text, m.start()):
            continue
        if m.group(1) == "begin":
            depth += 1
        else:
            depth -= 1
            if depth == 0:
                return m.end()
    return None


def _search_skipping(pattern: re.Pattern, text: str, span_at, start: int = 0):
    """First match of *pattern* that is neither commented nor escaped."""
    pos = start
    while True:
        m = pattern.search(text, pos)
        if m is None:
            return None
        if span_at(m.start()) is None and not _escaped(text, m.start()):
            return m
        pos = m.start() + 1


# --------------------------------------------------------------------------
# project sources and merging


@dataclass(frozen=True)
class ProjectSource:
    """A LaTeX project on disk: the main file plus every .tex sibling."""

    root_dir: Path
    main_file: str  # relative POSIX path
    files: dict[str, str]  # relative POSIX path -> raw text

    def __post_init__(self):
        if self.main_file not in self.files:
            raise MissingMainFile(f"{self.main_file} not found under {self.root_dir}")

    @classmethod
    def from_dir(cls, root: Path | str, main_file: str | None = None) -> "ProjectSource":
        """Load every .tex file under *root*; auto-detect the main file.

        Detection prefers ``main.tex`` when it holds a ``\\documentclass``,
        then the alphabetically first file that does.
        """
        root = Path(root)
        if not root.is_dir():
            raise MissingMainFile(f"project directory does not exist: {root}")
        files: dict[str, str] = {}
        for path in sorted(root.rglob("*.tex")):
            rel = path.relative_to(root).as_posix()
            files[rel] = path.read_text(encoding="utf-8", errors="surrogateescape")
        if not files:
            raise MissingMainFile(f"no .tex files under {root}")
        if main_file is None:
            main_file = _detect_main(files)
        elif main_file not in files:
            raise MissingMainFile(f"{main_file} not found under {root}")
        return cls(root, main_file, files)


def _detect_main(files: dict[str, str]) -> str:
    candidates = [p for p in sorted(files) if "\\documentclass" in files[p]]
    if not candidates:
        raise MissingMainFile("no file contains \\documentclass")
    for p in candidates:
        if PurePosixPath(p).name == "main.tex":
            return p
    return candidates[0]


@dataclass(frozen=True)
class FileBoundary:
    """One inlined file: which token pair wraps it and what it replaced."""

    token_id: int
    path: str  # relative POSIX path of the inlined file
    directive: str  # the exact \input{...}/\include{...} text replaced


@dataclass(frozen=True)
class MergedDocument:
    text: str
    main_file: str
    boundaries: tuple[FileBoundary, ...] = ()
    warnings: tuple[str, ...] = ()


def _resolve_include(files: dict[str, str], raw: str) -> str | None:
    rel = str(PurePosixPath(raw.strip()))
    for candidate in (rel, rel + ".tex"):
        if candidate in files:
            return candidate
    return None


def merge_project(project: ProjectSource) -> MergedDocument:
    """Inline the include closure of the main file into one string.

    Each inlined file is wrapped in ``<PLACEHOLDER_FILE_k_begin>`` /
    ``<PLACEHOLDER_FILE_k_end>`` so it can be split back out verbatim.
    Include paths resolve relative to the project root.  Unresolvable
    directives are left in place and recorded as warnings; cycles are fatal.
    """
    warnings: list[str] = []
    boundaries: list[FileBoundary] = []
    visiting: list[str] = []
    counter = 0

    def expand(rel_path: str) -> str:
        nonlocal counter
        text = project.files[rel_path]
        visiting.append(rel_path)
        span_at = _span_index(comment_spans(text))
        out: list[str] = []
        pos = 0
        for m in _INCLUDE_RE.finditer(text):
            if m.start() < pos:
                continue
            if span_at(m.start()) is not None or _escaped(text, m.start()):
                continue
            target = _resolve_include(project.files, m.group(1))
            if target is None:
                warnings.append(
                    f"unresolved include {m.group(0)!r} in {rel_path}; left in place"
                )
                continue
            if target in visiting:
                raise InclusionCycle(visiting + [target])
            token_id = counter
            counter += 1
            body = expand(target)
            boundaries.append(FileBoundary(token_id, target, m.group(0)))
            out.append(text[pos : m.start()])
            out.append(file_begin_token(token_id))
            out.append(body)
            out.append(file_end_token(token_id))
            pos = m.end()
        out.append(text[pos:])
        visiting.pop()
        return "".join(out)

    merged_text = expand(project.main_file)
    boundaries.sort(key=lambda b: b.token_id)
    return MergedDocument(
        merged_text, project.main_file, tuple(boundaries), tuple(warnings)
    )


# --------------------------------------------------------------------------
# protection passes


def extract_captions(
    text: str, warnings: list[str] | None = None
) -> tuple[str, PlaceholderMap]:
    """Replace caption bodies inside float environments with CAP tokens.

    Handles ``\\caption``, ``\\caption*`` and ``\\captionof``, an optional
    short-caption argument, and nested braces in the body.  Tokens are
    numbered from zero in document order.
    """
    if warnings is None:
        warnings = []
    span_at = _span_index(comment_spans(text))
    in_float = _span_index(_float_spans(text, span_at))
    pmap = PlaceholderMap()
    out: list[str] = []
    pos = 0
    counter = 0
    for m in _CAPTION_RE.finditer(text):
        if m.start() < pos:
            continue
        if span_at(m.start()) is not None or _escaped(text, m.start()):
            continue
        if in_float(m.start()) is None:
            continue
        i = m.end()
        if m.group(1):  # \captionof{type} carries the float type first
            i = _skip_ws(text, i)
            if i >= len(text) or text[i] != "{":
                continue
            close = _match_group(text, i, span_at)
            if close is None:
                continue
            i = close + 1
        i = _skip_ws(text, i)
        if i < len(text) and text[i] == "[":
            close = _match_optional(text, i, span_at)
            if close is None:
                warnings.append(
                    f"UnbalancedBraces: unterminated optional argument of "
                    f"{m.group(0)} at offset {m.start()}"
                )
                continue
            i = close + 1
        i = _skip_ws(text, i)
        if i >= len(text) or text[i] != "{":
            continue  # bare \caption without a braced body: nothing to protect
        close = _match_group(text, i, span_at)
        if close is None:
            warnings.append(
                f"UnbalancedBraces: {m.group(0)} at offset {m.start()} never closes"
            )
            continue
        token = cap_token(counter)
        counter += 1
        pmap.add(token, KIND_CAP, text[i + 1 : close])
        out.append(text[pos : i + 1])
        out.append(token)
        pos = close
    out.append(text[pos:])
    return "".join(out), pmap


def _float_spans(text: str, span_at) -> list[tuple[int, int]]:
    """Spans of outermost float environments (where captions may live)."""
    spans: list[tuple[int, int]] = []
    last_end = 0
    for m in _BEGIN_RE.finditer(text):
        if m.start() < last_end:
            continue
        if span_at(m.start()) is not None or _escaped(text, m.start()):
            continue
        name = m.group(1)
        if name not in FLOAT_ENVS:
            continue
        end = _find_env_end(text, m.end(), name, span_at)
        if end is None:
            continue
        spans.append((m.start(), end))
        last_end = end
    return spans


def extract_environments(
    text: str, warnings: list[str] | None = None
) -> tuple[str, PlaceholderMap]:
    """Replace each top-level ``\\begin{x}...\\end{x}`` block with an ENV token.

    Only the document body is scanned (the preamble is never translated).
    Nested environments ride along inside their outermost block.  An
    unterminated begin or a stray end is recorded as a warning and the text
    is passed through unchanged.
    """
    if warnings is None:
        warnings = []
    span_at = _span_index(comment_spans(text))
    body_start, body_end = _document_body(text, span_at)
    pmap = PlaceholderMap()
    out: list[str] = [text[:body_start]]
    counter = 0
    i = body_start
    while True:
        m = _BEGIN_OR_END_RE.search(text, i, body_end)
        if m is None:
            break
        if span_at(m.start()) is not None or _escaped(text, m.start()):
            out.append(text[i : m.end()])
            i = m.end()
            continue
        which, name = m.group(1), m.group(2)
        if which == "end":
            warnings.append(
                f"UnmatchedEnvironment: stray \\end{{{name}}} at offset {m.start()}"
            )
            out.append(text[i : m.end()])
            i = m.end()
            continue
        end = _find_env_end(text, m.end(), name, span_at)
        if end is None or end > body_end:
            warnings.append(
                f"UnmatchedEnvironment: \\begin{{{name}}} at offset {m.start()} "
                f"has no matching \\end"
            )
            out.append(text[i : m.end()])
            i = m.end()
            continue
        token = env_token(counter)
        counter += 1
        pmap.add(token, KIND_ENV, text[m.start() : end])
        out.append(text[i : m.start()])
        out.append(token)
        i = end
    out.append(text[i:])
    return "".join(out), pmap


def _document_body(text: str, span_at) -> tuple[int, int]:
    m = _search_skipping(_BEGIN_DOC_RE, text, span_at)
    if m is None:
        return 0, len(text)
    e = _search_skipping(_END_DOC_RE, text, span_at, m.end())
    return m.end(), e.start() if e is not None else len(text)


def find_begin_document(text: str) -> int | None:
    """Offset of the first effective ``\\begin{document}``, or None."""
    span_at = _span_index(comment_spans(text))
    m = _search_skipping(_BEGIN_DOC_RE, text, span_at)
    return m.start() if m is not None else None


# --------------------------------------------------------------------------
# units


@dataclass
class TranslationUnit:
    """One schedulable piece of work for the agent loop.

    ``source_text`` is immutable ground truth; only ``status``,
    ``needs_translation`` and ``translated_text`` change over a run.
    """

    id: int
    granularity: str
    source_text: str
    needs_translation: bool = True
    status: str = STATUS_PENDING
    translated_text: str | None = None
    token: str | None = None  # the placeholder this unit fills (ENV/CAP only)
    env_name: str | None = None
    role: str = "body"  # preamble | body | env | caption

    def output_text(self) -> str:
        """Text this unit contributes to the final document.

        Falls back to the untouched source whenever there is no validated
        translation, so a failed unit degrades to "not translated" rather
        than corrupting the output.
        """
        if (
            self.needs_translation
            and self.status == STATUS_VALIDATED
            and self.translated_text is not None
        ):
            return self.translated_text
        return self.source_text


def split_sections(
    text: str, warnings: list[str] | None = None
) -> list[TranslationUnit]:
    """Cut the document into preamble + section-sized units.

    The preamble (up to and including ``\\begin{document}``) becomes a
    non-translatable unit.  The body is split before every sectioning
    command; front matter before the first section is its own unit.  The
    concatenation of all ``source_text`` fields equals *text* exactly.
    """
    if warnings is None:
        warnings = []
    span_at = _span_index(comment_spans(text))
    units: list[TranslationUnit] = []
    m = _search_skipping(_BEGIN_DOC_RE, text, span_at)
    if m is not None:
        units.append(
            TranslationUnit(
                id=0,
                granularity=GRAN_SECTION,
                source_text=text[: m.end()],
                needs_translation=False,
                role="preamble",
            )
        )
        body_off = m.end()
    else:
        body_off = 0
    cuts = [
        c.start()
        for c in _SECTION_RE.finditer(text, body_off)
        if span_at(c.start()) is None and not _escaped(text, c.start())
    ]
    prev = body_off
    segments: list[str] = []
    for cut in cuts:
        segments.append(text[prev:cut])
        prev = cut
    segments.append(text[prev:])
    for seg in segments:
        residue = TOKEN_RE.sub("", seg).strip()
        units.append(
            TranslationUnit(
                id=len(units),
                granularity=GRAN_SECTION,
                source_text=seg,
                needs_translation=bool(residue),
                role="body",
            )
        )
    return units


@dataclass
class ParsedDocument:
    """Everything the agent loop needs: tokenized text, maps, units."""

    merged: MergedDocument
    text: str  # body after caption + environment substitution
    cap_map: PlaceholderMap
    env_map: PlaceholderMap
    section_units: list[TranslationUnit] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def parse_project(project: ProjectSource) -> ParsedDocument:
    """Run the full parse pipeline over a project."""
    merged = merge_project(project)
    warnings = list(merged.warnings)
    decapped, cap_map = extract_captions(merged.text, warnings)
    stripped, env_map = extract_environments(decapped, warnings)
    sections = split_sections(stripped, warnings)
    return ParsedDocument(merged, stripped, cap_map, env_map, sections, warnings)


def _env_name_of(block: str) -> str | None:
    m = _BEGIN_RE.match(block)
    return m.group(1) if m is not None else None


def enumerate_units(doc: ParsedDocument) -> list[TranslationUnit]:
    """Flatten a parsed document into the ordered unit list.

    Section units come first (they carry the placeholder tokens), then one
    unit per environment, then one per caption.  Environment units start
    with ``needs_translation=False``; the unit filter may flip them.
    """
    units: list[TranslationUnit] = []
    for u in doc.section_units:
        units.append(dataclasses.replace(u, id=len(units)))
    for entry in doc.env_map:
        units.append(
            TranslationUnit(
                id=len(units),
                granularity=GRAN_ENVIRONMENT,
                source_text=entry.original_text,
                needs_translation=False,
                token=entry.token,
                env_name=_env_name_of(entry.original_text),
                role="env",
            )
        )
    for entry in doc.cap_map:
        units.append(
            TranslationUnit(
                id=len(units),
                granularity=GRAN_CAPTION,
                source_text=entry.original_text,
                needs_translation=True,
                token=entry.token,
                role="caption",
            )
        )
    return units


def units_to_manifest(units: list[TranslationUnit]) -> list[dict]:
    """JSON-friendly view of the unit list (ids, kinds, flags, statuses)."""
    return [
        {
            "id": u.id,
            "granularity": u.granularity,
            "needs_translation": u.needs_translation,
            "status": u.status,
            "token": u.token,
            "env_name": u.env_name,
            "role": u.role,
            "chars": len(u.source_text),
        }
        for u in units
    ]
