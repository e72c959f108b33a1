"""Document reconstruction: substitute back, split files out, compile.

Reassembly enforces placeholder conservation strictly: every map entry
must be consumed exactly once and no unknown token may remain.  Environment
tokens are resolved before caption tokens because captions live inside
environment bodies.
"""

from __future__ import annotations

import shutil
import subprocess
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    DuplicatePlaceholderUse,
    EngineNotFound,
    EngineTimeout,
    MissingPlaceholderUse,
    UnbalancedFileBoundaries,
    UnresolvedPlaceholder,
)
from .evaluator import parse_log
from .parser import GRAN_SECTION, MergedDocument, TranslationUnit, find_begin_document
from .placeholders import (
    CAP_TOKEN_RE,
    ENV_TOKEN_RE,
    FILE_TOKEN_RE,
    PlaceholderMap,
    file_begin_token,
    file_end_token,
)

DEFAULT_LANGUAGE_PREAMBLES: dict[str, tuple[str, ...]] = {
    "zh": ("\\usepackage{xeCJK}",),
    "ja": ("\\usepackage{xeCJK}",),
    "ko": ("\\usepackage{xeCJK}",),
}


# --------------------------------------------------------------------------
# reassembly


def reassemble(
    units: list[TranslationUnit],
    cap_map: PlaceholderMap,
    env_map: PlaceholderMap,
    merged: MergedDocument | None = None,
) -> str:
    """Rebuild the merged document from translated units and maps.

    Section units are concatenated in id order, then ENV tokens are
    replaced (by the environment unit's output if one exists, else the
    original text), then CAP tokens inside those bodies the same way.
    When *merged* is given, its file-boundary tokens are verified to
    survive exactly once each; they are otherwise left for :func:`unmerge`.
    """
    by_token = {u.token: u for u in units if u.token is not None}
    base = "".join(
        u.output_text() for u in units if u.granularity == GRAN_SECTION
    )
    text, env_counts = _substitute(base, ENV_TOKEN_RE, env_map, by_token)
    text, cap_counts = _substitute(text, CAP_TOKEN_RE, cap_map, by_token)
    _check_consumed(env_map, env_counts)
    _check_consumed(cap_map, cap_counts)
    if merged is not None:
        for boundary in merged.boundaries:
            for token in (
                file_begin_token(boundary.token_id),
                file_end_token(boundary.token_id),
            ):
                n = text.count(token)
                if n != 1:
                    raise UnbalancedFileBoundaries(
                        f"{token} appears {n} times after reassembly (expected 1)"
                    )
    return text


def _substitute(
    text: str,
    token_re,
    pmap: PlaceholderMap,
    by_token: dict[str, TranslationUnit],
) -> tuple[str, Counter]:
    counts: Counter = Counter()

    def repl(m):
        token = m.group(0)
        entry = pmap.get(token)
        if entry is None:
            raise UnresolvedPlaceholder(token, "not present in any map")
        counts[token] += 1
        unit = by_token.get(token)
        return unit.output_text() if unit is not None else entry.original_text

    return token_re.sub(repl, text), counts


def _check_consumed(pmap: PlaceholderMap, counts: Counter) -> None:
    for entry in pmap:
        n = counts.get(entry.token, 0)
        if n == 0:
            raise MissingPlaceholderUse(entry.token, "never substituted back")
        if n > 1:
            raise DuplicatePlaceholderUse(entry.token, f"substituted {n} times")


# --------------------------------------------------------------------------
# un-merging


class _FileNode:
    __slots__ = ("boundary", "items")

    def __init__(self, boundary):
        self.boundary = boundary
        self.items: list = []  # str pieces and child _FileNodes, in order


def unmerge(full_text: str, merged: MergedDocument, out_dir: Path | str) -> list[Path]:
    """Split a merged document back into its original file tree.

    Every begin/end boundary pair becomes one file under *out_dir*; the
    containing file gets the original ``\\input``/``\\include`` directive
    back.  Mispaired or unknown boundary tokens are fatal.  Returns the
    written paths, main file first.
    """
    out_dir = Path(out_dir)
    by_id = {b.token_id: b for b in merged.boundaries}
    root = _FileNode(None)
    stack = [root]
    cursor = 0
    for m in FILE_TOKEN_RE.finditer(full_text):
        token_id, which = int(m.group(1)), m.group(2)
        stack[-1].items.append(full_text[cursor : m.start()])
        cursor = m.end()
        if which == "begin":
            boundary = by_id.get(token_id)
            if boundary is None:
                raise UnbalancedFileBoundaries(
                    f"unknown file boundary token {m.group(0)}"
                )
            node = _FileNode(boundary)
            stack[-1].items.append(node)
            stack.append(node)
        else:
            if len(stack) == 1 or stack[-1].boundary.token_id != token_id:
                raise UnbalancedFileBoundaries(f"unexpected {m.group(0)}")
            stack.pop()
    if len(stack) != 1:
        raise UnbalancedFileBoundaries(
            f"missing end marker for file {stack[-1].boundary.path}"
        )
    root.items.append(full_text[cursor:])

    written: list[Path] = []

    def emit(node: _FileNode, rel_path: str) -> None:
        content = "".join(
            item if isinstance(item, str) else item.boundary.directive
            for item in node.items
        )
        path = out_dir / rel_path
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", errors="surrogateescape", newline="") as fh:
            fh.write(content)
        written.append(path)
        for item in node.items:
            if isinstance(item, _FileNode):
                emit(item, item.boundary.path)

    emit(root, merged.main_file)
    return written


# --------------------------------------------------------------------------
# language preamble


def inject_language_preamble(
    text: str,
    target_language: str,
    preambles: dict[str, tuple[str, ...]] | None = None,
    warnings: list[str] | None = None,
) -> str:
    """Insert the target language's support lines before ``\\begin{document}``.

    Idempotent: lines already present in the preamble are not added again.
    Languages without an entry (e.g. ``en``) leave the text untouched.
    """
    table = DEFAULT_LANGUAGE_PREAMBLES if preambles is None else preambles
    lines = table.get(target_language, ())
    if not lines:
        return text
    insert_at = find_begin_document(text)
    if insert_at is None:
        if warnings is not None:
            warnings.append(
                "no \\begin{document} found; language preamble prepended to file"
            )
        insert_at = 0
    region = text[:insert_at]
    missing = [line for line in lines if line not in region]
    if not missing:
        return text
    block = "".join(line + "\n" for line in missing)
    return text[:insert_at] + block + text[insert_at:]


# --------------------------------------------------------------------------
# compilation


@dataclass(frozen=True)
class CompileReport:
    engine: str
    success: bool
    error_count: int
    warning_count: int
    log_path: Path | None
    elapsed: float
    passes: int = 2
    returncode: int | None = None


def compile_document(
    tex_dir: Path | str,
    main_file: str,
    engine: str,
    timeout: float = 300.0,
    passes: int = 2,
    count_box_warnings: bool = False,
) -> CompileReport:
    """Run the engine over the main file (twice, for references).

    A failed compilation is data, not an exception: the report carries the
    parsed error/warning counts either way.  Only a missing engine or a
    pass blowing the time limit raises.
    """
    if shutil.which(engine) is None:
        raise EngineNotFound(f"TeX engine not on PATH: {engine}")
    tex_dir = Path(tex_dir)
    started = time.monotonic()
    returncode: int | None = None
    for _ in range(max(1, passes)):
        try:
            proc = subprocess.run(
                [engine, "-interaction=nonstopmode", main_file],
                cwd=tex_dir,
                stdout=subprocess.DEVNULL,
                stderr=subprocess.DEVNULL,
                timeout=timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise EngineTimeout(
                f"{engine} exceeded {timeout:.0f}s on {main_file}"
            ) from exc
        returncode = proc.returncode
    elapsed = time.monotonic() - started
    stem = Path(main_file).stem
    log_path = tex_dir / f"{stem}.log"
    log_text = (
        log_path.read_text(encoding="utf-8", errors="replace")
        if log_path.exists()
        else ""
    )
    stats = parse_log(log_text, count_box_warnings=count_box_warnings)
    pdf_path = tex_dir / f"{stem}.pdf"
    success = stats.compiled and returncode == 0 and pdf_path.exists()
    return CompileReport(
        engine=engine,
        success=success,
        error_count=stats.error_count,
        warning_count=stats.warning_count,
        log_path=log_path if log_path.exists() else None,
        elapsed=elapsed,
        passes=max(1, passes),
        returncode=returncode,
    )
