"""The multi-agent translation loop.

One translator pass over all units (building a rolling document summary and
a first-occurrence-wins term dictionary as it goes), then batched
validation rounds.  Two validation dimensions are purely mechanical
(placeholder and control-sequence conservation); the third asks a judge
model about content completeness and degrades to "skipped" when no usable
judge reply is available.  Units still failing after the round cap fall
back to their source text, so a bad unit can never corrupt the document.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

from . import prompts
from .config import language_name
from .errors import LlmError, PipelineFailed
from .llm import ChatRequest, LlmClient
from .parser import (
    GRAN_SECTION,
    STATUS_FAILED,
    STATUS_TRANSLATED,
    STATUS_VALIDATED,
    TranslationUnit,
)
from .placeholders import TOKEN_RE

DIM_PLACEHOLDER = "PLACEHOLDER_INTEGRITY"
DIM_COMMAND = "COMMAND_INTEGRITY"
DIM_COMPLETENESS = "CONTENT_COMPLETENESS"

SUMMARY_WORD_LIMIT = 300

# Control sequences that may legitimately appear or vanish when prose moves
# between languages (quotation marks get replaced by native punctuation).
DEFAULT_COMMAND_ALLOWLIST = frozenset(
    {
        "textquotedblleft",
        "textquotedblright",
        "textquoteleft",
        "textquoteright",
        "textellipsis",
    }
)

# A control word is a backslash followed by letters.  Matching any Unicode
# letter (not just A-Z) is deliberate: a translator that invents something
# like a backslash followed by CJK characters must be caught, not ignored.
_CONTROL_WORD_RE = re.compile(r"\\[^\W\d_]+", re.UNICODE)

_TERM_LINE_RE = re.compile(r'^\s*"(.+?)"\s*-\s*"(.+?)"\s*$')


@dataclass
class PipelineConfig:
    source_language: str = "en"
    target_language: str = "zh"
    model: str = ""
    translator_temperature: float = 0.7
    judge_temperature: float = 0.0
    agent_max_new_tokens: int = 8192
    max_validation_rounds: int = 3
    term_dict_cap: int = 200
    completeness_check: bool = True
    command_allowlist: frozenset = DEFAULT_COMMAND_ALLOWLIST
    prompt_dir: str | None = None

    def __post_init__(self):
        if self.max_validation_rounds < 1:
            raise ValueError("max_validation_rounds must be at least 1")
        if self.term_dict_cap < 1:
            raise ValueError("term_dict_cap must be at least 1")

    @property
    def tgt_language_name(self) -> str:
        return language_name(self.target_language)


@dataclass
class Summary:
    """Rolling document summary carried across section translations."""

    text: str = ""
    version: int = 0

    @property
    def word_count(self) -> int:
        return len(self.text.split())


class TermDictionary:
    """Ordered source-term -> target-term pairs; first occurrence wins."""

    def __init__(self):
        self._pairs: list[tuple[str, str]] = []
        self._by_source: dict[str, str] = {}

    def add(self, source_term: str, target_term: str) -> bool:
        """Record a pair unless the source term is already pinned."""
        key = source_term.strip()
        if not key or key in self._by_source:
            return False
        self._by_source[key] = target_term
        self._pairs.append((key, target_term))
        return True

    def lookup(self, source_term: str) -> str | None:
        return self._by_source.get(source_term)

    def __contains__(self, source_term: object) -> bool:
        return source_term in self._by_source

    def __len__(self) -> int:
        return len(self._pairs)

    def __iter__(self):
        return iter(self._pairs)

    def pairs(self) -> list[tuple[str, str]]:
        return list(self._pairs)

    def render(self, cap: int | None = None) -> str:
        """The injection block: one quoted pair per line, most recent *cap*."""
        chosen = self._pairs if cap is None else self._pairs[-cap:]
        return "\n".join(f'"{src}" - "{tgt}"' for src, tgt in chosen)


@dataclass(frozen=True)
class Finding:
    unit_id: int
    dimension: str
    description: str

    def to_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "dimension": self.dimension,
            "description": self.description,
        }


@dataclass
class ErrorReport:
    """All findings from one validation round."""

    round_index: int
    findings: list[Finding] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)  # dimensions that degraded

    @property
    def ok(self) -> bool:
        return not self.findings

    def for_unit(self, unit_id: int) -> list[Finding]:
        return [f for f in self.findings if f.unit_id == unit_id]

    def flagged_unit_ids(self) -> list[int]:
        return sorted({f.unit_id for f in self.findings})

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "findings": [f.to_dict() for f in self.findings],
            "skipped": list(self.skipped),
        }


# --------------------------------------------------------------------------
# mechanical validation


def check_placeholder_integrity(unit: TranslationUnit) -> list[Finding]:
    """Compare placeholder-token multisets between source and translation."""
    src = Counter(TOKEN_RE.findall(unit.source_text))
    dst = Counter(TOKEN_RE.findall(unit.translated_text or ""))
    findings = []
    for token in sorted(src.keys() | dst.keys()):
        have, want = dst[token], src[token]
        if have == want:
            continue
        if have < want:
            desc = f"placeholder {token} lost (source has {want}, translation has {have})"
        else:
            desc = f"placeholder {token} duplicated (source has {want}, translation has {have})"
        findings.append(Finding(unit.id, DIM_PLACEHOLDER, desc))
    return findings


def check_command_integrity(
    unit: TranslationUnit, allowlist: frozenset = DEFAULT_COMMAND_ALLOWLIST
) -> list[Finding]:
    """Compare control-sequence multisets between source and translation."""
    src = Counter(m.group(0) for m in _CONTROL_WORD_RE.finditer(unit.source_text))
    dst = Counter(
        m.group(0) for m in _CONTROL_WORD_RE.finditer(unit.translated_text or "")
    )
    findings = []
    for cmd in sorted(src.keys() | dst.keys()):
        if cmd[1:] in allowlist:
            continue
        have, want = dst[cmd], src[cmd]
        if have == want:
            continue
        if want == 0:
            desc = f"control sequence {cmd} introduced by translation ({have} occurrences, none in source)"
        elif have < want:
            desc = f"control sequence {cmd} dropped (source has {want}, translation has {have})"
        else:
            desc = f"control sequence {cmd} count changed (source has {want}, translation has {have})"
        findings.append(Finding(unit.id, DIM_COMMAND, desc))
    return findings


def check_content_completeness(
    unit: TranslationUnit,
    client: LlmClient,
    config: PipelineConfig,
    report: ErrorReport,
    warnings: list[str],
) -> list[Finding]:
    """Ask the judge model whether content survived; degrade on bad replies.

    Reply contract: exactly ``OK`` means clean; otherwise every non-blank
    line must start with ``- `` and becomes one finding.  Anything else
    (including transport failure) skips the dimension for this unit.
    """
    request = ChatRequest(
        system_prompt=prompts.render(
            "completeness", config.tgt_language_name, config.prompt_dir
        ),
        user_message=(
            f"[Original]\n{unit.source_text}\n\n[Translation]\n{unit.translated_text}"
        ),
        temperature=config.judge_temperature,
        max_new_tokens=config.agent_max_new_tokens,
        model=config.model,
    )
    try:
        reply = client.chat(request).strip()
    except LlmError as exc:
        warnings.append(f"completeness check skipped for unit {unit.id}: {exc}")
        report.skipped.append(f"unit {unit.id}: {DIM_COMPLETENESS}")
        return []
    if reply == "OK":
        return []
    lines = [line.strip() for line in reply.splitlines() if line.strip()]
    if lines and all(line.startswith("- ") for line in lines):
        return [
            Finding(unit.id, DIM_COMPLETENESS, line[2:].strip()) for line in lines
        ]
    warnings.append(
        f"completeness reply unparseable for unit {unit.id}; dimension skipped"
    )
    report.skipped.append(f"unit {unit.id}: {DIM_COMPLETENESS}")
    return []


def validate_translations(
    units: list[TranslationUnit],
    round_index: int,
    client: LlmClient | None,
    config: PipelineConfig,
    warnings: list[str] | None = None,
) -> ErrorReport:
    """Batch-validate every candidate translation in *units*.

    Mechanical dimensions always run.  The completeness dimension runs only
    for units that passed both mechanical checks (no point judging content
    that already has to be regenerated).
    """
    if warnings is None:
        warnings = []
    report = ErrorReport(round_index)
    for unit in units:
        if not unit.needs_translation or unit.translated_text is None:
            continue
        mechanical = check_placeholder_integrity(unit)
        mechanical += check_command_integrity(unit, config.command_allowlist)
        report.findings.extend(mechanical)
        if mechanical:
            continue
        if config.completeness_check and client is not None:
            report.findings.extend(
                check_content_completeness(unit, client, config, report, warnings)
            )
    return report


# --------------------------------------------------------------------------
# generation agents


def render_translator_system(
    summary: Summary, dictionary: TermDictionary, config: PipelineConfig
) -> str:
    base = prompts.render("translator", config.tgt_language_name, config.prompt_dir)
    dict_block = dictionary.render(config.term_dict_cap)
    return (
        f"{base}\n\n[Summary]\n{summary.text or '(none yet)'}"
        f"\n\n[Term Dictionary]\n{dict_block or '(empty)'}"
    )


def translate_unit(
    unit: TranslationUnit,
    summary: Summary,
    dictionary: TermDictionary,
    client: LlmClient,
    config: PipelineConfig,
) -> str:
    """One translator call; the unit source is the entire user message."""
    request = ChatRequest(
        system_prompt=render_translator_system(summary, dictionary, config),
        user_message=unit.source_text,
        temperature=config.translator_temperature,
        max_new_tokens=config.agent_max_new_tokens,
        model=config.model,
    )
    return client.chat(request)


def retranslate_unit(
    unit: TranslationUnit,
    findings: list[Finding],
    client: LlmClient,
    config: PipelineConfig,
) -> str:
    """One corrector call: original + current translation + what is wrong."""
    if not findings:
        raise ValueError("retranslate_unit needs at least one finding")
    errors_block = "\n".join(f"- [{f.dimension}] {f.description}" for f in findings)
    request = ChatRequest(
        system_prompt=prompts.render(
            "corrector", config.tgt_language_name, config.prompt_dir
        ),
        user_message=(
            f"[Original]\n{unit.source_text}\n\n"
            f"[Translation]\n{unit.translated_text}\n\n"
            f"[Error Reports]\n{errors_block}"
        ),
        temperature=config.translator_temperature,
        max_new_tokens=config.agent_max_new_tokens,
        model=config.model,
    )
    return client.chat(request)


def update_summary(
    summary: Summary,
    new_section: str,
    client: LlmClient,
    config: PipelineConfig,
    warnings: list[str] | None = None,
) -> Summary:
    """Fold a just-translated section into the rolling summary.

    Failures keep the previous summary; an over-long reply is kept but
    recorded as a warning (the word limit is a target, not a knife).
    """
    if warnings is None:
        warnings = []
    request = ChatRequest(
        system_prompt=prompts.render("summarizer", prompt_dir=config.prompt_dir),
        user_message=(
            f"prev_summary:\n{summary.text or '(empty)'}\n\nnew_section:\n{new_section}"
        ),
        temperature=config.judge_temperature,
        max_new_tokens=config.agent_max_new_tokens,
        model=config.model,
    )
    try:
        text = client.chat(request)
    except LlmError as exc:
        warnings.append(
            f"summary update failed, keeping version {summary.version}: {exc}"
        )
        return summary
    words = len(text.split())
    if words > SUMMARY_WORD_LIMIT:
        warnings.append(
            f"summary reached {words} words (target {SUMMARY_WORD_LIMIT}); not truncated"
        )
    return Summary(text, summary.version + 1)


def extract_terms(
    source_text: str,
    translated_text: str,
    dictionary: TermDictionary,
    client: LlmClient,
    config: PipelineConfig,
    warnings: list[str] | None = None,
) -> list[tuple[str, str]]:
    """Mine new term pairs from one source/translation pair.

    The reply must be ``N/A`` or lines of ``"src" - "tgt"``.  Malformed
    lines are skipped (one aggregated warning per reply); existing source
    terms are never overwritten.  Returns the pairs actually added.
    """
    if warnings is None:
        warnings = []
    request = ChatRequest(
        system_prompt=prompts.render(
            "terminology", config.tgt_language_name, config.prompt_dir
        ),
        user_message=f"[Source]\n{source_text}\n\n[Translation]\n{translated_text}",
        temperature=config.judge_temperature,
        max_new_tokens=config.agent_max_new_tokens,
        model=config.model,
    )
    try:
        reply = client.chat(request)
    except LlmError as exc:
        warnings.append(f"terminology extraction failed: {exc}")
        return []
    cleaned = reply.strip()
    if cleaned.strip("'\"").strip() == "N/A":
        return []
    added: list[tuple[str, str]] = []
    malformed = 0
    for line in cleaned.splitlines():
        if not line.strip():
            continue
        m = _TERM_LINE_RE.match(line)
        if m is None:
            malformed += 1
            continue
        if dictionary.add(m.group(1), m.group(2)):
            added.append((m.group(1), m.group(2)))
    if malformed:
        warnings.append(
            f"terminology reply contained {malformed} unparseable line(s); skipped"
        )
    return added


# --------------------------------------------------------------------------
# the loop


@dataclass
class PipelineResult:
    units: list[TranslationUnit]
    summary: Summary
    dictionary: TermDictionary
    rounds_used: int
    reports: list[ErrorReport]
    warnings: list[str]

    @property
    def final_report(self) -> ErrorReport:
        return self.reports[-1] if self.reports else ErrorReport(0)

    def failed_units(self) -> list[TranslationUnit]:
        return [u for u in self.units if u.status == STATUS_FAILED]


def run_pipeline(
    units: list[TranslationUnit],
    client: LlmClient,
    config: PipelineConfig,
    warnings: list[str] | None = None,
) -> PipelineResult:
    """Translate every unit, then validate/revise until clean or capped.

    Re-validation in later rounds covers only previously flagged units, so
    the workload shrinks monotonically.  A unit that still has findings
    after ``max_validation_rounds`` is marked FAILED and will fall back to
    its source text at reassembly.  The run as a whole fails only when no
    unit at all produced a candidate translation.
    """
    if warnings is None:
        warnings = []
    summary = Summary()
    dictionary = TermDictionary()

    for unit in units:
        if not unit.needs_translation:
            unit.status = STATUS_VALIDATED  # emitted verbatim, nothing to check
            continue
        try:
            unit.translated_text = translate_unit(
                unit, summary, dictionary, client, config
            )
            unit.status = STATUS_TRANSLATED
        except LlmError as exc:
            warnings.append(f"translation failed for unit {unit.id}: {exc}")
            unit.status = STATUS_FAILED
            continue
        extract_terms(
            unit.source_text, unit.translated_text, dictionary, client, config, warnings
        )
        if unit.granularity == GRAN_SECTION:
            summary = update_summary(summary, unit.source_text, client, config, warnings)

    wanted = [u for u in units if u.needs_translation]
    if wanted and all(u.status == STATUS_FAILED for u in wanted):
        raise PipelineFailed(f"all {len(wanted)} translatable units failed")

    pending = [u for u in wanted if u.status == STATUS_TRANSLATED]
    reports: list[ErrorReport] = []
    rounds_used = 0
    while pending and rounds_used < config.max_validation_rounds:
        rounds_used += 1
        report = validate_translations(pending, rounds_used, client, config, warnings)
        reports.append(report)
        flagged = set(report.flagged_unit_ids())
        for unit in pending:
            if unit.id not in flagged:
                unit.status = STATUS_VALIDATED
        pending = [u for u in pending if u.id in flagged]
        if not pending:
            break
        if rounds_used >= config.max_validation_rounds:
            for unit in pending:
                unit.status = STATUS_FAILED
                warnings.append(
                    f"unit {unit.id} still failing after {rounds_used} validation "
                    f"rounds; falling back to source text"
                )
            break
        for unit in pending:
            try:
                unit.translated_text = retranslate_unit(
                    unit, report.for_unit(unit.id), client, config
                )
            except LlmError as exc:
                warnings.append(f"revision failed for unit {unit.id}: {exc}")

    return PipelineResult(units, summary, dictionary, rounds_used, reports, warnings)
