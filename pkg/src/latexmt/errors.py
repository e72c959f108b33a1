"""Exception types shared across the toolchain.

Fatal conditions raise; recoverable ones are recorded as warning strings on
whatever object is being built (parse results, pipeline results, reports).
"""

from __future__ import annotations


class LatexmtError(Exception):
    """Base class for every error raised by this package."""


# --------------------------------------------------------------------------
# project loading / merging


class MissingMainFile(LatexmtError):
    """The main .tex file was not found or could not be identified."""


class InclusionCycle(LatexmtError):
    """A chain of \\input/\\include directives loops back on itself."""

    def __init__(self, chain: list[str]):
        self.chain = list(chain)
        super().__init__("inclusion cycle: " + " -> ".join(self.chain))


# --------------------------------------------------------------------------
# LLM client


class LlmError(LatexmtError):
    """Base class for chat-completion failures."""


class AuthError(LlmError):
    """The endpoint rejected our credentials; retrying will not help."""


class TransientLlmError(LlmError):
    """A retryable transport failure (rate limit, 5xx, timeout)."""


class RetryBudgetExhausted(LlmError):
    """Every retry attempt failed; carries the last underlying error."""

    def __init__(self, attempts: int, last: Exception):
        self.attempts = attempts
        self.last = last
        super().__init__(f"gave up after {attempts} attempts: {last}")


class EmptyCompletion(LlmError):
    """The backend returned an empty or whitespace-only reply."""


class ScriptExhausted(LlmError):
    """A scripted mock ran out of canned replies."""


class LlmUnparseableReply(LlmError):
    """A reply did not match the strict format an agent requires."""


# --------------------------------------------------------------------------
# reconstruction


class PlaceholderError(LatexmtError):
    """Base class for placeholder-conservation failures during reassembly."""

    def __init__(self, token: str, detail: str = ""):
        self.token = token
        msg = f"{type(self).__name__}: {token}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class UnresolvedPlaceholder(PlaceholderError):
    """A placeholder token in the output has no entry in any map."""


class MissingPlaceholderUse(PlaceholderError):
    """A map entry was never substituted back into the output."""


class DuplicatePlaceholderUse(PlaceholderError):
    """A map entry was substituted more than once."""


class UnbalancedFileBoundaries(LatexmtError):
    """File begin/end markers do not pair up or nest properly."""


class EngineNotFound(LatexmtError):
    """The requested TeX engine is not on PATH."""


class EngineTimeout(LatexmtError):
    """A compilation pass exceeded its time limit."""


# --------------------------------------------------------------------------
# scoring / configuration


class EmptyCorpus(LatexmtError):
    """Corpus-level scoring was asked to aggregate zero documents."""


class ConfigError(LatexmtError):
    """A configuration file is malformed or contains unknown keys."""


class PipelineFailed(LatexmtError):
    """Every translatable unit failed; there is nothing to emit."""
