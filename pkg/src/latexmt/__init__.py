"""latexmt: structure-preserving machine translation for LaTeX projects.

Parses a LaTeX project into translation units while hiding everything a
translator must not touch behind placeholder tokens, runs a translate /
validate / revise agent loop against any OpenAI-compatible endpoint (or a
deterministic mock), reconstructs the original file layout, and scores the
result by compiling it.
"""

from .evaluator import FCScoreParams, LogStats, fc_score, parse_log, score_corpus
from .parser import ProjectSource, enumerate_units, parse_project
from .placeholders import PlaceholderMap

__version__ = "0.1.0"

__all__ = [
    "FCScoreParams",
    "LogStats",
    "PlaceholderMap",
    "ProjectSource",
    "enumerate_units",
    "fc_score",
    "parse_log",
    "parse_project",
    "score_corpus",
    "__version__",
]
