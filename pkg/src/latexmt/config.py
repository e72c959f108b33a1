"""Run configuration: defaults, YAML loading, environment interpolation."""

from __future__ import annotations

import dataclasses
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

LANGUAGE_NAMES = {
    "en": "English",
    "zh": "Chinese",
    "ja": "Japanese",
    "ko": "Korean",
    "fr": "French",
    "de": "German",
    "es": "Spanish",
    "it": "Italian",
    "pt": "Portuguese",
    "ru": "Russian",
    "ar": "Arabic",
    "hi": "Hindi",
}

CJK_LANGUAGES = frozenset({"zh", "ja", "ko"})

_ENV_VAR_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def base_language(tag: str) -> str:
    """``zh-CN`` -> ``zh``; already-bare tags pass through."""
    return tag.lower().split("-")[0].split("_")[0]


def language_name(tag: str) -> str:
    """Human-readable name used inside prompts; unknown tags pass through."""
    return LANGUAGE_NAMES.get(base_language(tag), tag)


@dataclass
class RunConfig:
    """Everything one invocation needs, flag- and file-configurable."""

    # languages
    source_language: str = "en"
    target_language: str = "zh"

    # model access
    endpoint: str = "http://localhost:8000/v1"
    model: str = ""
    api_key_env: str = "OPENAI_API_KEY"
    request_timeout: float = 60.0
    retry_budget: int = 3
    backoff_base: float = 0.5
    prompt_token_price: float = 0.0
    completion_token_price: float = 0.0

    # agents
    translator_temperature: float = 0.7
    judge_temperature: float = 0.0
    agent_max_new_tokens: int = 8192
    max_validation_rounds: int = 3
    term_dict_cap: int = 200
    completeness_check: bool = True
    filter_parse_retries: int = 3
    prompt_dir: str = ""
    protected_envs_path: str = ""

    # output and compilation
    out_dir: str = "out"
    engine: str = ""  # empty = pick by target language
    compile_enabled: bool = True
    compile_timeout: float = 300.0
    compile_passes: int = 2
    count_box_warnings: bool = False
    inject_preamble: bool = True
    language_preambles: dict = field(default_factory=dict)

    # execution
    workers: int = 1
    mock: str = ""  # "", "echo" or "scripted"
    mock_script: str = ""

    def validate(self) -> None:
        problems = []
        if not self.source_language:
            problems.append("source_language must be set")
        if not self.target_language:
            problems.append("target_language must be set")
        if self.max_validation_rounds < 1:
            problems.append("max_validation_rounds must be >= 1")
        if self.retry_budget < 1:
            problems.append("retry_budget must be >= 1")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        if self.compile_passes < 1:
            problems.append("compile_passes must be >= 1")
        if self.translator_temperature < 0:
            problems.append("translator_temperature must be >= 0")
        if self.judge_temperature < 0:
            problems.append("judge_temperature must be >= 0")
        if self.agent_max_new_tokens < 1:
            problems.append("agent_max_new_tokens must be >= 1")
        if self.term_dict_cap < 1:
            problems.append("term_dict_cap must be >= 1")
        if self.mock not in ("", "echo", "scripted"):
            problems.append(f"mock must be empty, 'echo' or 'scripted', not {self.mock!r}")
        if self.mock == "scripted" and not self.mock_script:
            problems.append("mock=scripted requires mock_script")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def chosen_engine(self) -> str:
        if self.engine:
            return self.engine
        if base_language(self.target_language) in CJK_LANGUAGES:
            return "xelatex"
        return "pdflatex"


def _interpolate(value):
    """Recursively substitute ``${VAR}`` from the environment in strings."""
    if isinstance(value, str):

        def sub(m: re.Match) -> str:
            var = m.group(1)
            if var not in os.environ:
                raise ConfigError(f"environment variable not set: {var}")
            return os.environ[var]

        return _ENV_VAR_RE.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


def _coerce(name: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}")
        return value
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{name} must be a mapping, got {value!r}")
        return value
    return value


def load_config(
    path: Path | str | None = None, overrides: dict | None = None
) -> RunConfig:
    """Build a RunConfig from an optional YAML file plus CLI overrides.

    Unknown keys are rejected outright; ``${VAR}`` references resolve from
    the environment and must exist.  Override values of None mean "flag not
    given" and are skipped.
    """
    config = RunConfig()
    defaults = RunConfig()
    fields = {f.name for f in dataclasses.fields(RunConfig)}

    def apply(mapping: dict, origin: str) -> None:
        unknown = sorted(set(mapping) - fields)
        if unknown:
            raise ConfigError(f"unknown {origin} keys: {', '.join(unknown)}")
        for key, value in mapping.items():
            setattr(config, key, _coerce(key, getattr(defaults, key), value))

    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        apply(_interpolate(raw), "config")

    if overrides:
        apply({k: v for k, v in overrides.items() if v is not None}, "override")

    config.validate()
    return config
