"""Command-line interface: translate, parse, score, config-check.

Exit codes: 0 success, 2 usage/configuration error, 3 pipeline failure.
Each translated document gets its own output tree::

    out/<doc-id>/tex/      translated sources (plus untouched project files)
    out/<doc-id>/pdf/      compiled artifact, when an engine ran
    out/<doc-id>/logs/     compile log, LLM transcript, timing sidecar
    out/<doc-id>/maps/     placeholder maps and the unit manifest
    out/<doc-id>/report.json

report.json deliberately excludes wall-clock data so that two runs with the
same config and mock transcript are byte-identical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import yaml

from .agents import PipelineConfig, run_pipeline
from .config import RunConfig, base_language, load_config
from .errors import (
    ConfigError,
    EmptyCorpus,
    EngineTimeout,
    LatexmtError,
    MissingMainFile,
)
from .evaluator import FCScoreParams, LogStats, fc_score, parse_log, score_corpus
from .generator import (
    DEFAULT_LANGUAGE_PREAMBLES,
    compile_document,
    inject_language_preamble,
    reassemble,
    unmerge,
)
from .llm import EchoBackend, HttpBackend, LlmClient, ScriptedBackend, UsageLedger
from .parser import (
    GRAN_CAPTION,
    GRAN_ENVIRONMENT,
    GRAN_SECTION,
    ProjectSource,
    enumerate_units,
    parse_project,
    units_to_manifest,
)
from .placeholders import (
    KIND_FILE_BEGIN,
    KIND_FILE_END,
    PlaceholderMap,
    file_begin_token,
    file_end_token,
)
from .unit_filter import ProtectedEnvList, classify_units

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILURE = 3


# --------------------------------------------------------------------------
# translate


@dataclass
class RunOutcome:
    doc_id: str
    out_dir: Path
    ok: bool
    error: str | None = None
    usage_error: bool = False
    report: dict = dataclasses.field(default_factory=dict)


def _build_client(config: RunConfig, logs_dir: Path | None) -> LlmClient:
    if config.mock == "echo":
        backend = EchoBackend()
    elif config.mock == "scripted":
        backend = ScriptedBackend.from_file(config.mock_script)
    else:
        api_key = os.environ.get(config.api_key_env) or None
        backend = HttpBackend(
            config.endpoint, config.model, api_key, config.request_timeout
        )
    ledger = UsageLedger(config.prompt_token_price, config.completion_token_price)
    transcript = logs_dir / "llm_transcript.jsonl" if logs_dir is not None else None
    return LlmClient(
        backend,
        ledger,
        retry_budget=config.retry_budget,
        backoff_base=config.backoff_base,
        transcript_path=transcript,
    )


def _preamble_table(config: RunConfig) -> dict:
    table = dict(DEFAULT_LANGUAGE_PREAMBLES)
    for lang, lines in (config.language_preambles or {}).items():
        table[lang] = tuple(lines)
    return table


def _file_map(merged) -> PlaceholderMap:
    pmap = PlaceholderMap()
    for b in merged.boundaries:
        pmap.add(file_begin_token(b.token_id), KIND_FILE_BEGIN, b.directive)
        pmap.add(file_end_token(b.token_id), KIND_FILE_END, "")
    return pmap


def _write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=True) + "\n",
        encoding="utf-8",
    )


def _write_maps(parsed, units, maps_dir: Path) -> None:
    parsed.cap_map.save(maps_dir / "cap_map.json")
    parsed.env_map.save(maps_dir / "env_map.json")
    _file_map(parsed.merged).save(maps_dir / "file_map.json")
    _write_json(
        maps_dir / "file_boundaries.json",
        [
            {"token_id": b.token_id, "path": b.path, "directive": b.directive}
            for b in parsed.merged.boundaries
        ],
    )
    _write_json(maps_dir / "units.json", units_to_manifest(units))


def _compile_step(
    config: RunConfig,
    tex_dir: Path,
    pdf_dir: Path,
    logs_dir: Path,
    main_file: str,
    warnings: list[str],
) -> tuple[dict, float | None]:
    engine = config.chosen_engine
    if shutil.which(engine) is None:
        warnings.append(f"TeX engine not found on PATH: {engine}; compilation skipped")
        return {"skipped": True, "reason": f"engine not found: {engine}"}, None
    try:
        report = compile_document(
            tex_dir,
            main_file,
            engine,
            timeout=config.compile_timeout,
            passes=config.compile_passes,
            count_box_warnings=config.count_box_warnings,
        )
    except EngineTimeout as exc:
        warnings.append(str(exc))
        return {"skipped": False, "engine": engine, "success": False, "reason": str(exc)}, None
    stem = Path(main_file).stem
    pdf_src = tex_dir / f"{stem}.pdf"
    if pdf_src.exists():
        shutil.move(str(pdf_src), str(pdf_dir / pdf_src.name))
    if report.log_path is not None and report.log_path.exists():
        shutil.copy2(report.log_path, logs_dir / "compile.log")
    _write_json(logs_dir / "compile_meta.json", {"elapsed_seconds": round(report.elapsed, 3)})
    score = fc_score(report.error_count, report.warning_count, report.success)
    info = {
        "skipped": False,
        "engine": engine,
        "success": report.success,
        "error_count": report.error_count,
        "warning_count": report.warning_count,
        "returncode": report.returncode,
        "passes": report.passes,
    }
    return info, score


def translate_project(
    project_dir: Path | str, config: RunConfig, main_file: str | None = None
) -> RunOutcome:
    """Run the whole pipeline for one project directory.

    Every run that gets past parsing writes a report.json, including failed
    ones; partial outputs stay on disk for inspection.
    """
    project_dir = Path(project_dir)
    project = ProjectSource.from_dir(project_dir, main_file)
    doc_id = project_dir.name
    out_root = Path(config.out_dir) / doc_id
    if out_root.exists():
        shutil.rmtree(out_root)
    tex_dir = out_root / "tex"
    pdf_dir = out_root / "pdf"
    logs_dir = out_root / "logs"
    maps_dir = out_root / "maps"
    for d in (tex_dir, pdf_dir, logs_dir, maps_dir):
        d.mkdir(parents=True, exist_ok=True)
    # Non-.tex project files (figures, .bib, .cls) ride along untouched;
    # unmerge overwrites the translated .tex files afterwards.
    shutil.copytree(project.root_dir, tex_dir, dirs_exist_ok=True)

    parsed = parse_project(project)
    units = enumerate_units(parsed)
    warnings = list(parsed.warnings)
    client = _build_client(config, logs_dir)
    protected = (
        ProtectedEnvList.from_file(config.protected_envs_path)
        if config.protected_envs_path
        else ProtectedEnvList.default()
    )

    report: dict = {
        "doc_id": doc_id,
        "main_file": project.main_file,
        "source_language": config.source_language,
        "target_language": config.target_language,
    }
    error: str | None = None
    fc = None
    compile_info: dict = {"skipped": True, "reason": "compilation disabled"}
    try:
        decisions = classify_units(
            units,
            protected,
            client,
            parse_retries=config.filter_parse_retries,
            model=config.model,
            warnings=warnings,
        )
        pipeline_config = PipelineConfig(
            source_language=config.source_language,
            target_language=config.target_language,
            model=config.model,
            translator_temperature=config.translator_temperature,
            judge_temperature=config.judge_temperature,
            agent_max_new_tokens=config.agent_max_new_tokens,
            max_validation_rounds=config.max_validation_rounds,
            term_dict_cap=config.term_dict_cap,
            completeness_check=config.completeness_check,
            prompt_dir=config.prompt_dir or None,
        )
        result = run_pipeline(units, client, pipeline_config, warnings)
        body = reassemble(units, parsed.cap_map, parsed.env_map, parsed.merged)
        written = unmerge(body, parsed.merged, tex_dir)
        if config.inject_preamble:
            main_path = tex_dir / parsed.merged.main_file
            original = main_path.read_text(encoding="utf-8", errors="surrogateescape")
            injected = inject_language_preamble(
                original,
                base_language(config.target_language),
                _preamble_table(config),
                warnings,
            )
            if injected != original:
                with open(
                    main_path, "w", encoding="utf-8", errors="surrogateescape", newline=""
                ) as fh:
                    fh.write(injected)
        report["filter"] = [dataclasses.asdict(d) for d in decisions]
        report["rounds_used"] = result.rounds_used
        report["validation"] = [r.to_dict() for r in result.reports]
        report["summary"] = {
            "version": result.summary.version,
            "words": result.summary.word_count,
        }
        report["terms"] = [[src, tgt] for src, tgt in result.dictionary]
        report["output_files"] = sorted(
            str(p.relative_to(out_root)) for p in written
        )
        (logs_dir / "summary.txt").write_text(
            result.summary.text, encoding="utf-8", errors="surrogateescape"
        )
        if config.compile_enabled:
            compile_info, fc = _compile_step(
                config, tex_dir, pdf_dir, logs_dir, parsed.merged.main_file, warnings
            )
    except LatexmtError as exc:
        error = f"{type(exc).__name__}: {exc}"
        warnings.append(error)

    _write_maps(parsed, units, maps_dir)
    report["units"] = units_to_manifest(units)
    report["usage"] = client.ledger.summary()
    report["compile"] = compile_info
    report["fc_score"] = fc
    report["warnings"] = warnings
    report["error"] = error
    _write_json(out_root / "report.json", report)
    return RunOutcome(doc_id, out_root, error is None, error, False, report)


def cmd_translate(args) -> int:
    config = load_config(args.config, _translate_overrides(args))
    project_dirs = [Path(p) for p in args.projects]

    def run_one(path: Path) -> RunOutcome:
        try:
            return translate_project(path, config, args.main)
        except MissingMainFile as exc:
            return RunOutcome(path.name, Path(config.out_dir) / path.name, False, str(exc), True)
        except LatexmtError as exc:
            return RunOutcome(
                path.name,
                Path(config.out_dir) / path.name,
                False,
                f"{type(exc).__name__}: {exc}",
            )

    if config.workers > 1 and len(project_dirs) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run_one, project_dirs))
    else:
        outcomes = [run_one(p) for p in project_dirs]

    usage_error = False
    failures = 0
    for outcome in outcomes:
        if outcome.ok:
            score = outcome.report.get("fc_score")
            note = f" fc={score:.1f}" if isinstance(score, (int, float)) else ""
            print(f"{outcome.doc_id}: ok ({outcome.out_dir}){note}")
        else:
            failures += 1
            usage_error = usage_error or outcome.usage_error
            print(f"{outcome.doc_id}: FAILED: {outcome.error}", file=sys.stderr)
    if usage_error:
        return EXIT_USAGE
    return EXIT_FAILURE if failures else EXIT_OK


def _translate_overrides(args) -> dict:
    overrides = {
        "source_language": args.source_lang,
        "target_language": args.target_lang,
        "engine": args.engine,
        "endpoint": args.endpoint,
        "model": args.model,
        "max_validation_rounds": args.max_rounds,
        "mock": args.mock,
        "mock_script": args.mock_script,
        "out_dir": args.out,
        "workers": args.workers,
    }
    if args.no_compile:
        overrides["compile_enabled"] = False
    if args.no_preamble:
        overrides["inject_preamble"] = False
    return overrides


# --------------------------------------------------------------------------
# parse


def cmd_parse(args) -> int:
    config = load_config(args.config, {"out_dir": args.out})
    project = ProjectSource.from_dir(Path(args.project), args.main)
    parsed = parse_project(project)
    units = enumerate_units(parsed)
    doc_id = Path(args.project).name
    out_root = Path(config.out_dir) / doc_id
    maps_dir = out_root / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    _write_maps(parsed, units, maps_dir)
    with open(
        maps_dir / "merged_document.tex", "w", encoding="utf-8",
        errors="surrogateescape", newline="",
    ) as fh:
        fh.write(parsed.merged.text)
    with open(
        maps_dir / "substituted_document.tex", "w", encoding="utf-8",
        errors="surrogateescape", newline="",
    ) as fh:
        fh.write(parsed.text)
    by_kind = {GRAN_SECTION: 0, GRAN_ENVIRONMENT: 0, GRAN_CAPTION: 0}
    for unit in units:
        by_kind[unit.granularity] += 1
    print(
        f"{doc_id}: {len(units)} units "
        f"({by_kind[GRAN_SECTION]} section, {by_kind[GRAN_ENVIRONMENT]} environment, "
        f"{by_kind[GRAN_CAPTION]} caption), "
        f"{len(parsed.merged.boundaries)} merged file(s), "
        f"{len(parsed.warnings)} warning(s) -> {maps_dir}"
    )
    for warning in parsed.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# score


def _stats_from_log(path: Path, count_box_warnings: bool) -> tuple[str, LogStats]:
    text = path.read_text(encoding="utf-8", errors="replace")
    stats = parse_log(text, count_box_warnings=count_box_warnings)
    if path.name == "compile.log" and path.parent.name == "logs":
        doc_id = path.parent.parent.name  # out/<doc-id>/logs/compile.log
    else:
        doc_id = path.stem
    return doc_id, stats


def _stats_from_report(path: Path) -> tuple[str, LogStats] | None:
    payload = json.loads(path.read_text(encoding="utf-8"))
    compile_info = payload.get("compile") or {}
    if compile_info.get("skipped", True) or "error_count" not in compile_info:
        return None
    return (
        payload.get("doc_id", path.parent.name),
        LogStats(
            compile_info["error_count"],
            compile_info["warning_count"],
            bool(compile_info.get("success")),
        ),
    )


def cmd_score(args) -> int:
    params = FCScoreParams(
        s0=args.s0, alpha=args.alpha, beta=args.beta, gamma=args.gamma
    )
    items: list[tuple[str, LogStats]] = []
    for raw in args.paths:
        path = Path(raw)
        if path.is_dir():
            report_paths = sorted(path.rglob("report.json"))
            found = False
            for rp in report_paths:
                item = _stats_from_report(rp)
                if item is not None:
                    items.append(item)
                    found = True
            if not found:
                for log in sorted(path.rglob("*.log")):
                    items.append(_stats_from_log(log, args.count_box_warnings))
        elif path.is_file():
            if path.suffix == ".json":
                item = _stats_from_report(path)
                if item is None:
                    print(f"score: {path} has no compile data; skipped", file=sys.stderr)
                else:
                    items.append(item)
            else:
                items.append(_stats_from_log(path, args.count_box_warnings))
        else:
            print(f"score: no such path: {path}", file=sys.stderr)
            return EXIT_USAGE
    corpus = score_corpus(items, params)  # EmptyCorpus -> usage error in main()
    if args.json:
        print(corpus.to_json(), end="")
    else:
        print(corpus.format_table())
    return EXIT_OK


# --------------------------------------------------------------------------
# config-check


def cmd_config_check(args) -> int:
    config = load_config(args.config, {})
    payload = dataclasses.asdict(config)
    payload["chosen_engine"] = config.chosen_engine
    print(yaml.safe_dump(payload, default_flow_style=False, sort_keys=True).rstrip())
    print("config ok")
    return EXIT_OK


# --------------------------------------------------------------------------
# wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latexmt",
        description="Translate LaTeX projects between languages while keeping them compilable.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("translate", help="translate one or more projects end to end")
    t.add_argument(
        "--project",
        dest="projects",
        action="append",
        required=True,
        metavar="DIR",
        help="project directory (repeat for a batch)",
    )
    t.add_argument("--main", default=None, help="main .tex file relative to the project")
    t.add_argument("--from", dest="source_lang", default=None, metavar="LANG")
    t.add_argument("--to", dest="target_lang", default=None, metavar="LANG")
    t.add_argument("--engine", default=None, help="TeX engine (default: by target language)")
    t.add_argument("--endpoint", default=None, help="OpenAI-compatible API base URL")
    t.add_argument("--model", default=None)
    t.add_argument("--max-rounds", dest="max_rounds", type=int, default=None)
    t.add_argument("--mock", choices=["echo", "scripted"], default=None)
    t.add_argument("--mock-script", dest="mock_script", default=None,
                   help="replies file for --mock scripted")
    t.add_argument("--config", default=None, help="YAML config file")
    t.add_argument("--out", default=None, help="output root directory")
    t.add_argument("--workers", type=int, default=None)
    t.add_argument("--no-compile", dest="no_compile", action="store_true")
    t.add_argument("--no-preamble", dest="no_preamble", action="store_true",
                   help="skip target-language preamble injection")
    t.set_defaults(func=cmd_translate)

    p = sub.add_parser("parse", help="parse only: write maps and the unit manifest")
    p.add_argument("--project", required=True, metavar="DIR")
    p.add_argument("--main", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_parse)

    s = sub.add_parser("score", help="compute format-consistency scores from logs")
    s.add_argument("paths", nargs="+", help="log files, report.json files, or out trees")
    s.add_argument("--s0", type=float, default=100.0)
    s.add_argument("--alpha", type=float, default=10.0)
    s.add_argument("--beta", type=float, default=2.0)
    s.add_argument("--gamma", type=float, default=20.0)
    s.add_argument("--count-box-warnings", action="store_true")
    s.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    s.set_defaults(func=cmd_score)

    c = sub.add_parser("config-check", help="validate a config file and show the result")
    c.add_argument("--config", default=None)
    c.set_defaults(func=cmd_config_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MissingMainFile, EmptyCorpus) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LatexmtError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
