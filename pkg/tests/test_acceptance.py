"""End-to-end acceptance checks.

Each test prints one ``[acceptance] <n> <label>: PASS|FAIL|SKIP`` line so a
plain ``pytest -s`` run doubles as a checklist.  The checks are offline by
design: deterministic mock backends stand in for a live model, and the
compile smoke test skips (loudly) when no TeX engine is installed.
"""

import json
import random
import shutil
import time

import pytest

from latexmt import cli
from latexmt.agents import (
    DIM_COMMAND,
    DIM_PLACEHOLDER,
    PipelineConfig,
    TermDictionary,
    extract_terms,
    run_pipeline,
    validate_translations,
)
from latexmt.evaluator import FCScoreParams, LogStats, fc_score, parse_log
from latexmt.generator import compile_document, reassemble, unmerge
from latexmt.llm import (
    EchoBackend,
    LlmClient,
    RuleBackend,
    ScriptedBackend,
    UsageLedger,
)
from latexmt.parser import (
    GRAN_CAPTION,
    GRAN_ENVIRONMENT,
    GRAN_SECTION,
    STATUS_FAILED,
    STATUS_TRANSLATED,
    STATUS_VALIDATED,
    ProjectSource,
    TranslationUnit,
    enumerate_units,
    parse_project,
)
from latexmt.placeholders import (
    CAP_TOKEN_RE,
    ENV_TOKEN_RE,
    FILE_TOKEN_RE,
    KIND_ENV,
    PlaceholderMap,
    TOKEN_RE,
    env_token,
)
from latexmt.unit_filter import (
    SOURCE_DEFAULT,
    SOURCE_LLM,
    SOURCE_PREDEFINED,
    ProtectedEnvList,
    classify_unit,
)

from conftest import CORPUS, tree_snapshot, write_files
from test_evaluator import read_log


@pytest.fixture
def announce(capsys):
    def _print(label, status):
        with capsys.disabled():
            print(f"\n[acceptance] {label}: {status}")

    return _print


def quiet_client(backend, transcript_path=None):
    return LlmClient(
        backend, UsageLedger(), sleep=lambda _s: None, transcript_path=transcript_path
    )


# --------------------------------------------------------------------------
# 1. round-trip identity


def test_01_round_trip_identity(corpus_root, tmp_path, announce):
    status = "FAIL"
    try:
        out = tmp_path / "out"
        argv = ["translate", "--mock", "echo", "--from", "en", "--to", "en",
                "--no-compile", "--out", str(out)]
        for name in sorted(CORPUS):
            argv += ["--project", str(corpus_root / name)]
        started = time.monotonic()
        code = cli.main(argv)
        elapsed = time.monotonic() - started
        assert code == 0
        assert elapsed < 10.0, f"echo corpus run took {elapsed:.1f}s"
        assert len(CORPUS) >= 10
        for name in sorted(CORPUS):
            for rel in CORPUS[name]:
                source = (corpus_root / name / rel).read_bytes()
                result = (out / name / "tex" / rel).read_bytes()
                assert result == source, f"{name}/{rel} changed"
        status = "PASS"
    finally:
        announce("1 round-trip identity", status)


# --------------------------------------------------------------------------
# 2. placeholder conservation


def test_02_placeholder_conservation(corpus_root, tmp_path, announce):
    status = "FAIL"
    try:
        for name in sorted(CORPUS):
            parsed = parse_project(ProjectSource.from_dir(corpus_root / name))
            env_tokens = ENV_TOKEN_RE.findall(parsed.text)
            assert len(env_tokens) == len(parsed.env_map), name
            assert len(set(env_tokens)) == len(env_tokens), name
            cap_carrier = parsed.text + "".join(
                e.original_text for e in parsed.env_map
            )
            cap_tokens = CAP_TOKEN_RE.findall(cap_carrier)
            assert len(cap_tokens) == len(parsed.cap_map), name
            assert len(set(cap_tokens)) == len(cap_tokens), name
            file_tokens = FILE_TOKEN_RE.findall(parsed.text)
            assert len(file_tokens) == 2 * len(parsed.merged.boundaries), name

            units = enumerate_units(parsed)
            text = reassemble(units, parsed.cap_map, parsed.env_map, parsed.merged)
            assert not ENV_TOKEN_RE.search(text), name
            assert not CAP_TOKEN_RE.search(text), name
            written = unmerge(text, parsed.merged, tmp_path / name)
            for path in written:
                assert not TOKEN_RE.search(path.read_text(encoding="utf-8")), path
        status = "PASS"
    finally:
        announce("2 placeholder conservation", status)


# --------------------------------------------------------------------------
# 3. score formula


def test_03_score_formula(announce):
    status = "FAIL"
    try:
        assert fc_score(0, 0, True) == 100.0
        assert fc_score(2, 3, False) == 74.0
        assert fc_score(15, 0, False) == 0.0
        rng = random.Random(20240817)
        for _ in range(1000):
            lo = rng.uniform(-100.0, 100.0)
            hi = lo + rng.uniform(0.0, 200.0)
            params = FCScoreParams(
                s0=rng.uniform(-50.0, 150.0),
                alpha=rng.uniform(0.0, 30.0),
                beta=rng.uniform(0.0, 30.0),
                gamma=rng.uniform(0.0, 30.0),
                s_min=lo,
                s_max=hi,
            )
            e = rng.randrange(0, 25)
            w = rng.randrange(0, 25)
            c = rng.random() < 0.5
            score = fc_score(e, w, c, params)
            assert params.s_min <= score <= params.s_max
            assert fc_score(e + 1, w, c, params) <= score
            assert fc_score(e, w + 1, c, params) <= score
            assert fc_score(e, w, True, params) >= fc_score(e, w, False, params)
        status = "PASS"
    finally:
        announce("3 score formula", status)


# --------------------------------------------------------------------------
# 4. log parsing


def test_04_log_parsing(announce):
    status = "FAIL"
    try:
        assert parse_log(read_log("clean.log")) == LogStats(0, 0, True)
        assert parse_log(read_log("one_error_two_warnings.log")) == LogStats(1, 2, True)
        assert parse_log(read_log("truncated_garbage.log")) == LogStats(1, 0, False)
        status = "PASS"
    finally:
        announce("4 log parsing", status)


# --------------------------------------------------------------------------
# 5. validator mechanics


FAULT_SOURCE = "Keep \\textbf{this} near " + env_token(0) + " always."
FAULT_BROKEN = "Keep this near \\\u5de6 always."  # all three faults at once
FAULT_FIXED = "Garde \\textbf{ceci} pr\u00e8s de " + env_token(0) + " toujours."


def repairing_backend(corrector_reply):
    return RuleBackend(
        [
            (r"\[Error Reports\]", corrector_reply),
            (r"^\[Original\]", "OK"),
            (r"^\[Source\]", "N/A"),
            (r"^prev_summary:", "digest"),
        ],
        default=FAULT_BROKEN,
    )


def test_05_validator_mechanics(announce):
    status = "FAIL"
    try:
        # (a) every injected fault is caught in round 1
        unit = TranslationUnit(id=0, granularity=GRAN_SECTION, source_text=FAULT_SOURCE)
        unit.translated_text = FAULT_BROKEN
        unit.status = STATUS_TRANSLATED
        report = validate_translations([unit], 1, None, PipelineConfig())
        dims = [f.dimension for f in report.findings]
        texts = " | ".join(f.description for f in report.findings)
        assert DIM_PLACEHOLDER in dims
        assert env_token(0) in texts  # dropped placeholder
        assert "\\textbf" in texts  # dropped command
        assert "\\\u5de6" in texts  # invented command
        assert dims.count(DIM_COMMAND) == 2

        # (b) a repairing mock converges with empty findings by round 2
        unit = TranslationUnit(id=0, granularity=GRAN_SECTION, source_text=FAULT_SOURCE)
        result = run_pipeline(
            [unit], quiet_client(repairing_backend(FAULT_FIXED)), PipelineConfig()
        )
        assert result.rounds_used == 2
        assert unit.status == STATUS_VALIDATED
        assert unit.translated_text == FAULT_FIXED
        assert result.reports[-1].ok

        # (c) a never-repairing mock stops at exactly the round cap
        unit = TranslationUnit(id=0, granularity=GRAN_SECTION, source_text=FAULT_SOURCE)
        cfg = PipelineConfig(max_validation_rounds=3)
        result = run_pipeline(
            [unit], quiet_client(repairing_backend(FAULT_BROKEN)), cfg
        )
        assert result.rounds_used == cfg.max_validation_rounds
        assert unit.status == STATUS_FAILED
        env_map = PlaceholderMap()
        env_map.add(env_token(0), KIND_ENV, "\\begin{equation}x\\end{equation}")
        text = reassemble([unit], PlaceholderMap(), env_map)
        assert "Keep \\textbf{this}" in text  # source fallback, not the broken text
        assert "\\\u5de6" not in text
        status = "PASS"
    finally:
        announce("5 validator mechanics", status)


# --------------------------------------------------------------------------
# 6. filter contract


def test_06_filter_contract(announce):
    status = "FAIL"
    try:
        protected = ProtectedEnvList.default()

        def env_unit(name):
            return TranslationUnit(
                id=0,
                granularity=GRAN_ENVIRONMENT,
                source_text=f"\\begin{{{name}}}body\\end{{{name}}}",
                needs_translation=False,
                token=env_token(0),
                env_name=name,
                role="env",
            )

        for name in sorted(protected.names):
            backend = EchoBackend()
            decision = classify_unit(env_unit(name), protected, quiet_client(backend))
            assert decision.source == SOURCE_PREDEFINED
            assert decision.translate is False
            assert backend.calls == 0, name

        decision = classify_unit(
            env_unit("notebox"), protected, quiet_client(RuleBackend([(r".", "True")]))
        )
        assert (decision.translate, decision.source) == (True, SOURCE_LLM)

        decision = classify_unit(
            env_unit("notebox"), protected, quiet_client(RuleBackend([(r".", "False")]))
        )
        assert (decision.translate, decision.source) == (False, SOURCE_LLM)

        warnings = []
        decision = classify_unit(
            env_unit("notebox"),
            protected,
            quiet_client(RuleBackend([(r".", "perhaps")])),
            warnings=warnings,
        )
        assert (decision.translate, decision.source) == (False, SOURCE_DEFAULT)
        assert warnings, "garbage replies must leave a warning behind"
        status = "PASS"
    finally:
        announce("6 filter contract", status)


# --------------------------------------------------------------------------
# 7. terminology and summary bookkeeping


def test_07_bookkeeping(tmp_path, announce):
    status = "FAIL"
    try:
        # first occurrence wins; N/A adds nothing; size is monotone
        d = TermDictionary()
        cfg = PipelineConfig()
        sizes = []
        replies = [
            '"graph" - "\u56fe"',
            "N/A",
            '"graph" - "\u5716"\n"edge" - "\u8fb9"',
            "not a term line at all",
        ]
        for reply in replies:
            extract_terms("s", "t", d, quiet_client(ScriptedBackend([reply])), cfg, [])
            sizes.append(len(d))
        assert sizes == sorted(sizes)
        assert d.pairs() == [("graph", "\u56fe"), ("edge", "\u8fb9")]
        assert d.lookup("graph") == "\u56fe"

        # summary updated exactly once per section unit, in document order
        transcript = tmp_path / "calls.jsonl"
        units = [
            TranslationUnit(id=0, granularity=GRAN_SECTION, source_text="S1 text"),
            TranslationUnit(id=1, granularity=GRAN_SECTION, source_text="S2 text"),
            TranslationUnit(
                id=2,
                granularity=GRAN_CAPTION,
                source_text="C1 text",
                token="<PLACEHOLDER_CAP_0>",
                role="caption",
            ),
        ]
        script = ["t1", "N/A", "sum1", "t2", "N/A", "sum2", "t3", "N/A"]
        backend = ScriptedBackend(script)
        result = run_pipeline(
            units,
            quiet_client(backend, transcript_path=transcript),
            PipelineConfig(completeness_check=False),
        )
        assert backend.remaining == 0
        assert result.summary.version == 2
        assert result.summary.text == "sum2"
        entries = [json.loads(line) for line in transcript.read_text().splitlines()]
        summary_calls = [e for e in entries if e["user"].startswith("prev_summary:")]
        assert len(summary_calls) == 2
        assert "new_section:\nS1 text" in summary_calls[0]["user"]
        assert "prev_summary:\nsum1" in summary_calls[1]["user"]
        assert "new_section:\nS2 text" in summary_calls[1]["user"]
        status = "PASS"
    finally:
        announce("7 terminology and summary bookkeeping", status)


# --------------------------------------------------------------------------
# 8. compile smoke


GOOD_DOC = "\\documentclass{article}\n\\begin{document}\nHello.\n\\end{document}\n"
BROKEN_DOC = (
    "\\documentclass{article}\n\\begin{document}\n\\badmacro{x}\n\\end{document}\n"
)


def test_08_compile_smoke(tmp_path, announce):
    engine = next(
        (e for e in ("pdflatex", "xelatex") if shutil.which(e)), None
    )
    if engine is None:
        announce("8 compile smoke", "SKIP (no TeX engine on PATH)")
        pytest.skip("no TeX engine on PATH; compile smoke not run")
    status = "FAIL"
    try:
        good = tmp_path / "good"
        good.mkdir()
        (good / "main.tex").write_text(GOOD_DOC)
        report = compile_document(good, "main.tex", engine, timeout=60)
        assert report.success is True
        score = fc_score(report.error_count, report.warning_count, report.success)
        assert score == 100.0
        assert report.elapsed < 120.0

        broken = tmp_path / "broken"
        broken.mkdir()
        (broken / "main.tex").write_text(BROKEN_DOC)
        report = compile_document(broken, "main.tex", engine, timeout=60)
        assert report.success is False
        assert report.error_count >= 1
        score = fc_score(report.error_count, report.warning_count, report.success)
        assert score < 100.0
        status = "PASS"
    finally:
        announce("8 compile smoke", status)


# --------------------------------------------------------------------------
# 9. end-to-end determinism


DET_PROJECT = {
    "main.tex": (
        "\\documentclass{article}\n"
        "\\begin{document}\n"
        "\\section{Intro}\n"
        "Body text to translate.\n"
        "\\end{document}\n"
    )
}

DET_SCRIPT = [
    "\\section{\u5165\u95e8}\n\u8bd1\u6587\u3002\n\\end{document}\n",
    '"body" - "\u6b63\u6587"',
    "rolling digest",
    "OK",
]


def test_09_determinism(tmp_path, announce):
    status = "FAIL"
    try:
        proj = write_files(tmp_path / "doc", DET_PROJECT)
        script = tmp_path / "script.json"
        script.write_text(json.dumps(DET_SCRIPT), encoding="utf-8")

        def run_into(out_dir):
            code = cli.main(
                [
                    "translate",
                    "--project",
                    str(proj),
                    "--mock",
                    "scripted",
                    "--mock-script",
                    str(script),
                    "--from",
                    "en",
                    "--to",
                    "zh",
                    "--no-compile",
                    "--out",
                    str(out_dir),
                ]
            )
            assert code == 0
            return tree_snapshot(out_dir)

        first = run_into(tmp_path / "out1")
        second = run_into(tmp_path / "out2")
        assert first.keys() == second.keys()
        for rel in first:
            assert first[rel] == second[rel], f"{rel} differs between runs"
        assert "doc/report.json" in first
        report = json.loads(first["doc/report.json"].decode("utf-8"))
        assert report["error"] is None
        assert report["units"][2]["status"] == "VALIDATED"
        # the scripted translation actually landed, with the preamble line added
        main_out = first["doc/tex/main.tex"].decode("utf-8")
        assert "\\usepackage{xeCJK}" in main_out
        assert "\u8bd1\u6587\u3002" in main_out
        status = "PASS"
    finally:
        announce("9 end-to-end determinism", status)
