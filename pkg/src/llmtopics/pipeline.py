"""Stage orchestration: config validation, artifacts, checkpoints, replay logs.

Every stage reads its inputs from the run's output directory, writes its
artifact atomically (write-temp-then-rename), and records the LLM
exchanges it performed into a per-stage replay segment
(replay_<stage>.jsonl). Stages that talk to the LLM keep a checkpoint on
disk while running, so a killed run resumes where it stopped; replay
segments are rebuilt from the checkpoint, so resumed runs still produce a
complete replay record.

Artifacts are versioned JSON with sorted keys: a fixed (config, corpus,
script, seed) tuple reproduces every artifact byte.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable

from . import collapse as collapse_mod
from . import corpus as corpus_mod
from . import evaluation as evaluation_mod
from . import generation as generation_mod
from . import representation as representation_mod
from .collapse import CollapseConfig, TopicState
from .corpus import PreprocessConfig
from .errors import ConfigError, DependencyError
from .generation import GenerationConfig, TopicAssignment
from .llm_client import (
    ENV_API_KEY,
    ENV_CACHE_DIR,
    ENV_ENDPOINT,
    HttpBackend,
    LlmClient,
    LlmExchange,
    ReplayBackend,
    RequestDefaults,
    ResponseCache,
    ScriptedBackend,
)
from .representation import TopicRepresentation

ARTIFACT_VERSION = 1

CORPUS_FILE = "corpus.json"
ASSIGNMENTS_FILE = "assignments.jsonl"
TOPICS_FILE = "topics.json"
REPRESENTATIONS_FILE = "representations.json"
REPORT_FILE = "report.json"
INTRUSION_TASKS_FILE = "intrusion_tasks.json"
INTRUSION_KEY_FILE = "intrusion_key.json"
INTRUSION_SCORE_FILE = "intrusion_score.json"
GENERATE_CHECKPOINT = "generate.checkpoint.jsonl"
COLLAPSE_CHECKPOINT = "collapse.checkpoint.json"
REPRESENT_CHECKPOINT = "represent.checkpoint.jsonl"
REPLAY_GENERATE = "replay_generate.jsonl"
REPLAY_COLLAPSE = "replay_collapse.jsonl"
REPLAY_REPRESENT = "replay_represent.jsonl"
LOCK_FILE = ".lock"

BACKEND_KINDS = ("remote", "local", "script", "replay")
COLLAPSE_METHODS = ("pbm", "wsm", "pbm_then_wsm")
DEFAULT_LOCAL_ENDPOINT = "http://127.0.0.1:8080/v1/chat/completions"

_UNSET = "__default_instruction__"


@dataclass
class CorpusSettings:
    path: str = ""
    format: str = corpus_mod.PLAIN_LINES


@dataclass
class PreprocessSettings:
    lowercase: bool = True
    strip_punctuation: bool = True
    use_default_stopwords: bool = False
    extra_stopwords: list[str] = field(default_factory=list)
    lemmatize: bool = False
    min_token_length: int = 1

    def to_config(self) -> PreprocessConfig:
        stopwords: set[str] = set(self.extra_stopwords)
        if self.use_default_stopwords:
            stopwords |= corpus_mod.default_stopwords()
        return PreprocessConfig(
            lowercase=self.lowercase,
            strip_punctuation=self.strip_punctuation,
            stopword_list=frozenset(stopwords),
            lemmatize=self.lemmatize,
            min_token_length=self.min_token_length,
        )


@dataclass
class GenerationSettings:
    n_demonstrations: int = 4
    demo_file: str | None = None
    instruction_text: str | None = _UNSET
    max_parse_retries: int = 2

    def to_config(self, instruction_framing: bool) -> GenerationConfig:
        demos = (
            generation_mod.load_demonstrations(self.demo_file)
            if self.demo_file
            else generation_mod.default_demonstrations()
        )
        instruction = self.instruction_text
        if instruction == _UNSET:
            instruction = generation_mod.DEFAULT_INSTRUCTION
        if not instruction_framing:
            instruction = None
        return GenerationConfig(
            n_demonstrations=self.n_demonstrations,
            demonstrations=demos,
            instruction_text=instruction,
            max_parse_retries=self.max_parse_retries,
        )


@dataclass
class CollapseSettings:
    method: str = "wsm"
    k_target: int = 20
    g_intermediate: int | None = None
    window_size: int = 50
    top_words_for_similarity: int = 20
    prompt_budget_chars: int = 3000

    def to_config(self) -> CollapseConfig:
        return CollapseConfig(
            k_target=self.k_target,
            g_intermediate=self.g_intermediate,
            window_size=self.window_size,
            top_words_for_similarity=self.top_words_for_similarity,
            prompt_budget_chars=self.prompt_budget_chars,
        )


@dataclass
class RepresentationSettings:
    candidate_count: int = 100
    target_size: int = 10
    max_parse_retries: int = 1


@dataclass
class EvaluationSettings:
    npmi_window: int = 10
    tasks_per_topic: int = 1


@dataclass
class BackendSettings:
    kind: str = "script"
    model_id: str = "default"
    endpoint: str | None = None
    api_key: str | None = None
    script_path: str | None = None
    replay_dir: str | None = None
    temperature: float = 0.0
    max_tokens: int = 256
    max_retries: int = 3
    backoff_s: float = 1.0
    min_interval_s: float = 0.0
    max_in_flight: int = 4
    instruction_framing: bool = True


@dataclass
class PipelineConfig:
    corpus: CorpusSettings = field(default_factory=CorpusSettings)
    preprocess: PreprocessSettings = field(default_factory=PreprocessSettings)
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    collapse: CollapseSettings = field(default_factory=CollapseSettings)
    representation: RepresentationSettings = field(default_factory=RepresentationSettings)
    evaluation: EvaluationSettings = field(default_factory=EvaluationSettings)
    backend: BackendSettings = field(default_factory=BackendSettings)
    cache_dir: str = ".llmtopics_cache"
    output_dir: str = "out"
    seed: int = 0

    @property
    def out(self) -> Path:
        return Path(self.output_dir)


def _populate_dataclass(cls, payload: dict, section: str, errors: list[str]):
    known = {f.name: f for f in fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in payload.items():
        if key not in known:
            errors.append(f"{section}: unknown key {key!r}")
            continue
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        errors.append(f"{section}: {exc}")
        return cls()


def validate_config(path: str | Path, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    """Parse, default, env-override, and constraint-check a config file.

    Unknown keys anywhere are rejected; all constraint violations are
    reported together. Env vars override only PT_LLM_ENDPOINT,
    PT_LLM_API_KEY, and PT_CACHE_DIR.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config file must contain a JSON object")

    errors: list[str] = []
    sections = {f.name: f for f in fields(PipelineConfig)}
    kwargs: dict[str, Any] = {}
    for key, value in payload.items():
        if key not in sections:
            errors.append(f"unknown key {key!r}")
            continue
        if key in ("cache_dir", "output_dir", "seed"):
            kwargs[key] = value
        else:
            if not isinstance(value, dict):
                errors.append(f"{key}: must be an object")
                continue
            kwargs[key] = _populate_dataclass(sections[key].default_factory, value, key, errors)

    if errors:
        raise ConfigError("invalid config:\n" + "\n".join(f"  - {e}" for e in errors))
    cfg = PipelineConfig(**kwargs)

    for name, value in (overrides or {}).items():
        if name == "backend_kind" and value is not None:
            cfg.backend.kind = value
        elif name == "seed" and value is not None:
            cfg.seed = value

    if os.environ.get(ENV_ENDPOINT):
        cfg.backend.endpoint = os.environ[ENV_ENDPOINT]
    if os.environ.get(ENV_API_KEY):
        cfg.backend.api_key = os.environ[ENV_API_KEY]
    if os.environ.get(ENV_CACHE_DIR):
        cfg.cache_dir = os.environ[ENV_CACHE_DIR]

    _check_constraints(cfg, errors, config_dir=path.parent)
    if errors:
        raise ConfigError("invalid config:\n" + "\n".join(f"  - {e}" for e in errors))
    return cfg


def _check_constraints(cfg: PipelineConfig, errors: list[str], config_dir: Path) -> None:
    if not cfg.corpus.path:
        errors.append("corpus.path is required")
    else:
        corpus_path = _resolve(cfg.corpus.path, config_dir)
        if not corpus_path.exists():
            errors.append(f"corpus.path does not exist: {corpus_path}")
        cfg.corpus.path = str(corpus_path)
    if cfg.corpus.format not in corpus_mod.FORMATS:
        errors.append(f"corpus.format must be one of {corpus_mod.FORMATS}")
    if cfg.preprocess.min_token_length < 1:
        errors.append("preprocess.min_token_length must be >= 1")
    if cfg.generation.n_demonstrations < 0:
        errors.append("generation.n_demonstrations must be >= 0")
    if cfg.generation.demo_file:
        demo_path = _resolve(cfg.generation.demo_file, config_dir)
        if not demo_path.exists():
            errors.append(f"generation.demo_file does not exist: {demo_path}")
        cfg.generation.demo_file = str(demo_path)
    if cfg.collapse.method not in COLLAPSE_METHODS:
        errors.append(f"collapse.method must be one of {COLLAPSE_METHODS}")
    if cfg.collapse.k_target < 1:
        errors.append("collapse.k_target must be >= 1")
    if cfg.collapse.g_intermediate is not None and cfg.collapse.g_intermediate <= cfg.collapse.k_target:
        errors.append("collapse.g_intermediate must be greater than collapse.k_target")
    if cfg.collapse.method == "pbm_then_wsm" and cfg.collapse.g_intermediate is None:
        errors.append("collapse.method 'pbm_then_wsm' requires collapse.g_intermediate")
    if cfg.collapse.window_size < 2:
        errors.append("collapse.window_size must be >= 2")
    if cfg.backend.kind not in BACKEND_KINDS:
        errors.append(f"backend.kind must be one of {BACKEND_KINDS}")
    if cfg.backend.kind == "remote" and not cfg.backend.endpoint:
        errors.append(f"backend.kind 'remote' requires backend.endpoint (or {ENV_ENDPOINT})")
    if cfg.backend.kind == "script":
        if not cfg.backend.script_path:
            errors.append("backend.kind 'script' requires backend.script_path")
        else:
            script_path = _resolve(cfg.backend.script_path, config_dir)
            if not script_path.exists():
                errors.append(f"backend.script_path does not exist: {script_path}")
            cfg.backend.script_path = str(script_path)
    if cfg.backend.max_in_flight < 1:
        errors.append("backend.max_in_flight must be >= 1")
    if not isinstance(cfg.seed, int):
        errors.append("seed must be an integer")


def _resolve(p: str, base: Path) -> Path:
    path = Path(p)
    return path if path.is_absolute() else (base / path)


def build_backend(cfg: PipelineConfig):
    b = cfg.backend
    if b.kind == "remote":
        return HttpBackend(
            endpoint=b.endpoint,
            api_key=b.api_key,
            name="remote",
            max_retries=b.max_retries,
            backoff_s=b.backoff_s,
            min_interval_s=b.min_interval_s,
        )
    if b.kind == "local":
        return HttpBackend(
            endpoint=b.endpoint or DEFAULT_LOCAL_ENDPOINT,
            api_key=b.api_key,
            name="local",
            max_retries=b.max_retries,
            backoff_s=b.backoff_s,
            min_interval_s=b.min_interval_s,
        )
    if b.kind == "script":
        return ScriptedBackend.from_files([b.script_path])
    if b.kind == "replay":
        return ReplayBackend.from_replay_dir(b.replay_dir or cfg.output_dir)
    raise ConfigError(f"unknown backend kind {b.kind!r}")


def build_client(cfg: PipelineConfig) -> LlmClient:
    cache_dir = Path(cfg.cache_dir)
    cache = ResponseCache(cache_dir / "cache.jsonl")
    return LlmClient(
        backend=build_backend(cfg),
        cache=cache,
        defaults=RequestDefaults(
            model_id=cfg.backend.model_id,
            temperature=cfg.backend.temperature,
            max_tokens=cfg.backend.max_tokens,
        ),
        max_in_flight=cfg.backend.max_in_flight,
    )


# ---------------------------------------------------------------------------
# artifact plumbing
# ---------------------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, "utf-8")
    os.replace(tmp, path)


def _write_json(path: Path, payload: Any) -> None:
    _atomic_write(path, json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=True) + "\n")


def _jsonl(records: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=True) + "\n" for r in records)


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise DependencyError(f"stage '{stage}' needs missing artifact {path}")
    return path


@contextmanager
def _output_lock(out: Path):
    """One pipeline run owns the output directory; released on process exit."""
    out.mkdir(parents=True, exist_ok=True)
    handle = (out / LOCK_FILE).open("w")
    try:
        fcntl.flock(handle, fcntl.LOCK_EX | fcntl.LOCK_NB)
    except BlockingIOError as exc:
        handle.close()
        raise ConfigError(f"output directory {out} is locked by another run") from exc
    try:
        yield
    finally:
        fcntl.flock(handle, fcntl.LOCK_UN)
        handle.close()


def _config_hash(cfg: PipelineConfig, scope: str) -> str:
    relevant = {
        "scope": scope,
        "generation": vars(cfg.generation),
        "collapse": vars(cfg.collapse),
        "representation": vars(cfg.representation),
        "backend_model": cfg.backend.model_id,
        "temperature": cfg.backend.temperature,
        "instruction_framing": cfg.backend.instruction_framing,
    }
    return hashlib.sha256(
        json.dumps(relevant, sort_keys=True, ensure_ascii=True, default=str).encode()
    ).hexdigest()


def _exchange_records(exchanges: list[LlmExchange]) -> list[dict]:
    return [{"cache_key": ex.cache_key, "response": ex.response_text} for ex in exchanges]


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_ingest(cfg: PipelineConfig) -> Path:
    with _output_lock(cfg.out):
        c = corpus_mod.ingest(cfg.corpus.path, cfg.corpus.format, cfg.preprocess.to_config())
        target = cfg.out / CORPUS_FILE
        _write_json(target, corpus_mod.corpus_to_dict(c))
        return target


def _load_assignments(path: Path) -> list[TopicAssignment]:
    assignments = []
    for line in path.read_text("utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            assignments.append(TopicAssignment(doc_id=rec["doc_id"], labels=list(rec["labels"])))
    return assignments


def stage_generate(cfg: PipelineConfig, client: LlmClient | None = None) -> Path:
    """Per-document topic assignment with an on-disk resume checkpoint.

    Checkpoint lines carry the assignment plus the exchanges that
    produced it; the final replay segment is rebuilt from them so a
    resumed run still records every exchange of the logical run.
    """
    with _output_lock(cfg.out):
        c = corpus_mod.load_corpus(_require(cfg.out / CORPUS_FILE, "generate"))
        client = client or build_client(cfg)
        gen_cfg = cfg.generation.to_config(cfg.backend.instruction_framing)
        ckpt_path = cfg.out / GENERATE_CHECKPOINT
        conf_hash = _config_hash(cfg, "generate")

        resume: dict[int, list[str]] = {}
        ckpt_records: list[dict] = []
        if ckpt_path.exists():
            lines = [ln for ln in ckpt_path.read_text("utf-8").splitlines() if ln.strip()]
            if lines and json.loads(lines[0]).get("config_hash") == conf_hash:
                for line in lines[1:]:
                    rec = json.loads(line)
                    resume[rec["doc_id"]] = rec["labels"]
                    ckpt_records.append(rec)
            else:
                ckpt_path.unlink()

        if not ckpt_path.exists():
            ckpt_path.write_text(
                json.dumps({"config_hash": conf_hash}, sort_keys=True) + "\n", "utf-8"
            )

        def on_result(assignment: TopicAssignment, exchanges: list[LlmExchange]) -> None:
            rec = {
                "doc_id": assignment.doc_id,
                "labels": assignment.labels,
                "exchanges": _exchange_records(exchanges),
            }
            ckpt_records.append(rec)
            with ckpt_path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(rec, sort_keys=True, ensure_ascii=True) + "\n")

        assignments = generation_mod.generate_topics(
            c, gen_cfg, client, resume=resume, on_result=on_result
        )

        target = cfg.out / ASSIGNMENTS_FILE
        _atomic_write(
            target, _jsonl([{"doc_id": a.doc_id, "labels": a.labels} for a in assignments])
        )
        replay_records = [ex for rec in ckpt_records for ex in rec.get("exchanges", [])]
        _atomic_write(cfg.out / REPLAY_GENERATE, _jsonl(replay_records))
        ckpt_path.unlink()
        return target


def stage_collapse(cfg: PipelineConfig, client: LlmClient | None = None) -> Path:
    with _output_lock(cfg.out):
        c = corpus_mod.load_corpus(_require(cfg.out / CORPUS_FILE, "collapse"))
        assignments = _load_assignments(_require(cfg.out / ASSIGNMENTS_FILE, "collapse"))
        state = generation_mod.tally_topics(assignments)
        col_cfg = cfg.collapse.to_config()
        method = cfg.collapse.method

        ckpt_path = cfg.out / COLLAPSE_CHECKPOINT
        conf_hash = _config_hash(cfg, "collapse")
        exchanges: list[dict] = []

        if method in ("pbm", "pbm_then_wsm"):
            client = client or build_client(cfg)
            resumed = None
            if ckpt_path.exists():
                payload = json.loads(ckpt_path.read_text("utf-8"))
                if payload.get("config_hash") == conf_hash:
                    resumed = TopicState.from_dict(payload["state"])
                    exchanges = payload["exchanges"]
                else:
                    ckpt_path.unlink()

            def on_decision(snapshot: TopicState, new_exchanges: list[LlmExchange]) -> None:
                exchanges.extend(_exchange_records(new_exchanges))
                _write_json(
                    ckpt_path,
                    {
                        "config_hash": conf_hash,
                        "state": snapshot.to_dict(),
                        "exchanges": exchanges,
                    },
                )

            working = resumed if resumed is not None else state
            if method == "pbm":
                final = collapse_mod.collapse_pbm(working, col_cfg, client, on_decision=on_decision)
            else:
                if resumed is not None and len(working.topics) <= col_cfg.g_intermediate:
                    compressed = working  # PBM phase finished before the interrupt
                else:
                    compressed = collapse_mod.compress_to_g(
                        working, col_cfg, client, on_decision=on_decision
                    )
                final = collapse_mod.collapse_wsm(compressed, c, col_cfg)
        else:
            final = collapse_mod.collapse_wsm(state, c, col_cfg)

        target = cfg.out / TOPICS_FILE
        payload = {"version": ARTIFACT_VERSION, **final.to_dict()}
        _write_json(target, payload)
        _atomic_write(cfg.out / REPLAY_COLLAPSE, _jsonl(exchanges))
        if ckpt_path.exists():
            ckpt_path.unlink()
        return target


def load_topic_state(path: Path) -> TopicState:
    payload = json.loads(path.read_text("utf-8"))
    return TopicState.from_dict(payload)


def stage_represent(cfg: PipelineConfig, client: LlmClient | None = None) -> Path:
    """Topic representations, committed in sorted-label order."""
    with _output_lock(cfg.out):
        c = corpus_mod.load_corpus(_require(cfg.out / CORPUS_FILE, "represent"))
        state = load_topic_state(_require(cfg.out / TOPICS_FILE, "represent"))
        client = client or build_client(cfg)
        model = collapse_mod.compute_ctfidf(state, c)
        rep_cfg = cfg.representation

        ckpt_path = cfg.out / REPRESENT_CHECKPOINT
        conf_hash = _config_hash(cfg, "represent")
        done: dict[str, dict] = {}
        ckpt_records: list[dict] = []
        if ckpt_path.exists():
            lines = [ln for ln in ckpt_path.read_text("utf-8").splitlines() if ln.strip()]
            if lines and json.loads(lines[0]).get("config_hash") == conf_hash:
                for line in lines[1:]:
                    rec = json.loads(line)
                    done[rec["label"]] = rec
                    ckpt_records.append(rec)
            else:
                ckpt_path.unlink()
        if not ckpt_path.exists():
            ckpt_path.write_text(
                json.dumps({"config_hash": conf_hash}, sort_keys=True) + "\n", "utf-8"
            )

        reps: list[TopicRepresentation] = []
        for label in sorted(state.topics):
            if label in done:
                rec = done[label]
                reps.append(
                    TopicRepresentation(label=label, words=rec["words"], source=rec["source"])
                )
                continue
            candidates = representation_mod.candidate_words(model, label, rep_cfg.candidate_count)
            log: list[LlmExchange] = []
            if candidates:
                rep = representation_mod.refine_representation(
                    label,
                    candidates,
                    client,
                    target_size=rep_cfg.target_size,
                    max_parse_retries=rep_cfg.max_parse_retries,
                    exchange_log=log,
                )
            else:
                rep = TopicRepresentation(
                    label=label, words=[], source=representation_mod.SOURCE_FALLBACK
                )
            rec = {
                "label": label,
                "words": rep.words,
                "source": rep.source,
                "exchanges": _exchange_records(log),
            }
            ckpt_records.append(rec)
            with ckpt_path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(rec, sort_keys=True, ensure_ascii=True) + "\n")
            reps.append(rep)

        target = cfg.out / REPRESENTATIONS_FILE
        _write_json(
            target,
            {
                "version": ARTIFACT_VERSION,
                "representations": [
                    {"label": r.label, "words": r.words, "source": r.source} for r in reps
                ],
            },
        )
        replay_records = [ex for rec in ckpt_records for ex in rec.get("exchanges", [])]
        _atomic_write(cfg.out / REPLAY_REPRESENT, _jsonl(replay_records))
        ckpt_path.unlink()
        return target


def load_representations(path: Path) -> list[TopicRepresentation]:
    payload = json.loads(path.read_text("utf-8"))
    return [
        TopicRepresentation(label=rec["label"], words=list(rec["words"]), source=rec["source"])
        for rec in payload["representations"]
    ]


def stage_evaluate(cfg: PipelineConfig) -> Path:
    with _output_lock(cfg.out):
        c = corpus_mod.load_corpus(_require(cfg.out / CORPUS_FILE, "evaluate"))
        reps = load_representations(_require(cfg.out / REPRESENTATIONS_FILE, "evaluate"))
        stats = evaluation_mod.build_cooccurrence(c, cfg.evaluation.npmi_window)
        report = evaluation_mod.evaluate_topics(stats, reps)
        target = cfg.out / REPORT_FILE
        _write_json(target, {"version": ARTIFACT_VERSION, **report.to_dict()})
        return target


def stage_intrude_make(cfg: PipelineConfig) -> tuple[Path, Path]:
    """Write the annotator sheet (intruder withheld) and the separate key."""
    with _output_lock(cfg.out):
        reps = load_representations(_require(cfg.out / REPRESENTATIONS_FILE, "intrude make"))
        usable = [r for r in reps if len(r.words) >= 4]
        if len(usable) < 2:
            raise ConfigError("intrusion tasks need at least two topics with >= 4 words")
        tasks = evaluation_mod.make_intrusion_tasks(
            usable, cfg.evaluation.tasks_per_topic, cfg.seed
        )
        sheet = [{"task_id": t.task_id, "words": t.shown_words} for t in tasks]
        tasks_path = cfg.out / INTRUSION_TASKS_FILE
        _write_json(tasks_path, sheet)
        key_path = cfg.out / INTRUSION_KEY_FILE
        _write_json(
            key_path,
            {
                "version": ARTIFACT_VERSION,
                "seed": cfg.seed,
                "keys": {t.task_id: t.intruder_index for t in tasks},
                "topic_labels": {t.task_id: t.topic_label for t in tasks},
            },
        )
        return tasks_path, key_path


def stage_intrude_score(cfg: PipelineConfig, answers_path: str | Path) -> Path:
    with _output_lock(cfg.out):
        tasks_payload = json.loads(
            _require(cfg.out / INTRUSION_TASKS_FILE, "intrude score").read_text("utf-8")
        )
        key_payload = json.loads(
            _require(cfg.out / INTRUSION_KEY_FILE, "intrude score").read_text("utf-8")
        )
        answers_path = Path(answers_path)
        if not answers_path.exists():
            raise DependencyError(f"stage 'intrude score' needs missing answers file {answers_path}")
        answers = json.loads(answers_path.read_text("utf-8"))
        if not isinstance(answers, dict):
            raise ConfigError("answers file must be a JSON object of task_id -> chosen index")

        keys = key_payload["keys"]
        labels = key_payload.get("topic_labels", {})
        tasks = [
            evaluation_mod.IntrusionTask(
                task_id=rec["task_id"],
                topic_label=labels.get(rec["task_id"], ""),
                shown_words=list(rec["words"]),
                intruder_index=keys[rec["task_id"]],
                seed=key_payload.get("seed", 0),
            )
            for rec in tasks_payload
        ]
        accuracy = evaluation_mod.score_intrusion(tasks, answers)
        correct = sum(
            1 for task_id, chosen in answers.items() if chosen == keys.get(task_id)
        )
        target = cfg.out / INTRUSION_SCORE_FILE
        _write_json(
            target,
            {
                "version": ARTIFACT_VERSION,
                "accuracy": accuracy,
                "answered": len(answers),
                "correct": correct,
                "total_tasks": len(tasks),
            },
        )
        return target


STAGE_ORDER = ("ingest", "generate", "collapse", "represent", "evaluate", "intrude")


def run_all(cfg: PipelineConfig, client: LlmClient | None = None) -> list[Path]:
    """Run every stage in order; intrusion scoring waits for human answers."""
    artifacts = [stage_ingest(cfg)]
    artifacts.append(stage_generate(cfg, client=client))
    artifacts.append(stage_collapse(cfg, client=client))
    artifacts.append(stage_represent(cfg, client=client))
    artifacts.append(stage_evaluate(cfg))
    artifacts.extend(stage_intrude_make(cfg))
    return artifacts
