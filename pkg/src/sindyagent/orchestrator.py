"""The agent loop: prompt assembly, one-step sampling, reflection, feedback.

Each iteration samples candidate configurations from the LLM, fits and
scores every candidate, and feeds the best scored attempts (plus any human
feedback and retrieved examples) back into the next prompt. Termination is
test R2 above the success threshold or the iteration cap.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import model as model_mod
from . import prompts, rag, specdsl
from .dynamics import Dataset
from .llm import ChatRequest, DEFAULT_MAX_TOKENS, TransportError
from .model import Provenance, Score, better_score
from .sparse_opt import stlsq_spec
from .specdsl import CandidateSpec, first_valid_candidate, serialize_candidate
from .summarize import SystemObservation

MANIFEST_FORMAT_VERSION = 1

GENERATION_TEMPERATURE = 0.7
ABLATION_PARTS = ("text", "data", "image")

# the section 6.5 baseline the loop falls back to when the LLM does not
# choose the optimizer
BASELINE_OPTIMIZER = stlsq_spec(0.1)


@dataclass(frozen=True)
class RunConfig:
    system_id: str = ""
    ablation: frozenset = frozenset()
    samples_per_iteration: int = 30
    max_iterations: int = 10
    rag_n: int = 0
    success_threshold: float = 0.99
    attempts_in_prompt: int = 5
    choose_optimizer: bool = True
    seed: int = 0
    simulate_best: bool = True
    feedback_wait: bool = False
    feedback_timeout: float = 3600.0

    def __post_init__(self):
        unknown = set(self.ablation) - set(ABLATION_PARTS)
        if unknown:
            raise ValueError(f"unknown ablation parts {sorted(unknown)}")
        if not 0.0 < self.success_threshold <= 1.0:
            raise ValueError("success_threshold must be in (0, 1]")
        for name in ("samples_per_iteration", "max_iterations", "attempts_in_prompt"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.rag_n < 0:
            raise ValueError("rag_n must be >= 0")

    def to_dict(self) -> dict:
        return {
            "system_id": self.system_id,
            "ablation": sorted(self.ablation),
            "samples_per_iteration": self.samples_per_iteration,
            "max_iterations": self.max_iterations,
            "rag_n": self.rag_n,
            "success_threshold": self.success_threshold,
            "attempts_in_prompt": self.attempts_in_prompt,
            "choose_optimizer": self.choose_optimizer,
            "seed": self.seed,
            "simulate_best": self.simulate_best,
            "feedback_wait": self.feedback_wait,
            "feedback_timeout": self.feedback_timeout,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        doc["ablation"] = frozenset(doc.get("ablation", []))
        return cls(**doc)


@dataclass
class Transports:
    """Text, vision, and embedding transports; vision/embedder default to text."""

    text: object
    vision: object = None
    embedder: object = None

    def __post_init__(self):
        if self.vision is None:
            self.vision = self.text
        if self.embedder is None:
            self.embedder = self.text


@dataclass
class Attempt:
    iteration: int
    sample: int
    response_text: str
    candidate: CandidateSpec | None
    diagnostics: list[str]
    score: Score
    # fitted model object, kept in memory only (never serialized)
    model: object = field(default=None, compare=False, repr=False)

    @property
    def candidate_text(self) -> str | None:
        return None if self.candidate is None else serialize_candidate(self.candidate)

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "sample": self.sample,
            "response_text": self.response_text,
            "candidate_yaml": self.candidate_text,
            "diagnostics": self.diagnostics,
            "score": _score_to_json(self.score),
        }


@dataclass
class IterationRecord:
    index: int
    prompt: str
    attempts: list[Attempt] = field(default_factory=list)
    best_sample: int | None = None
    best_so_far_test_r2: float = float("-inf")
    best_model: dict | None = None

    def best_attempt(self) -> Attempt | None:
        if self.best_sample is None:
            return None
        return self.attempts[self.best_sample]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "prompt": self.prompt,
            "attempts": [a.to_dict() for a in self.attempts],
            "best_sample": self.best_sample,
            "best_so_far_test_r2": _num_to_json(self.best_so_far_test_r2),
            "best_model": self.best_model,
        }


@dataclass
class FeedbackEntry:
    timestamp: float
    text: str
    before_iteration: int | None = None

    def to_dict(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "text": self.text,
            "before_iteration": self.before_iteration,
        }


@dataclass
class RunManifest:
    run_id: str
    config: RunConfig
    status: str = "running"  # running | awaiting-feedback | done | aborted
    observation_text: str | None = None
    data_summary: str | None = None
    image_summary: str | None = None
    prompt_version: str = prompts.PROMPT_VERSION
    rag_examples: list[dict] = field(default_factory=list)
    iterations: list[IterationRecord] = field(default_factory=list)
    feedback: list[FeedbackEntry] = field(default_factory=list)
    final: dict | None = None

    def best_so_far(self) -> float:
        if not self.iterations:
            return float("-inf")
        return self.iterations[-1].best_so_far_test_r2

    def best_attempt(self) -> Attempt | None:
        best: Attempt | None = None
        for record in self.iterations:
            attempt = record.best_attempt()
            if attempt is not None and (best is None or better_score(attempt.score, best.score)):
                best = attempt
        return best

    def best_model_doc(self) -> dict | None:
        """Serialized model of the globally best attempt, if it fitted."""
        best = self.best_attempt()
        if best is None:
            return None
        for record in self.iterations:
            if record.index == best.iteration:
                return record.best_model
        return None

    def to_dict(self) -> dict:
        return {
            "format_version": MANIFEST_FORMAT_VERSION,
            "run_id": self.run_id,
            "status": self.status,
            "config": self.config.to_dict(),
            "observation": {
                "text": self.observation_text,
                "data_summary": self.data_summary,
                "image_summary": self.image_summary,
                "prompt_version": self.prompt_version,
            },
            "rag_examples": self.rag_examples,
            "iterations": [record.to_dict() for record in self.iterations],
            "feedback": [entry.to_dict() for entry in self.feedback],
            "final": self.final,
        }


def _num_to_json(value):
    if value is None or math.isfinite(value):
        return value
    return None  # JSON (and the dashboard) cannot represent infinities


def _score_to_json(score: Score) -> dict:
    doc = score.to_dict()
    doc["r2_train"] = _num_to_json(doc["r2_train"])
    doc["r2_test"] = _num_to_json(doc["r2_test"])
    doc["per_dimension"] = [
        [_num_to_json(a), _num_to_json(b)] for a, b in doc["per_dimension"]
    ]
    return doc


class FeedbackQueue:
    """Thread-safe feedback mailbox drained between iterations."""

    def __init__(self):
        self._entries: list[FeedbackEntry] = []
        self._condition = threading.Condition()

    def put(self, text: str, clock=time.time) -> FeedbackEntry:
        entry = FeedbackEntry(timestamp=float(clock()), text=text)
        with self._condition:
            self._entries.append(entry)
            self._condition.notify_all()
        return entry

    def drain(self, block: bool = False, timeout: float | None = None) -> list[FeedbackEntry]:
        with self._condition:
            if block and not self._entries:
                self._condition.wait(timeout)
            taken = self._entries[:]
            self._entries.clear()
            return taken


def submit_feedback(queue: FeedbackQueue, text: str, clock=time.time) -> FeedbackEntry:
    """Queue one feedback entry; it enters the next iteration's prompt."""
    if not text or not text.strip():
        raise ValueError("feedback text must be non-empty")
    return queue.put(text.strip(), clock)


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------


def _format_attempt(attempt: Attempt) -> str:
    lines = [f"Attempt (iteration {attempt.iteration}, sample {attempt.sample}):"]
    if attempt.candidate is not None:
        lines.append("```")
        lines.append(attempt.candidate_text.rstrip("\n"))
        lines.append("```")
        lines.append(
            f"Train R2: {_r2_text(attempt.score.r2_train)}, "
            f"Test R2: {_r2_text(attempt.score.r2_test)}, "
            f"active terms: {attempt.score.active_terms}"
        )
        if attempt.score.error:
            lines.append(f"Evaluation error: {attempt.score.error}")
        lines.extend(f"- {d}" for d in attempt.diagnostics)
    else:
        lines.append("The response could not be used:")
        lines.extend(f"- {d}" for d in attempt.diagnostics)
    return "\n".join(lines)


def _r2_text(value: float) -> str:
    return "failed" if not math.isfinite(value) else f"{value:.6f}"


def top_attempts(attempts: list[Attempt], limit: int) -> list[Attempt]:
    """Best attempts by test R2, ties to fewer active terms then arrival."""
    indexed = sorted(
        range(len(attempts)),
        key=lambda i: (
            -attempts[i].score.r2_test,
            attempts[i].score.active_terms,
            i,
        ),
    )
    return [attempts[i] for i in indexed[:limit]]


def build_prompt(
    config: RunConfig,
    observation: SystemObservation | None,
    rag_examples: list,
    attempts: list[Attempt],
    feedback: list[FeedbackEntry],
) -> str:
    """Assemble the main generation prompt; empty sections vanish entirely."""
    sections: list[str] = [prompts.main_context(config.choose_optimizer)]

    sections.append(
        "*Feature library:*\n"
        "Here are the available feature library parts.\n"
        "Please carefully read the documentation to understand how to use them "
        "to meet your requirements.\n" + prompts.LIBRARY_DOC.rstrip("\n")
    )
    if config.choose_optimizer:
        sections.append(
            "*Optimizer:*\n"
            "Here are the available optimizers.\n"
            "Please carefully read the documentation to understand how to use "
            "them to meet your requirements.\n" + prompts.OPTIMIZER_DOC.rstrip("\n")
        )
    else:
        sections.append(prompts.PINNED_OPTIMIZER_NOTE.rstrip("\n"))

    if rag_examples:
        blocks = []
        for pair in rag_examples:
            blocks.append(
                f"Description:\n{pair.description}\nConfiguration:\n```\n"
                f"{pair.config.rstrip()}\n```"
            )
        sections.append(
            "*Examples from similar systems:*\n"
            "The following example configurations worked for systems whose "
            "descriptions are most similar to this one.\n" + "\n".join(blocks)
        )

    if attempts:
        shown = top_attempts(attempts, config.attempts_in_prompt)
        sections.append(
            "The following are previous attempts, please analyze them carefully "
            "and identify what leads to high R2 scores, particularly on the "
            "test dataset.\n" + "\n".join(_format_attempt(a) for a in shown)
        )

    if feedback:
        lines = [f"{i + 1}. {entry.text}" for i, entry in enumerate(feedback)]
        sections.append(
            "*Human feedback:*\n"
            "A human reviewed the attempts so far and says (newest last):\n"
            + "\n".join(lines)
        )

    description_parts: list[str] = []
    if observation is not None:
        if "text" in config.ablation and observation.text:
            description_parts.append(f"**Text description:**\n{observation.text}")
        if "data" in config.ablation and observation.data_summary:
            description_parts.append(f"**Data description:**\n{observation.data_summary}")
        if "image" in config.ablation and observation.image_summary:
            description_parts.append(f"**Image description:**\n{observation.image_summary}")
    if description_parts:
        sections.append("*System observation:*\n" + "\n".join(description_parts))

    return "\n\n".join(sections)


# ---------------------------------------------------------------------------
# Sampling and reflection
# ---------------------------------------------------------------------------


def evaluate_response(
    response_text: str,
    dataset: Dataset,
    config: RunConfig,
    iteration: int,
    sample: int,
) -> Attempt:
    """Extract, parse, fit, and score one LLM response."""
    default_optimizer = None if config.choose_optimizer else BASELINE_OPTIMIZER
    candidate, diagnostics = first_valid_candidate(
        response_text, dataset.dimension, default_optimizer=default_optimizer
    )
    diag_text = [str(d) for d in diagnostics]
    if candidate is None:
        return Attempt(
            iteration=iteration,
            sample=sample,
            response_text=response_text,
            candidate=None,
            diagnostics=diag_text,
            score=Score.failed("no valid candidate block: " + "; ".join(diag_text)),
        )
    if not config.choose_optimizer:
        candidate = CandidateSpec(
            library=candidate.library,
            optimizer=BASELINE_OPTIMIZER,
            raw_text=candidate.raw_text,
            schema_version=candidate.schema_version,
        )
    provenance = Provenance(
        candidate_id=f"iter{iteration}-sample{sample}", iteration=iteration, sample=sample
    )
    try:
        fitted = model_mod.fit(dataset, candidate.library, candidate.optimizer, provenance)
    except Exception as exc:
        return Attempt(
            iteration=iteration,
            sample=sample,
            response_text=response_text,
            candidate=candidate,
            diagnostics=diag_text,
            score=Score.failed(f"fit failed: {type(exc).__name__}: {exc}"),
        )
    return Attempt(
        iteration=iteration,
        sample=sample,
        response_text=response_text,
        candidate=candidate,
        diagnostics=diag_text,
        score=model_mod.score(fitted, dataset),
        model=fitted,
    )


def _sample_iteration(
    config: RunConfig,
    dataset: Dataset,
    transports: Transports,
    prompt: str,
    iteration: int,
) -> list[Attempt]:
    attempts: list[Attempt] = []
    transport_failures = 0
    request = ChatRequest(
        messages=[{"role": "user", "content": prompt}],
        temperature=GENERATION_TEMPERATURE,
        max_tokens=DEFAULT_MAX_TOKENS,
    )
    for sample in range(config.samples_per_iteration):
        try:
            response = transports.text.chat(request)
        except TransportError as exc:
            transport_failures += 1
            attempts.append(
                Attempt(
                    iteration=iteration,
                    sample=sample,
                    response_text="",
                    candidate=None,
                    diagnostics=[f"transport error: {exc}"],
                    score=Score.failed(f"transport error: {exc}"),
                )
            )
            continue
        attempts.append(
            evaluate_response(response.text, dataset, config, iteration, sample)
        )
    if transport_failures == config.samples_per_iteration:
        raise TransportError(
            f"iteration {iteration}: transport failed for all "
            f"{config.samples_per_iteration} samples"
        )
    return attempts


def one_step(
    config: RunConfig,
    dataset: Dataset,
    observation: SystemObservation | None,
    transports: Transports,
    rag_examples: list | None = None,
) -> tuple[Attempt, list[Attempt]]:
    """One sampling round; returns (best attempt, all attempts)."""
    prompt = build_prompt(config, observation, rag_examples or [], [], [])
    attempts = _sample_iteration(config, dataset, transports, prompt, iteration=1)
    return top_attempts(attempts, 1)[0], attempts


class RunPersistence:
    """Writes the append-only event log and manifest snapshots."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.run_dir / "manifest.jsonl"
        self.snapshot_path = self.run_dir / "manifest.json"

    def event(self, kind: str, payload: dict) -> None:
        with self.log_path.open("a") as log:
            log.write(json.dumps({"event": kind, **payload}) + "\n")

    def snapshot(self, manifest: RunManifest) -> None:
        tmp = self.snapshot_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest.to_dict(), indent=2))
        tmp.replace(self.snapshot_path)

    def finalize(self, manifest: RunManifest) -> None:
        self.snapshot(manifest)
        best = manifest.best_attempt()
        best_model_doc = manifest.best_model_doc()
        if best_model_doc is not None:
            (self.run_dir / "model.json").write_text(json.dumps(best_model_doc, indent=2))
        report_lines = [f"run: {manifest.run_id}", f"status: {manifest.status}"]
        if best is not None and best.candidate is not None:
            report_lines.append(f"best test R2: {_r2_text(best.score.r2_test)}")
            report_lines.append(f"best train R2: {_r2_text(best.score.r2_train)}")
            if best_model_doc is not None:
                report_lines.append("equations:")
                report_lines.extend("  " + line for line in best_model_doc["equations"])
        (self.run_dir / "report.txt").write_text("\n".join(report_lines) + "\n")


def reflect(
    config: RunConfig,
    dataset: Dataset,
    observation: SystemObservation | None,
    transports: Transports,
    feedback_source: FeedbackQueue | None = None,
    rag_store: rag.ExampleStore | None = None,
    rag_exclude: set[str] | None = None,
    run_dir: str | Path | None = None,
    clock=time.time,
    run_id: str | None = None,
    manifest: RunManifest | None = None,
) -> RunManifest:
    """Run the reflection loop until success or the iteration cap.

    Iteration 1 is plain one-step sampling; every later iteration feeds the
    best prior attempts (and freshly drained human feedback) back into the
    prompt. Passing an existing manifest resumes after its last completed
    iteration.
    """
    if run_id is None:
        run_id = f"run-{int(clock())}-seed{config.seed}-{config.system_id or 'custom'}"
    persistence = RunPersistence(run_dir) if run_dir is not None else None

    rag_examples: list = []
    if rag_store is not None and config.rag_n > 0:
        query = (observation.text if observation else None) or config.system_id
        rag_examples = rag.retrieve(
            rag_store, query, config.rag_n, transports.embedder, exclude_ids=rag_exclude
        )

    if manifest is None:
        manifest = RunManifest(run_id=run_id, config=config)
        if observation is not None:
            manifest.observation_text = observation.text
            manifest.data_summary = observation.data_summary
            manifest.image_summary = observation.image_summary
        manifest.rag_examples = [
            {"id": p.id, "description": p.description, "config": p.config}
            for p in rag_examples
        ]
        if persistence:
            persistence.event(
                "run_started",
                {"run_id": run_id, "config": config.to_dict(), "timestamp": float(clock())},
            )
    manifest.status = "running"

    all_attempts: list[Attempt] = [
        attempt for record in manifest.iterations for attempt in record.attempts
    ]
    start_iteration = len(manifest.iterations) + 1

    try:
        for iteration in range(start_iteration, config.max_iterations + 1):
            if iteration > 1 and feedback_source is not None:
                if config.feedback_wait:
                    manifest.status = "awaiting-feedback"
                    if persistence:
                        persistence.snapshot(manifest)
                entries = feedback_source.drain(
                    block=config.feedback_wait, timeout=config.feedback_timeout
                )
                manifest.status = "running"
                for entry in entries:
                    entry.before_iteration = iteration
                    manifest.feedback.append(entry)
                    if persistence:
                        persistence.event("feedback", entry.to_dict())

            prompt = build_prompt(
                config,
                observation,
                rag_examples,
                all_attempts if iteration > 1 else [],
                manifest.feedback,
            )
            record = IterationRecord(index=iteration, prompt=prompt)
            manifest.iterations.append(record)
            if persistence:
                persistence.event("iteration_started", {"index": iteration})

            try:
                attempts = _sample_iteration(config, dataset, transports, prompt, iteration)
            except TransportError:
                manifest.iterations.pop()  # incomplete iteration, rerun on resume
                raise
            record.attempts = attempts
            all_attempts.extend(attempts)

            best = top_attempts(attempts, 1)[0]
            record.best_sample = best.sample
            previous = float("-inf") if iteration == 1 else manifest.iterations[-2].best_so_far_test_r2
            record.best_so_far_test_r2 = max(previous, best.score.r2_test)

            best_model = best.model
            if best_model is not None:
                if config.simulate_best:
                    sim_train, sim_test = model_mod.simulation_score(best_model, dataset)
                    best.score.sim_r2_train = sim_train
                    best.score.sim_r2_test = sim_test
                record.best_model = model_mod.model_to_dict(best_model)
            if persistence:
                persistence.event(
                    "iteration_finished",
                    {
                        "index": iteration,
                        "best_sample": record.best_sample,
                        "best_so_far_test_r2": _num_to_json(record.best_so_far_test_r2),
                    },
                )
                persistence.snapshot(manifest)

            if record.best_so_far_test_r2 > config.success_threshold:
                break
    except TransportError:
        manifest.status = "aborted"
        if persistence:
            persistence.event("run_aborted", {"iterations": len(manifest.iterations)})
            persistence.finalize(manifest)
        raise

    manifest.status = "done"
    manifest.final = {
        "best_test_r2": _num_to_json(manifest.best_so_far()),
        "iterations_used": len(manifest.iterations),
        "percentage_improvement": percentage_improvement(manifest),
    }
    best_model_doc = manifest.best_model_doc()
    if best_model_doc is not None:
        manifest.final["model"] = best_model_doc
        manifest.final["equations"] = best_model_doc["equations"]
    if persistence:
        persistence.event("run_finished", {"final": manifest.final})
        persistence.finalize(manifest)
    return manifest


def percentage_improvement(manifest: RunManifest) -> float | None:
    """Relative gain of the final best test R2 over the iteration-1 baseline."""
    if not manifest.iterations:
        raise ValueError("manifest has no iterations")
    baseline_attempt = manifest.iterations[0].best_attempt()
    if baseline_attempt is None:
        raise ValueError("manifest has no baseline attempt")
    baseline = baseline_attempt.score.r2_test
    final = manifest.best_so_far()
    if not math.isfinite(baseline) or abs(baseline) < 1e-12:
        return None
    return 100.0 * (final - baseline) / abs(baseline)


def load_manifest(run_dir: str | Path) -> RunManifest:
    """Rebuild a manifest from its snapshot file."""
    doc = json.loads((Path(run_dir) / "manifest.json").read_text())
    return manifest_from_dict(doc)


def manifest_from_dict(doc: dict) -> RunManifest:
    if doc.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise ValueError(f"unsupported manifest format {doc.get('format_version')!r}")
    config = RunConfig.from_dict(doc["config"])
    manifest = RunManifest(run_id=doc["run_id"], config=config, status=doc["status"])
    observation = doc.get("observation", {})
    manifest.observation_text = observation.get("text")
    manifest.data_summary = observation.get("data_summary")
    manifest.image_summary = observation.get("image_summary")
    manifest.prompt_version = observation.get("prompt_version") or prompts.PROMPT_VERSION
    manifest.rag_examples = doc.get("rag_examples", [])
    manifest.final = doc.get("final")
    for item in doc.get("feedback", []):
        manifest.feedback.append(
            FeedbackEntry(
                timestamp=item["timestamp"],
                text=item["text"],
                before_iteration=item.get("before_iteration"),
            )
        )
    for rec_doc in doc.get("iterations", []):
        record = IterationRecord(
            index=rec_doc["index"],
            prompt=rec_doc["prompt"],
            best_sample=rec_doc.get("best_sample"),
            best_so_far_test_r2=_json_to_num(rec_doc.get("best_so_far_test_r2")),
            best_model=rec_doc.get("best_model"),
        )
        for a_doc in rec_doc.get("attempts", []):
            candidate = None
            if a_doc.get("candidate_yaml"):
                candidate, _ = specdsl.parse_candidate(a_doc["candidate_yaml"], n=_manifest_dim(rec_doc) or 1)
            record.attempts.append(
                Attempt(
                    iteration=a_doc["iteration"],
                    sample=a_doc["sample"],
                    response_text=a_doc.get("response_text", ""),
                    candidate=candidate,
                    diagnostics=a_doc.get("diagnostics", []),
                    score=_score_from_json(a_doc["score"]),
                )
            )
        manifest.iterations.append(record)
    return manifest


def _manifest_dim(rec_doc: dict) -> int | None:
    best_model = rec_doc.get("best_model")
    if best_model:
        return best_model.get("dimension")
    return None


def _json_to_num(value):
    return float("-inf") if value is None else value


def _score_from_json(doc: dict) -> Score:
    return Score(
        r2_train=_json_to_num(doc.get("r2_train")),
        r2_test=_json_to_num(doc.get("r2_test")),
        per_dimension=[
            (_json_to_num(a), _json_to_num(b)) for a, b in doc.get("per_dimension", [])
        ],
        active_terms=doc.get("active_terms", 0),
        error=doc.get("error"),
        sim_r2_train=doc.get("sim_r2_train"),
        sim_r2_test=doc.get("sim_r2_test"),
    )


def resume(
    run_dir: str | Path,
    dataset: Dataset,
    observation: SystemObservation | None,
    transports: Transports,
    feedback_source: FeedbackQueue | None = None,
    rag_store: rag.ExampleStore | None = None,
    clock=time.time,
) -> RunManifest:
    """Continue an interrupted run from its persisted manifest."""
    manifest = load_manifest(run_dir)
    if manifest.status == "done":
        return manifest
    return reflect(
        manifest.config,
        dataset,
        observation,
        transports,
        feedback_source=feedback_source,
        rag_store=rag_store,
        run_dir=run_dir,
        clock=clock,
        run_id=manifest.run_id,
        manifest=manifest,
    )
