import json

import numpy as np
import pytest

from sindyagent import dynamics, rag
from sindyagent.llm import FixtureExhaustedError, ScriptedTransport, TransportError
from sindyagent.orchestrator import (
    Attempt,
    FeedbackQueue,
    RunConfig,
    RunManifest,
    Transports,
    build_prompt,
    load_manifest,
    manifest_from_dict,
    one_step,
    percentage_improvement,
    reflect,
    resume,
    submit_feedback,
    top_attempts,
)
from sindyagent.model import Score
from sindyagent.summarize import SystemObservation

GOOD_LORENZ = """\
Looking at the data, quadratic coupling seems likely.
```
library:
  - polynomial:
      degree: 2
optimizer:
  kind: STLSQ
  threshold: 0.1
```
"""

POOR_CANDIDATE = """\
```
library:
  - fourier:
      n_frequencies: 1
optimizer:
  kind: STLSQ
  threshold: 0.1
```
"""

MEDIUM_CANDIDATE = """\
```
library:
  - polynomial:
      degree: 1
optimizer:
  kind: STLSQ
  threshold: 0.1
```
"""

BROKEN_RESPONSE = "I could not decide on a library, sorry."

FIXED_CLOCK = lambda: 1700000000.0


@pytest.fixture(scope="module")
def lorenz_dataset():
    return dynamics.default_dataset(dynamics.get_system("lorenz"))


@pytest.fixture(scope="module")
def lorenz_observation(lorenz_dataset):
    return SystemObservation(
        data=lorenz_dataset,
        text=dynamics.get_system("lorenz").description,
        data_summary="three coupled oscillating channels",
        image_summary="two-lobed butterfly pattern",
    )


def config(**kw):
    defaults = dict(
        system_id="lorenz",
        samples_per_iteration=2,
        max_iterations=3,
        simulate_best=False,
        seed=1,
    )
    defaults.update(kw)
    return RunConfig(**defaults)


class TestBuildPrompt:
    def test_minimal_prompt_has_only_context_and_grammar(self, lorenz_observation):
        cfg = config(ablation=frozenset())
        text = build_prompt(cfg, lorenz_observation, [], [], [])
        assert "Sparse Identification of Nonlinear Dynamics" in text
        assert "*Feature library:*" in text
        assert "*Optimizer:*" in text
        assert "*System observation:*" not in text
        assert "previous attempts" not in text
        assert "*Human feedback:*" not in text
        assert "Examples from similar systems" not in text

    def test_text_ablation_includes_only_text(self, lorenz_observation):
        cfg = config(ablation=frozenset({"text"}))
        text = build_prompt(cfg, lorenz_observation, [], [], [])
        assert "**Text description:**" in text
        assert lorenz_observation.text in text
        assert "**Data description:**" not in text
        assert "**Image description:**" not in text

    def test_full_ablation(self, lorenz_observation):
        cfg = config(ablation=frozenset({"text", "data", "image"}))
        text = build_prompt(cfg, lorenz_observation, [], [], [])
        assert "three coupled oscillating channels" in text
        assert "two-lobed butterfly pattern" in text

    def test_choose_optimizer_false_pins_baseline(self, lorenz_observation):
        cfg = config(choose_optimizer=False)
        text = build_prompt(cfg, lorenz_observation, [], [], [])
        assert "*Optimizer:*" not in text
        assert "optimizer is fixed" in text

    def test_attempts_capped_and_sorted(self, lorenz_dataset, lorenz_observation):
        cfg = config(attempts_in_prompt=2)
        attempts = []
        for i, r2 in enumerate([0.5, 0.9, 0.7, 0.2]):
            attempts.append(
                Attempt(
                    iteration=1,
                    sample=i,
                    response_text="",
                    candidate=None,
                    diagnostics=[],
                    score=Score(r2_train=r2, r2_test=r2, per_dimension=[], active_terms=3),
                )
            )
        shown = top_attempts(attempts, 2)
        assert [a.sample for a in shown] == [1, 2]

    def test_prompt_contains_exactly_the_five_best_of_thirty(self, lorenz_observation):
        # sort-oracle check: 30 scored attempts, only the best five make it in
        rng = np.random.default_rng(17)
        scores = rng.uniform(-1.0, 1.0, size=30)
        attempts = [
            Attempt(
                iteration=1,
                sample=i,
                response_text="",
                candidate=None,
                diagnostics=[],
                score=Score(
                    r2_train=value, r2_test=value, per_dimension=[], active_terms=2
                ),
            )
            for i, value in enumerate(scores)
        ]
        cfg = config(attempts_in_prompt=5)
        shown = top_attempts(attempts, cfg.attempts_in_prompt)
        oracle = sorted(range(30), key=lambda i: -scores[i])[:5]
        assert [a.sample for a in shown] == oracle
        text = build_prompt(cfg, lorenz_observation, [], attempts, [])
        for i in range(30):
            marker = f"iteration 1, sample {i})"
            if i in oracle:
                assert marker in text
            else:
                assert marker not in text

    def test_feedback_newest_last(self, lorenz_observation):
        from sindyagent.orchestrator import FeedbackEntry

        cfg = config()
        feedback = [
            FeedbackEntry(timestamp=1.0, text="try fourier terms"),
            FeedbackEntry(timestamp=2.0, text="lower the threshold"),
        ]
        text = build_prompt(cfg, lorenz_observation, [], [], feedback)
        section = text[text.index("*Human feedback:*"):]
        assert section.index("try fourier terms") < section.index("lower the threshold")

    def test_rag_examples_included(self, lorenz_observation):
        transport = ScriptedTransport()
        store = rag.new_store(transport)
        rag.add_example(store, "a chaotic attractor", "library:\n  - polynomial:\n      degree: 2", transport)
        pairs = rag.retrieve(store, "chaotic", 1, transport)
        text = build_prompt(config(), lorenz_observation, pairs, [], [])
        assert "Examples from similar systems" in text
        assert "a chaotic attractor" in text


class TestOneStep:
    def test_selects_best_of_samples(self, lorenz_dataset, lorenz_observation):
        transport = ScriptedTransport(ordered=[POOR_CANDIDATE, GOOD_LORENZ, MEDIUM_CANDIDATE])
        cfg = config(samples_per_iteration=3)
        best, attempts = one_step(cfg, lorenz_dataset, lorenz_observation, Transports(text=transport))
        assert len(attempts) == 3
        assert best.sample == 1
        assert best.score.r2_test > 0.9999
        # oracle: explicit sort over recorded attempts
        expected_best = max(attempts, key=lambda a: a.score.r2_test)
        assert best.sample == expected_best.sample

    def test_broken_response_recorded_not_raised(self, lorenz_dataset, lorenz_observation):
        transport = ScriptedTransport(ordered=[BROKEN_RESPONSE, GOOD_LORENZ])
        best, attempts = one_step(
            config(), lorenz_dataset, lorenz_observation, Transports(text=transport)
        )
        assert attempts[0].candidate is None
        assert attempts[0].score.r2_test == float("-inf")
        assert attempts[0].diagnostics
        assert best.sample == 1

    def test_all_transport_failures_abort(self, lorenz_dataset, lorenz_observation):
        transport = ScriptedTransport(ordered=[])  # immediately exhausted
        with pytest.raises(TransportError):
            one_step(config(), lorenz_dataset, lorenz_observation, Transports(text=transport))

    def test_generation_temperature(self, lorenz_dataset, lorenz_observation):
        transport = ScriptedTransport(ordered=[GOOD_LORENZ, GOOD_LORENZ])
        one_step(config(), lorenz_dataset, lorenz_observation, Transports(text=transport))
        assert all(call.temperature == 0.7 for call in transport.calls)

    def test_pinned_optimizer_applied(self, lorenz_dataset, lorenz_observation):
        library_only = "```\nlibrary:\n  - polynomial:\n      degree: 2\n```"
        transport = ScriptedTransport(ordered=[library_only, library_only])
        cfg = config(choose_optimizer=False)
        best, _ = one_step(cfg, lorenz_dataset, lorenz_observation, Transports(text=transport))
        assert best.candidate.optimizer.kind == "STLSQ"
        assert best.candidate.optimizer.threshold == 0.1
        assert best.score.r2_test > 0.9999


class TestReflect:
    def test_terminates_the_moment_threshold_crossed(self, lorenz_dataset, lorenz_observation, tmp_path):
        responses = [POOR_CANDIDATE, POOR_CANDIDATE, MEDIUM_CANDIDATE, GOOD_LORENZ]
        transport = ScriptedTransport(ordered=responses)
        cfg = config(samples_per_iteration=2, max_iterations=10)
        manifest = reflect(
            cfg,
            lorenz_dataset,
            lorenz_observation,
            Transports(text=transport),
            run_dir=tmp_path / "run",
            clock=FIXED_CLOCK,
        )
        assert manifest.status == "done"
        assert len(manifest.iterations) == 2  # stops right after crossing 0.99
        assert manifest.iterations[-1].best_so_far_test_r2 > 0.99
        assert manifest.final["iterations_used"] == 2

    def test_best_so_far_non_decreasing(self, lorenz_dataset, lorenz_observation):
        # a decent candidate early, only worse ones after: best-so-far holds
        responses = [MEDIUM_CANDIDATE, POOR_CANDIDATE, POOR_CANDIDATE, POOR_CANDIDATE]
        transport = ScriptedTransport(ordered=responses)
        cfg = config(samples_per_iteration=2, max_iterations=2, success_threshold=0.999999999)
        manifest = reflect(cfg, lorenz_dataset, lorenz_observation, Transports(text=transport))
        series = [rec.best_so_far_test_r2 for rec in manifest.iterations]
        assert series == sorted(series)
        assert series[1] == series[0]  # worse iteration cannot lower it

    def test_every_response_accounted(self, lorenz_dataset, lorenz_observation):
        transport = ScriptedTransport(ordered=[POOR_CANDIDATE] * 6)
        cfg = config(samples_per_iteration=3, max_iterations=2, success_threshold=0.9999999)
        manifest = reflect(cfg, lorenz_dataset, lorenz_observation, Transports(text=transport))
        total = sum(len(rec.attempts) for rec in manifest.iterations)
        assert total == len(manifest.iterations) * cfg.samples_per_iteration == 6

    def test_deterministic_manifests(self, lorenz_dataset, lorenz_observation, tmp_path):
        def run(out):
            transport = ScriptedTransport(
                ordered=[POOR_CANDIDATE, MEDIUM_CANDIDATE, GOOD_LORENZ, GOOD_LORENZ]
            )
            cfg = config(samples_per_iteration=2, max_iterations=3)
            return reflect(
                cfg,
                lorenz_dataset,
                lorenz_observation,
                Transports(text=transport),
                run_dir=out,
                clock=FIXED_CLOCK,
            )

        a = run(tmp_path / "a")
        b = run(tmp_path / "b")
        assert a.to_dict() == b.to_dict()
        assert (tmp_path / "a" / "manifest.json").read_text() == (
            tmp_path / "b" / "manifest.json"
        ).read_text()

    def test_later_prompts_contain_best_attempts(self, lorenz_dataset, lorenz_observation):
        transport = ScriptedTransport(ordered=[POOR_CANDIDATE, POOR_CANDIDATE, GOOD_LORENZ, GOOD_LORENZ])
        cfg = config(samples_per_iteration=2, max_iterations=2)
        manifest = reflect(cfg, lorenz_dataset, lorenz_observation, Transports(text=transport))
        assert "previous attempts" not in manifest.iterations[0].prompt
        assert "previous attempts" in manifest.iterations[1].prompt
        assert "Train R2" in manifest.iterations[1].prompt

    def test_feedback_incorporated_next_iteration(self, lorenz_dataset, lorenz_observation):
        transport = ScriptedTransport(ordered=[POOR_CANDIDATE] * 4)
        queue = FeedbackQueue()
        submit_feedback(queue, "please use polynomial terms", clock=FIXED_CLOCK)
        cfg = config(samples_per_iteration=2, max_iterations=2, success_threshold=0.999999)
        manifest = reflect(
            cfg, lorenz_dataset, lorenz_observation, Transports(text=transport),
            feedback_source=queue,
        )
        assert "please use polynomial terms" not in manifest.iterations[0].prompt
        assert "please use polynomial terms" in manifest.iterations[1].prompt
        assert manifest.feedback[0].before_iteration == 2

    def test_transport_failure_aborts_with_manifest(self, lorenz_dataset, lorenz_observation, tmp_path):
        transport = ScriptedTransport(ordered=[POOR_CANDIDATE, POOR_CANDIDATE])
        cfg = config(samples_per_iteration=2, max_iterations=5, success_threshold=0.99999)
        run_dir = tmp_path / "aborted"
        with pytest.raises(TransportError):
            reflect(
                cfg, lorenz_dataset, lorenz_observation, Transports(text=transport),
                run_dir=run_dir, clock=FIXED_CLOCK,
            )
        saved = load_manifest(run_dir)
        assert saved.status == "aborted"
        assert len(saved.iterations) >= 1

    def test_resume_continues_after_abort(self, lorenz_dataset, lorenz_observation, tmp_path):
        transport = ScriptedTransport(ordered=[POOR_CANDIDATE, POOR_CANDIDATE])
        cfg = config(samples_per_iteration=2, max_iterations=3)
        run_dir = tmp_path / "resumable"
        with pytest.raises(TransportError):
            reflect(
                cfg, lorenz_dataset, lorenz_observation, Transports(text=transport),
                run_dir=run_dir, clock=FIXED_CLOCK,
            )
        fresh = ScriptedTransport(ordered=[GOOD_LORENZ, GOOD_LORENZ])
        manifest = resume(
            run_dir, lorenz_dataset, lorenz_observation, Transports(text=fresh),
            clock=FIXED_CLOCK,
        )
        assert manifest.status == "done"
        # iteration 1 (the poor pre-abort round) is kept as recorded
        assert manifest.iterations[0].attempts[0].score.r2_test < 0.5
        assert manifest.best_so_far() > 0.99
        assert len(manifest.iterations) == 2

    def test_rag_examples_in_prompt_and_manifest(self, lorenz_dataset, lorenz_observation):
        transport = ScriptedTransport(ordered=[GOOD_LORENZ, GOOD_LORENZ])
        store = rag.new_store(transport)
        rag.add_example(store, "chaotic three dimensional convection", "cfg-a", transport, pair_id="lorenz")
        rag.add_example(store, "population growth", "cfg-b", transport, pair_id="logistic")
        cfg = config(rag_n=1)
        manifest = reflect(
            cfg, lorenz_dataset, lorenz_observation, Transports(text=transport),
            rag_store=store,
        )
        assert len(manifest.rag_examples) == 1
        assert "cfg-" in manifest.iterations[0].prompt

    def test_leave_one_out_exclusion(self, lorenz_dataset, lorenz_observation):
        transport = ScriptedTransport(ordered=[GOOD_LORENZ, GOOD_LORENZ])
        store = rag.new_store(transport)
        rag.add_example(store, lorenz_observation.text, "cfg-self", transport, pair_id="lorenz")
        rag.add_example(store, "population growth", "cfg-other", transport, pair_id="logistic")
        cfg = config(rag_n=1)
        manifest = reflect(
            cfg, lorenz_dataset, lorenz_observation, Transports(text=transport),
            rag_store=store, rag_exclude={"lorenz"},
        )
        assert manifest.rag_examples[0]["id"] == "logistic"


class TestPercentageImprovement:
    def fabricate(self, baseline, final):
        from sindyagent.orchestrator import IterationRecord

        def attempt(i, value):
            return Attempt(
                iteration=i, sample=0, response_text="", candidate=None, diagnostics=[],
                score=Score(r2_train=value, r2_test=value, per_dimension=[], active_terms=1),
            )

        manifest = RunManifest(run_id="r", config=config())
        rec1 = IterationRecord(index=1, prompt="", attempts=[attempt(1, baseline)],
                               best_sample=0, best_so_far_test_r2=baseline)
        rec2 = IterationRecord(index=2, prompt="", attempts=[attempt(2, final)],
                               best_sample=0, best_so_far_test_r2=max(baseline, final))
        manifest.iterations = [rec1, rec2]
        return manifest

    def test_no_change_is_zero(self):
        assert percentage_improvement(self.fabricate(0.5, 0.5)) == 0.0

    def test_hand_computed(self):
        assert percentage_improvement(self.fabricate(0.5, 0.75)) == pytest.approx(50.0)

    def test_negative_baseline(self):
        # improvement against a negative baseline can exceed a thousand percent
        value = percentage_improvement(self.fabricate(-0.07, 0.91))
        assert value == pytest.approx(100 * (0.91 + 0.07) / 0.07)
        assert value > 1000

    def test_tiny_baseline_undefined(self):
        assert percentage_improvement(self.fabricate(1e-14, 0.9)) is None


class TestRecordReplay:
    def test_recorded_run_replays_to_identical_manifest(self, lorenz_dataset, lorenz_observation, tmp_path):
        from sindyagent.llm import RecordingTransport

        cfg = config(samples_per_iteration=2, max_iterations=3)
        sink = tmp_path / "capture.jsonl"
        recorded_inner = ScriptedTransport(
            ordered=[POOR_CANDIDATE, MEDIUM_CANDIDATE, GOOD_LORENZ, GOOD_LORENZ]
        )
        recorder = RecordingTransport(recorded_inner, sink_path=sink)
        original = reflect(
            cfg, lorenz_dataset, lorenz_observation, Transports(text=recorder),
            clock=FIXED_CLOCK,
        )

        replay_transport = ScriptedTransport.from_capture(sink)
        replayed = reflect(
            cfg, lorenz_dataset, lorenz_observation, Transports(text=replay_transport),
            clock=FIXED_CLOCK,
        )
        assert replayed.to_dict() == original.to_dict()


class TestManifestSerialization:
    def test_round_trip(self, lorenz_dataset, lorenz_observation, tmp_path):
        transport = ScriptedTransport(ordered=[BROKEN_RESPONSE, GOOD_LORENZ])
        cfg = config(samples_per_iteration=2, max_iterations=1)
        manifest = reflect(
            cfg, lorenz_dataset, lorenz_observation, Transports(text=transport),
            run_dir=tmp_path / "run", clock=FIXED_CLOCK,
        )
        loaded = load_manifest(tmp_path / "run")
        assert loaded.to_dict() == manifest.to_dict()

    def test_infinities_become_null(self, lorenz_dataset, lorenz_observation, tmp_path):
        transport = ScriptedTransport(ordered=[BROKEN_RESPONSE, BROKEN_RESPONSE])
        cfg = config(samples_per_iteration=2, max_iterations=1, success_threshold=0.5)
        manifest = reflect(
            cfg, lorenz_dataset, lorenz_observation, Transports(text=transport),
            run_dir=tmp_path / "run", clock=FIXED_CLOCK,
        )
        raw = (tmp_path / "run" / "manifest.json").read_text()
        assert "Infinity" not in raw
        loaded = load_manifest(tmp_path / "run")
        assert loaded.iterations[0].attempts[0].score.r2_test == float("-inf")

    def test_event_log_append_only(self, lorenz_dataset, lorenz_observation, tmp_path):
        transport = ScriptedTransport(ordered=[GOOD_LORENZ, GOOD_LORENZ])
        cfg = config(samples_per_iteration=2, max_iterations=1)
        reflect(
            cfg, lorenz_dataset, lorenz_observation, Transports(text=transport),
            run_dir=tmp_path / "run", clock=FIXED_CLOCK,
        )
        events = [json.loads(line)["event"] for line in (tmp_path / "run" / "manifest.jsonl").read_text().splitlines()]
        assert events[0] == "run_started"
        assert "iteration_started" in events
        assert events[-1] == "run_finished"
