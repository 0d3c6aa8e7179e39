"""Command-line entry point.

Subcommands: discover (one reflection run), bench (registry sweep), rag
(example-store tooling), summarize (data/plot summaries), serve (HTTP API
for the dashboard). A YAML config file can provide defaults for any flag;
explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np
import yaml

from . import dynamics, rag, summarize
from .dynamics import Dataset, finite_difference, load_csv
from .llm import LiveTransport, ScriptedTransport
from .orchestrator import (
    FeedbackQueue,
    RunConfig,
    RunManifest,
    Transports,
    reflect,
)
from .summarize import prepare_observation

DATA_PROMPT_MARKER = "You will be shown time-series data"
IMAGE_PROMPT_MARKER = "You will be shown an image"

BASELINE_CANDIDATE = """\
library:
  - polynomial:
      degree: 2
optimizer:
  kind: STLSQ
  threshold: 0.1
"""

BENCH_THRESHOLDS = (0.9, 0.99)


def _fail(message: str, code: int = 2) -> int:
    print(json.dumps({"error": message}), file=sys.stderr)
    return code


def parse_ablation(value: str) -> frozenset:
    value = (value or "none").strip().lower()
    if value in ("none", ""):
        return frozenset()
    if value == "full":
        return frozenset({"text", "data", "image"})
    parts = frozenset(p.strip() for p in value.split(",") if p.strip())
    unknown = parts - {"text", "data", "image"}
    if unknown:
        raise ValueError(f"unknown ablation parts: {sorted(unknown)}")
    return parts


def ablation_label(ablation: frozenset) -> str:
    if not ablation:
        return "none"
    if ablation == frozenset({"text", "data", "image"}):
        return "full"
    return ",".join(sorted(ablation))


def _as_response(candidate: str) -> str:
    """Wrap bare candidate YAML in a fence so it parses as an LLM response."""
    return candidate if "```" in candidate else f"```\n{candidate.rstrip()}\n```"


def load_fixture_file(path: str | Path) -> dict:
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError(f"fixture file {path} must be a YAML mapping")
    return doc


def transport_from_fixtures(doc: dict) -> ScriptedTransport:
    """Fixture schema: ordered (list), keyed (map), repeat (bool)."""
    keyed = {key: [_as_response(v) for v in values] for key, values in (doc.get("keyed") or {}).items()}
    ordered = [_as_response(v) for v in (doc.get("ordered") or [])]
    return ScriptedTransport(ordered=ordered, keyed=keyed, repeat=bool(doc.get("repeat", False)))


def bench_cell_transport(doc: dict, system_id: str) -> ScriptedTransport:
    """Per-system transport for a bench sweep.

    Bench fixture schema:
        repeat: true
        default:
          candidates: [...]
          summary_data: "..."
          summary_image: "..."
        systems:
          <system id>: {candidates: [...], summary_data: ..., summary_image: ...}

    Missing candidates fall back to default, then to the baseline candidate.
    """
    entry = (doc.get("systems") or {}).get(system_id) or {}
    default = doc.get("default") or {}
    candidates = entry.get("candidates") or default.get("candidates") or [BASELINE_CANDIDATE]
    summary_data = entry.get("summary_data") or default.get("summary_data") or "No notable structure described."
    summary_image = entry.get("summary_image") or default.get("summary_image") or "A plain trajectory plot."
    return ScriptedTransport(
        ordered=[_as_response(c) for c in candidates],
        keyed={DATA_PROMPT_MARKER: [summary_data], IMAGE_PROMPT_MARKER: [summary_image]},
        repeat=bool(doc.get("repeat", True)),
    )


def build_transports(args) -> Transports:
    if args.transport == "fixtures":
        if not args.fixtures:
            raise ValueError("--transport fixtures requires --fixtures FILE")
        transport = transport_from_fixtures(load_fixture_file(args.fixtures))
        return Transports(text=transport)
    if args.transport == "live":
        if not args.base_url:
            raise ValueError("--transport live requires --base-url")
        import os

        api_key = os.environ.get(args.api_key_env, "") if args.api_key_env else ""
        text = LiveTransport(
            base_url=args.base_url, api_key=api_key, embed_model_id=args.embed_model
        )
        return Transports(text=_modeled(text, args.model), vision=_modeled(text, args.vision_model))
    raise ValueError(f"unknown transport {args.transport!r}")


class _ModelPinned:
    """Pins a model id onto every request sent through a transport."""

    def __init__(self, inner, model_id: str):
        self.inner = inner
        self.model_id = model_id

    @property
    def usage(self):
        return self.inner.usage

    @property
    def embed_model_id(self):
        return getattr(self.inner, "embed_model_id", "")

    def _pin(self, request):
        from .llm import ChatRequest

        return ChatRequest(
            messages=request.messages,
            temperature=request.temperature,
            max_tokens=request.max_tokens,
            model_id=self.model_id,
        )

    def chat(self, request):
        return self.inner.chat(self._pin(request))

    def chat_image(self, request, image):
        return self.inner.chat_image(self._pin(request), image)

    def embed(self, texts):
        return self.inner.embed(texts)


def _modeled(transport, model_id: str):
    return _ModelPinned(transport, model_id) if model_id else transport


def resolve_dataset(args) -> tuple[Dataset, str | None]:
    """Dataset plus its free-text description, from a registry system or CSVs."""
    if args.system:
        system = dynamics.get_system(args.system)
        dt = args.dt or system.default_dt
        steps = args.steps or system.default_steps
        dataset = dynamics.make_dataset(
            system, system.train_inits, system.test_inits, dt, steps
        )
        return dataset, (args.description or system.description)
    if args.train_csv and args.test_csv:
        train = [finite_difference(load_csv(p)) for p in args.train_csv]
        test = [finite_difference(load_csv(p)) for p in args.test_csv]
        dataset = Dataset(train=train, test=test, system_id=args.system or "custom")
        return dataset, args.description
    raise ValueError("provide --system or both --train-csv and --test-csv")


def make_run_config(args, system_id: str) -> RunConfig:
    return RunConfig(
        system_id=system_id,
        ablation=parse_ablation(args.ablation),
        samples_per_iteration=args.samples,
        max_iterations=args.iterations,
        rag_n=args.rag_n,
        success_threshold=args.success_threshold,
        attempts_in_prompt=args.attempts_in_prompt,
        choose_optimizer=args.choose_optimizer,
        seed=args.seed,
        simulate_best=args.simulate_best,
    )


def default_run_dir(base: Path, seed: int, label: str, clock=time.time) -> Path:
    stamp = datetime.fromtimestamp(clock()).strftime("%Y%m%d-%H%M%S")
    return base / f"{stamp}-seed{seed}-{label}"


# ---------------------------------------------------------------------------
# discover
# ---------------------------------------------------------------------------


def cmd_discover(args) -> int:
    transports = build_transports(args)
    dataset, description = resolve_dataset(args)
    config = make_run_config(args, dataset.system_id)
    observation = prepare_observation(
        transports.text,
        dataset,
        text=description,
        ablation=config.ablation,
        image_transport=transports.vision,
    )
    rag_store = None
    rag_exclude = None
    if args.rag_store and config.rag_n > 0:
        rag_store = rag.load_store(args.rag_store)
        rag_exclude = {dataset.system_id}

    run_dir = Path(args.out) if args.out else default_run_dir(
        Path(args.runs_dir), config.seed, dataset.system_id
    )
    manifest = reflect(
        config,
        dataset,
        observation,
        transports,
        rag_store=rag_store,
        rag_exclude=rag_exclude,
        run_dir=run_dir,
    )
    best = manifest.best_attempt()
    print(f"run: {manifest.run_id}")
    print(f"manifest: {run_dir / 'manifest.json'}")
    print(f"iterations: {len(manifest.iterations)}")
    if best is not None:
        train = best.score.r2_train
        test = best.score.r2_test
        print(f"best train R2: {train:.10f}" if np.isfinite(train) else "best train R2: failed")
        print(f"best test R2: {test:.10f}" if np.isfinite(test) else "best test R2: failed")
    model_doc = manifest.best_model_doc()
    if model_doc:
        for line in model_doc["equations"]:
            print(line)
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


@dataclass
class BenchRow:
    system: str
    ablation: str
    r2_train: float
    r2_test: float
    iterations: int
    active_terms: int


@dataclass
class BenchReport:
    rows: list[BenchRow]
    thresholds: tuple = BENCH_THRESHOLDS

    def aggregates(self) -> dict:
        """Percentage of rows above each threshold, per ablation and overall."""
        groups: dict[str, list[BenchRow]] = {"overall": list(self.rows)}
        for row in self.rows:
            groups.setdefault(row.ablation, []).append(row)
        out = {}
        for name, rows in groups.items():
            cell = {}
            for threshold in self.thresholds:
                for split in ("train", "test"):
                    values = [getattr(r, f"r2_{split}") for r in rows]
                    above = sum(1 for v in values if v > threshold)
                    key = f"{split}>{threshold}"
                    cell[key] = 100.0 * above / len(values) if values else 0.0
            out[name] = cell
        return out

    def to_csv(self) -> str:
        lines = ["system,ablation,r2_train,r2_test,iterations,active_terms"]
        for row in sorted(self.rows, key=lambda r: (r.system, r.ablation)):
            lines.append(
                f"{row.system},{row.ablation},{row.r2_train:.12g},"
                f"{row.r2_test:.12g},{row.iterations},{row.active_terms}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        aggregates = self.aggregates()
        header = f"{'ablation':<10}" + "".join(
            f"{f'{split} R2>{threshold}':>16}"
            for threshold in self.thresholds
            for split in ("train", "test")
        )
        lines = [header, "-" * len(header)]
        for name in sorted(aggregates):
            cells = aggregates[name]
            lines.append(
                f"{name:<10}"
                + "".join(
                    f"{cells[f'{split}>{threshold}']:>15.1f}%"
                    for threshold in self.thresholds
                    for split in ("train", "test")
                )
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "BenchReport":
        rows = []
        for line in text.strip().splitlines()[1:]:
            system, ablation, train, test, iterations, terms = line.split(",")
            rows.append(
                BenchRow(
                    system=system,
                    ablation=ablation,
                    r2_train=float(train),
                    r2_test=float(test),
                    iterations=int(iterations),
                    active_terms=int(terms),
                )
            )
        return cls(rows=rows)


def _bench_cell(args, fixtures_doc, system, ablation, out_dir) -> BenchRow:
    transport = bench_cell_transport(fixtures_doc, system.id)
    transports = Transports(text=transport)
    dataset = dynamics.default_dataset(system)
    label = ablation_label(ablation)
    config = RunConfig(
        system_id=system.id,
        ablation=ablation,
        samples_per_iteration=args.samples,
        max_iterations=args.iterations,
        rag_n=args.rag_n,
        success_threshold=args.success_threshold,
        choose_optimizer=args.choose_optimizer,
        seed=args.seed,
        simulate_best=False,
    )
    observation = prepare_observation(
        transport, dataset, text=system.description, ablation=ablation
    )
    rag_store = rag.load_store(args.rag_store) if args.rag_store and args.rag_n else None
    manifest = reflect(
        config,
        dataset,
        observation,
        transports,
        rag_store=rag_store,
        rag_exclude={system.id},
        run_dir=out_dir / "runs" / f"{system.id}-{label}",
        clock=lambda: 0.0,
        run_id=f"bench-{system.id}-{label}-seed{args.seed}",
    )
    best = manifest.best_attempt()
    return BenchRow(
        system=system.id,
        ablation=label,
        r2_train=best.score.r2_train if best else float("-inf"),
        r2_test=best.score.r2_test if best else float("-inf"),
        iterations=len(manifest.iterations),
        active_terms=best.score.active_terms if best else 0,
    )


def cmd_bench(args) -> int:
    if args.transport != "fixtures":
        return _fail("bench currently runs with --transport fixtures only")
    fixtures_doc = load_fixture_file(args.fixtures) if args.fixtures else {}
    systems = dynamics.registry()
    if args.systems:
        wanted = {s.strip() for s in args.systems.split(",")}
        systems = [s for s in systems if s.id in wanted]
        missing = wanted - {s.id for s in systems}
        if missing:
            return _fail(f"unknown systems: {sorted(missing)}")
    ablations = [parse_ablation(a.strip()) for a in args.ablations.split("/")]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [(system, ablation) for system in systems for ablation in ablations]

    def run_cell(cell):
        system, ablation = cell
        return _bench_cell(args, fixtures_doc, system, ablation, out_dir)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(cell) for cell in cells]

    report = BenchReport(rows=rows)
    (out_dir / "report.csv").write_text(report.to_csv())
    (out_dir / "report.txt").write_text(report.to_text())
    print(report.to_text())
    print(f"report: {out_dir / 'report.csv'}")
    return 0


# ---------------------------------------------------------------------------
# rag
# ---------------------------------------------------------------------------


def cmd_rag(args) -> int:
    if args.action == "build":
        if not args.seed_file or not args.store:
            return _fail("rag build needs --seed-file and --store")
        entries = yaml.safe_load(Path(args.seed_file).read_text())
        if not isinstance(entries, list):
            return _fail("seed file must be a YAML list of {id, description, config}")
        transport = ScriptedTransport()  # offline deterministic embedder
        store = rag.new_store(transport)
        for entry in entries:
            rag.add_example(
                store,
                entry["description"],
                entry["config"],
                transport,
                pair_id=entry.get("id"),
            )
        rag.save_store(store, args.store)
        print(f"built store with {len(store.pairs)} pairs at {args.store}")
        return 0
    if args.action == "inspect":
        store = rag.load_store(args.store)
        print(f"fingerprint: {store.fingerprint}")
        print(f"dimension: {store.dimension}")
        print(f"pairs: {len(store.pairs)}")
        for pair in store.pairs:
            print(f"  {pair.id}: {pair.description[:70]}")
        return 0
    if args.action == "query":
        store = rag.load_store(args.store)
        transport = ScriptedTransport()
        hits = rag.retrieve(store, args.text, args.n, transport)
        for pair in hits:
            print(f"{pair.id}\t{pair.description[:60]}")
        return 0
    return _fail(f"unknown rag action {args.action!r}")


# ---------------------------------------------------------------------------
# summarize
# ---------------------------------------------------------------------------


def cmd_summarize(args) -> int:
    traj = finite_difference(load_csv(args.csv)) if args.with_derivatives else load_csv(args.csv)
    if args.plot:
        Path(args.plot).write_bytes(summarize.render_plot(traj))
        print(f"plot: {args.plot}")
    transports = build_transports(args)
    text = summarize.summarize_data(transports.text, traj, max_rows=args.max_rows)
    print(text)
    if args.image_summary:
        image = summarize.render_plot(traj)
        print(summarize.summarize_image(transports.vision, image, traj.n))
    return 0


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


def start_live_run(config_path: str, runs_dir: Path, registry) -> None:
    from .server import LiveRun

    doc = yaml.safe_load(Path(config_path).read_text())
    system = dynamics.get_system(doc["system"])
    dataset = dynamics.default_dataset(system)
    fixtures = doc.get("fixtures") or {}
    if isinstance(fixtures, str):
        fixtures = load_fixture_file(fixtures)
    transport = transport_from_fixtures(fixtures)
    ablation = parse_ablation(
        ",".join(doc.get("ablation", [])) if isinstance(doc.get("ablation"), list)
        else doc.get("ablation", "none")
    )
    config = RunConfig(
        system_id=system.id,
        ablation=ablation,
        samples_per_iteration=int(doc.get("samples", 2)),
        max_iterations=int(doc.get("iterations", 5)),
        success_threshold=float(doc.get("success_threshold", 0.99)),
        choose_optimizer=bool(doc.get("choose_optimizer", True)),
        seed=int(doc.get("seed", 0)),
        simulate_best=bool(doc.get("simulate_best", False)),
        feedback_wait=bool(doc.get("feedback_wait", False)),
        feedback_timeout=float(doc.get("feedback_timeout", 3600.0)),
    )
    observation = prepare_observation(
        transport, dataset, text=system.description, ablation=config.ablation
    )
    queue = FeedbackQueue()
    run_id = f"live-{system.id}-seed{config.seed}"
    manifest = RunManifest(run_id=run_id, config=config)
    manifest.observation_text = observation.text
    manifest.data_summary = observation.data_summary
    manifest.image_summary = observation.image_summary
    live = LiveRun(manifest=manifest, queue=queue, dataset=dataset)

    def target():
        reflect(
            config,
            dataset,
            observation,
            Transports(text=transport),
            feedback_source=queue,
            run_dir=runs_dir / run_id,
            run_id=run_id,
            manifest=manifest,
        )

    live.thread = threading.Thread(target=target, daemon=True)
    registry.register_live(live)
    live.thread.start()


def cmd_serve(args) -> int:
    import uvicorn

    from .server import RunRegistry, create_app

    runs_dir = Path(args.runs_dir)
    registry = RunRegistry(runs_dir=runs_dir)
    if args.live_config:
        start_live_run(args.live_config, runs_dir, registry)
    ui_dir = Path(args.ui_dir) if args.ui_dir else None
    app = create_app(registry, ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _add_transport_flags(parser):
    parser.add_argument("--transport", choices=("fixtures", "live"), default="fixtures")
    parser.add_argument("--fixtures", help="fixture YAML file for scripted transports")
    parser.add_argument("--base-url", default="", help="chat-completions server base URL")
    parser.add_argument("--api-key-env", default="SINDYAGENT_API_KEY",
                        help="environment variable holding the bearer token")
    parser.add_argument("--model", default="qwen2-72b-32k", help="text model id")
    parser.add_argument("--vision-model", default="internvl2.5-78b", help="vision model id")
    parser.add_argument("--embed-model", default="nomic-embed-text", help="embedding model id")


def _add_run_flags(parser):
    parser.add_argument("--ablation", default="none",
                        help="none | text | data | image | full | comma list")
    parser.add_argument("--samples", type=int, default=30, help="samples per iteration")
    parser.add_argument("--iterations", type=int, default=10, help="max iterations")
    parser.add_argument("--rag-store", default="", help="path to a rag store json")
    parser.add_argument("--rag-n", type=int, default=0, help="rag examples per prompt (0 = off)")
    parser.add_argument("--success-threshold", type=float, default=0.99)
    parser.add_argument("--attempts-in-prompt", type=int, default=5)
    parser.add_argument("--choose-optimizer", action=argparse.BooleanOptionalAction, default=True)
    parser.add_argument("--simulate-best", action=argparse.BooleanOptionalAction, default=True)
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="sindyagent",
        description="Sparse ODE discovery with an LLM-guided configuration loop",
    )
    parser.add_argument("--config", help="YAML file of flag defaults; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: dict[str, argparse.ArgumentParser] = {}

    discover = sub.add_parser("discover", help="run discovery on one system")
    discover.add_argument("--system", default="", help="registry system id")
    discover.add_argument("--train-csv", action="append", default=[])
    discover.add_argument("--test-csv", action="append", default=[])
    discover.add_argument("--description", default="", help="free-text system description")
    discover.add_argument("--dt", type=float, default=0.0, help="override integration step")
    discover.add_argument("--steps", type=int, default=0, help="override step count")
    discover.add_argument("--out", default="", help="run directory (default: runs/<stamp>)")
    discover.add_argument("--runs-dir", default="runs")
    _add_run_flags(discover)
    _add_transport_flags(discover)
    discover.set_defaults(func=cmd_discover)

    bench = sub.add_parser("bench", help="sweep the registry across ablations")
    bench.add_argument("--systems", default="", help="comma list (default: all)")
    bench.add_argument("--ablations", default="none/text/data/image",
                       help="slash-separated ablation specs")
    bench.add_argument("--out", default="bench-out")
    bench.add_argument("--jobs", type=int, default=1)
    _add_run_flags(bench)
    _add_transport_flags(bench)
    bench.set_defaults(func=cmd_bench, samples=3, iterations=1)

    rag_cmd = sub.add_parser("rag", help="build or inspect example stores")
    rag_cmd.add_argument("action", choices=("build", "inspect", "query"))
    rag_cmd.add_argument("--store", default="", help="store json path")
    rag_cmd.add_argument("--seed-file", default="", help="YAML list of {id, description, config}")
    rag_cmd.add_argument("--text", default="", help="query text")
    rag_cmd.add_argument("--n", type=int, default=5)
    rag_cmd.set_defaults(func=cmd_rag)

    summarize_cmd = sub.add_parser("summarize", help="summarize a trajectory CSV")
    summarize_cmd.add_argument("--csv", required=True)
    summarize_cmd.add_argument("--plot", default="", help="write the rendered plot here")
    summarize_cmd.add_argument("--image-summary", action="store_true")
    summarize_cmd.add_argument("--with-derivatives", action="store_true")
    summarize_cmd.add_argument("--max-rows", type=int, default=500)
    _add_transport_flags(summarize_cmd)
    summarize_cmd.set_defaults(func=cmd_summarize)

    serve = sub.add_parser("serve", help="serve stored runs (and optionally host one)")
    serve.add_argument("--runs-dir", default="runs")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8008)
    serve.add_argument("--live-config", default="", help="YAML config for a hosted live run")
    serve.add_argument("--ui-dir", default="", help="serve the dashboard directory at /ui")
    serve.set_defaults(func=cmd_serve)

    subparsers.update(
        discover=discover, bench=bench, rag=rag_cmd, summarize=summarize_cmd, serve=serve
    )
    return parser, subparsers


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser, subparsers = build_parser()

    # pre-scan for --config so file values become parser defaults; flags win
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        overrides = yaml.safe_load(Path(known.config).read_text()) or {}
        if not isinstance(overrides, dict):
            return _fail("--config file must be a YAML mapping")
        for sub_parser in subparsers.values():
            valid = {action.dest for action in sub_parser._actions}  # noqa: SLF001
            sub_parser.set_defaults(**{k: v for k, v in overrides.items() if k in valid})

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        return _fail(f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
