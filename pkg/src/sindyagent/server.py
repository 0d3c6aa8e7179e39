"""HTTP surface over stored manifests and live runs.

Endpoints (consumed by the browser dashboard):

    GET  /runs                        run summaries
    GET  /runs/{id}                   full manifest
    GET  /runs/{id}/iterations/{k}    one iteration's artifacts
    GET  /runs/{id}/plot/{k}          derivative-fit plot for the iteration best
    POST /runs/{id}/feedback          queue feedback for the next iteration
"""

from __future__ import annotations

import io
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse, Response
from pydantic import BaseModel

from . import dynamics, model as model_mod
from .orchestrator import FeedbackQueue, RunManifest, load_manifest, submit_feedback


@dataclass
class LiveRun:
    """An in-process run whose manifest is still being written."""

    manifest: RunManifest
    queue: FeedbackQueue
    dataset: dynamics.Dataset | None = None
    thread: threading.Thread | None = None


@dataclass
class RunRegistry:
    """Resolves run ids to manifests, wherever they live."""

    runs_dir: Path | None = None
    live: dict[str, LiveRun] = field(default_factory=dict)
    clock: object = time.time

    def register_live(self, run: LiveRun) -> None:
        self.live[run.manifest.run_id] = run

    def _stored_dirs(self) -> list[Path]:
        if self.runs_dir is None or not self.runs_dir.exists():
            return []
        return sorted(
            d for d in self.runs_dir.iterdir() if (d / "manifest.json").exists()
        )

    def list_manifests(self) -> list[RunManifest]:
        manifests = [run.manifest for run in self.live.values()]
        seen = {m.run_id for m in manifests}
        for run_dir in self._stored_dirs():
            try:
                manifest = load_manifest(run_dir)
            except (ValueError, json.JSONDecodeError):
                continue
            if manifest.run_id not in seen:
                manifests.append(manifest)
        return manifests

    def get(self, run_id: str) -> RunManifest:
        if run_id in self.live:
            return self.live[run_id].manifest
        for run_dir in self._stored_dirs():
            try:
                manifest = load_manifest(run_dir)
            except (ValueError, json.JSONDecodeError):
                continue
            if manifest.run_id == run_id:
                return manifest
        raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")

    def dataset_for(self, manifest: RunManifest) -> dynamics.Dataset | None:
        run = self.live.get(manifest.run_id)
        if run is not None and run.dataset is not None:
            return run.dataset
        system_id = manifest.config.system_id
        if system_id:
            try:
                return dynamics.default_dataset(dynamics.get_system(system_id))
            except KeyError:
                return None
        return None


def run_view(manifest: RunManifest) -> dict:
    iterations = []
    for record in manifest.iterations:
        best = record.best_attempt()
        iterations.append(
            {
                "index": record.index,
                "best_test_r2": _safe(best.score.r2_test) if best else None,
                "best_train_r2": _safe(best.score.r2_train) if best else None,
                "best_so_far_test_r2": _safe(record.best_so_far_test_r2),
            }
        )
    return {
        "run_id": manifest.run_id,
        "status": manifest.status,
        "system_id": manifest.config.system_id,
        "config": manifest.config.to_dict(),
        "iterations": iterations,
    }


def _safe(value):
    if value is None:
        return None
    import math

    return value if math.isfinite(value) else None


class FeedbackBody(BaseModel):
    text: str
    entry_id: str | None = None


def create_app(registry: RunRegistry, ui_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="sindyagent runs")
    # client-generated entry ids make feedback posts idempotent on retry
    seen_entry_ids: dict[str, dict] = {}

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    @app.get("/runs")
    def list_runs():
        return [run_view(m) for m in registry.list_manifests()]

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        return registry.get(run_id).to_dict()

    @app.get("/runs/{run_id}/iterations/{k}")
    def get_iteration(run_id: str, k: int):
        manifest = registry.get(run_id)
        record = _find_iteration(manifest, k)
        best = record.best_attempt()
        return {
            "index": record.index,
            "prompt": record.prompt,
            "best_sample": record.best_sample,
            "best": None
            if best is None
            else {
                "candidate_yaml": best.candidate_text,
                "r2_train": _safe(best.score.r2_train),
                "r2_test": _safe(best.score.r2_test),
                "active_terms": best.score.active_terms,
                "equations": (record.best_model or {}).get("equations"),
                "error": best.score.error,
            },
            "attempts": [
                {
                    "sample": a.sample,
                    "r2_train": _safe(a.score.r2_train),
                    "r2_test": _safe(a.score.r2_test),
                    "active_terms": a.score.active_terms,
                    "valid": a.candidate is not None,
                }
                for a in record.attempts
            ],
        }

    @app.get("/runs/{run_id}/plot/{k}")
    def get_plot(run_id: str, k: int):
        manifest = registry.get(run_id)
        record = _find_iteration(manifest, k)
        if record.best_model is None:
            raise HTTPException(status_code=404, detail="iteration has no fitted model")
        dataset = registry.dataset_for(manifest)
        if dataset is None:
            raise HTTPException(status_code=404, detail="run data unavailable for plotting")
        png = render_fit_plot(record.best_model, dataset)
        return Response(content=png, media_type="image/png")

    @app.post("/runs/{run_id}/feedback")
    def post_feedback(run_id: str, body: FeedbackBody):
        if body.entry_id and body.entry_id in seen_entry_ids:
            return seen_entry_ids[body.entry_id]
        manifest = registry.get(run_id)
        live = registry.live.get(run_id)
        if live is None or manifest.status == "done":
            raise HTTPException(
                status_code=409,
                detail="run is finished; feedback can no longer be incorporated",
            )
        if not body.text.strip():
            raise HTTPException(status_code=422, detail="feedback text must be non-empty")
        entry = submit_feedback(live.queue, body.text, clock=registry.clock)
        ack = {
            "ok": True,
            "run_id": run_id,
            "timestamp": entry.timestamp,
            "text": entry.text,
        }
        if body.entry_id:
            seen_entry_ids[body.entry_id] = ack
        return ack

    @app.get("/", response_class=HTMLResponse)
    def index():
        ui_link = "<a href='/ui/'>dashboard</a> &mdash; " if ui_dir else ""
        return (
            "<html><body><h1>sindyagent serve</h1>"
            f"<p>{ui_link}API: <a href='/runs'>/runs</a></p></body></html>"
        )

    return app


def _find_iteration(manifest: RunManifest, k: int):
    for record in manifest.iterations:
        if record.index == k:
            return record
    raise HTTPException(status_code=404, detail=f"run has no iteration {k}")


def render_fit_plot(model_doc: dict, dataset: dynamics.Dataset) -> bytes:
    """Measured finite-difference derivatives vs the model's predictions."""
    fitted = model_mod.model_from_dict(model_doc)
    n = fitted.dimension
    fig, axes = plt.subplots(n, 2, figsize=(10.0, 2.2 * n), dpi=100, squeeze=False)
    for col, (title, trajectories) in enumerate(
        [("train", dataset.train), ("test", dataset.test)]
    ):
        traj = trajectories[0]
        measured = traj.derivatives
        try:
            predicted = model_mod.predict_derivatives(fitted, traj.states)
        except Exception:
            predicted = np.full_like(traj.states, np.nan)
        for row in range(n):
            ax = axes[row][col]
            ax.plot(traj.times, measured[:, row], label="measured", linewidth=0.8)
            ax.plot(traj.times, predicted[:, row], label="model", linewidth=0.8, linestyle="--")
            ax.set_ylabel(f"dx{row}/dt")
            if row == 0:
                ax.set_title(title)
                ax.legend(loc="upper right", fontsize=7)
            if row == n - 1:
                ax.set_xlabel("t")
    fig.tight_layout()
    buffer = io.BytesIO()
    fig.savefig(buffer, format="png", metadata={"Software": None})
    plt.close(fig)
    return buffer.getvalue()
