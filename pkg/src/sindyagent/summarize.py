"""System-observation summaries: CSV slices, rendered plots, LLM/VLM text.

The observation triple (free-text description, raw data, plots) is reduced
to short texts before prompt assembly, because raw high-frequency data blows
past model context limits.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import prompts
from .dynamics import Dataset, Trajectory
from .llm import ChatRequest, SUMMARY_MAX_TOKENS

SUMMARY_TEMPERATURE = 1.0
DEFAULT_MAX_CSV_ROWS = 500


@dataclass
class SystemObservation:
    """Everything the agent may know about the system under study."""

    data: Dataset
    text: str | None = None
    images: list[bytes] = field(default_factory=list)
    data_summary: str | None = None
    image_summary: str | None = None
    prompt_version: str | None = None


def render_plot(traj: Trajectory) -> bytes:
    """Deterministic PNG line plot of every state dimension against time."""
    if traj.K < 2:
        raise ValueError("need at least 2 samples to plot")
    fig, ax = plt.subplots(figsize=(8.0, 4.5), dpi=100)
    try:
        for i in range(traj.n):
            ax.plot(traj.times, traj.states[:, i], label=f"x{i}", linewidth=1.0)
        ax.set_xlabel("t")
        ax.legend(loc="upper right")
        buffer = io.BytesIO()
        fig.savefig(buffer, format="png", metadata={"Software": None})
        return buffer.getvalue()
    finally:
        plt.close(fig)


def to_csv(traj: Trajectory, max_rows: int = DEFAULT_MAX_CSV_ROWS) -> str:
    """CSV slice with header ``t,x0,...``; at most max_rows data rows.

    Long trajectories are downsampled on a uniform index stride that always
    keeps the first and last samples; values print to 6 significant digits.
    """
    if max_rows < 2:
        raise ValueError("max_rows must be at least 2")
    if traj.K <= max_rows:
        indices = np.arange(traj.K)
    else:
        indices = np.unique(np.round(np.linspace(0, traj.K - 1, max_rows)).astype(int))
    lines = ["t," + ",".join(f"x{i}" for i in range(traj.n))]
    for k in indices:
        row = [f"{traj.times[k]:.6g}"] + [f"{v:.6g}" for v in traj.states[k]]
        lines.append(",".join(row))
    return "\n".join(lines)


def summarize_data(transport, traj: Trajectory, max_rows: int = DEFAULT_MAX_CSV_ROWS) -> str:
    """LLM summary of the raw data (CSV form), temperature 1.0."""
    csv_text = to_csv(traj, max_rows)
    header, _, body = csv_text.partition("\n")
    xdims = header.partition(",")[2]
    prompt = prompts.fill_data_summary(n=traj.n, xdims=xdims, data=body)
    request = ChatRequest(
        messages=[{"role": "user", "content": prompt}],
        temperature=SUMMARY_TEMPERATURE,
        max_tokens=SUMMARY_MAX_TOKENS,
    )
    return transport.chat(request).text


def summarize_image(transport, image: bytes, n: int) -> str:
    """VLM summary of a rendered plot, temperature 1.0."""
    prompt = prompts.fill_image_summary(n)
    request = ChatRequest(
        messages=[{"role": "user", "content": prompt}],
        temperature=SUMMARY_TEMPERATURE,
        max_tokens=SUMMARY_MAX_TOKENS,
    )
    return transport.chat_image(request, image).text


def prepare_observation(
    transport,
    dataset: Dataset,
    text: str | None,
    ablation: frozenset[str] = frozenset(),
    max_rows: int = DEFAULT_MAX_CSV_ROWS,
    image_transport=None,
) -> SystemObservation:
    """Build the observation, summarizing only what the ablation needs.

    Only the training split is summarized; the held-out data never leaks
    into the prompt. Image summaries go through image_transport when a
    separate vision transport is configured.
    """
    observation = SystemObservation(data=dataset, text=text)
    train = dataset.train[0]
    observation.images = [render_plot(train)]
    if "data" in ablation:
        observation.data_summary = summarize_data(transport, train, max_rows)
        observation.prompt_version = prompts.PROMPT_VERSION
    if "image" in ablation:
        observation.image_summary = summarize_image(
            image_transport or transport, observation.images[0], train.n
        )
        observation.prompt_version = prompts.PROMPT_VERSION
    return observation
