// Dashboard wiring: poll the run server every two seconds, render the run
// list, the R2 chart, iteration artifacts, and the feedback box. All numbers
// shown come straight from the API payloads (see view.ts).

import { RunsClient, type IterationDetail, type RunSummary } from "./api.js";
import { renderR2Chart } from "./chart.js";
import {
  chartSeries,
  configSummary,
  feedbackDisabledReason,
  feedbackEnabled,
  formatR2,
  runTitle,
  statusBadge,
  validateFeedbackText,
} from "./view.js";

const POLL_INTERVAL_MS = 2000;

const client = new RunsClient("");
let selectedRun: string | null = null;
let selectedIteration: number | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

function renderRunList(runs: RunSummary[]): void {
  const list = el<HTMLUListElement>("run-list");
  list.innerHTML = runs
    .map((run) => {
      const active = run.run_id === selectedRun ? " active" : "";
      const last = run.iterations[run.iterations.length - 1];
      const best = last ? formatR2(last.best_so_far_test_r2) : "-";
      return (
        `<li class="run-item${active}" data-run="${escapeHtml(run.run_id)}">` +
        `<span class="run-name">${escapeHtml(runTitle(run))}</span>` +
        `<span class="badge badge-${run.status}">${statusBadge(run.status)}</span>` +
        `<span class="run-best">best test R2 ${best}</span></li>`
      );
    })
    .join("");
  for (const item of Array.from(list.querySelectorAll<HTMLLIElement>(".run-item"))) {
    item.addEventListener("click", () => {
      selectedRun = item.dataset.run ?? null;
      selectedIteration = null;
      void refresh();
    });
  }
}

function renderRunDetail(run: RunSummary): void {
  el("run-title").textContent = runTitle(run);
  el("run-config").textContent = configSummary(run.config);
  el("chart-holder").innerHTML = renderR2Chart(chartSeries(run));

  const tabs = el<HTMLDivElement>("iteration-tabs");
  tabs.innerHTML = run.iterations
    .map((iteration) => {
      const active = iteration.index === selectedIteration ? " active" : "";
      return `<button class="tab${active}" data-k="${iteration.index}">iter ${iteration.index}</button>`;
    })
    .join("");
  for (const tab of Array.from(tabs.querySelectorAll<HTMLButtonElement>(".tab"))) {
    tab.addEventListener("click", () => {
      selectedIteration = Number(tab.dataset.k);
      void refresh();
    });
  }

  const reason = feedbackDisabledReason(run.status);
  const button = el<HTMLButtonElement>("feedback-send");
  const input = el<HTMLTextAreaElement>("feedback-text");
  button.disabled = !feedbackEnabled(run.status);
  input.disabled = button.disabled;
  el("feedback-note").textContent = reason ?? "Feedback enters the next iteration's prompt.";
}

function renderIteration(detail: IterationDetail, runId: string): void {
  const best = detail.best;
  el("iteration-title").textContent = `Iteration ${detail.index}`;
  el("iteration-scores").textContent = best
    ? `train R2 ${formatR2(best.r2_train)} | test R2 ${formatR2(best.r2_test)} | active terms ${best.active_terms}`
    : "no fitted candidate";
  el("iteration-equations").innerHTML = (best?.equations ?? [])
    .map((line) => `<div class="equation">${escapeHtml(line)}</div>`)
    .join("");
  el("iteration-candidate").textContent = best?.candidate_yaml ?? "(no valid candidate)";
  el("iteration-prompt").textContent = detail.prompt;
  const image = el<HTMLImageElement>("iteration-plot");
  image.src = `${client.plotUrl(runId, detail.index)}?t=${Date.now()}`;
  image.alt = `derivative fit for iteration ${detail.index}`;
}

async function refresh(): Promise<void> {
  try {
    const runs = await client.listRuns();
    renderRunList(runs);
    if (!selectedRun && runs.length > 0) selectedRun = runs[0].run_id;
    const run = runs.find((r) => r.run_id === selectedRun);
    if (!run) return;
    renderRunDetail(run);
    if (selectedIteration === null && run.iterations.length > 0) {
      selectedIteration = run.iterations[run.iterations.length - 1].index;
    }
    if (selectedIteration !== null && run.iterations.length > 0) {
      renderIteration(await client.getIteration(run.run_id, selectedIteration), run.run_id);
    }
    el("connection").textContent = "connected";
  } catch (error) {
    el("connection").textContent = `connection error: ${String(error)}`;
  }
}

function wireFeedback(): void {
  const button = el<HTMLButtonElement>("feedback-send");
  const input = el<HTMLTextAreaElement>("feedback-text");
  button.addEventListener("click", async () => {
    if (!selectedRun) return;
    const problem = validateFeedbackText(input.value);
    if (problem) {
      el("feedback-note").textContent = problem;
      return;
    }
    button.disabled = true;
    try {
      await client.postFeedback(selectedRun, input.value);
      input.value = "";
      el("feedback-note").textContent = "Feedback queued for the next iteration.";
    } catch (error) {
      el("feedback-note").textContent = String(error);
    } finally {
      button.disabled = false;
      void refresh();
    }
  });
}

export function start(): void {
  wireFeedback();
  void refresh();
  setInterval(() => void refresh(), POLL_INTERVAL_MS);
}

if (typeof document !== "undefined" && document.getElementById("run-list")) {
  start();
}
