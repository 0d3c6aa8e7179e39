// View-model helpers: everything here is a pure function of API payloads,
// so the numerical truth shown in the dashboard is testable without a DOM.

import type { Manifest, RunStatus, RunSummary } from "./api.js";

export interface ChartSeries {
  iterations: number[];
  bestSoFar: (number | null)[];
  perIterationBest: (number | null)[];
}

/** R2-per-iteration series, exactly as recorded in the manifest. */
export function chartSeries(run: RunSummary): ChartSeries {
  return {
    iterations: run.iterations.map((it) => it.index),
    bestSoFar: run.iterations.map((it) => it.best_so_far_test_r2),
    perIterationBest: run.iterations.map((it) => it.best_test_r2),
  };
}

/** The best-so-far series must never decrease (nulls are failed rounds). */
export function isNonDecreasing(series: (number | null)[]): boolean {
  let previous = -Infinity;
  for (const value of series) {
    if (value === null) continue;
    if (value < previous) return false;
    previous = value;
  }
  return true;
}

export function feedbackEnabled(status: RunStatus): boolean {
  return status === "running" || status === "awaiting-feedback";
}

export function feedbackDisabledReason(status: RunStatus): string | null {
  if (feedbackEnabled(status)) return null;
  if (status === "done") {
    return "This run has finished; feedback can no longer steer it.";
  }
  return "This run was aborted; restart it to continue.";
}

/** Client-side gate: empty submissions never reach the server. */
export function validateFeedbackText(text: string): string | null {
  return text.trim() ? null : "Feedback text is empty.";
}

export function formatR2(value: number | null): string {
  if (value === null) return "failed";
  if (value <= -1000) return value.toExponential(2);
  return value.toFixed(6);
}

export function statusBadge(status: RunStatus): string {
  switch (status) {
    case "running":
      return "running";
    case "awaiting-feedback":
      return "awaiting feedback";
    case "done":
      return "done";
    default:
      return status;
  }
}

export function runTitle(run: RunSummary): string {
  const system = run.system_id || "custom data";
  return `${run.run_id} (${system})`;
}

export function configSummary(config: Record<string, unknown>): string {
  const parts: string[] = [];
  const ablation = config["ablation"];
  if (Array.isArray(ablation)) {
    parts.push(`ablation: ${ablation.length ? ablation.join("+") : "none"}`);
  }
  for (const key of ["samples_per_iteration", "max_iterations", "rag_n", "seed"]) {
    if (key in config) parts.push(`${key.replaceAll("_", " ")}: ${config[key]}`);
  }
  return parts.join(" | ");
}

/** Cross-check a summary's chart series against the full manifest. */
export function seriesMatchesManifest(series: ChartSeries, manifest: Manifest): boolean {
  if (series.iterations.length !== manifest.iterations.length) return false;
  return manifest.iterations.every(
    (iteration, i) =>
      iteration.index === series.iterations[i] &&
      iteration.best_so_far_test_r2 === series.bestSoFar[i],
  );
}
