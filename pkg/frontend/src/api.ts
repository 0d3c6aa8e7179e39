// Typed client for the run-server API. The dashboard never touches files;
// everything it shows comes through these endpoints.

export type RunStatus = "running" | "awaiting-feedback" | "done" | "aborted";

export interface IterationSummary {
  index: number;
  best_test_r2: number | null;
  best_train_r2: number | null;
  best_so_far_test_r2: number | null;
}

export interface RunSummary {
  run_id: string;
  status: RunStatus;
  system_id: string;
  config: Record<string, unknown>;
  iterations: IterationSummary[];
}

export interface AttemptSummary {
  sample: number;
  r2_train: number | null;
  r2_test: number | null;
  active_terms: number;
  valid: boolean;
}

export interface IterationDetail {
  index: number;
  prompt: string;
  best_sample: number | null;
  best: {
    candidate_yaml: string | null;
    r2_train: number | null;
    r2_test: number | null;
    active_terms: number;
    equations: string[] | null;
    error: string | null;
  } | null;
  attempts: AttemptSummary[];
}

export interface ManifestIteration {
  index: number;
  prompt: string;
  best_so_far_test_r2: number | null;
  attempts: unknown[];
}

export interface Manifest {
  run_id: string;
  status: RunStatus;
  iterations: ManifestIteration[];
  feedback: { timestamp: number; text: string; before_iteration: number | null }[];
  final: Record<string, unknown> | null;
}

export interface FeedbackAck {
  ok: boolean;
  run_id: string;
  timestamp: number;
  text: string;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) {
    throw new ApiError(`GET ${url} -> ${response.status}`, response.status);
  }
  return (await response.json()) as T;
}

export class RunsClient {
  // at most one feedback post may be in flight per run
  private inflightFeedback = new Set<string>();

  constructor(readonly baseUrl: string = "") {}

  listRuns(): Promise<RunSummary[]> {
    return getJson(`${this.baseUrl}/runs`);
  }

  getManifest(runId: string): Promise<Manifest> {
    return getJson(`${this.baseUrl}/runs/${encodeURIComponent(runId)}`);
  }

  getIteration(runId: string, k: number): Promise<IterationDetail> {
    return getJson(`${this.baseUrl}/runs/${encodeURIComponent(runId)}/iterations/${k}`);
  }

  plotUrl(runId: string, k: number): string {
    return `${this.baseUrl}/runs/${encodeURIComponent(runId)}/plot/${k}`;
  }

  async postFeedback(runId: string, text: string, entryId?: string): Promise<FeedbackAck> {
    if (!text.trim()) {
      throw new Error("feedback text must be non-empty");
    }
    if (this.inflightFeedback.has(runId)) {
      throw new Error(`a feedback post for ${runId} is already in flight`);
    }
    this.inflightFeedback.add(runId);
    try {
      const body = JSON.stringify({
        text,
        entry_id: entryId ?? newEntryId(),
      });
      const response = await fetch(
        `${this.baseUrl}/runs/${encodeURIComponent(runId)}/feedback`,
        { method: "POST", headers: { "Content-Type": "application/json" }, body },
      );
      if (!response.ok) {
        const detail = await response.text();
        throw new ApiError(`feedback rejected (${response.status}): ${detail}`, response.status);
      }
      return (await response.json()) as FeedbackAck;
    } finally {
      this.inflightFeedback.delete(runId);
    }
  }
}

export function newEntryId(): string {
  // client-generated ids make retries idempotent on the server side
  return `fb-${Date.now()}-${Math.random().toString(36).slice(2, 10)}`;
}
