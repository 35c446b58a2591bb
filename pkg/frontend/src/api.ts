/** Typed client for the run-store HTTP JSON API.
 *
 * Every view in the app is fed exclusively through this module; nothing is
 * recomputed client-side, so the payload types below mirror the server's
 * JSON shapes one to one.
 */

export type JobState = "pending" | "running" | "done" | "failed";

export interface RunSummary {
  run_id: string;
  bias: number | null;
  seed: number | null;
  stages: Record<string, string>;
  config_digest: string;
}

export interface ClusterSummary {
  cluster: number;
  size: number;
  /** Present only on evaluation runs where ground-truth composition exists. */
  minority_fraction?: number;
}

export interface ClustersPayload {
  run_id: string;
  k: number;
  minority_base_rate: number | null;
  clusters: ClusterSummary[];
}

export interface SampleView {
  id: number;
  label: number;
  shape: number;
  spurious: number;
  logits: number[];
  image_url: string;
}

export interface SamplesPage {
  run_id: string;
  cluster: number;
  total: number;
  offset: number;
  samples: SampleView[];
}

export interface GroupRow {
  group: number;
  label: number;
  spurious: number;
  n: number;
  accuracy: number;
}

export interface MetricsReport {
  worst_group_accuracy: number;
  weighted_mean_accuracy: number;
  per_group: GroupRow[];
}

export interface MetricsPayload {
  run_id: string;
  before: MetricsReport | null;
  after: MetricsReport | null;
}

export interface ProjectionPoint {
  id: number;
  x: number;
  y: number;
  cluster: number;
}

export interface ProjectionPayload {
  points: ProjectionPoint[];
}

export interface JobStatus {
  job_id: string;
  run_id: string;
  state: JobState;
  error: string | null;
}

export interface SavedSelection {
  body: string;
  etag: string | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`API ${status}: ${detail}`);
  }
}

async function failure(res: Response): Promise<ApiError> {
  let detail = res.statusText || `status ${res.status}`;
  try {
    const doc = await res.json();
    if (doc && typeof doc.detail === "string") detail = doc.detail;
  } catch {
    /* non-JSON error body; keep the status text */
  }
  return new ApiError(res.status, detail);
}

async function getJson<T>(url: string): Promise<T> {
  const res = await fetch(url);
  if (!res.ok) throw await failure(res);
  return (await res.json()) as T;
}

export class Client {
  constructor(readonly base: string = "") {}

  listRuns(): Promise<{ runs: RunSummary[] }> {
    return getJson(`${this.base}/api/runs`);
  }

  clusters(runId: string): Promise<ClustersPayload> {
    return getJson(`${this.base}/api/runs/${runId}/clusters`);
  }

  samples(runId: string, cluster: number, limit = 50, offset = 0): Promise<SamplesPage> {
    return getJson(
      `${this.base}/api/runs/${runId}/clusters/${cluster}/samples?limit=${limit}&offset=${offset}`,
    );
  }

  metrics(runId: string): Promise<MetricsPayload> {
    return getJson(`${this.base}/api/runs/${runId}/metrics`);
  }

  projection(runId: string): Promise<ProjectionPayload> {
    return getJson(`${this.base}/api/runs/${runId}/projection`);
  }

  job(jobId: string): Promise<JobStatus> {
    return getJson(`${this.base}/api/jobs/${jobId}`);
  }

  /** Raw selection bytes plus the server's content digest; null when none saved. */
  async readSelection(runId: string): Promise<SavedSelection | null> {
    const res = await fetch(`${this.base}/api/runs/${runId}/selection`);
    if (res.status === 404) return null;
    if (!res.ok) throw await failure(res);
    return { body: await res.text(), etag: res.headers.get("ETag") };
  }

  /** Optimistic save: sends If-Match when we hold a digest; 409 means the
   * selection changed underneath us and the caller should reload. */
  async saveSelection(runId: string, body: string, ifMatch: string | null): Promise<string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (ifMatch) headers["If-Match"] = ifMatch;
    const res = await fetch(`${this.base}/api/runs/${runId}/selection`, {
      method: "POST",
      headers,
      body,
    });
    if (!res.ok) throw await failure(res);
    const doc = (await res.json()) as { etag: string };
    return doc.etag;
  }

  /** Launches a retrain job against the saved selection (empty body: the
   * server reads triage tags from the stored selection document). */
  async startRetrain(runId: string): Promise<{ job_id: string; state: JobState }> {
    const res = await fetch(`${this.base}/api/runs/${runId}/retrain`, { method: "POST" });
    if (!res.ok) throw await failure(res);
    return (await res.json()) as { job_id: string; state: JobState };
  }
}
