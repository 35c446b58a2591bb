/** Application shell: a small hash router plus the orchestration glue
 * between the API client, the selection state, and the views.
 *
 * Every screen is rebuilt from API payloads on navigation, so a browser
 * reload anywhere (including mid-job, via the job id in the hash) restores
 * the same view from server state alone.
 */

import { ApiError, Client, type MetricsPayload, type SampleView } from "./api.js";
import { SelectionState, type Tag } from "./state.js";
import {
  el,
  renderClusterCards,
  renderErrorBanner,
  renderJobView,
  renderLightbox,
  renderMetricsPanel,
  renderPager,
  renderProjection,
  renderRunList,
  renderSampleGrid,
  renderSelectionToolbar,
} from "./views.js";

export const PAGE_SIZE = 50;
export const POLL_INTERVAL_MS = 800;

export type Route =
  | { view: "runs" }
  | { view: "run"; runId: string }
  | { view: "cluster"; runId: string; cluster: number; page: number }
  | { view: "job"; runId: string; jobId: string };

/** Parse a location hash into a route; unknown shapes fall back to the run
 * list rather than erroring. */
export function parseHash(hash: string): Route {
  const parts = hash.replace(/^#\/?/, "").split("/").filter((p) => p.length > 0);
  if (parts.length === 0) return { view: "runs" };
  if (parts[0] !== "run" || parts.length < 2) return { view: "runs" };
  const runId = decodeURIComponent(parts[1]);
  if (parts.length === 2) return { view: "run", runId };
  if (parts[2] === "cluster" && parts.length >= 4) {
    const cluster = Number(parts[3]);
    const page = parts[4] === "page" && parts.length >= 6 ? Number(parts[5]) : 0;
    if (Number.isInteger(cluster) && cluster >= 0 && Number.isInteger(page) && page >= 0) {
      return { view: "cluster", runId, cluster, page };
    }
  }
  if (parts[2] === "job" && parts.length >= 4) {
    return { view: "job", runId, jobId: parts[3] };
  }
  return { view: "run", runId };
}

export function hashFor(route: Route): string {
  switch (route.view) {
    case "runs":
      return "#/";
    case "run":
      return `#/run/${encodeURIComponent(route.runId)}`;
    case "cluster":
      return `#/run/${encodeURIComponent(route.runId)}/cluster/${route.cluster}/page/${route.page}`;
    case "job":
      return `#/run/${encodeURIComponent(route.runId)}/job/${route.jobId}`;
  }
}

export class App {
  private selections = new Map<string, SelectionState>();
  private pollTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    readonly client: Client,
    readonly root: HTMLElement,
    private navigate: (hash: string) => void = (hash) => {
      window.location.hash = hash;
    },
  ) {}

  private stopPolling(): void {
    if (this.pollTimer !== null) {
      clearTimeout(this.pollTimer);
      this.pollTimer = null;
    }
  }

  private show(...sections: HTMLElement[]): void {
    this.root.replaceChildren(...sections);
  }

  private fail(error: unknown, retry: () => void): void {
    const message = error instanceof ApiError ? error.message : `unexpected error: ${String(error)}`;
    this.show(renderErrorBanner(message, retry));
  }

  async route(hash: string): Promise<void> {
    this.stopPolling();
    const route = parseHash(hash);
    switch (route.view) {
      case "runs":
        return this.showRuns();
      case "run":
        return this.showRun(route.runId);
      case "cluster":
        return this.showCluster(route.runId, route.cluster, route.page);
      case "job":
        return this.showJob(route.runId, route.jobId);
    }
  }

  async showRuns(): Promise<void> {
    try {
      const { runs } = await this.client.listRuns();
      this.show(renderRunList(runs, (runId) => this.navigate(hashFor({ view: "run", runId }))));
    } catch (error) {
      this.fail(error, () => void this.showRuns());
    }
  }

  private async selectionFor(runId: string, k: number): Promise<SelectionState> {
    const cached = this.selections.get(runId);
    if (cached && cached.k === k) return cached;
    const saved = await this.client.readSelection(runId);
    const state =
      saved === null ? new SelectionState(k) : SelectionState.fromSaved(saved.body, saved.etag, k);
    this.selections.set(runId, state);
    return state;
  }

  /** Metrics may legitimately not exist yet (evaluation not run); treat the
   * endpoint's not-found as "nothing to show" rather than an error. */
  private async metricsOrNull(runId: string): Promise<MetricsPayload | null> {
    try {
      return await this.client.metrics(runId);
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) return null;
      throw error;
    }
  }

  async showRun(runId: string): Promise<void> {
    try {
      const clusters = await this.client.clusters(runId);
      const [projection, metrics, state] = await Promise.all([
        this.client.projection(runId),
        this.metricsOrNull(runId),
        this.selectionFor(runId, clusters.k),
      ]);

      const rerender = () => {
        const handlers = {
          onTag: (cluster: number, tag: Tag) => {
            state.setTag(cluster, tag);
            rerender();
          },
          onOpen: (cluster: number) =>
            this.navigate(hashFor({ view: "cluster", runId, cluster, page: 0 })),
        };
        const toolbar = renderSelectionToolbar(state, {
          onSave: () => void this.saveSelection(runId, state, rerender),
          onRetrain: () => void this.launchRetrain(runId),
        });
        const sections = [
          el("nav", { class: "crumbs" }, [backLink("all runs", "#/", this.navigate)]),
          el("h1", {}, [runId]),
          toolbar,
          renderClusterCards(clusters, state, handlers),
          renderProjection(projection.points),
          metrics
            ? renderMetricsPanel(metrics)
            : el("section", { class: "metrics-panel" }, [
                el("h2", {}, ["Group metrics"]),
                el("p", { class: "empty" }, ["metrics not computed yet"]),
              ]),
        ];
        this.show(...sections);
      };
      rerender();
    } catch (error) {
      this.fail(error, () => void this.showRun(runId));
    }
  }

  private async saveSelection(runId: string, state: SelectionState, rerender: () => void): Promise<void> {
    try {
      const etag = await this.client.saveSelection(runId, state.serialize(), state.savedEtag);
      state.markSaved(etag);
      rerender();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.selections.delete(runId);
        this.show(
          renderErrorBanner("selection changed underneath you; reloading the saved version", () =>
            void this.showRun(runId),
          ),
        );
        return;
      }
      this.fail(error, rerender);
    }
  }

  private async launchRetrain(runId: string): Promise<void> {
    try {
      const job = await this.client.startRetrain(runId);
      this.navigate(hashFor({ view: "job", runId, jobId: job.job_id }));
    } catch (error) {
      this.fail(error, () => void this.showRun(runId));
    }
  }

  async showJob(runId: string, jobId: string): Promise<void> {
    try {
      const job = await this.client.job(jobId);
      const sections = [
        el("nav", { class: "crumbs" }, [
          backLink("all runs", "#/", this.navigate),
          " / ",
          backLink(runId, hashFor({ view: "run", runId }), this.navigate),
        ]),
        renderJobView(job),
      ];
      if (job.state === "done") {
        const metrics = await this.metricsOrNull(runId);
        if (metrics) sections.push(renderMetricsPanel(metrics));
      } else if (job.state !== "failed") {
        this.pollTimer = setTimeout(() => void this.showJob(runId, jobId), POLL_INTERVAL_MS);
      }
      this.show(...sections);
    } catch (error) {
      this.fail(error, () => void this.showJob(runId, jobId));
    }
  }

  async showCluster(runId: string, cluster: number, page: number): Promise<void> {
    try {
      const payload = await this.client.samples(runId, cluster, PAGE_SIZE, page * PAGE_SIZE);
      const grid = renderSampleGrid(payload, (sample) => this.openLightbox(sample));
      const pager = renderPager(payload, PAGE_SIZE, (next) =>
        this.navigate(hashFor({ view: "cluster", runId, cluster, page: next })),
      );
      this.show(
        el("nav", { class: "crumbs" }, [
          backLink("all runs", "#/", this.navigate),
          " / ",
          backLink(runId, hashFor({ view: "run", runId }), this.navigate),
        ]),
        grid,
        pager,
      );
    } catch (error) {
      this.fail(error, () => void this.showCluster(runId, cluster, page));
    }
  }

  private openLightbox(sample: SampleView): void {
    const box = renderLightbox(sample, () => box.remove());
    this.root.append(box);
  }
}

function backLink(text: string, hash: string, navigate: (hash: string) => void): HTMLElement {
  const link = el("a", { href: hash }, [text]);
  link.addEventListener("click", (event) => {
    event.preventDefault();
    navigate(hash);
  });
  return link;
}

export function mount(root: HTMLElement): App {
  const app = new App(new Client(), root);
  window.addEventListener("hashchange", () => void app.route(window.location.hash));
  void app.route(window.location.hash);
  return app;
}

// Browser entry point; tests import the pieces instead.
const rootElement = typeof document !== "undefined" ? document.getElementById("app") : null;
if (rootElement && !rootElement.hasAttribute("data-test")) {
  mount(rootElement);
}
