/** DOM builders for every screen. Pure functions of API payloads plus
 * callbacks; no fetching and no arithmetic on payload values. Numbers are
 * rendered verbatim with {@link verbatim} so what the user reads is exactly
 * what the server sent.
 */

import type {
  ClustersPayload,
  ClusterSummary,
  JobStatus,
  MetricsPayload,
  MetricsReport,
  ProjectionPoint,
  RunSummary,
  SamplesPage,
  SampleView,
} from "./api.js";
import { SelectionState, TAG_LABELS, TAGS, type Tag } from "./state.js";

type Child = Node | string;

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Child[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  for (const child of children) {
    node.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}

/** Render a payload value exactly as received; never formats or rounds. */
export function verbatim(value: number | string | null | undefined): string {
  if (value === null || value === undefined) return "";
  return String(value);
}

export const CLUSTER_COLORS = [
  "#4063d8", "#cb3c33", "#389826", "#9558b2", "#d08770",
  "#3a86a8", "#b58900", "#7a5c58", "#5e81ac", "#a3be8c",
];

export function clusterColor(cluster: number): string {
  return CLUSTER_COLORS[((cluster % CLUSTER_COLORS.length) + CLUSTER_COLORS.length) % CLUSTER_COLORS.length];
}

// -- run list ----------------------------------------------------------------

export function renderRunList(runs: RunSummary[], onOpen: (runId: string) => void): HTMLElement {
  const root = el("section", { class: "run-list" }, [el("h2", {}, ["Runs"])]);
  if (runs.length === 0) {
    root.append(el("p", { class: "empty" }, ["The store has no runs yet."]));
    return root;
  }
  const table = el("table", {}, [
    el("thead", {}, [
      el("tr", {}, [
        el("th", {}, ["run"]),
        el("th", {}, ["bias"]),
        el("th", {}, ["seed"]),
        el("th", {}, ["stages done"]),
      ]),
    ]),
  ]);
  const body = el("tbody");
  for (const run of runs) {
    const done = Object.values(run.stages).filter((s) => s === "done").length;
    const link = el("a", { href: `#/run/${run.run_id}`, "data-run": run.run_id }, [run.run_id]);
    link.addEventListener("click", (event) => {
      event.preventDefault();
      onOpen(run.run_id);
    });
    body.append(
      el("tr", {}, [
        el("td", {}, [link]),
        el("td", {}, [verbatim(run.bias)]),
        el("td", {}, [verbatim(run.seed)]),
        el("td", {}, [`${done}/${Object.keys(run.stages).length}`]),
      ]),
    );
  }
  table.append(body);
  root.append(table);
  return root;
}

// -- cluster cards with tag pickers -------------------------------------------

export interface ClusterCardHandlers {
  onTag(cluster: number, tag: Tag): void;
  onOpen(cluster: number): void;
}

function tagPicker(cluster: ClusterSummary, state: SelectionState, handlers: ClusterCardHandlers): HTMLElement {
  const group = el("div", { class: "tag-picker", role: "radiogroup" });
  for (const tag of TAGS) {
    const id = `tag-${cluster.cluster}-${tag}`;
    const input = el("input", {
      type: "radio",
      id,
      name: `cluster-${cluster.cluster}`,
      value: tag,
    });
    if (state.tagOf(cluster.cluster) === tag) input.setAttribute("checked", "checked");
    input.addEventListener("change", () => handlers.onTag(cluster.cluster, tag));
    group.append(input, el("label", { for: id }, [TAG_LABELS[tag]]));
  }
  return group;
}

export function renderClusterCards(
  payload: ClustersPayload,
  state: SelectionState,
  handlers: ClusterCardHandlers,
): HTMLElement {
  const root = el("section", { class: "cluster-cards" }, [
    el("h2", {}, [`Clusters (k = ${verbatim(payload.k)})`]),
  ]);
  if (payload.minority_base_rate !== null && payload.minority_base_rate !== undefined) {
    root.append(
      el("p", { class: "note" }, [
        "minority base rate in the filtered set: ",
        el("code", {}, [verbatim(payload.minority_base_rate)]),
      ]),
    );
  }
  const grid = el("div", { class: "card-grid" });
  for (const cluster of payload.clusters) {
    const open = el("a", { href: `#/run/${payload.run_id}/cluster/${cluster.cluster}/page/0` }, [
      "inspect samples",
    ]);
    open.addEventListener("click", (event) => {
      event.preventDefault();
      handlers.onOpen(cluster.cluster);
    });
    const facts = el("dl", {}, [
      el("dt", {}, ["size"]),
      el("dd", { "data-size": "" }, [verbatim(cluster.size)]),
    ]);
    if (cluster.minority_fraction !== undefined) {
      facts.append(
        el("dt", {}, ["minority fraction"]),
        el("dd", {}, [verbatim(cluster.minority_fraction)]),
      );
    }
    grid.append(
      el("article", { class: "cluster-card", "data-cluster": String(cluster.cluster) }, [
        el("header", {}, [
          el("span", { class: "swatch", style: `background:${clusterColor(cluster.cluster)}` }),
          el("h3", {}, [`cluster ${verbatim(cluster.cluster)}`]),
        ]),
        facts,
        tagPicker(cluster, state, handlers),
        open,
      ]),
    );
  }
  root.append(grid);
  return root;
}

// -- selection toolbar ---------------------------------------------------------

export interface ToolbarHandlers {
  onSave(): void;
  onRetrain(): void;
}

export function renderSelectionToolbar(state: SelectionState, handlers: ToolbarHandlers): HTMLElement {
  const save = el("button", { class: "save", type: "button" }, [
    state.dirty ? "Save selection*" : "Save selection",
  ]) as HTMLButtonElement;
  save.addEventListener("click", handlers.onSave);

  const retrain = el("button", { class: "retrain", type: "button" }, ["Retrain tagged clusters"]) as HTMLButtonElement;
  const blockers = state.blockers();
  if (blockers.length > 0) retrain.disabled = true;
  retrain.addEventListener("click", () => {
    if (state.canSubmit()) handlers.onRetrain();
  });

  const root = el("div", { class: "selection-toolbar" }, [save, retrain]);
  if (blockers.length > 0) {
    root.append(
      el("ul", { class: "blockers" }, blockers.map((reason) => el("li", {}, [reason]))),
    );
  }
  return root;
}

// -- sample grid ---------------------------------------------------------------

function logitsCaption(sample: SampleView): HTMLElement {
  const parts: Child[] = [];
  sample.logits.forEach((value, index) => {
    if (index > 0) parts.push(" / ");
    parts.push(el("span", { class: "logit" }, [verbatim(value)]));
  });
  return el("figcaption", {}, [el("span", { class: "sample-id" }, [`#${verbatim(sample.id)}`]), " ", ...parts]);
}

export function renderSampleGrid(page: SamplesPage, onFull: (sample: SampleView) => void): HTMLElement {
  const shown = page.samples.length;
  const root = el("section", { class: "sample-grid", "data-total": String(page.total) }, [
    el("h2", {}, [`cluster ${verbatim(page.cluster)}`]),
    el("p", { class: "page-info" }, [
      `showing ${shown} of ${verbatim(page.total)} samples (offset ${verbatim(page.offset)})`,
    ]),
  ]);
  const grid = el("div", { class: "thumb-grid" });
  for (const sample of page.samples) {
    const img = el("img", {
      src: sample.image_url,
      alt: `sample ${sample.id}`,
      loading: "lazy",
      width: "64",
      height: "64",
    });
    const figure = el("figure", { class: "thumb", "data-id": String(sample.id) }, [img, logitsCaption(sample)]);
    figure.addEventListener("click", () => onFull(sample));
    grid.append(figure);
  }
  root.append(grid);
  return root;
}

export function renderPager(
  page: SamplesPage,
  pageSize: number,
  onPage: (pageIndex: number) => void,
): HTMLElement {
  const current = Math.floor(page.offset / pageSize);
  const last = Math.max(0, Math.ceil(page.total / pageSize) - 1);
  const prev = el("button", { type: "button", class: "prev" }, ["previous"]) as HTMLButtonElement;
  const next = el("button", { type: "button", class: "next" }, ["next"]) as HTMLButtonElement;
  prev.disabled = current <= 0;
  next.disabled = current >= last;
  prev.addEventListener("click", () => onPage(current - 1));
  next.addEventListener("click", () => onPage(current + 1));
  return el("nav", { class: "pager" }, [
    prev,
    el("span", {}, [`page ${current + 1} of ${last + 1}`]),
    next,
  ]);
}

/** Full-resolution overlay (thumbnails are small; pixels stay crisp). */
export function renderLightbox(sample: SampleView, onClose: () => void): HTMLElement {
  const overlay = el("div", { class: "lightbox" }, [
    el("figure", {}, [
      el("img", { src: sample.image_url, alt: `sample ${sample.id}` }),
      logitsCaption(sample),
    ]),
  ]);
  overlay.addEventListener("click", onClose);
  return overlay;
}

// -- metrics -------------------------------------------------------------------

function metricsColumn(title: string, report: MetricsReport | null): HTMLElement {
  const root = el("div", { class: "metrics-column", "data-side": title }, [el("h3", {}, [title])]);
  if (report === null) {
    root.append(
      el("p", { class: "empty" }, [
        title === "after" ? "no retrained metrics yet" : "not computed yet",
      ]),
    );
    return root;
  }
  root.append(
    el("dl", {}, [
      el("dt", {}, ["worst-group accuracy"]),
      el("dd", { class: "wga" }, [verbatim(report.worst_group_accuracy)]),
      el("dt", {}, ["weighted mean accuracy"]),
      el("dd", { class: "weighted" }, [verbatim(report.weighted_mean_accuracy)]),
    ]),
  );
  const table = el("table", { class: "per-group" }, [
    el("thead", {}, [
      el("tr", {}, [
        el("th", {}, ["group"]),
        el("th", {}, ["label"]),
        el("th", {}, ["segment"]),
        el("th", {}, ["n"]),
        el("th", {}, ["accuracy"]),
      ]),
    ]),
  ]);
  const body = el("tbody");
  for (const row of report.per_group) {
    body.append(
      el("tr", {}, [
        el("td", {}, [verbatim(row.group)]),
        el("td", {}, [verbatim(row.label)]),
        el("td", {}, [verbatim(row.spurious)]),
        el("td", {}, [verbatim(row.n)]),
        el("td", {}, [verbatim(row.accuracy)]),
      ]),
    );
  }
  table.append(body);
  root.append(table);
  return root;
}

export function renderMetricsPanel(payload: MetricsPayload): HTMLElement {
  return el("section", { class: "metrics-panel" }, [
    el("h2", {}, ["Group metrics"]),
    el("div", { class: "metrics-columns" }, [
      metricsColumn("before", payload.before),
      metricsColumn("after", payload.after),
    ]),
  ]);
}

// -- projection scatter ----------------------------------------------------------

/** SVG scatter of the 2D embedding projection, one circle per point,
 * colored by cluster. SVG (not canvas) keeps each point in the DOM, so the
 * point-count invariant stays checkable. */
export function renderProjection(points: ProjectionPoint[], size = 360): HTMLElement {
  const root = el("section", { class: "projection" }, [
    el("h2", {}, ["Projection"]),
    el("p", { class: "note" }, [`${points.length} points`]),
  ]);
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${size} ${size}`);
  svg.setAttribute("width", String(size));
  svg.setAttribute("height", String(size));
  svg.setAttribute("role", "img");
  if (points.length > 0) {
    let minX = Infinity;
    let maxX = -Infinity;
    let minY = Infinity;
    let maxY = -Infinity;
    for (const p of points) {
      minX = Math.min(minX, p.x);
      maxX = Math.max(maxX, p.x);
      minY = Math.min(minY, p.y);
      maxY = Math.max(maxY, p.y);
    }
    const spanX = maxX - minX || 1;
    const spanY = maxY - minY || 1;
    const pad = 8;
    const inner = size - 2 * pad;
    for (const p of points) {
      const circle = document.createElementNS("http://www.w3.org/2000/svg", "circle");
      circle.setAttribute("cx", String(pad + ((p.x - minX) / spanX) * inner));
      // Flip y so larger coordinates draw upward.
      circle.setAttribute("cy", String(pad + (1 - (p.y - minY) / spanY) * inner));
      circle.setAttribute("r", "2");
      circle.setAttribute("fill", clusterColor(p.cluster));
      circle.setAttribute("data-cluster", String(p.cluster));
      svg.append(circle);
    }
  }
  root.append(svg);
  return root;
}

// -- job progress -----------------------------------------------------------------

export function renderJobView(job: JobStatus): HTMLElement {
  const root = el("section", { class: "job-view", "data-state": job.state }, [
    el("h2", {}, ["Retrain job"]),
    el("p", {}, [
      el("code", {}, [job.job_id]),
      ` on run ${job.run_id}: `,
      el("strong", { class: "job-state" }, [job.state]),
    ]),
  ]);
  if (job.state === "pending" || job.state === "running") {
    root.append(el("p", { class: "note" }, ["polling job status…"]));
  }
  if (job.state === "failed" && job.error) {
    root.append(el("pre", { class: "job-error" }, [job.error]));
  }
  return root;
}

// -- errors ------------------------------------------------------------------------

export function renderErrorBanner(message: string, onRetry: (() => void) | null): HTMLElement {
  const root = el("div", { class: "error-banner", role: "alert" }, [el("span", {}, [message])]);
  if (onRetry) {
    const retry = el("button", { type: "button" }, ["retry"]);
    retry.addEventListener("click", onRetry);
    root.append(retry);
  }
  return root;
}
