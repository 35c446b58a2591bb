import { describe, expect, it, vi } from "vitest";

import type { ClustersPayload, MetricsPayload, SamplesPage } from "../src/api.js";
import { SelectionState, TAG_ACCEPTABLE, TAG_RETRAIN } from "../src/state.js";
import {
  renderClusterCards,
  renderJobView,
  renderMetricsPanel,
  renderPager,
  renderProjection,
  renderSampleGrid,
  renderSelectionToolbar,
  verbatim,
} from "../src/views.js";

const clustersPayload: ClustersPayload = {
  run_id: "b0.7_s0",
  k: 3,
  minority_base_rate: 0.172414,
  clusters: [
    { cluster: 0, size: 1234, minority_fraction: 0.519 },
    { cluster: 1, size: 87 },
    { cluster: 2, size: 5 },
  ],
};

describe("verbatim", () => {
  it("renders numbers exactly as parsed from the payload", () => {
    expect(verbatim(0.2086)).toBe("0.2086");
    expect(verbatim(0.9)).toBe("0.9");
    expect(verbatim(1387)).toBe("1387");
    expect(verbatim(null)).toBe("");
  });
});

describe("renderClusterCards", () => {
  it("renders one card per API-reported cluster with verbatim sizes", () => {
    const state = new SelectionState(3);
    const root = renderClusterCards(clustersPayload, state, { onTag: () => {}, onOpen: () => {} });
    const cards = root.querySelectorAll(".cluster-card");
    expect(cards.length).toBe(clustersPayload.clusters.length);
    expect(cards[0].textContent).toContain("1234");
    expect(cards[0].textContent).toContain("0.519");
    expect(cards[1].textContent).not.toContain("minority fraction");
    expect(root.textContent).toContain("0.172414");
  });

  it("routes radio changes through the onTag handler", () => {
    const state = new SelectionState(3);
    const onTag = vi.fn();
    const root = renderClusterCards(clustersPayload, state, { onTag, onOpen: () => {} });
    const radio = root.querySelector<HTMLInputElement>('input[name="cluster-1"][value="retrain"]');
    radio!.dispatchEvent(new Event("change"));
    expect(onTag).toHaveBeenCalledWith(1, TAG_RETRAIN);
  });

  it("reflects existing tags as checked radios", () => {
    const state = new SelectionState(3);
    state.setTag(2, TAG_ACCEPTABLE);
    const root = renderClusterCards(clustersPayload, state, { onTag: () => {}, onOpen: () => {} });
    const radio = root.querySelector<HTMLInputElement>(
      'input[name="cluster-2"][value="acceptable_uncertainty"]',
    );
    expect(radio!.hasAttribute("checked")).toBe(true);
  });
});

describe("renderSelectionToolbar", () => {
  it("disables retrain and lists blockers until the selection is complete and saved", () => {
    const state = new SelectionState(2);
    const root = renderSelectionToolbar(state, { onSave: () => {}, onRetrain: () => {} });
    const button = root.querySelector<HTMLButtonElement>("button.retrain");
    expect(button!.disabled).toBe(true);
    expect(root.querySelector(".blockers")!.textContent).toContain("untagged");
  });

  it("enables retrain once every cluster is tagged, one is Retrain, and the state is saved", () => {
    const state = new SelectionState(2);
    state.setTag(0, TAG_RETRAIN);
    state.setTag(1, TAG_ACCEPTABLE);
    state.markSaved("e");
    const onRetrain = vi.fn();
    const root = renderSelectionToolbar(state, { onSave: () => {}, onRetrain });
    const button = root.querySelector<HTMLButtonElement>("button.retrain");
    expect(button!.disabled).toBe(false);
    button!.click();
    expect(onRetrain).toHaveBeenCalledOnce();
  });

  it("marks unsaved changes on the save button", () => {
    const state = new SelectionState(1);
    state.setTag(0, TAG_RETRAIN);
    const root = renderSelectionToolbar(state, { onSave: () => {}, onRetrain: () => {} });
    expect(root.querySelector("button.save")!.textContent).toContain("*");
  });
});

describe("renderSampleGrid", () => {
  const page: SamplesPage = {
    run_id: "r",
    cluster: 1,
    total: 137,
    offset: 50,
    samples: [
      {
        id: 9001,
        label: 0,
        shape: 0,
        spurious: 2,
        logits: [-1.25, 0.0042, 3.9],
        image_url: "/api/images/r/9001.png",
      },
      {
        id: 9002,
        label: 1,
        shape: 1,
        spurious: 0,
        logits: [0.1, -0.2, 0.3],
        image_url: "/api/images/r/9002.png",
      },
    ],
  };

  it("renders every sample in the page with verbatim logits and the API total", () => {
    const root = renderSampleGrid(page, () => {});
    expect(root.querySelectorAll("figure.thumb").length).toBe(page.samples.length);
    expect(root.getAttribute("data-total")).toBe("137");
    expect(root.textContent).toContain("showing 2 of 137 samples");
    expect(root.textContent).toContain("-1.25");
    expect(root.textContent).toContain("0.0042");
    const img = root.querySelector<HTMLImageElement>("figure.thumb img");
    expect(img!.getAttribute("src")).toBe("/api/images/r/9001.png");
  });

  it("opens the full-resolution handler on click", () => {
    const onFull = vi.fn();
    const root = renderSampleGrid(page, onFull);
    root.querySelector<HTMLElement>('figure[data-id="9002"]')!.click();
    expect(onFull).toHaveBeenCalledWith(page.samples[1]);
  });

  it("pages at 50 per page with boundary-disabled buttons", () => {
    const onPage = vi.fn();
    const nav = renderPager(page, 50, onPage);
    const prev = nav.querySelector<HTMLButtonElement>("button.prev");
    const next = nav.querySelector<HTMLButtonElement>("button.next");
    expect(nav.textContent).toContain("page 2 of 3");
    expect(prev!.disabled).toBe(false);
    expect(next!.disabled).toBe(false);
    next!.click();
    expect(onPage).toHaveBeenCalledWith(2);

    const first = renderPager({ ...page, offset: 0 }, 50, onPage);
    expect(first.querySelector<HTMLButtonElement>("button.prev")!.disabled).toBe(true);
    const last = renderPager({ ...page, offset: 100 }, 50, onPage);
    expect(last.querySelector<HTMLButtonElement>("button.next")!.disabled).toBe(true);
  });
});

describe("renderMetricsPanel", () => {
  const before = {
    worst_group_accuracy: 0.2086,
    weighted_mean_accuracy: 0.9057,
    per_group: [
      { group: 0, label: 0, spurious: 0, n: 1140, accuracy: 0.982456 },
      { group: 5, label: 1, spurious: 2, n: 1096, accuracy: 0.2086 },
    ],
  };

  it("shows an empty after panel when no retrained metrics exist", () => {
    const payload: MetricsPayload = { run_id: "r", before, after: null };
    const root = renderMetricsPanel(payload);
    const after = root.querySelector('[data-side="after"]');
    expect(after!.textContent).toContain("no retrained metrics yet");
    expect(after!.querySelector("table")).toBeNull();
  });

  it("renders accuracies verbatim from the payload", () => {
    const payload: MetricsPayload = {
      run_id: "r",
      before,
      after: { ...before, worst_group_accuracy: 0.3152 },
    };
    const root = renderMetricsPanel(payload);
    const beforeCol = root.querySelector('[data-side="before"]');
    const afterCol = root.querySelector('[data-side="after"]');
    expect(beforeCol!.querySelector("dd.wga")!.textContent).toBe("0.2086");
    expect(beforeCol!.querySelector("dd.weighted")!.textContent).toBe("0.9057");
    expect(afterCol!.querySelector("dd.wga")!.textContent).toBe("0.3152");
    expect(beforeCol!.textContent).toContain("0.982456");
    expect(beforeCol!.querySelectorAll("tbody tr").length).toBe(2);
  });
});

describe("renderProjection", () => {
  it("draws exactly one circle per projected point", () => {
    const points = [
      { id: 1, x: -0.5, y: 0.25, cluster: 0 },
      { id: 2, x: 1.5, y: -2.0, cluster: 1 },
      { id: 3, x: 0.0, y: 0.0, cluster: 1 },
    ];
    const root = renderProjection(points);
    expect(root.querySelectorAll("circle").length).toBe(points.length);
    expect(root.textContent).toContain("3 points");
    const byCluster = root.querySelectorAll('circle[data-cluster="1"]');
    expect(byCluster.length).toBe(2);
  });

  it("handles an empty projection without circles", () => {
    const root = renderProjection([]);
    expect(root.querySelectorAll("circle").length).toBe(0);
  });
});

describe("renderJobView", () => {
  it("shows polling note while pending and the server diagnostic on failure", () => {
    const running = renderJobView({ job_id: "j1", run_id: "r", state: "running", error: null });
    expect(running.textContent).toContain("polling job status");
    const failed = renderJobView({
      job_id: "j1",
      run_id: "r",
      state: "failed",
      error: "TriageRequired: no triage decisions available",
    });
    expect(failed.querySelector(".job-error")!.textContent).toContain("TriageRequired");
  });
});
