import { describe, expect, it, vi } from "vitest";

import { ApiError, type Client } from "../src/api.js";
import { App, hashFor, parseHash } from "../src/app.js";

describe("parseHash", () => {
  it("maps hashes to routes", () => {
    expect(parseHash("")).toEqual({ view: "runs" });
    expect(parseHash("#/")).toEqual({ view: "runs" });
    expect(parseHash("#/run/b0.8_s0")).toEqual({ view: "run", runId: "b0.8_s0" });
    expect(parseHash("#/run/b0.8_s0/cluster/2/page/3")).toEqual({
      view: "cluster",
      runId: "b0.8_s0",
      cluster: 2,
      page: 3,
    });
    expect(parseHash("#/run/b0.8_s0/cluster/2")).toEqual({
      view: "cluster",
      runId: "b0.8_s0",
      cluster: 2,
      page: 0,
    });
    expect(parseHash("#/run/b0.8_s0/job/abc123")).toEqual({
      view: "job",
      runId: "b0.8_s0",
      jobId: "abc123",
    });
  });

  it("falls back gracefully on malformed hashes", () => {
    expect(parseHash("#/bogus")).toEqual({ view: "runs" });
    expect(parseHash("#/run/r/cluster/not-a-number")).toEqual({ view: "run", runId: "r" });
    expect(parseHash("#/run/r/what/ever")).toEqual({ view: "run", runId: "r" });
  });

  it("round-trips every route through hashFor", () => {
    const routes = [
      { view: "runs" },
      { view: "run", runId: "b0_s1" },
      { view: "cluster", runId: "b0_s1", cluster: 1, page: 2 },
      { view: "job", runId: "b0_s1", jobId: "j9" },
    ] as const;
    for (const route of routes) {
      expect(parseHash(hashFor(route))).toEqual(route);
    }
  });
});

const clustersPayload = {
  run_id: "r",
  k: 2,
  minority_base_rate: 0.17,
  clusters: [
    { cluster: 0, size: 10 },
    { cluster: 1, size: 4 },
  ],
};

function fakeClient(overrides: Partial<Record<keyof Client, unknown>> = {}): Client {
  const base: Record<string, unknown> = {
    listRuns: vi.fn(async () => ({ runs: [] })),
    clusters: vi.fn(async () => clustersPayload),
    projection: vi.fn(async () => ({
      points: [
        { id: 1, x: 0, y: 0, cluster: 0 },
        { id: 2, x: 1, y: 1, cluster: 1 },
      ],
    })),
    metrics: vi.fn(async () => {
      throw new ApiError(404, "metrics not computed yet");
    }),
    readSelection: vi.fn(async () => null),
    saveSelection: vi.fn(async () => "etag1"),
    startRetrain: vi.fn(async () => ({ job_id: "job77", state: "pending" })),
    job: vi.fn(async () => ({ job_id: "job77", run_id: "r", state: "done", error: null })),
    samples: vi.fn(async () => ({ run_id: "r", cluster: 0, total: 0, offset: 0, samples: [] })),
  };
  return { ...base, ...overrides } as unknown as Client;
}

async function flush(): Promise<void> {
  for (let i = 0; i < 8; i += 1) await Promise.resolve();
}

describe("App", () => {
  it("renders the run view entirely from API payloads", async () => {
    const client = fakeClient();
    const root = document.createElement("main");
    const app = new App(client, root, () => {});
    await app.showRun("r");
    expect(root.querySelectorAll(".cluster-card").length).toBe(2);
    expect(root.querySelectorAll("circle").length).toBe(2);
    expect(root.querySelector(".metrics-panel")!.textContent).toContain("metrics not computed yet");
    const retrain = root.querySelector<HTMLButtonElement>("button.retrain");
    expect(retrain!.disabled).toBe(true);
  });

  it("walks the tag -> save -> retrain flow and navigates to the job view", async () => {
    const client = fakeClient();
    const navigated: string[] = [];
    const root = document.createElement("main");
    const app = new App(client, root, (hash) => navigated.push(hash));
    await app.showRun("r");

    root
      .querySelector<HTMLInputElement>('input[name="cluster-0"][value="retrain"]')!
      .dispatchEvent(new Event("change"));
    root
      .querySelector<HTMLInputElement>('input[name="cluster-1"][value="acceptable_uncertainty"]')!
      .dispatchEvent(new Event("change"));
    expect(root.querySelector<HTMLButtonElement>("button.retrain")!.disabled).toBe(true);

    root.querySelector<HTMLButtonElement>("button.save")!.click();
    await flush();
    expect(client.saveSelection).toHaveBeenCalledWith(
      "r",
      '{"tags":{"0":"retrain","1":"acceptable_uncertainty"}}',
      null,
    );

    const retrain = root.querySelector<HTMLButtonElement>("button.retrain");
    expect(retrain!.disabled).toBe(false);
    retrain!.click();
    await flush();
    expect(client.startRetrain).toHaveBeenCalledWith("r");
    expect(navigated).toContain("#/run/r/job/job77");
  });

  it("restores job progress from the job endpoint alone", async () => {
    const metrics = {
      run_id: "r",
      before: { worst_group_accuracy: 0.2, weighted_mean_accuracy: 0.9, per_group: [] },
      after: { worst_group_accuracy: 0.3, weighted_mean_accuracy: 0.88, per_group: [] },
    };
    const client = fakeClient({ metrics: vi.fn(async () => metrics) });
    const root = document.createElement("main");
    const app = new App(client, root, () => {});
    await app.route("#/run/r/job/job77");
    expect(root.querySelector(".job-view")!.getAttribute("data-state")).toBe("done");
    expect(root.querySelector('[data-side="after"]')!.textContent).toContain("0.3");
  });

  it("keeps polling while the job runs and shows failures with the diagnostic", async () => {
    vi.useFakeTimers();
    try {
      const states = [
        { job_id: "j", run_id: "r", state: "running", error: null },
        { job_id: "j", run_id: "r", state: "failed", error: "ValueError: boom" },
      ];
      const client = fakeClient({ job: vi.fn(async () => states.shift()!) });
      const root = document.createElement("main");
      const app = new App(client, root, () => {});
      await app.route("#/run/r/job/j");
      expect(root.querySelector(".job-view")!.getAttribute("data-state")).toBe("running");
      await vi.advanceTimersByTimeAsync(1000);
      expect(root.querySelector(".job-view")!.getAttribute("data-state")).toBe("failed");
      expect(root.textContent).toContain("ValueError: boom");
    } finally {
      vi.useRealTimers();
    }
  });

  it("surfaces API errors with a retry control", async () => {
    let failures = 1;
    const client = fakeClient({
      listRuns: vi.fn(async () => {
        if (failures > 0) {
          failures -= 1;
          throw new ApiError(500, "store exploded");
        }
        return { runs: [{ run_id: "r", bias: 0.8, seed: 0, stages: {}, config_digest: "d" }] };
      }),
    });
    const root = document.createElement("main");
    const app = new App(client, root, () => {});
    await app.showRuns();
    expect(root.querySelector(".error-banner")!.textContent).toContain("store exploded");
    root.querySelector<HTMLButtonElement>(".error-banner button")!.click();
    await flush();
    expect(root.textContent).toContain("r");
    expect(root.querySelector(".error-banner")).toBeNull();
  });

  it("offers a reload path when the save conflicts", async () => {
    const client = fakeClient({
      saveSelection: vi.fn(async () => {
        throw new ApiError(409, "selection changed underneath you");
      }),
    });
    const root = document.createElement("main");
    const app = new App(client, root, () => {});
    await app.showRun("r");
    root
      .querySelector<HTMLInputElement>('input[name="cluster-0"][value="retrain"]')!
      .dispatchEvent(new Event("change"));
    root.querySelector<HTMLButtonElement>("button.save")!.click();
    await flush();
    expect(root.querySelector(".error-banner")!.textContent).toContain("selection changed");
  });
});
