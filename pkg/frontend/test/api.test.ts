import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, Client } from "../src/api.js";

interface Call {
  url: string;
  init?: RequestInit;
}

function fakeResponse(options: {
  status?: number;
  json?: unknown;
  text?: string;
  headers?: Record<string, string>;
}) {
  const status = options.status ?? 200;
  const headers = options.headers ?? {};
  return {
    ok: status >= 200 && status < 300,
    status,
    statusText: `status ${status}`,
    json: async () => {
      if (options.json !== undefined) return options.json;
      if (options.text !== undefined) return JSON.parse(options.text);
      throw new Error("no body");
    },
    text: async () => options.text ?? JSON.stringify(options.json ?? null),
    headers: { get: (name: string) => headers[name] ?? null },
  };
}

function stubFetch(responses: ReturnType<typeof fakeResponse>[]) {
  const calls: Call[] = [];
  const fn = vi.fn(async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const next = responses.shift();
    if (!next) throw new Error("unexpected fetch");
    return next;
  });
  vi.stubGlobal("fetch", fn);
  return calls;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("Client", () => {
  it("lists runs from /api/runs", async () => {
    const calls = stubFetch([fakeResponse({ json: { runs: [{ run_id: "r1" }] } })]);
    const out = await new Client().listRuns();
    expect(calls[0].url).toBe("/api/runs");
    expect(out.runs[0].run_id).toBe("r1");
  });

  it("passes paging parameters through to the samples endpoint", async () => {
    const calls = stubFetch([
      fakeResponse({ json: { run_id: "r", cluster: 2, total: 0, offset: 100, samples: [] } }),
    ]);
    await new Client().samples("r", 2, 50, 100);
    expect(calls[0].url).toBe("/api/runs/r/clusters/2/samples?limit=50&offset=100");
  });

  it("raises ApiError with the server's detail on failures", async () => {
    stubFetch([fakeResponse({ status: 404, json: { detail: "no such run nope" } })]);
    await expect(new Client().clusters("nope")).rejects.toMatchObject({
      status: 404,
      detail: "no such run nope",
    });
    stubFetch([fakeResponse({ status: 500, text: "<html>boom</html>" })]);
    const err = await new Client().metrics("r").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(500);
  });

  it("returns null for a never-saved selection and raw bytes otherwise", async () => {
    stubFetch([fakeResponse({ status: 404, json: { detail: "no selection saved" } })]);
    expect(await new Client().readSelection("r")).toBeNull();

    const body = '{"tags": {"0": "retrain"}}';
    stubFetch([fakeResponse({ text: body, headers: { ETag: "d1g3st" } })]);
    const saved = await new Client().readSelection("r");
    expect(saved).toEqual({ body, etag: "d1g3st" });
  });

  it("saves selections with If-Match only when a digest is held", async () => {
    const calls = stubFetch([
      fakeResponse({ json: { etag: "new1" } }),
      fakeResponse({ json: { etag: "new2" } }),
    ]);
    const client = new Client();
    const etag1 = await client.saveSelection("r", "{}", null);
    expect(etag1).toBe("new1");
    const headers1 = calls[0].init?.headers as Record<string, string>;
    expect(headers1["If-Match"]).toBeUndefined();

    const etag2 = await client.saveSelection("r", "{}", "new1");
    expect(etag2).toBe("new2");
    const headers2 = calls[1].init?.headers as Record<string, string>;
    expect(headers2["If-Match"]).toBe("new1");
    expect(calls[1].init?.method).toBe("POST");
  });

  it("surfaces save conflicts as status 409", async () => {
    stubFetch([fakeResponse({ status: 409, json: { detail: "selection changed underneath you" } })]);
    await expect(new Client().saveSelection("r", "{}", "stale")).rejects.toMatchObject({
      status: 409,
    });
  });

  it("starts retrain jobs with an empty POST", async () => {
    const calls = stubFetch([fakeResponse({ json: { job_id: "j1", state: "pending" } })]);
    const job = await new Client().startRetrain("r");
    expect(job.job_id).toBe("j1");
    expect(calls[0].url).toBe("/api/runs/r/retrain");
    expect(calls[0].init?.method).toBe("POST");
  });

  it("prefixes an explicit base URL", async () => {
    const calls = stubFetch([fakeResponse({ json: { job_id: "j", run_id: "r", state: "done", error: null } })]);
    await new Client("http://localhost:9999").job("j");
    expect(calls[0].url).toBe("http://localhost:9999/api/jobs/j");
  });
});
