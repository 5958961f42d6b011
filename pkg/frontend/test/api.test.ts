import { describe, expect, it } from "vitest";

import { ApiClient, auditTrialPayload, wasReal } from "../src/api.js";

const goodTrial = {
  trial_id: "abc",
  image: "data:image/png;base64,xyz",
  duration_ms: 100,
};

describe("trial payload audit", () => {
  it("accepts the documented three-field shape", () => {
    expect(auditTrialPayload({ ...goodTrial })).toEqual(goodTrial);
  });

  it("rejects a payload that leaks extra fields", () => {
    expect(() => auditTrialPayload({ ...goodTrial, source: "gan" })).toThrow(
      /leaks extra fields: source/,
    );
  });

  it("rejects missing or mistyped fields", () => {
    expect(() => auditTrialPayload({ trial_id: "a", image: "b" })).toThrow(
      /malformed trial payload/,
    );
    expect(() =>
      auditTrialPayload({ ...goodTrial, duration_ms: "100" }),
    ).toThrow(/malformed trial payload/);
    expect(() => auditTrialPayload(null)).toThrow(/malformed trial payload/);
  });
});

describe("wasReal", () => {
  it("recovers the ground truth from guess and correctness", () => {
    expect(wasReal("real", true)).toBe(true);
    expect(wasReal("real", false)).toBe(false);
    expect(wasReal("generated", true)).toBe(false);
    expect(wasReal("generated", false)).toBe(true);
  });
});

type FetchCall = { url: string; init?: RequestInit };

function fakeFetch(
  routes: Record<string, unknown>,
  calls: FetchCall[],
  status = 200,
) {
  return async (input: string | URL | Request, init?: RequestInit) => {
    const url = String(input);
    calls.push({ url, init });
    const path = url.replace(/^[a-z]+:\/\/[^/]+/, "").split("?")[0];
    const body = routes[path];
    const ok = status >= 200 && status < 300 && body !== undefined;
    return {
      ok,
      status: ok ? status : 404,
      async json() {
        if (body === undefined) throw new Error("no body");
        return body;
      },
    } as Response;
  };
}

describe("ApiClient", () => {
  it("fetches and audits a trial", async () => {
    const calls: FetchCall[] = [];
    const api = new ApiClient(
      "",
      fakeFetch({ "/trial": { ...goodTrial } }, calls),
    );
    const t = await api.trial("subject one");
    expect(t).toEqual(goodTrial);
    expect(calls[0].url).toBe("/trial?subject_id=subject%20one");
  });

  it("propagates a leaking trial payload as an error", async () => {
    const api = new ApiClient(
      "",
      fakeFetch({ "/trial": { ...goodTrial, source: "real" } }, []),
    );
    await expect(api.trial("s")).rejects.toThrow(/leaks extra fields/);
  });

  it("posts responses as JSON", async () => {
    const calls: FetchCall[] = [];
    const api = new ApiClient(
      "http://h:9",
      fakeFetch({ "/response": { stored: true, correct: false } }, calls),
    );
    const res = await api.respond({
      trial_id: "abc",
      response: "generated",
      reaction_ms: 137.5,
    });
    expect(res).toEqual({ stored: true, correct: false });
    expect(calls[0].url).toBe("http://h:9/response");
    expect(calls[0].init?.method).toBe("POST");
    expect(calls[0].init?.headers).toEqual({ "content-type": "application/json" });
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      trial_id: "abc",
      response: "generated",
      reaction_ms: 137.5,
    });
  });

  it("throws on a non-ok status", async () => {
    const api = new ApiClient("", fakeFetch({}, []));
    await expect(api.results()).rejects.toThrow(/GET \/results -> 404/);
  });

  it("unwraps the mask image", async () => {
    const api = new ApiClient(
      "",
      fakeFetch({ "/mask": { image: "data:image/png;base64,m" } }, []),
    );
    expect(await api.mask()).toBe("data:image/png;base64,m");
  });

  it("fetches results and export verbatim", async () => {
    const payload = {
      cells: [
        {
          source: "gan",
          duration_ms: 100,
          fraction_real: 0.5,
          sigma: 0.25,
          n_subjects: 2,
          n_trials: 8,
        },
      ],
      durations: [100],
    };
    const dump = { records: [{ trial_id: "t", source: "gan" }] };
    const api = new ApiClient(
      "",
      fakeFetch({ "/results": payload, "/export": dump }, []),
    );
    expect(await api.results()).toEqual(payload);
    expect(await api.exportRecords()).toEqual(dump);
  });
});
