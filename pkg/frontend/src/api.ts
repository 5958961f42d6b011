// Typed access to the judgment-collection backend.  These five endpoints
// are the only coupling between the UI and the service; everything the
// results view draws comes from /results verbatim.

export type TrialPayload = {
  trial_id: string;
  image: string; // data URL
  duration_ms: number;
};

export type ResponseChoice = "real" | "generated";

export type ResponseBody = {
  trial_id: string;
  response: ResponseChoice;
  reaction_ms?: number;
};

export type ResponseResult = { stored: boolean; correct: boolean };

export type ResultCell = {
  source: string;
  duration_ms: number;
  fraction_real: number;
  sigma: number | null;
  n_subjects: number;
  n_trials: number;
};

export type ResultsPayload = { cells: ResultCell[]; durations: number[] };

const TRIAL_KEYS = ["trial_id", "image", "duration_ms"];

// The server must not tell us anything beyond the three advertised fields
// before the response is stored -- in particular no source label.  Refuse
// to run against a server that leaks.
export function auditTrialPayload(doc: unknown): TrialPayload {
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new Error("malformed trial payload");
  }
  const rec = doc as Record<string, unknown>;
  const extra = Object.keys(rec).filter((k) => !TRIAL_KEYS.includes(k));
  if (extra.length > 0) {
    throw new Error(`trial payload leaks extra fields: ${extra.join(", ")}`);
  }
  if (
    typeof rec.trial_id !== "string" ||
    typeof rec.image !== "string" ||
    typeof rec.duration_ms !== "number"
  ) {
    throw new Error("malformed trial payload");
  }
  return { trial_id: rec.trial_id, image: rec.image, duration_ms: rec.duration_ms };
}

// After the answer is stored the server reports whether it was correct;
// together with our own answer that pins down whether the image was real.
// (Used by the practice screen to show labelled examples without any
// pre-response leak.)
export function wasReal(response: ResponseChoice, correct: boolean): boolean {
  return (response === "real") === correct;
}

// What the session logic needs; ApiClient satisfies it, tests stub it.
export type SessionApi = {
  trial(subjectId: string): Promise<TrialPayload>;
  respond(body: ResponseBody): Promise<ResponseResult>;
  mask(): Promise<string>;
};

export class ApiClient implements SessionApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async getJson(path: string): Promise<any> {
    const r = await this.fetchFn(this.baseUrl + path);
    if (!r.ok) throw new Error(`GET ${path} -> ${r.status}`);
    return r.json();
  }

  async trial(subjectId: string): Promise<TrialPayload> {
    const doc = await this.getJson(`/trial?subject_id=${encodeURIComponent(subjectId)}`);
    return auditTrialPayload(doc);
  }

  async mask(): Promise<string> {
    return (await this.getJson("/mask")).image;
  }

  async respond(body: ResponseBody): Promise<ResponseResult> {
    const r = await this.fetchFn(this.baseUrl + "/response", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!r.ok) throw new Error(`POST /response -> ${r.status}`);
    return r.json();
  }

  async results(): Promise<ResultsPayload> {
    return this.getJson("/results");
  }

  async exportRecords(): Promise<{ records: Record<string, unknown>[] }> {
    return this.getJson("/export");
  }
}
