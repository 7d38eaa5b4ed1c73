/**
 * Thin typed client for the job service. The studio talks to the
 * service exclusively through these endpoints — no file-system access,
 * no side channels.
 */

import type { JobStatus } from "./poll";
import type { JobSubmission } from "./spec";

export interface FieldError {
  loc: Array<string | number>;
  msg: string;
  type: string;
}

/** Validation failure with the server's field-level details preserved,
 * so the form can render each message at the offending field. */
export class ValidationError extends Error {
  constructor(public readonly detail: FieldError[]) {
    super(detail.map((d) => `${d.loc.join(".")}: ${d.msg}`).join("; "));
    this.name = "ValidationError";
  }
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class StudioApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  /** Uploads PNG bytes; returns the content-addressed asset path to use
   * in job specs. */
  async uploadAsset(name: string, pngBytes: Uint8Array): Promise<string> {
    const body = { name, data: base64Encode(pngBytes) };
    const doc = await this.request("POST", "/assets", body);
    return (doc as { path: string }).path;
  }

  async submitJob(submission: JobSubmission): Promise<string> {
    const doc = await this.request("POST", "/jobs", submission);
    return (doc as { id: string }).id;
  }

  async getJob(id: string): Promise<JobStatus> {
    return (await this.request("GET", `/jobs/${id}`)) as JobStatus;
  }

  async listJobs(): Promise<JobStatus[]> {
    return (await this.request("GET", "/jobs")) as JobStatus[];
  }

  async cancelJob(id: string): Promise<void> {
    await this.request("POST", `/jobs/${id}/cancel`);
  }

  resultUrl(id: string, index = 0): string {
    return `${this.base}/jobs/${id}/results/${index}`;
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchImpl(`${this.base}${path}`, init);
    if (resp.status === 422) {
      const doc = (await resp.json()) as { detail: FieldError[] };
      throw new ValidationError(doc.detail);
    }
    if (!resp.ok) {
      let message = `${method} ${path} failed with ${resp.status}`;
      try {
        const doc = (await resp.json()) as { detail?: unknown };
        if (doc.detail !== undefined) {
          message = typeof doc.detail === "string" ? doc.detail : JSON.stringify(doc.detail);
        }
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(resp.status, message);
    }
    if (resp.status === 204) {
      return null;
    }
    return resp.json();
  }
}

/**
 * Maps the server's 422 detail onto draft field names for inline
 * rendering. Unmapped entries land under the "" key and are shown at
 * the form level.
 */
export function fieldErrorsFromDetail(detail: FieldError[]): Map<string, string> {
  const out = new Map<string, string>();
  for (const entry of detail) {
    const msg = entry.msg;
    const field = WIRE_FIELD_IN_MESSAGE.find((name) => msg.includes(name)) ?? "";
    out.set(field, out.has(field) ? `${out.get(field)}; ${msg}` : msg);
  }
  return out;
}

const WIRE_FIELD_IN_MESSAGE = [
  "person",
  "garment_mask",
  "sketch",
  "image_prompt",
  "text_prompt",
  "scales",
  "alpha",
  "seed",
  "steps",
];

export function base64Encode(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}
