/**
 * The session draft and its wire form.
 *
 * The wire format here mirrors the job service's schema exactly — the
 * same field names, the same defaults, the same validation rule — so a
 * draft submitted from the studio is field-identical to one produced by
 * the command-line client for equal inputs. Never add a field here that
 * the server schema lacks.
 */

export type JobKind = "tryon" | "edit";

export interface WireScales {
  style: number;
  content: number;
  sketch: number;
  text: number;
}

export interface WireSpec {
  person: string | null;
  garment_mask: string | null;
  sketch: string | null;
  image_prompt: string | null;
  text_prompt: string | null;
  scales: WireScales;
  alpha: number;
  seed: number;
  steps: number;
}

export interface JobSubmission {
  kind: JobKind;
  spec: WireSpec;
}

/** Everything the studio tracks for the job being composed. */
export interface SessionDraft {
  person: string | null;
  garmentMask: string | null;
  sketch: string | null;
  imagePrompt: string | null;
  textPrompt: string | null;
  styleScale: number;
  contentScale: number;
  sketchScale: number;
  textScale: number;
  alpha: number;
  seed: number;
  steps: number;
  /** Prior job ids this draft derives from (re-runs, sweeps). UI-only:
   * never serialized into the wire spec. */
  linkedJobIds: string[];
}

/** Server defaults, mirrored so an untouched slider serializes to the
 * same value the CLI would send. */
export const DEFAULT_DRAFT: SessionDraft = {
  person: null,
  garmentMask: null,
  sketch: null,
  imagePrompt: null,
  textPrompt: null,
  styleScale: 0.5,
  contentScale: 0.5,
  sketchScale: 0.7,
  textScale: 0.5,
  alpha: 1.0,
  seed: 0,
  steps: 50,
  linkedJobIds: [],
};

/** Slider bounds for the four scales (the server accepts any value >= 0;
 * the sliders stop at 2 because larger values are never useful). */
export const SCALE_SLIDER = { min: 0, max: 2, step: 0.05 } as const;

export function draftToWire(draft: SessionDraft): WireSpec {
  return {
    person: draft.person,
    garment_mask: draft.garmentMask,
    sketch: draft.sketch,
    image_prompt: draft.imagePrompt,
    text_prompt: draft.textPrompt,
    scales: {
      style: draft.styleScale,
      content: draft.contentScale,
      sketch: draft.sketchScale,
      text: draft.textScale,
    },
    alpha: draft.alpha,
    seed: draft.seed,
    steps: draft.steps,
  };
}

export function draftToSubmission(draft: SessionDraft, kind: JobKind = "tryon"): JobSubmission {
  return { kind, spec: draftToWire(draft) };
}

/**
 * Client-side mirror of the server's job-spec invariant. Returns one
 * message per violated rule; an empty array means the draft is
 * submittable. The server applies the same rules, so anything rejected
 * here would be rejected there too.
 */
export function validateDraft(draft: SessionDraft): string[] {
  const problems: string[] = [];
  if (!draft.person) {
    problems.push("person is required");
  }
  const scales: Array<[string, number]> = [
    ["style_scale", draft.styleScale],
    ["content_scale", draft.contentScale],
    ["sketch_scale", draft.sketchScale],
    ["text_scale", draft.textScale],
  ];
  for (const [name, value] of scales) {
    if (!Number.isFinite(value) || value < 0) {
      problems.push(`${name} must be a finite number >= 0`);
    }
  }
  if (!Number.isFinite(draft.alpha) || draft.alpha < 0 || draft.alpha > 1) {
    problems.push("alpha must lie in [0, 1]");
  }
  if (!Number.isInteger(draft.seed) || draft.seed < 0) {
    problems.push("seed must be a non-negative integer");
  }
  if (!Number.isInteger(draft.steps) || draft.steps < 1) {
    problems.push("steps must be a positive integer");
  }
  if (!draft.sketch && !draft.imagePrompt && !draft.textPrompt) {
    problems.push("at least one of sketch, image_prompt, text_prompt is required");
  }
  return problems;
}

/** Deterministic JSON with sorted object keys, for recording round-trip
 * fixtures and diffing specs. */
export function canonicalJson(value: unknown): string {
  return JSON.stringify(sortKeys(value));
}

function sortKeys(value: unknown): unknown {
  if (Array.isArray(value)) {
    return value.map(sortKeys);
  }
  if (value !== null && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as Record<string, unknown>).sort()) {
      out[key] = sortKeys((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}
