/**
 * Draft transforms behind the preset buttons: the style-only preset,
 * the three-point content-scale sweep, and seeded re-runs.
 */

import type { SessionDraft } from "./spec";

/** The sweep row: pure style transfer, balanced, full content. */
export const SWEEP_CONTENT_SCALES = [0, 0.5, 1.0] as const;

/** Content scale 0: the image prompt contributes palette and texture
 * but no layout. */
export function styleOnlyPreset(draft: SessionDraft): SessionDraft {
  return { ...draft, contentScale: 0 };
}

/**
 * Three drafts identical to the input except for the content scale,
 * all sharing the input's seed so the sweep isolates the scale's effect.
 */
export function makeSweepDrafts(draft: SessionDraft): SessionDraft[] {
  return SWEEP_CONTENT_SCALES.map((contentScale) => ({
    ...draft,
    contentScale,
    linkedJobIds: [...draft.linkedJobIds],
  }));
}

/** Identical spec except the seed; the prior job is linked as a variant. */
export function rerunWithNewSeed(
  draft: SessionDraft,
  newSeed: number,
  priorJobId?: string,
): SessionDraft {
  const linked = priorJobId ? [...draft.linkedJobIds, priorJobId] : [...draft.linkedJobIds];
  return { ...draft, seed: newSeed, linkedJobIds: linked };
}
