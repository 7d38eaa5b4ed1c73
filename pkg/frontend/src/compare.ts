/**
 * Side-by-side comparison: which jobs may be compared, and which spec
 * fields differ between them.
 */

import type { GalleryCard } from "./gallery";
import type { WireSpec } from "./spec";

export const COMPARE_MIN = 2;
export const COMPARE_MAX = 4;

export interface CompareSelection {
  /** Cards that will be shown. */
  cards: GalleryCard[];
  /** Failed/unfinished cards dropped from the selection, with the notice
   * shown for them. */
  excluded: Array<{ card: GalleryCard; notice: string }>;
  /** Non-null when the whole comparison is disabled. */
  disabledReason: string | null;
}

export function selectForCompare(cards: GalleryCard[]): CompareSelection {
  const excluded: CompareSelection["excluded"] = [];
  const usable: GalleryCard[] = [];
  for (const card of cards) {
    if (card.status !== "done") {
      excluded.push({ card, notice: `excluded: job is ${card.status}` });
    } else {
      usable.push(card);
    }
  }
  let disabledReason: string | null = null;
  const kinds = new Set(usable.map((c) => c.submission.kind));
  if (usable.length < COMPARE_MIN) {
    disabledReason = `select at least ${COMPARE_MIN} finished jobs`;
  } else if (usable.length > COMPARE_MAX) {
    disabledReason = `select at most ${COMPARE_MAX} jobs`;
  } else if (kinds.size > 1) {
    disabledReason = "jobs of different kinds cannot be compared";
  }
  return { cards: usable, excluded, disabledReason };
}

/**
 * Dotted paths of every spec field whose value is not identical across
 * all given specs (e.g. "scales.content", "seed"). Empty means the specs
 * are identical — the "no differences" badge.
 */
export function diffSpecs(specs: WireSpec[]): string[] {
  if (specs.length < 2) {
    return [];
  }
  const paths = collectPaths(specs[0]);
  for (const spec of specs.slice(1)) {
    for (const p of collectPaths(spec)) {
      if (!paths.includes(p)) {
        paths.push(p);
      }
    }
  }
  const differing = paths.filter((path) => {
    const first = JSON.stringify(valueAt(specs[0], path));
    return specs.some((spec) => JSON.stringify(valueAt(spec, path)) !== first);
  });
  return differing.sort();
}

function collectPaths(value: unknown, prefix = ""): string[] {
  if (value !== null && typeof value === "object" && !Array.isArray(value)) {
    const out: string[] = [];
    for (const key of Object.keys(value as Record<string, unknown>)) {
      const path = prefix ? `${prefix}.${key}` : key;
      out.push(...collectPaths((value as Record<string, unknown>)[key], path));
    }
    return out;
  }
  return prefix ? [prefix] : [];
}

function valueAt(value: unknown, path: string): unknown {
  let cur: unknown = value;
  for (const part of path.split(".")) {
    if (cur === null || typeof cur !== "object") {
      return undefined;
    }
    cur = (cur as Record<string, unknown>)[part];
  }
  return cur;
}
