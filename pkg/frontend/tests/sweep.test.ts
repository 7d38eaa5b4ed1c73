import { describe, expect, it } from "vitest";

import { DEFAULT_DRAFT, draftToWire, type SessionDraft } from "../src/spec";
import { SWEEP_CONTENT_SCALES, makeSweepDrafts, rerunWithNewSeed, styleOnlyPreset } from "../src/sweep";

const base: SessionDraft = {
  ...DEFAULT_DRAFT,
  person: "assets/p.png",
  imagePrompt: "assets/prompt.png",
  seed: 41,
  linkedJobIds: [],
};

describe("scale sweep", () => {
  it("produces exactly three drafts at content scales 0, 0.5, 1.0", () => {
    const drafts = makeSweepDrafts(base);
    expect(drafts.map((d) => d.contentScale)).toEqual([0, 0.5, 1.0]);
    expect([...SWEEP_CONTENT_SCALES]).toEqual([0, 0.5, 1.0]);
  });

  it("shares the seed across the whole row", () => {
    const seeds = new Set(makeSweepDrafts(base).map((d) => d.seed));
    expect(seeds).toEqual(new Set([41]));
  });

  it("changes nothing but the content scale on the wire", () => {
    const wires = makeSweepDrafts(base).map((d) => draftToWire(d));
    for (const wire of wires) {
      const { scales, ...rest } = wire;
      const { scales: refScales, ...refRest } = draftToWire(base);
      expect(rest).toEqual(refRest);
      expect({ ...scales, content: 0 }).toEqual({ ...refScales, content: 0 });
    }
  });
});

describe("style-only preset", () => {
  it("zeroes the content scale and touches nothing else", () => {
    const preset = styleOnlyPreset(base);
    expect(preset.contentScale).toBe(0);
    expect({ ...preset, contentScale: base.contentScale }).toEqual(base);
  });
});

describe("re-run with new seed", () => {
  it("keeps the spec identical except the seed", () => {
    const rerun = rerunWithNewSeed(base, 42);
    const a = draftToWire(base);
    const b = draftToWire(rerun);
    expect({ ...b, seed: a.seed }).toEqual(a);
    expect(b.seed).toBe(42);
  });

  it("links the prior job as a variant", () => {
    const rerun = rerunWithNewSeed(base, 42, "job-7");
    expect(rerun.linkedJobIds).toEqual(["job-7"]);
    // linking is UI state only; the wire spec stays clean
    expect(Object.keys(draftToWire(rerun))).not.toContain("linkedJobIds");
  });
});
