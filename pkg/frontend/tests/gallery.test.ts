import { describe, expect, it } from "vitest";

import { GalleryStore } from "../src/gallery";
import { DEFAULT_DRAFT, draftToSubmission } from "../src/spec";
import { makeSweepDrafts } from "../src/sweep";

const submission = () =>
  draftToSubmission({ ...DEFAULT_DRAFT, person: "p.png", imagePrompt: "i.png", seed: 5 });

describe("gallery store", () => {
  it("keeps the full submission (spec + seed) on every card", () => {
    const store = new GalleryStore();
    const card = store.add("j1", submission());
    expect(card.submission.spec.seed).toBe(5);
    expect(card.submission.spec.scales).toEqual({
      style: 0.5,
      content: 0.5,
      sketch: 0.7,
      text: 0.5,
    });
  });

  it("tracks progress updates and attaches the result on done", () => {
    const store = new GalleryStore();
    store.add("j1", submission());
    store.applyStatus("j1", { id: "j1", status: "running", steps_done: 25, steps_total: 50 });
    expect(store.get("j1")?.status).toBe("running");
    expect(store.get("j1")?.stepsDone).toBe(25);
    store.applyStatus("j1", { id: "j1", status: "done" }, "/jobs/j1/results/0");
    expect(store.get("j1")?.resultUrl).toBe("/jobs/j1/results/0");
  });

  it("groups a sweep's three results in submission order", () => {
    const store = new GalleryStore();
    const drafts = makeSweepDrafts({ ...DEFAULT_DRAFT, person: "p.png", imagePrompt: "i.png" });
    drafts.forEach((d, i) => {
      store.add(`j${i}`, draftToSubmission(d), { sweepGroup: "g1" });
    });
    const row = store.sweep("g1");
    expect(row.map((c) => c.submission.spec.scales.content)).toEqual([0, 0.5, 1.0]);
    const seeds = new Set(row.map((c) => c.submission.spec.seed));
    expect(seeds.size).toBe(1);
  });

  it("links seed variants to their original", () => {
    const store = new GalleryStore();
    store.add("j1", submission());
    store.add("j2", submission(), { variantOf: "j1" });
    expect(store.variantsOf("j1").map((c) => c.id)).toEqual(["j2"]);
  });

  it("notifies subscribers on every change and supports unsubscribe", () => {
    const store = new GalleryStore();
    let calls = 0;
    const off = store.subscribe(() => {
      calls += 1;
    });
    store.add("j1", submission());
    store.applyStatus("j1", { id: "j1", status: "done" });
    off();
    store.add("j2", submission());
    expect(calls).toBe(2);
  });
});
