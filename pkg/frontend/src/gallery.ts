/**
 * The persistent result gallery. Every card carries the full submission
 * (spec + seed), so any image in the gallery can be reproduced from what
 * its card shows. Cards from one sweep share a group id; re-runs link to
 * the job they varied.
 */

import type { JobStatus } from "./poll";
import type { JobSubmission } from "./spec";

export interface GalleryCard {
  id: string;
  submission: JobSubmission;
  status: JobStatus["status"];
  stepsDone: number;
  stepsTotal: number;
  failureReason: string | null;
  resultUrl: string | null;
  /** Job id this one is a seed-variant of. */
  variantOf: string | null;
  /** Shared by the three jobs of one scale sweep. */
  sweepGroup: string | null;
  createdAt: number;
}

export class GalleryStore {
  private cards = new Map<string, GalleryCard>();
  private listeners: Array<() => void> = [];

  add(
    id: string,
    submission: JobSubmission,
    options: { variantOf?: string | null; sweepGroup?: string | null } = {},
  ): GalleryCard {
    const card: GalleryCard = {
      id,
      submission,
      status: "queued",
      stepsDone: 0,
      stepsTotal: submission.spec.steps,
      failureReason: null,
      resultUrl: null,
      variantOf: options.variantOf ?? null,
      sweepGroup: options.sweepGroup ?? null,
      createdAt: Date.now(),
    };
    this.cards.set(id, card);
    this.notify();
    return card;
  }

  applyStatus(id: string, status: JobStatus, resultUrl: string | null = null): void {
    const card = this.cards.get(id);
    if (!card) {
      return;
    }
    card.status = status.status;
    card.stepsDone = status.steps_done ?? card.stepsDone;
    card.stepsTotal = status.steps_total ?? card.stepsTotal;
    card.failureReason = status.reason ?? null;
    if (resultUrl !== null) {
      card.resultUrl = resultUrl;
    }
    this.notify();
  }

  get(id: string): GalleryCard | undefined {
    return this.cards.get(id);
  }

  /** Newest first. */
  list(): GalleryCard[] {
    return [...this.cards.values()].sort((a, b) => b.createdAt - a.createdAt);
  }

  /** The cards of one sweep, in submission order. */
  sweep(groupId: string): GalleryCard[] {
    return [...this.cards.values()]
      .filter((c) => c.sweepGroup === groupId)
      .sort((a, b) => a.createdAt - b.createdAt);
  }

  variantsOf(id: string): GalleryCard[] {
    return [...this.cards.values()].filter((c) => c.variantOf === id);
  }

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }
}
