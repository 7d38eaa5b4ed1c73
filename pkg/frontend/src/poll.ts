/**
 * Status polling with linear backoff: 1s between the first polls,
 * stretching by 1s per attempt up to a 5s ceiling. Push channels would
 * need server support; polling keeps the service interface minimal.
 */

export interface JobStatus {
  id: string;
  status: "queued" | "running" | "done" | "failed";
  steps_done?: number;
  steps_total?: number;
  reason?: string;
  n_results?: number;
  [key: string]: unknown;
}

export const POLL_BASE_MS = 1000;
export const POLL_STEP_MS = 1000;
export const POLL_MAX_MS = 5000;

/** Delay before the (1-indexed) nth poll. */
export function pollDelayMs(attempt: number): number {
  const stretched = POLL_BASE_MS + (attempt - 1) * POLL_STEP_MS;
  return Math.min(POLL_MAX_MS, Math.max(POLL_BASE_MS, stretched));
}

export function isTerminal(status: JobStatus["status"]): boolean {
  return status === "done" || status === "failed";
}

export interface PollOptions {
  onUpdate?: (status: JobStatus) => void;
  /** Injectable for tests; defaults to real timers. */
  sleep?: (ms: number) => Promise<void>;
  /** Safety valve; the service marks interrupted jobs failed on restart,
   * so a job cannot stay non-terminal forever under a live service. */
  maxAttempts?: number;
}

const realSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Polls until the job reaches a terminal state and resolves with that
 * final status. Every observed status (including intermediate ones) is
 * passed to onUpdate.
 */
export async function pollUntilTerminal(
  fetchStatus: () => Promise<JobStatus>,
  options: PollOptions = {},
): Promise<JobStatus> {
  const sleep = options.sleep ?? realSleep;
  const maxAttempts = options.maxAttempts ?? Number.POSITIVE_INFINITY;
  for (let attempt = 1; ; attempt++) {
    const status = await fetchStatus();
    options.onUpdate?.(status);
    if (isTerminal(status.status)) {
      return status;
    }
    if (attempt >= maxAttempts) {
      throw new Error(`job still ${status.status} after ${attempt} polls`);
    }
    await sleep(pollDelayMs(attempt));
  }
}
