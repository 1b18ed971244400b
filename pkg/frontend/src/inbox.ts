/** The arbiter's inbox: a polling store over the escalation endpoints.
 *
 * Single rendering loop, polling (never push), poll interval capped at two
 * seconds so a vote cast elsewhere shows up within one interval.  A vote in
 * flight disables further voting until the service acknowledges it.  Every
 * outcome shown comes from the service; the store only displays.
 */

import { ApiError, ArbiterApi, ServiceUnreachable } from "./api.js";
import { InterventionView, toView } from "./view.js";

export const MAX_POLL_INTERVAL_MS = 2000;

/** Thrown when a second vote is attempted while one is unacknowledged. */
export class VoteInFlight extends Error {}

export interface InboxOptions {
  baseUrl: string;
  /** Configured arbiter name; sent verbatim as the vote identity. */
  arbiter: string;
  /** Poll cadence in milliseconds; values above 2000 are clamped down. */
  pollIntervalMs?: number;
  fetchFn?: typeof fetch;
  /** Tick source for the `t` field on votes (integer, monotone enough). */
  clock?: () => number;
  /** Called after every refresh or vote, for re-rendering. */
  onChange?: () => void;
}

export class ArbiterInbox {
  readonly api: ArbiterApi;
  readonly arbiter: string;
  readonly pollIntervalMs: number;

  /** Pending intervention requests, in the service's order. */
  views: InterventionView[] = [];
  /** Set when the last poll could not produce a fresh list. */
  banner: string | null = null;
  /** Inline per-request errors (duplicate vote, already resolved, ...). */
  errors = new Map<string, string>();
  /** Request id of the unacknowledged vote, if any. */
  voteInFlight: string | null = null;

  private timer: NodeJS.Timeout | null = null;
  private polling = false;
  private readonly clock: () => number;
  private readonly onChange: () => void;

  constructor(options: InboxOptions) {
    this.api = new ArbiterApi(options.baseUrl, options.fetchFn ?? fetch);
    this.arbiter = options.arbiter;
    this.pollIntervalMs = Math.min(
      Math.max(options.pollIntervalMs ?? MAX_POLL_INTERVAL_MS, 10),
      MAX_POLL_INTERVAL_MS,
    );
    this.clock = options.clock ?? (() => Math.floor(Date.now() / 1000));
    this.onChange = options.onChange ?? (() => {});
  }

  /** One poll: replace the pending list with the service's answer. */
  async refresh(): Promise<void> {
    if (this.polling) return; // never overlap polls
    this.polling = true;
    try {
      const pending = await this.api.listInterventions("pending");
      this.views = pending.map((r) => toView(r, this.arbiter));
      this.banner = null;
    } catch (err) {
      if (err instanceof ServiceUnreachable || err instanceof ApiError) {
        this.banner = err.message; // keep showing the stale list
      } else {
        throw err;
      }
    } finally {
      this.polling = false;
      this.onChange();
    }
  }

  start(): void {
    if (this.timer !== null) return;
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), this.pollIntervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  view(requestId: string): InterventionView | undefined {
    return this.views.find((v) => v.requestId === requestId);
  }

  /** Cast this arbiter's vote and return the service's updated view.
   *
   * Service rejections (duplicate vote, resolved request, unknown id, wrong
   * arbiter) land in `errors` under the request id and yield null.  A
   * resolved request leaves the pending list immediately.
   */
  async castVote(
    requestId: string,
    decision: "approve" | "deny",
    rationale = "",
  ): Promise<InterventionView | null> {
    if (this.voteInFlight !== null) {
      throw new VoteInFlight(`vote on ${this.voteInFlight} not yet acknowledged`);
    }
    this.voteInFlight = requestId;
    try {
      this.errors.delete(requestId);
      await this.api.castVote(requestId, {
        t: this.clock(),
        arbiter: this.arbiter,
        decision,
        rationale,
      });
      const fresh = toView(await this.api.getIntervention(requestId), this.arbiter);
      const at = this.views.findIndex((v) => v.requestId === requestId);
      if (fresh.status === "resolved") {
        if (at >= 0) this.views.splice(at, 1);
      } else if (at >= 0) {
        this.views[at] = fresh;
      } else {
        this.views.push(fresh);
      }
      return fresh;
    } catch (err) {
      if (err instanceof ApiError) {
        this.errors.set(requestId, err.message);
        return null;
      }
      if (err instanceof ServiceUnreachable) {
        this.banner = err.message;
        return null;
      }
      throw err;
    } finally {
      this.voteInFlight = null;
      this.onChange();
    }
  }
}
