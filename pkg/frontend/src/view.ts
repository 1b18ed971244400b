/** Projection of a service intervention request into what an arbiter sees.
 *
 * Pure data mapping: the tally is the service's own vote list (or its
 * resolution counts once decided); no outcome is ever computed locally.
 */

import type { Intervention, Vote } from "./types.js";

export interface Tally {
  approvals: number;
  denials: number;
  /** Approvals needed to resolve Approved. */
  threshold: number;
  /** Committee size (1 for a unilateral arbiter). */
  size: number;
}

export interface InterventionView {
  requestId: string;
  instance: string;
  contractId: string;
  gapId: string;
  modeLabel: string;
  status: "pending" | "resolved";
  tally: Tally;
  myVote: "approve" | "deny" | null;
  outcome: "approved" | "denied" | null;
  outcomeReason: string | null;
  openedAt: number;
  proseExcerpt: string;
  recentAudit: unknown[];
  votes: Vote[];
}

export function toView(request: Intervention, arbiter: string): InterventionView {
  const mode = request.mode;
  const size = mode.kind === "one" ? 1 : mode.m;
  const threshold = mode.kind === "one" ? 1 : mode.threshold;
  const approvals = request.resolution
    ? request.resolution.approvals
    : request.votes.filter((v) => v.decision === "approve").length;
  const denials = request.resolution
    ? request.resolution.denials
    : request.votes.filter((v) => v.decision === "deny").length;
  return {
    requestId: request.id,
    instance: request.instance,
    contractId: request.contract_id,
    gapId: request.gap_id,
    modeLabel:
      mode.kind === "one"
        ? `one(${mode.arbiter})`
        : `committee(${mode.m},${mode.threshold})`,
    status: request.status,
    tally: { approvals, denials, threshold, size },
    myVote: request.votes.find((v) => v.arbiter === arbiter)?.decision ?? null,
    outcome: request.resolution?.decision ?? null,
    outcomeReason: request.resolution?.reason ?? null,
    openedAt: request.opened_at,
    proseExcerpt: request.context.prose_excerpt,
    recentAudit: request.context.recent_audit,
    votes: request.votes,
  };
}
