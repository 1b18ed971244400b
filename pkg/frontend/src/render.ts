/** Plain-text rendering of the inbox for a terminal dashboard. */

import type { ArbiterInbox } from "./inbox.js";
import type { InterventionView } from "./view.js";

function card(view: InterventionView, error: string | undefined): string[] {
  const tally = view.tally;
  const mine = view.myVote ?? "none";
  const head =
    `* ${view.requestId} [${view.instance}] contract ${view.contractId} ` +
    `gap ${view.gapId} — ${view.modeLabel} — ` +
    `${tally.approvals} approve / ${tally.denials} deny ` +
    `(need ${tally.threshold} of ${tally.size}) — my vote: ${mine}`;
  const lines = [head];
  const prose = view.proseExcerpt.trim();
  if (prose) {
    lines.push(`    prose | ${prose.split("\n")[0]}`);
  }
  lines.push(`    audit | ${view.recentAudit.length} recent entries attached`);
  if (view.status === "resolved") {
    const why = view.outcomeReason ? ` (${view.outcomeReason})` : "";
    lines.push(`    resolved: ${view.outcome}${why}`);
  }
  if (error) {
    lines.push(`    error | ${error}`);
  }
  return lines;
}

export function renderInbox(inbox: ArbiterInbox): string {
  const lines: string[] = [];
  lines.push(`arbiter inbox — ${inbox.arbiter} — ${inbox.views.length} pending`);
  if (inbox.banner) {
    lines.push(`!! ${inbox.banner}`);
  }
  if (inbox.views.length === 0 && !inbox.banner) {
    lines.push("(no halted contracts)");
  }
  for (const view of inbox.views) {
    lines.push(...card(view, inbox.errors.get(view.requestId)));
  }
  return lines.join("\n");
}
