/** Scripted stand-in for the contract service's escalation endpoints.
 *
 * Mirrors the real wire shapes and voting rules (threshold arithmetic,
 * duplicate-vote refusal, single-arbiter assignment) over plain node:http,
 * so client tests run against deterministic, inspectable state.
 */

import { createServer, type Server } from "node:http";
import type { AddressInfo } from "node:net";

export interface FixtureVote {
  request_id: string;
  arbiter: string;
  decision: "approve" | "deny";
  rationale: string;
  at: number;
}

export interface FixtureIntervention {
  id: string;
  instance: string;
  contract_id: string;
  gap_id: string;
  mode:
    | { kind: "one"; arbiter: string }
    | { kind: "committee"; m: number; threshold: number };
  opened_at: number;
  status: "pending" | "resolved";
  context: { state_hash: string; recent_audit: unknown[]; prose_excerpt: string };
  votes: FixtureVote[];
  resolution: {
    request_id: string;
    decision: "approved" | "denied";
    approvals: number;
    denials: number;
    resolved_at: number;
    reason?: string;
  } | null;
}

let counter = 0;

export function seedCommittee(
  over: Partial<FixtureIntervention> = {},
): FixtureIntervention {
  counter += 1;
  const contract = `sale-${counter}`;
  return {
    id: `ivr-${contract}-G1`,
    instance: `c${counter}`,
    contract_id: contract,
    gap_id: "G1",
    mode: { kind: "committee", m: 3, threshold: 2 },
    opened_at: 20 + counter,
    status: "pending",
    context: {
      state_hash: "ab".repeat(32),
      recent_audit: [{ index: 3 }, { index: 4 }],
      prose_excerpt:
        "gap G1: when violated(O1) decide-by committee(3, 2) approve-> waive O1 deny-> record",
    },
    votes: [],
    resolution: null,
    ...over,
  };
}

export function seedUnilateral(
  arbiter = "clare",
  over: Partial<FixtureIntervention> = {},
): FixtureIntervention {
  return seedCommittee({ mode: { kind: "one", arbiter }, ...over });
}

export interface ScriptedService {
  url: string;
  server: Server;
  requests: FixtureIntervention[];
  close(): Promise<void>;
}

function tallyAndMaybeResolve(request: FixtureIntervention, at: number): void {
  const m = request.mode.kind === "one" ? 1 : request.mode.m;
  const threshold = request.mode.kind === "one" ? 1 : request.mode.threshold;
  const approvals = request.votes.filter((v) => v.decision === "approve").length;
  const denials = request.votes.filter((v) => v.decision === "deny").length;
  let decision: "approved" | "denied" | null = null;
  if (approvals >= threshold) decision = "approved";
  else if (denials > m - threshold) decision = "denied";
  if (decision !== null) {
    request.status = "resolved";
    request.resolution = {
      request_id: request.id,
      decision,
      approvals,
      denials,
      resolved_at: at,
    };
  }
}

export function startScriptedService(
  seeds: FixtureIntervention[],
  opts: { voteDelayMs?: number } = {},
): Promise<ScriptedService> {
  const requests: FixtureIntervention[] = structuredClone(seeds);
  const voteDelayMs = opts.voteDelayMs ?? 0;

  const sorted = (status: string | null) =>
    requests
      .filter((r) => status === null || r.status === status)
      .slice()
      .sort(
        (a, b) =>
          a.opened_at - b.opened_at ||
          a.id.localeCompare(b.id) ||
          a.instance.localeCompare(b.instance),
      );

  const server = createServer((req, res) => {
    const send = (status: number, body: unknown) => {
      res.writeHead(status, { "content-type": "application/json" });
      res.end(JSON.stringify(body));
    };
    const url = new URL(req.url ?? "/", "http://fixture");
    const parts = url.pathname.split("/").filter(Boolean);

    if (req.method === "GET" && url.pathname === "/interventions") {
      const status = url.searchParams.get("status");
      if (status !== null && status !== "pending" && status !== "resolved") {
        return send(400, { error: "status must be 'pending' or 'resolved'" });
      }
      return send(200, { interventions: sorted(status) });
    }

    if (req.method === "GET" && parts[0] === "interventions" && parts.length === 2) {
      const found = sorted(null).find((r) => r.id === parts[1]);
      if (!found) return send(404, { error: `no intervention request ${parts[1]}` });
      return send(200, found);
    }

    if (
      req.method === "POST" &&
      parts[0] === "interventions" &&
      parts[2] === "votes" &&
      parts.length === 3
    ) {
      const chunks: Buffer[] = [];
      req.on("data", (c: Buffer) => chunks.push(c));
      req.on("end", () => {
        setTimeout(() => {
          let payload: Record<string, unknown>;
          try {
            payload = JSON.parse(Buffer.concat(chunks).toString("utf-8"));
          } catch {
            return send(400, { error: "body must be JSON" });
          }
          const requestId = parts[1];
          const open = requests.find(
            (r) => r.id === requestId && r.status === "pending",
          );
          if (!open) {
            return send(404, { error: `no open intervention request ${requestId}` });
          }
          const arbiter = payload.arbiter;
          const decision = payload.decision;
          const t = payload.t;
          if (typeof arbiter !== "string" || !arbiter) {
            return send(400, { error: "vote needs a non-empty arbiter" });
          }
          if (decision !== "approve" && decision !== "deny") {
            return send(400, {
              error: `vote decision must be 'approve' or 'deny', got ${String(decision)}`,
            });
          }
          if (typeof t !== "number" || !Number.isInteger(t) || t < 0) {
            return send(400, { error: `command needs an integer tick t >= 0, got ${String(t)}` });
          }
          if (open.mode.kind === "one" && arbiter !== open.mode.arbiter) {
            return send(400, {
              error: `request ${requestId} is assigned to ${open.mode.arbiter}, not ${arbiter}`,
            });
          }
          if (open.votes.some((v) => v.arbiter === arbiter)) {
            return send(400, { error: `${arbiter} already voted on ${requestId}` });
          }
          open.votes.push({
            request_id: requestId,
            arbiter,
            decision,
            rationale: typeof payload.rationale === "string" ? payload.rationale : "",
            at: t,
          });
          tallyAndMaybeResolve(open, t);
          return send(200, {
            result: {
              request_id: requestId,
              status: open.status,
              state_hash: "cd".repeat(32),
              entry_index: open.votes.length,
            },
            state: {},
          });
        }, voteDelayMs);
      });
      return;
    }

    return send(404, { error: `no route for ${req.method} ${url.pathname}` });
  });

  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const { port } = server.address() as AddressInfo;
      resolve({
        url: `http://127.0.0.1:${port}`,
        server,
        requests,
        close: () =>
          new Promise<void>((done, fail) =>
            server.close((err) => (err ? fail(err) : done())),
          ),
      });
    });
  });
}
