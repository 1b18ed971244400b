/** Wire types for the contract service's escalation endpoints, with runtime
 * validation so a drifting server surfaces as a clear error instead of
 * undefined fields deep in the view. */

import { z } from "zod";

export const VoteSchema = z.object({
  request_id: z.string(),
  arbiter: z.string(),
  decision: z.enum(["approve", "deny"]),
  rationale: z.string(),
  at: z.number().int(),
});
export type Vote = z.infer<typeof VoteSchema>;

export const ResolutionSchema = z.object({
  request_id: z.string(),
  decision: z.enum(["approved", "denied"]),
  approvals: z.number().int(),
  denials: z.number().int(),
  resolved_at: z.number().int(),
  reason: z.string().optional(),
});
export type Resolution = z.infer<typeof ResolutionSchema>;

export const DecisionModeSchema = z.union([
  z.object({ kind: z.literal("one"), arbiter: z.string() }),
  z.object({
    kind: z.literal("committee"),
    m: z.number().int(),
    threshold: z.number().int(),
  }),
]);
export type DecisionMode = z.infer<typeof DecisionModeSchema>;

/** The context bundle the service attaches when a gap fires: enough for a
 * human to decide without shell access to the engine. */
export const ContextSchema = z.object({
  state_hash: z.string(),
  recent_audit: z.array(z.unknown()),
  prose_excerpt: z.string(),
});

export const InterventionSchema = z.object({
  id: z.string(),
  instance: z.string(),
  contract_id: z.string(),
  gap_id: z.string(),
  mode: DecisionModeSchema,
  opened_at: z.number().int(),
  status: z.enum(["pending", "resolved"]),
  context: ContextSchema,
  votes: z.array(VoteSchema),
  resolution: ResolutionSchema.nullable(),
});
export type Intervention = z.infer<typeof InterventionSchema>;

export const InterventionListSchema = z.object({
  interventions: z.array(InterventionSchema),
});

/** Acknowledgement of a posted vote; the authoritative updated request is
 * re-fetched rather than reconstructed client-side. */
export const VoteAckSchema = z.object({
  result: z.object({
    request_id: z.string(),
    status: z.enum(["pending", "resolved"]),
  }),
});
export type VoteAck = z.infer<typeof VoteAckSchema>;
