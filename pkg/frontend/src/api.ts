/** Thin typed client for the contract service's escalation endpoints.
 *
 * All decisions stay on the server: this client validates shapes, maps
 * error classes, and nothing more.
 */

import type { ZodType } from "zod";

import {
  Intervention,
  InterventionListSchema,
  InterventionSchema,
  VoteAck,
  VoteAckSchema,
} from "./types.js";

/** The service could not be reached at all (connection refused, DNS, ...). */
export class ServiceUnreachable extends Error {}

/** The service answered with a non-2xx status; `message` is its error text. */
export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly details?: unknown,
  ) {
    super(message);
  }
}

/** The service answered 2xx but the body does not match the documented shape. */
export class MalformedResponse extends Error {}

export interface VoteSubmission {
  t: number;
  arbiter: string;
  decision: "approve" | "deny";
  rationale?: string;
}

function errorText(body: unknown, status: number): string {
  if (body !== null && typeof body === "object" && "error" in body) {
    const e = (body as { error: unknown }).error;
    if (typeof e === "string") return e;
  }
  return `request failed with status ${status}`;
}

export class ArbiterApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      throw new ServiceUnreachable(`cannot reach ${this.baseUrl}: ${reason}`);
    }
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      body = null;
    }
    if (!response.ok) {
      throw new ApiError(errorText(body, response.status), response.status, body);
    }
    return body;
  }

  private parsed<T>(schema: ZodType<T>, body: unknown, what: string): T {
    const result = schema.safeParse(body);
    if (!result.success) {
      throw new MalformedResponse(
        `unexpected ${what} response shape: ${result.error.issues
          .map((i) => `${i.path.join(".")}: ${i.message}`)
          .join("; ")}`,
      );
    }
    return result.data;
  }

  async listInterventions(status?: "pending" | "resolved"): Promise<Intervention[]> {
    const query = status === undefined ? "" : `?status=${status}`;
    const body = await this.request(`/interventions${query}`);
    return this.parsed(InterventionListSchema, body, "intervention list").interventions;
  }

  async getIntervention(requestId: string): Promise<Intervention> {
    const body = await this.request(`/interventions/${encodeURIComponent(requestId)}`);
    return this.parsed(InterventionSchema, body, "intervention");
  }

  async castVote(requestId: string, vote: VoteSubmission): Promise<VoteAck> {
    const body = await this.request(
      `/interventions/${encodeURIComponent(requestId)}/votes`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ rationale: "", ...vote }),
      },
    );
    return this.parsed(VoteAckSchema, body, "vote");
  }
}
