/** Inbox behaviors beyond the acceptance trio: inline errors, the in-flight
 * vote lock, unreachable banners, unilateral resolution. */

import { afterEach, describe, expect, it } from "vitest";

import { ArbiterInbox, VoteInFlight } from "../src/inbox.js";
import { renderInbox } from "../src/render.js";
import {
  ScriptedService,
  seedCommittee,
  seedUnilateral,
  startScriptedService,
} from "./fixture.js";

let service: ScriptedService | null = null;
const inboxes: ArbiterInbox[] = [];

function inboxFor(arbiter: string, extra: { baseUrl?: string } = {}): ArbiterInbox {
  const inbox = new ArbiterInbox({
    baseUrl: extra.baseUrl ?? service!.url,
    arbiter,
    pollIntervalMs: 100,
    clock: () => 77,
  });
  inboxes.push(inbox);
  return inbox;
}

afterEach(async () => {
  for (const inbox of inboxes.splice(0)) inbox.stop();
  if (service) {
    await service.close();
    service = null;
  }
});

describe("inline errors", () => {
  it("surfaces a duplicate vote without touching the tally", async () => {
    const seed = seedCommittee();
    service = await startScriptedService([seed]);
    const inbox = inboxFor("m1");
    await inbox.refresh();
    await inbox.castVote(seed.id, "approve");

    const again = await inbox.castVote(seed.id, "deny");
    expect(again).toBeNull();
    expect(inbox.errors.get(seed.id)).toBe(`m1 already voted on ${seed.id}`);
    const view = inbox.view(seed.id);
    expect(view?.tally).toEqual({ approvals: 1, denials: 0, threshold: 2, size: 3 });
    expect(renderInbox(inbox)).toContain(`error | m1 already voted on ${seed.id}`);
  });

  it("surfaces votes on unknown or already-resolved requests", async () => {
    const seed = seedUnilateral("clare");
    service = await startScriptedService([seed]);
    const inbox = inboxFor("clare");
    await inbox.refresh();

    expect(await inbox.castVote("ivr-ghost-G9", "approve")).toBeNull();
    expect(inbox.errors.get("ivr-ghost-G9")).toContain("no open intervention request");

    await inbox.castVote(seed.id, "deny"); // resolves it (unilateral)
    expect(await inbox.castVote(seed.id, "approve")).toBeNull();
    expect(inbox.errors.get(seed.id)).toContain("no open intervention request");
  });

  it("surfaces the wrong-arbiter rejection for unilateral requests", async () => {
    const seed = seedUnilateral("clare");
    service = await startScriptedService([seed]);
    const inbox = inboxFor("impostor");
    await inbox.refresh();
    expect(await inbox.castVote(seed.id, "approve")).toBeNull();
    expect(inbox.errors.get(seed.id)).toContain("assigned to clare");
    expect(inbox.view(seed.id)?.tally.approvals).toBe(0);
  });
});

describe("unilateral arbiter", () => {
  it("resolves immediately on a single deny", async () => {
    const seed = seedUnilateral("clare");
    service = await startScriptedService([seed]);
    const inbox = inboxFor("clare");
    await inbox.refresh();
    const view = await inbox.castVote(seed.id, "deny", "terms were unmet");
    expect(view?.status).toBe("resolved");
    expect(view?.outcome).toBe("denied");
    expect(view?.tally).toEqual({ approvals: 0, denials: 1, threshold: 1, size: 1 });
    expect(inbox.view(seed.id)).toBeUndefined();
  });
});

describe("in-flight votes", () => {
  it("disables further voting until the service acknowledges", async () => {
    const a = seedCommittee();
    const b = seedCommittee();
    service = await startScriptedService([a, b], { voteDelayMs: 120 });
    const inbox = inboxFor("m1");
    await inbox.refresh();

    const pending = inbox.castVote(a.id, "approve");
    expect(inbox.voteInFlight).toBe(a.id);
    await expect(inbox.castVote(b.id, "approve")).rejects.toBeInstanceOf(VoteInFlight);
    await pending;
    expect(inbox.voteInFlight).toBeNull();
    expect(await inbox.castVote(b.id, "approve")).not.toBeNull();
  });
});

describe("unreachable service", () => {
  it("raises a banner and keeps the stale list", async () => {
    const seed = seedCommittee();
    service = await startScriptedService([seed]);
    const inbox = inboxFor("clare");
    await inbox.refresh();
    expect(inbox.views).toHaveLength(1);

    await service.close();
    service = null;
    await inbox.refresh();
    expect(inbox.banner).toContain("cannot reach");
    expect(inbox.views).toHaveLength(1); // stale but still shown
    expect(renderInbox(inbox)).toContain("!!");
  });

  it("banners vote failures too", async () => {
    const inbox = inboxFor("clare", { baseUrl: "http://127.0.0.1:1" });
    expect(await inbox.castVote("ivr-any-G1", "approve")).toBeNull();
    expect(inbox.banner).toContain("cannot reach");
  });
});

describe("rendering", () => {
  it("prints an empty-inbox line when nothing is pending", async () => {
    service = await startScriptedService([]);
    const inbox = inboxFor("clare");
    await inbox.refresh();
    expect(renderInbox(inbox)).toContain("(no halted contracts)");
  });

  it("summarizes cards with mode, tally and context", async () => {
    const seed = seedCommittee();
    service = await startScriptedService([seed]);
    const inbox = inboxFor("clare");
    await inbox.refresh();
    const text = renderInbox(inbox);
    expect(text).toContain(seed.id);
    expect(text).toContain("committee(3,2)");
    expect(text).toContain("0 approve / 0 deny (need 2 of 3)");
    expect(text).toContain("prose | gap G1:");
    expect(text).toContain("2 recent entries attached");
  });
});
