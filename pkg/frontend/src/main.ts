/** Terminal entry point: poll the service and render the inbox.
 *
 * Usage:
 *   arbiter-inbox --arbiter clare [--base-url http://127.0.0.1:8000]
 *                 [--interval 2000] [--once]
 *   arbiter-inbox --arbiter m1 --vote ivr-sale-1-G1=approve [--rationale "..."]
 */

import { parseArgs } from "node:util";

import { ArbiterInbox } from "./inbox.js";
import { renderInbox } from "./render.js";

async function main(): Promise<void> {
  const { values } = parseArgs({
    options: {
      "base-url": { type: "string", default: "http://127.0.0.1:8000" },
      arbiter: { type: "string" },
      interval: { type: "string", default: "2000" },
      once: { type: "boolean", default: false },
      vote: { type: "string" },
      rationale: { type: "string", default: "" },
    },
  });
  if (!values.arbiter) {
    console.error("--arbiter NAME is required (the identity votes are cast under)");
    process.exitCode = 2;
    return;
  }

  const inbox = new ArbiterInbox({
    baseUrl: values["base-url"]!,
    arbiter: values.arbiter,
    pollIntervalMs: Number(values.interval),
    onChange: () => {
      if (!values.once && !values.vote) {
        console.clear();
        console.log(renderInbox(inbox));
      }
    },
  });

  if (values.vote) {
    const eq = values.vote.indexOf("=");
    const requestId = eq < 0 ? values.vote : values.vote.slice(0, eq);
    const decision = eq < 0 ? "approve" : values.vote.slice(eq + 1);
    if (decision !== "approve" && decision !== "deny") {
      console.error(`--vote wants REQUEST_ID=approve|deny, got ${values.vote}`);
      process.exitCode = 2;
      return;
    }
    await inbox.refresh();
    const view = await inbox.castVote(requestId, decision, values.rationale ?? "");
    if (view === null) {
      console.error(inbox.errors.get(requestId) ?? inbox.banner ?? "vote failed");
      process.exitCode = 1;
      return;
    }
    console.log(renderInbox(inbox));
    console.log(
      view.status === "resolved"
        ? `resolved: ${view.outcome}`
        : `recorded; tally now ${view.tally.approvals}/${view.tally.threshold} approvals`,
    );
    return;
  }

  if (values.once) {
    await inbox.refresh();
    console.log(renderInbox(inbox));
    return;
  }

  inbox.start();
  process.on("SIGINT", () => {
    inbox.stop();
    process.exit(0);
  });
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exitCode = 1;
});
