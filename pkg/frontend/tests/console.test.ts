/**
 * Scripted console walkthrough against a real service process.
 *
 * Asserts display parity: every probability and score the console panels
 * hold is exactly (===) the value the service or CLI reports for the same
 * query, and a what-if leaves the session state hash unchanged.
 */

import { execFile, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError, type BeliefPayload, type StreamHandle } from "../src/api.js";
import {
  applyBelief, formatValue, runWhatIf, submitObservation, viewFromPayload,
  viewFromTimeline, type SessionView,
} from "../src/view.js";

const exec = promisify(execFile);
const PYTHON = process.env.PLOTDBN_PYTHON ?? "python3";

const OBSERVATIONS: Record<string, string | null>[] = [
  { z_online_activity: "high" },
  { z_online_activity: "high", z_contact_pattern: "shifting" },
  { z_site_visits: "frequent" },
  { z_training_signal: "present", z_procurement: "none" },
  { z_movement: "normal", z_site_visits: "frequent" },
];
const PRIOR = { kind: "point" as const, phase: "recruited" };
const UTILITY = "harm_weighted";
const HORIZON = 8;

let service: ChildProcess;
let api: ApiClient;
let stream: StreamHandle | undefined;
let base: string;
let dataDir: string;
let fixturePath: string;

async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port"));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

async function waitReady(url: string): Promise<void> {
  const deadline = Date.now() + 15_000;
  for (;;) {
    try {
      const response = await fetch(url);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error("service did not come up");
    await new Promise((r) => setTimeout(r, 100));
  }
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), "plotdbn-console-"));
  fixturePath = (await exec(PYTHON, ["-c",
    "from plotdbn.fixtures import vehicle_attack_path; print(vehicle_attack_path())",
  ])).stdout.trim();
  await exec(PYTHON, ["-m", "plotdbn.cli", "lib-add",
    "--library", join(dataDir, "library"), fixturePath]);

  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  service = spawn(PYTHON, ["-m", "plotdbn.cli", "serve",
    "--data", dataDir, "--port", String(port)], { stdio: "ignore" });
  await waitReady(`${base}/v1/library`);
  api = new ApiClient(base);
}, 60_000);

afterAll(async () => {
  stream?.close();
  await stream?.done.catch(() => undefined);
  service?.kill("SIGKILL");
});

describe("incident console walkthrough", () => {
  let view: SessionView;
  let streamed: BeliefPayload[];

  it("creates a session and attaches to the stream", async () => {
    const created = await api.createSession({
      entry: "vehicle-attack", category: "affiliated-lone-actor", prior: PRIOR,
    });
    view = viewFromPayload(created);
    expect(view.timeline).toHaveLength(1);
    expect(view.timeline[0].marginals.recruited).toBe(1);
    expect(view.weights).toEqual({ "affiliated-lone-actor": 1 });

    streamed = [];
    stream = api.attach(view.sessionId, (payload) => streamed.push(payload));
    await new Promise((r) => setTimeout(r, 300));
    expect(streamed).toHaveLength(1); // the current belief arrives first
    expect(streamed[0].state_hash).toBe(view.stateHash);
  });

  it("posts five observations whose displayed values equal the service's", async () => {
    for (let k = 0; k < OBSERVATIONS.length; k++) {
      view = await submitObservation(api, view, k + 1, OBSERVATIONS[k]);
      const served = await api.getBelief(view.sessionId);
      const latest = view.timeline[view.timeline.length - 1];
      expect(latest.t).toBe(k + 1);
      // strict equality per phase: the panel shows the service's doubles
      for (const label of view.phaseLabels) {
        expect(latest.marginals[label]).toBe(served.phase_marginals[label]);
        expect(Number(formatValue(latest.marginals[label])))
          .toBe(served.phase_marginals[label]);
      }
      for (const [category, tasks] of Object.entries(view.taskPanel)) {
        expect(tasks).toEqual(served.per_category[category].task_marginals);
      }
      expect(view.stateHash).toBe(served.state_hash);
    }
    expect(view.timeline).toHaveLength(6);
  });

  it("received every update over the stream, in order", async () => {
    await new Promise((r) => setTimeout(r, 300));
    expect(streamed).toHaveLength(6); // initial belief + five pushes
    streamed.slice(1).forEach((payload, k) => {
      expect(payload.t).toBe(k + 1);
    });
    const last = streamed[streamed.length - 1];
    expect(last.state_hash).toBe(view.stateHash);
    expect(last.phase_marginals).toEqual(
      view.timeline[view.timeline.length - 1].marginals);
  });

  it("runs a what-if that matches the CLI and leaves the state untouched", async () => {
    const before = view.stateHash;
    const decisions = ["d_phi", "disrupt_supply", "raid", "stand_down"];
    const { view: next, response } = await runWhatIf(api, view, decisions,
      UTILITY, HORIZON);
    view = next;
    expect(response.state_unchanged).toBe(true);
    expect(view.stateHash).toBe(before);
    expect((await api.getBelief(view.sessionId)).state_hash).toBe(before);

    // a second identical query shows the identical table
    const again = await api.whatIf(view.sessionId, decisions, UTILITY, HORIZON);
    expect(again.ranking).toEqual(response.ranking);

    // CLI parity: score the same belief (same prior, same observations)
    const logPath = join(dataDir, "walkthrough.jsonl");
    writeFileSync(logPath, OBSERVATIONS.map((channels, k) =>
      JSON.stringify({ t: k + 1, channels })).join("\n") + "\n");
    const cli = await exec(PYTHON, ["-m", "plotdbn.cli", "score",
      "--model", fixturePath, "--log", logPath,
      "--prior", JSON.stringify(PRIOR),
      "--utility", UTILITY, "--horizon", String(HORIZON), "--json"]);
    const scored = JSON.parse(cli.stdout) as {
      ranking: { decision: string; score: number }[];
    };
    expect(view.whatIf).not.toBeNull();
    expect(view.whatIf!.map((r) => r.decision))
      .toEqual(scored.ranking.map((r) => r.decision));
    view.whatIf!.forEach((row, k) => {
      expect(row.score).toBe(scored.ranking[k].score); // exact, not approx
    });
  });

  it("reloads statelessly from service queries alone", async () => {
    const reloaded = viewFromTimeline(await api.getTimeline(view.sessionId));
    expect(reloaded.timeline).toEqual(view.timeline);
    expect(reloaded.taskPanel).toEqual(view.taskPanel);
    expect(reloaded.weights).toEqual(view.weights);
    expect(reloaded.stateHash).toBe(view.stateHash);
  });

  it("applies streamed updates idempotently by time index", () => {
    const last = streamed[streamed.length - 1];
    const folded = applyBelief(view, last);
    expect(folded.timeline).toHaveLength(view.timeline.length);
  });

  it("shows an error for an unknown session", async () => {
    await expect(api.getTimeline("no-such-session")).rejects.toThrowError(ApiError);
    await expect(api.getTimeline("no-such-session")).rejects.toMatchObject({
      status: 404, code: "unknown-session",
    });
  });
});
