import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface, type Interface } from "node:readline";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { Client } from "../src/api.js";
import { pollLoop } from "../src/poll.js";
import { renderTable, unescapeHtml } from "../src/render.js";
import { ingestPage, initialState, type ViewState } from "../src/state.js";
import { templateError } from "../src/validate.js";

/**
 * Integration tests against a real telemetry server (and, for the pause
 * test, a real fleet) run by the python helper in test/live_server.py.
 */

const HELPER = new URL("./live_server.py", import.meta.url).pathname;

let child: ChildProcessWithoutNullStreams;
let replies: Interface;
let pending: ((line: string) => void)[] = [];
let baseUrl = "";
let client: Client;

function command(payload: object): Promise<any> {
  return new Promise((resolve) => {
    pending.push((line) => resolve(JSON.parse(line)));
    child.stdin.write(JSON.stringify(payload) + "\n");
  });
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Follows the record stream the way the page does, exposing the live
 * ViewState so tests can render and inspect it. */
class Tail {
  state: ViewState = initialState();
  private waiters: { test: (s: ViewState) => boolean; resolve: () => void }[] = [];
  private abort = new AbortController();

  constructor() {
    void pollLoop(client, 0, {
      onPage: (page) => {
        this.state = ingestPage(this.state, page);
        this.waiters = this.waiters.filter((w) => {
          if (w.test(this.state)) {
            w.resolve();
            return false;
          }
          return true;
        });
      },
      onStale: () => {},
      saveCursor: () => {},
      sleep,
    }, this.abort.signal);
  }

  waitFor(test: (s: ViewState) => boolean, timeoutMs: number): Promise<void> {
    if (test(this.state)) return Promise.resolve();
    return new Promise((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new Error(`no matching state within ${timeoutMs}ms`)),
        timeoutMs,
      );
      this.waiters.push({
        test,
        resolve: () => {
          clearTimeout(timer);
          resolve();
        },
      });
    });
  }

  stop(): void {
    this.abort.abort();
  }
}

const tails: Tail[] = [];

beforeAll(async () => {
  child = spawn("python3", [HELPER], { stdio: ["pipe", "pipe", "pipe"] });
  replies = createInterface({ input: child.stdout });
  replies.on("line", (line) => {
    const next = pending.shift();
    if (next) next(line);
  });
  const hello = await new Promise<any>((resolve) => {
    pending.push((line) => resolve(JSON.parse(line)));
  });
  baseUrl = hello.url;
  client = new Client(baseUrl);
}, 20_000);

afterAll(() => {
  for (const tail of tails) tail.stop();
  child.kill();
});

describe("live fleet", () => {
  it("a fresh record reaches the rendered table within two seconds", async () => {
    const tail = new Tail();
    tails.push(tail);
    const text = "Liveness probe prompt. {raw_text}";

    const started = Date.now();
    const ack = await command({ op: "append", text, score: 0.12, agent: "a1" });
    await tail.waitFor(
      (s) => s.records.has(ack.seq),
      2000,
    );
    expect(Date.now() - started).toBeLessThan(2000);

    const html = renderTable(tail.state);
    expect(html).toContain("Liveness probe prompt");
    expect(html).toContain("0.120000");
  }, 15_000);

  it("toggling a row reveals the stored template byte-for-byte", async () => {
    const nasty = 'Hostile <b>&amp;</b> "template"\n  with  runs\tand {raw_text} — end';
    const tail = new Tail();
    tails.push(tail);
    const ack = await command({ op: "append", text: nasty, score: -0.03, agent: "a1" });
    await tail.waitFor((s) => s.records.has(ack.seq), 5000);

    const record = tail.state.records.get(ack.seq)!;
    expect(record.prompt_text).toBe(nasty); // server round-trip is exact
    const expanded = {
      ...tail.state,
      expanded: new Set([record.prompt_id]),
    };
    const match = /<pre class="prompt-full"[^>]*>([\s\S]*?)<\/pre>/.exec(renderTable(expanded));
    expect(match).not.toBeNull();
    expect(unescapeHtml(match![1])).toBe(nasty);
  }, 15_000);

  it("pausing an agent halts record production until resume", async () => {
    await command({ op: "fleet" });
    const counter = async () => (await client.getRecords(0, false)).records.length;

    // production is underway
    const before = await counter();
    let growing = before;
    for (let i = 0; i < 100 && growing === before; i++) {
      await sleep(150);
      growing = await counter();
    }
    expect(growing).toBeGreaterThan(before);

    const ack = await client.pause("a1");
    expect(ack.op).toBe("pause");
    const agents = await client.getAgents();
    expect(agents.agents.find((a) => a.agent_id === "a1")?.paused).toBe(true);

    // let the in-flight generation finish, then demand a quiet window
    let settled = await counter();
    for (let i = 0; i < 100; i++) {
      await sleep(150);
      const now = await counter();
      if (now === settled) break;
      settled = now;
    }
    await sleep(900);
    expect(await counter()).toBe(settled);

    await client.resume("a1");
    let resumed = settled;
    for (let i = 0; i < 100 && resumed <= settled; i++) {
      await sleep(150);
      resumed = await counter();
    }
    expect(resumed).toBeGreaterThan(settled);
  }, 60_000);

  it("the client-side validator matches the server's seed verdicts", async () => {
    // invalid template: the form would block this before any request
    const invalid = "no placeholder here";
    expect(templateError(invalid)).toMatch(/no \{raw_text\}/);
    const rejected = await client.seed(invalid).catch((e) => e);
    expect(rejected.status).toBe(422);
    expect(rejected.message).toContain("no '{raw_text}' placeholder");

    // valid template passes both gates
    const valid = "Fresh directive from the operator. {raw_text}";
    expect(templateError(valid)).toBeNull();
    const ack = await client.seed(valid);
    expect(ack.op).toBe("seed");
    expect(ack.effective_after_seq).toBeGreaterThanOrEqual(0);
  }, 15_000);
});
