import type { AgentInfo, RecordsPage, ScoreRecord } from "../src/types.js";

let counter = 0;

export function record(seq: number, overrides: Partial<ScoreRecord> = {}): ScoreRecord {
  counter += 1;
  return {
    seq,
    prompt_id: `id-${seq}-${counter}`,
    prompt_text: `Prompt ${seq}. {raw_text}`,
    agent_id: "a1",
    baseline_rig: 0.1,
    extended_rig: 0.1,
    relative_score: 0,
    eval_size: 80,
    repeats: 3,
    status: "ok",
    created_at: "2026-08-15T00:00:00+00:00",
    ...overrides,
  };
}

export function page(records: ScoreRecord[], next: number | null = null): RecordsPage {
  return { records, next };
}

export function agent(id: string, overrides: Partial<AgentInfo> = {}): AgentInfo {
  return {
    agent_id: id,
    paused: false,
    temperature: null,
    epsilon: null,
    records: 0,
    best_score: null,
    ...overrides,
  };
}

/** Minimal Response stand-in for stub fetches. */
export function jsonResponse(status: number, body: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    json: () => Promise.resolve(body),
  } as unknown as Response;
}
