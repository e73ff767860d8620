/**
 * Wire types for the featloop telemetry server. These mirror the JSON the
 * server emits field-for-field; nothing here is derived client-side.
 */

export interface ScoreRecord {
  seq: number;
  prompt_id: string;
  prompt_text: string;
  agent_id: string;
  baseline_rig: number;
  extended_rig: number;
  relative_score: number;
  eval_size: number;
  repeats: number;
  status: string;
  created_at: string;
}

export interface RecordsPage {
  records: ScoreRecord[];
  /** Cursor for the next page when a backlog remains, else null. */
  next: number | null;
}

export interface AgentInfo {
  agent_id: string;
  paused: boolean;
  temperature: number | null;
  epsilon: number | null;
  records: number;
  best_score: number | null;
}

export interface AgentsPayload {
  agents: AgentInfo[];
  last_seq: number;
}

/** One histogram bucket: [low edge, high edge, count]. */
export type HistogramBin = [number, number, number];

export interface HistogramPayload {
  agent: string;
  bins: HistogramBin[];
  total: number;
}

export interface ProjectionPoint {
  prompt_id: string;
  agent_id: string;
  score: number;
  x: number;
  y: number;
}

export interface ProjectionPayload {
  rank_deficient: boolean;
  points: ProjectionPoint[];
}

export interface ControlAck {
  command_seq: number;
  op: string;
  agent_id: string;
  effective_after_seq: number;
}
