/** Wire shapes of the engine's session-control API and its event stream. */

export interface EngineEvent {
  kind: string;
  seq?: number;
  turn?: number;
  [key: string]: unknown;
}

export interface SessionStartedEvent extends EngineEvent {
  kind: "session_started";
  instruction: string;
  initial_state_id: string;
  initial_state_hash: string;
}

export interface PlanReadyEvent extends EngineEvent {
  kind: "plan_ready";
  tasks: string[];
  depends_on: number[][];
}

export interface TurnStartedEvent extends EngineEvent {
  kind: "turn_started";
  sub_task_index: number;
  text: string;
}

export interface AttemptScoredEvent extends EngineEvent {
  kind: "attempt_scored";
  sub_task_index: number;
  iteration: number;
  score: number;
  positive: string;
  negative: string;
  state_id: string;
  state_hash: string;
  tool_outcome: string;
  rationale: string;
  chain: string;
  scene?: string;
}

export interface TurnCompletedEvent extends EngineEvent {
  kind: "turn_completed";
  sub_task_index: number;
  accepted_via: "threshold" | "fallback";
  accepted_score: number;
  iterations_used: number;
  state_id: string;
  scene?: string;
}

export interface SessionFinishedEvent extends EngineEvent {
  kind: "session_finished";
  final_state_id: string;
  final_state_hash: string;
  result_hash: string;
}

export interface TurnDoneEvent extends EngineEvent {
  kind: "turn_done";
  status: string;
}

export interface TurnFailedEvent extends EngineEvent {
  kind: "turn_failed";
  error: string;
}

export interface SessionSnapshot {
  session_id: string;
  status: "idle" | "running" | "error";
  error: string | null;
  turns_started: number;
  turns: TurnSummary[];
  cost_usd: number;
  trace_paths: string[];
}

export interface TurnSummary {
  turn: number;
  sub_task_index: number;
  sub_task: string;
  iterations_used: number;
  accepted_score: number;
  accepted_via: string;
}
