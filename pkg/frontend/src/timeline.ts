/** Pure timeline reducer: engine events in, render model out.
 *
 * Scores and verdicts are taken verbatim from events; the console never
 * recomputes anything the engine already decided. Ordering follows event
 * arrival order exactly.
 */

import type { EngineEvent } from "./types.js";

export interface AttemptCard {
  iteration: number;
  score: number;
  positive: string;
  negative: string;
  stateId: string;
  stateHash: string;
  toolOutcome: string;
  rationale: string;
  chain: string;
  scene?: string;
  accepted: boolean;
}

export interface SubTurnView {
  subTaskIndex: number;
  text: string;
  attempts: AttemptCard[];
  acceptedVia?: "threshold" | "fallback";
  acceptedScore?: number;
  iterationsUsed?: number;
  acceptedStateId?: string;
  acceptedScene?: string;
}

export interface UserTurnView {
  turn: number;
  instruction: string;
  planTasks: string[];
  subTurns: SubTurnView[];
  finished: boolean;
  failed?: string;
  resultHash?: string;
}

export interface SessionView {
  sessionId: string;
  running: boolean;
  userTurns: UserTurnView[];
  appliedOrder: string[]; // kind:seq keys, in arrival order
}

export function emptyView(sessionId: string): SessionView {
  return { sessionId, running: false, userTurns: [], appliedOrder: [] };
}

function currentUserTurn(view: SessionView, turn: number | undefined): UserTurnView {
  const index = view.userTurns.findIndex((t) => t.turn === turn);
  if (index >= 0) {
    return view.userTurns[index];
  }
  const created: UserTurnView = {
    turn: turn ?? view.userTurns.length + 1,
    instruction: "",
    planTasks: [],
    subTurns: [],
    finished: false,
  };
  view.userTurns.push(created);
  return created;
}

function subTurn(userTurn: UserTurnView, subTaskIndex: number): SubTurnView {
  let found = userTurn.subTurns.find((s) => s.subTaskIndex === subTaskIndex);
  if (!found) {
    found = { subTaskIndex, text: "", attempts: [] };
    userTurn.subTurns.push(found);
  }
  return found;
}

/** Apply one event; returns a new view (inputs are never mutated). */
export function applyEvent(view: SessionView, event: EngineEvent): SessionView {
  const next: SessionView = structuredClone(view);
  next.appliedOrder.push(`${event.kind}:${event.seq ?? ""}`);
  const turnView = currentUserTurn(next, event.turn as number | undefined);
  switch (event.kind) {
    case "session_started": {
      next.running = true;
      turnView.instruction = String(event.instruction ?? "");
      break;
    }
    case "plan_ready": {
      turnView.planTasks = (event.tasks as string[]) ?? [];
      break;
    }
    case "turn_started": {
      const sub = subTurn(turnView, event.sub_task_index as number);
      sub.text = String(event.text ?? "");
      break;
    }
    case "attempt_scored": {
      const sub = subTurn(turnView, event.sub_task_index as number);
      sub.attempts.push({
        iteration: event.iteration as number,
        score: event.score as number,
        positive: String(event.positive ?? ""),
        negative: String(event.negative ?? ""),
        stateId: String(event.state_id ?? ""),
        stateHash: String(event.state_hash ?? ""),
        toolOutcome: String(event.tool_outcome ?? ""),
        rationale: String(event.rationale ?? ""),
        chain: String(event.chain ?? ""),
        scene: typeof event.scene === "string" ? event.scene : undefined,
        accepted: false,
      });
      break;
    }
    case "turn_completed": {
      const sub = subTurn(turnView, event.sub_task_index as number);
      sub.acceptedVia = event.accepted_via as "threshold" | "fallback";
      sub.acceptedScore = event.accepted_score as number;
      sub.iterationsUsed = event.iterations_used as number;
      sub.acceptedStateId = String(event.state_id ?? "");
      if (typeof event.scene === "string") {
        sub.acceptedScene = event.scene;
      }
      markAcceptedAttempt(sub);
      break;
    }
    case "session_finished": {
      turnView.finished = true;
      turnView.resultHash = String(event.result_hash ?? "");
      break;
    }
    case "turn_done": {
      next.running = false;
      break;
    }
    case "turn_failed": {
      next.running = false;
      turnView.failed = String(event.error ?? "turn failed");
      break;
    }
    default:
      break;
  }
  return next;
}

/** Badge the attempt the engine accepted.
 *
 * Threshold accepts name the attempt's own state id. Fallback accepts mint
 * a new state, so the badge goes to the earliest attempt carrying the
 * engine-reported accepted score (the engine's own selection rule); the
 * score itself is display data, never recomputed.
 */
function markAcceptedAttempt(sub: SubTurnView): void {
  for (const attempt of sub.attempts) {
    attempt.accepted = false;
  }
  if (sub.acceptedVia === "threshold") {
    const hit = sub.attempts.find((a) => a.stateId === sub.acceptedStateId);
    if (hit) {
      hit.accepted = true;
    }
    return;
  }
  const hit = sub.attempts.find((a) => a.score === sub.acceptedScore);
  if (hit) {
    hit.accepted = true;
  }
}

export function applyAll(view: SessionView, events: EngineEvent[]): SessionView {
  return events.reduce(applyEvent, view);
}

/** All attempt scores in display order; used to check trace agreement. */
export function renderedScores(view: SessionView): number[] {
  const scores: number[] = [];
  for (const turnView of view.userTurns) {
    for (const sub of turnView.subTurns) {
      for (const attempt of sub.attempts) {
        scores.push(attempt.score);
      }
    }
  }
  return scores;
}
