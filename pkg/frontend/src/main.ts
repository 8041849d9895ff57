/** Console wiring: session form, live event stream, next-turn input. */

import { EngineClient, TurnInFlightError, validateInstruction } from "./client.js";
import { applyEvent, emptyView, type SessionView } from "./timeline.js";
import { renderView } from "./render.js";

const DEFAULT_SCENE = `scene v1
size: 512x512
background: park
object: o1 dog brown center medium
object: o2 tree green top-left large
object: o3 socket gray bottom-right small
`;

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function setStatus(text: string, isError = false): void {
  const node = byId<HTMLDivElement>("status");
  node.textContent = text;
  node.className = isError ? "status error" : "status";
}

async function consume(
  client: EngineClient,
  sessionId: string,
  view: SessionView,
  after: number,
): Promise<[SessionView, number]> {
  let cursor = after;
  for await (const event of client.streamEvents(sessionId, after)) {
    view = applyEvent(view, event);
    cursor = (event.seq ?? cursor) + 1;
    renderView(byId("timeline"), view);
  }
  return [view, cursor];
}

async function refreshCost(client: EngineClient, sessionId: string): Promise<void> {
  const snapshot = await client.fetchSession(sessionId);
  byId<HTMLSpanElement>("cost").textContent = `$${snapshot.cost_usd.toFixed(6)}`;
}

function main(): void {
  byId<HTMLTextAreaElement>("scene").value = DEFAULT_SCENE;
  let client: EngineClient | null = null;
  let sessionId: string | null = null;
  let view: SessionView = emptyView("");
  let cursor = 0;
  let busy = false;

  const runTurn = async (start: boolean) => {
    const instructionInput = byId<HTMLInputElement>(start ? "instruction" : "next-instruction");
    const problem = validateInstruction(instructionInput.value);
    if (problem) {
      setStatus(problem, true);
      return;
    }
    if (busy) {
      setStatus("a turn is already in flight", true);
      return;
    }
    client = new EngineClient(byId<HTMLInputElement>("engine-url").value);
    if (!(await client.health())) {
      setStatus("engine unreachable; is `editloop serve` running?", true);
      return;
    }
    busy = true;
    try {
      if (start) {
        const scene = byId<HTMLTextAreaElement>("scene").value;
        const started = await client.startSession(scene, instructionInput.value);
        sessionId = started.sessionId;
        view = emptyView(sessionId);
        cursor = 0;
        byId<HTMLDivElement>("session-block").hidden = false;
        setStatus(`session ${sessionId} running`);
      } else {
        if (!sessionId) {
          setStatus("start a session first", true);
          return;
        }
        await client.nextTurn(sessionId, instructionInput.value);
        setStatus("next turn running");
      }
      [view, cursor] = await consume(client, sessionId!, view, cursor);
      await refreshCost(client, sessionId!);
      setStatus("idle; enter the next instruction");
      instructionInput.value = "";
    } catch (error) {
      if (error instanceof TurnInFlightError) {
        setStatus("rejected: a turn is already in flight", true);
      } else {
        setStatus(String(error), true);
      }
    } finally {
      busy = false;
    }
  };

  byId<HTMLButtonElement>("start").addEventListener("click", () => void runTurn(true));
  byId<HTMLButtonElement>("next").addEventListener("click", () => void runTurn(false));
}

main();
