/** DOM rendering: scene boxes, attempt cards, the session timeline. */

import type { AttemptCard, SessionView, SubTurnView } from "./timeline.js";

const REGIONS = [
  "top-left", "top-center", "top-right",
  "middle-left", "center", "middle-right",
  "bottom-left", "bottom-center", "bottom-right",
];

export interface SceneBox {
  id: string;
  label: string;
  color: string;
  row: number;
  col: number;
  size: string;
}

export interface ParsedScene {
  background: string;
  boxes: SceneBox[];
}

/** Parse the engine's scene text into grid boxes; pure and testable. */
export function sceneToBoxes(sceneText: string): ParsedScene {
  let background = "";
  const boxes: SceneBox[] = [];
  for (const raw of sceneText.split("\n")) {
    const line = raw.trim();
    if (line.startsWith("background:")) {
      background = line.slice("background:".length).trim();
    } else if (line.startsWith("object:")) {
      const parts = line.slice("object:".length).trim().split(/\s+/);
      if (parts.length !== 5) {
        continue;
      }
      const [id, category, color, region, size] = parts;
      const cell = REGIONS.indexOf(region);
      if (cell < 0) {
        continue;
      }
      boxes.push({
        id,
        label: category,
        color,
        row: Math.floor(cell / 3),
        col: cell % 3,
        size,
      });
    }
  }
  return { background, boxes };
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function renderScene(sceneText: string): HTMLElement {
  const { background, boxes } = sceneToBoxes(sceneText);
  const container = el("div", "scene");
  container.title = `background: ${background}`;
  for (const box of boxes) {
    const node = el("div", `scene-box size-${box.size}`, box.label);
    node.style.gridRow = String(box.row + 1);
    node.style.gridColumn = String(box.col + 1);
    node.style.borderColor = box.color;
    container.appendChild(node);
  }
  const label = el("div", "scene-bg", background);
  container.appendChild(label);
  return container;
}

function renderAttempt(attempt: AttemptCard): HTMLElement {
  const card = el("div", attempt.accepted ? "attempt accepted" : "attempt");
  const head = el("div", "attempt-head");
  head.appendChild(el("span", "iteration", `attempt ${attempt.iteration + 1}`));
  head.appendChild(el("span", "score", attempt.score.toString()));
  if (attempt.accepted) {
    head.appendChild(el("span", "badge", "accepted"));
  }
  if (attempt.toolOutcome !== "ok") {
    head.appendChild(el("span", "badge failure", attempt.toolOutcome));
  }
  card.appendChild(head);
  if (attempt.scene) {
    card.appendChild(renderScene(attempt.scene));
  }
  if (attempt.positive) {
    card.appendChild(el("div", "feedback positive", `keep: ${attempt.positive}`));
  }
  if (attempt.negative) {
    card.appendChild(el("div", "feedback negative", `fix: ${attempt.negative}`));
  }
  if (attempt.chain) {
    const details = el("details", "chain");
    details.appendChild(el("summary", undefined, "tool-chain"));
    const pre = el("pre");
    pre.textContent = attempt.rationale
      ? `${attempt.rationale}\n\n${attempt.chain}`
      : attempt.chain;
    details.appendChild(pre);
    card.appendChild(details);
  }
  return card;
}

function renderSubTurn(sub: SubTurnView): HTMLElement {
  const section = el("div", "sub-turn");
  const head = el("div", "sub-turn-head", `${sub.subTaskIndex}. ${sub.text}`);
  if (sub.acceptedVia) {
    head.appendChild(
      el(
        "span",
        `badge via-${sub.acceptedVia}`,
        `${sub.acceptedVia} @ ${sub.acceptedScore}`,
      ),
    );
  }
  section.appendChild(head);
  const row = el("div", "attempts");
  for (const attempt of sub.attempts) {
    row.appendChild(renderAttempt(attempt));
  }
  section.appendChild(row);
  return section;
}

export function renderView(root: HTMLElement, view: SessionView): void {
  root.replaceChildren();
  for (const turnView of view.userTurns) {
    const block = el("div", "user-turn");
    block.appendChild(el("h3", undefined, `turn ${turnView.turn}: ${turnView.instruction}`));
    if (turnView.planTasks.length) {
      const plan = el("ol", "plan");
      for (const task of turnView.planTasks) {
        plan.appendChild(el("li", undefined, task));
      }
      block.appendChild(plan);
    }
    for (const sub of turnView.subTurns) {
      block.appendChild(renderSubTurn(sub));
    }
    if (turnView.failed) {
      block.appendChild(el("div", "error", turnView.failed));
    } else if (turnView.finished) {
      block.appendChild(el("div", "done", "turn complete"));
    }
    root.appendChild(block);
  }
}
