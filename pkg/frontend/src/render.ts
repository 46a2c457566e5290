// DOM + canvas rendering. Pure consumer of ConsoleState: no state lives
// in the DOM beyond what render() writes each call.

import { BACKGROUND_IDS, GESTURE_LABELS } from "./labels.js";
import type { ConsoleState, RobotSnapshot } from "./state.js";

export interface Dom {
  status: HTMLElement;
  attention: HTMLElement;
  mode: HTMLElement;
  bars: HTMLElement;
  canvas: HTMLCanvasElement;
  log: HTMLElement;
  drops: HTMLElement;
}

export function grabDom(doc: Document): Dom {
  const get = (id: string) => {
    const el = doc.getElementById(id);
    if (!el) throw new Error(`missing #${id}`);
    return el;
  };
  return {
    status: get("status"),
    attention: get("attention"),
    mode: get("mode"),
    bars: get("bars"),
    canvas: get("world") as HTMLCanvasElement,
    log: get("log"),
    drops: get("drops"),
  };
}

export function render(state: ConsoleState, dom: Dom): void {
  dom.status.textContent = state.connection;
  dom.status.className = `badge ${state.connection}`;
  dom.attention.textContent = state.attention;
  dom.attention.className = `badge attn-${state.attention.toLowerCase()}`;
  dom.mode.textContent = state.mode;

  renderBars(state, dom.bars);
  renderWorld(state.robot, dom.canvas);
  renderLog(state, dom.log);
  dom.drops.textContent =
    `ignored topics: ${state.droppedMessages} · parse errors: ` +
    `${state.parseErrors}`;
}

function renderBars(state: ConsoleState, root: HTMLElement): void {
  if (root.childElementCount !== GESTURE_LABELS.length) {
    root.textContent = "";
    GESTURE_LABELS.forEach((label, id) => {
      const row = root.ownerDocument.createElement("div");
      row.className = "bar-row" + (BACKGROUND_IDS.has(id) ? " background" : "");
      const name = root.ownerDocument.createElement("span");
      name.className = "bar-label";
      name.textContent = `${id}. ${label}`;
      const track = root.ownerDocument.createElement("div");
      track.className = "bar-track";
      const fill = root.ownerDocument.createElement("div");
      fill.className = "bar-fill";
      track.appendChild(fill);
      row.appendChild(name);
      row.appendChild(track);
      root.appendChild(row);
    });
  }
  const rows = root.children;
  for (let id = 0; id < GESTURE_LABELS.length; id++) {
    const fill = rows[id].querySelector(".bar-fill") as HTMLElement;
    const p = state.probs[id] ?? 0;
    fill.style.width = `${Math.round(p * 100)}%`;
    fill.classList.toggle("hot", p >= 0.85);
  }
}

// top-down world: x to the right, y upward; one meter = SCALE px
const SCALE = 80;

function worldToCanvas(
  canvas: HTMLCanvasElement,
  x: number,
  y: number,
): [number, number] {
  return [canvas.width / 2 + x * SCALE, canvas.height / 2 - y * SCALE];
}

function renderWorld(
  robot: RobotSnapshot | null,
  canvas: HTMLCanvasElement,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#2c3547";
  ctx.lineWidth = 1;
  for (let m = -3; m <= 3; m++) {
    const [gx] = worldToCanvas(canvas, m, 0);
    const [, gy] = worldToCanvas(canvas, 0, m);
    ctx.beginPath();
    ctx.moveTo(gx, 0);
    ctx.lineTo(gx, canvas.height);
    ctx.moveTo(0, gy);
    ctx.lineTo(canvas.width, gy);
    ctx.stroke();
  }
  if (!robot) return;

  const [hx, hy] = worldToCanvas(
    canvas,
    robot.world.handover_pose[0],
    robot.world.handover_pose[1],
  );
  ctx.strokeStyle = "#e3b341";
  ctx.setLineDash([4, 3]);
  ctx.strokeRect(hx - 8, hy - 8, 16, 16);
  ctx.setLineDash([]);

  if (robot.world.object_pose) {
    const [ox, oy] = worldToCanvas(
      canvas,
      robot.world.object_pose[0],
      robot.world.object_pose[1],
    );
    ctx.fillStyle = "#d6604d";
    ctx.beginPath();
    ctx.arc(ox, oy, 6, 0, Math.PI * 2);
    ctx.fill();
  }

  const { x, y, heading } = robot.base;
  const [bx, by] = worldToCanvas(canvas, x, y);
  ctx.fillStyle = robot.busy ? "#7aa2f7" : "#4c9f70";
  ctx.beginPath();
  ctx.arc(bx, by, 12, 0, Math.PI * 2);
  ctx.fill();
  ctx.strokeStyle = "#dfe5f1";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(bx, by);
  ctx.lineTo(bx + 16 * Math.cos(heading), by - 16 * Math.sin(heading));
  ctx.stroke();

  // end effector, in world frame
  const c = Math.cos(heading);
  const s = Math.sin(heading);
  const [ex, ey] = worldToCanvas(
    canvas,
    x + c * robot.arm.ee_offset[0] - s * robot.arm.ee_offset[1],
    y + s * robot.arm.ee_offset[0] + c * robot.arm.ee_offset[1],
  );
  ctx.fillStyle = robot.arm.holding_object ? "#d6604d" : "#9aa5b1";
  ctx.fillRect(ex - 4, ey - 4, 8, 8);
}

function renderLog(state: ConsoleState, root: HTMLElement): void {
  root.textContent = "";
  // newest last; the container scrolls
  for (const entry of state.log.slice(-60)) {
    const line = root.ownerDocument.createElement("div");
    line.className = `log-${entry.kind}`;
    line.textContent = entry.text;
    root.appendChild(line);
  }
  root.scrollTop = root.scrollHeight;
}
