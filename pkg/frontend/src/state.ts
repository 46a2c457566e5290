// Console state as a pure function of received bridge envelopes.
//
// Everything rendered comes out of `reduce`; there is no client-side
// simulation, so replaying a recorded envelope log reproduces the exact
// same state (and therefore the same rendered view).

import { NUM_CLASSES } from "./labels.js";

export interface Envelope {
  topic?: string;
  payload?: unknown;
  encoding?: string;
  error?: string;
}

export interface BasePose {
  x: number;
  y: number;
  heading: number;
}

export interface RobotSnapshot {
  base: BasePose;
  arm: {
    posture: string;
    ee_offset: [number, number];
    gripper_open: boolean;
    holding_object: boolean;
  };
  world: {
    object_pose: [number, number] | null;
    object_held: boolean;
    handover_pose: [number, number];
  };
  busy: boolean;
  last_event: { event: string } | null;
  ticks: number;
}

export interface LogEntry {
  kind: "prediction" | "attention" | "event" | "error";
  text: string;
}

export interface ConsoleState {
  connection: "connecting" | "connected" | "disconnected";
  probs: number[]; // 27 entries, raw-class-id indexed
  lastWindow: number;
  attention: string;
  mode: string;
  robot: RobotSnapshot | null;
  log: LogEntry[];
  droppedMessages: number;
  parseErrors: number;
}

export const MAX_LOG = 200;

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    probs: new Array(NUM_CLASSES).fill(0),
    lastWindow: 0,
    attention: "unknown",
    mode: "unknown",
    robot: null,
    log: [],
    droppedMessages: 0,
    parseErrors: 0,
  };
}

function pushLog(state: ConsoleState, entry: LogEntry): ConsoleState {
  const log = [...state.log, entry];
  if (log.length > MAX_LOG) log.splice(0, log.length - MAX_LOG);
  return { ...state, log };
}

interface PredictionPayload {
  class_id: number;
  label: string;
  prob: number;
  window: number;
  ts_ms: number;
}

interface ProbabilitiesPayload {
  window: number;
  probs: number[];
  class_ids: number[] | null;
}

interface AttentionPayload {
  attention: string;
  mode: string;
}

export function reduce(state: ConsoleState, envelope: Envelope): ConsoleState {
  if (envelope.error) {
    return pushLog(
      { ...state, parseErrors: state.parseErrors + 1 },
      { kind: "error", text: `bridge error: ${envelope.error}` },
    );
  }
  switch (envelope.topic) {
    case "gesture/prediction": {
      const p = envelope.payload as PredictionPayload;
      const probs = state.probs.slice();
      // an emission implies this class dominated its windows; pin the bar
      if (p.class_id >= 0 && p.class_id < probs.length) {
        probs[p.class_id] = p.prob;
      }
      return pushLog(
        { ...state, probs, lastWindow: p.window },
        {
          kind: "prediction",
          text: `${p.label} (p=${p.prob.toFixed(2)}, window ${p.window})`,
        },
      );
    }
    case "gesture/probabilities": {
      const p = envelope.payload as ProbabilitiesPayload;
      const probs = new Array(NUM_CLASSES).fill(0);
      const ids = p.class_ids;
      p.probs.forEach((v, col) => {
        const classId = ids ? ids[col] : col;
        if (classId >= 0 && classId < NUM_CLASSES) probs[classId] = v;
      });
      return { ...state, probs, lastWindow: p.window };
    }
    case "system/attention": {
      const p = envelope.payload as AttentionPayload;
      return pushLog(
        { ...state, attention: p.attention, mode: p.mode },
        { kind: "attention", text: `attention ${p.attention}, mode ${p.mode}` },
      );
    }
    case "robot/state": {
      const snap = envelope.payload as RobotSnapshot;
      let next: ConsoleState = { ...state, robot: snap };
      const prevEvent = state.robot?.last_event?.event;
      const event = snap.last_event?.event;
      if (event && event !== prevEvent) {
        next = pushLog(next, { kind: "event", text: `robot: ${event}` });
      }
      return next;
    }
    default:
      // unknown topics are counted, not rendered; keeps the log honest
      return { ...state, droppedMessages: state.droppedMessages + 1 };
  }
}

export function reduceAll(
  state: ConsoleState,
  envelopes: Envelope[],
): ConsoleState {
  return envelopes.reduce(reduce, state);
}
