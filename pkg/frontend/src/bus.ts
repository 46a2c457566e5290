// Bridge connection: subscribe topics, deliver envelopes, reconnect with
// capped exponential backoff, and resubscribe after every reconnect.

import type { Envelope } from "./state.js";

export const SUBSCRIBED_TOPICS = [
  "gesture/prediction",
  "gesture/probabilities",
  "robot/state",
  "system/attention",
];

export type EnvelopeHandler = (envelope: Envelope) => void;
export type StatusHandler = (
  status: "connecting" | "connected" | "disconnected",
) => void;

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => WebSocketLike;

const BACKOFF_START_MS = 500;
const BACKOFF_CAP_MS = 8000;

export class BridgeConnection {
  private socket: WebSocketLike | null = null;
  private backoffMs = BACKOFF_START_MS;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private onEnvelope: EnvelopeHandler,
    private onStatus: StatusHandler,
    private makeSocket: SocketFactory = (u) =>
      new WebSocket(u) as unknown as WebSocketLike,
  ) {}

  connect(): void {
    if (this.closed) return;
    this.onStatus("connecting");
    const ws = this.makeSocket(this.url);
    this.socket = ws;

    ws.onopen = () => {
      this.backoffMs = BACKOFF_START_MS;
      for (const topic of SUBSCRIBED_TOPICS) {
        ws.send(JSON.stringify({ op: "sub", topic }));
      }
      this.onStatus("connected");
    };
    ws.onmessage = (ev) => {
      try {
        this.onEnvelope(JSON.parse(String(ev.data)) as Envelope);
      } catch {
        this.onEnvelope({ error: "undecodable envelope" });
      }
    };
    ws.onclose = () => this.scheduleReconnect();
    ws.onerror = () => {
      // the close handler owns reconnection; nothing to do here
    };
  }

  private scheduleReconnect(): void {
    if (this.closed) return;
    this.onStatus("disconnected");
    this.timer = setTimeout(() => this.connect(), this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_CAP_MS);
  }

  currentBackoffMs(): number {
    return this.backoffMs;
  }

  injectGesture(classId: number, repeats = 5, settleFrames = 0): void {
    // the only control path: ask the recognizer's demo source to play a
    // clip; the console never publishes robot commands directly
    this.publish("camera/inject", {
      class_id: classId,
      repeats,
      settle_frames: settleFrames,
    });
  }

  publish(topic: string, payload: unknown): void {
    if (!this.socket) return;
    this.socket.send(JSON.stringify({ op: "pub", topic, payload }));
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
  }
}

export function defaultWsUrl(): string {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  return `${proto}://${location.host}/ws`;
}
