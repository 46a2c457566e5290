import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import {
  BridgeConnection,
  SUBSCRIBED_TOPICS,
  WebSocketLike,
} from "../src/bus.js";
import type { Envelope } from "../src/state.js";

class FakeSocket implements WebSocketLike {
  sent: string[] = [];
  closed = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {
    this.closed = true;
  }
}

function harness() {
  const sockets: FakeSocket[] = [];
  const envelopes: Envelope[] = [];
  const statuses: string[] = [];
  const bridge = new BridgeConnection(
    "ws://test/ws",
    (e) => envelopes.push(e),
    (s) => statuses.push(s),
    () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
  );
  return { bridge, sockets, envelopes, statuses };
}

describe("BridgeConnection", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("subscribes to all console topics on open", () => {
    const { bridge, sockets, statuses } = harness();
    bridge.connect();
    sockets[0].onopen?.();
    const subs = sockets[0].sent.map((s) => JSON.parse(s));
    expect(subs).toEqual(
      SUBSCRIBED_TOPICS.map((topic) => ({ op: "sub", topic })),
    );
    expect(statuses.at(-1)).toBe("connected");
  });

  it("delivers parsed envelopes and flags bad JSON", () => {
    const { bridge, sockets, envelopes } = harness();
    bridge.connect();
    sockets[0].onopen?.();
    sockets[0].onmessage?.({ data: '{"topic":"robot/state","payload":1}' });
    sockets[0].onmessage?.({ data: "not json" });
    expect(envelopes[0]).toEqual({ topic: "robot/state", payload: 1 });
    expect(envelopes[1].error).toBeDefined();
  });

  it("reconnects with capped backoff and resubscribes", () => {
    const { bridge, sockets, statuses } = harness();
    bridge.connect();
    sockets[0].onopen?.();
    sockets[0].onclose?.();
    expect(statuses.at(-1)).toBe("disconnected");

    // a few failed cycles: backoff doubles but stays capped
    for (let i = 0; i < 8; i++) {
      vi.runAllTimers();
      sockets.at(-1)?.onclose?.();
    }
    expect(bridge.currentBackoffMs()).toBeLessThanOrEqual(8000);

    vi.runAllTimers();
    const last = sockets.at(-1)!;
    last.onopen?.();
    const subs = last.sent.map((s) => JSON.parse(s));
    expect(subs).toEqual(
      SUBSCRIBED_TOPICS.map((topic) => ({ op: "sub", topic })),
    );
    expect(bridge.currentBackoffMs()).toBe(500); // reset after success
  });

  it("injects gestures via camera/inject only", () => {
    const { bridge, sockets } = harness();
    bridge.connect();
    sockets[0].onopen?.();
    sockets[0].sent.length = 0;
    bridge.injectGesture(4); // Pause
    const sent = sockets[0].sent.map((s) => JSON.parse(s));
    expect(sent).toHaveLength(1);
    expect(sent[0].topic).toBe("camera/inject");
    expect(sent[0].payload.class_id).toBe(4);
    // the console must never talk to robot/command directly
    expect(sockets[0].sent.some((s) => s.includes("robot/command"))).toBe(
      false,
    );
  });

  it("stops reconnecting after close()", () => {
    const { bridge, sockets } = harness();
    bridge.connect();
    sockets[0].onopen?.();
    bridge.close();
    sockets[0].onclose?.();
    vi.runAllTimers();
    expect(sockets).toHaveLength(1);
  });
});
