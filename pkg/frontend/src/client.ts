/** Transport: session creation over HTTP, live updates over the WebSocket
 * stream, reconnect with capped exponential backoff. All displayed values
 * come from the server; this module never computes quality or pixels.
 */

import {
  API_PREFIX,
  HealthResponse,
  ServerMessage,
  SessionResponse,
  WS_VERSION,
} from "./protocol.js";
import { Coalescer, FrameSequencer, reconnectDelayMs } from "./state.js";

export interface ClientEvents {
  onStatus(status: "connecting" | "connected" | "reconnecting" | "error",
           banner?: string): void;
  onMessage(msg: ServerMessage): void;
}

interface StatePayload {
  pose: number[];
  wrench: number[];
}

export class ConsoleClient {
  private ws: WebSocket | null = null;
  private attempt = 0;
  private closed = false;
  readonly seq = new FrameSequencer();
  readonly outbox: Coalescer<StatePayload>;
  sessionId: string | null = null;
  imageSize: [number, number, number] = [64, 64, 1];

  constructor(private baseUrl: string, private events: ClientEvents) {
    this.outbox = new Coalescer((payload) => this.sendState(payload));
  }

  async connect(): Promise<void> {
    this.events.onStatus("connecting");
    const health = await this.fetchJson<HealthResponse>(`${API_PREFIX}/healthz`);
    if (health.ws_version !== WS_VERSION) {
      this.events.onStatus(
        "error",
        `protocol mismatch: server speaks ${health.ws_version}, ` +
          `this console speaks ${WS_VERSION}`,
      );
      throw new Error("incompatible stream protocol");
    }
    this.imageSize = health.image_size;
    const session = await this.fetchJson<SessionResponse>(
      `${API_PREFIX}/session`,
      { method: "POST", body: "{}" },
    );
    this.sessionId = session.session_id;
    this.openStream();
  }

  private openStream(): void {
    const wsBase = this.baseUrl.replace(/^http/, "ws");
    const ws = new WebSocket(
      `${wsBase}${API_PREFIX}/session/${this.sessionId}/stream`,
    );
    this.ws = ws;
    ws.onopen = () => {
      this.attempt = 0;
      this.events.onStatus("connected");
    };
    ws.onmessage = (ev) => {
      const msg = JSON.parse(ev.data) as ServerMessage;
      if (msg.type === "update") {
        this.outbox.acknowledge();
        if (!this.seq.accept(msg.seq)) return; // stale frame, drop
      }
      if (msg.type === "error" && msg.seq !== undefined) {
        this.outbox.acknowledge();
      }
      this.events.onMessage(msg);
    };
    ws.onclose = () => {
      if (this.closed) return;
      const delay = reconnectDelayMs(this.attempt++);
      this.events.onStatus("reconnecting",
                           `stream dropped, retrying in ${delay} ms`);
      setTimeout(() => this.openStream(), delay);
    };
    ws.onerror = () => ws.close();
  }

  pushState(payload: StatePayload): void {
    this.outbox.submit(payload);
  }

  private sendState(payload: StatePayload): void {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN) {
      this.outbox.acknowledge();
      return;
    }
    this.ws.send(JSON.stringify({
      type: "state",
      seq: this.seq.nextSeq(),
      ...payload,
    }));
  }

  requestSuggestion(n = 1000, seed = 0): void {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN) return;
    this.ws.send(JSON.stringify({
      type: "suggest",
      seq: this.seq.nextSeq(),
      n,
      seed,
    }));
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }

  private async fetchJson<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(`${this.baseUrl}${path}`, {
        headers: { "content-type": "application/json" },
        ...init,
      });
    } catch (err) {
      this.events.onStatus("error", `server unreachable at ${this.baseUrl}`);
      throw err;
    }
    if (!resp.ok) {
      const body = await resp.text();
      this.events.onStatus("error", `server error ${resp.status}: ${body}`);
      throw new Error(`HTTP ${resp.status}`);
    }
    return (await resp.json()) as T;
  }
}
