/**
 * WebSocket session to the controller's console bridge.
 *
 * Binary frames carry wire-protocol messages both ways; JSON text frames
 * carry the hello and telemetry. The session reconnects with bounded
 * backoff and surfaces its state for the banner. Outgoing updates are
 * buffered while disconnected for up to one second, then dropped.
 */

import { decodeMessage, WireMessage } from "./protocol.js";
import { RomLimits } from "./rom.js";

export interface Hello {
    followers: number[];
    tickHz: number;
    rom: RomLimits;
}

export interface Telemetry {
    tick: number;
    events: string[];
    force: number;
}

export type SessionState = "connecting" | "connected" | "closed";

export interface SessionHooks {
    onHello?: (hello: Hello) => void;
    onMessage?: (msg: WireMessage) => void;
    onTelemetry?: (t: Telemetry) => void;
    onState?: (state: SessionState, detail: string) => void;
}

const BUFFER_MS = 1000;
const RECONNECT_MIN_MS = 250;
const RECONNECT_MAX_MS = 2000;

export class ConsoleSession {
    state: SessionState = "closed";
    droppedUpdates = 0;
    private ws: WebSocket | null = null;
    private backoffMs = RECONNECT_MIN_MS;
    private pending: { bytes: Uint8Array; atMs: number }[] = [];
    private closedByUser = false;

    constructor(private url: string, private hooks: SessionHooks) {}

    connect(): void {
        this.closedByUser = false;
        this.state = "connecting";
        this.hooks.onState?.("connecting", this.url);
        const ws = new WebSocket(this.url);
        ws.binaryType = "arraybuffer";
        this.ws = ws;
        ws.onopen = () => {
            this.state = "connected";
            this.backoffMs = RECONNECT_MIN_MS;
            this.hooks.onState?.("connected", "");
            this.flushPending();
        };
        ws.onmessage = (ev) => {
            if (ev.data instanceof ArrayBuffer) {
                const decoded = decodeMessage(new Uint8Array(ev.data));
                if (decoded !== null) {
                    this.hooks.onMessage?.(decoded.msg);
                }
                return;
            }
            const body = JSON.parse(ev.data as string);
            if (body.type === "hello") {
                this.hooks.onHello?.({
                    followers: body.followers,
                    tickHz: body.tick_hz,
                    rom: body.rom,
                });
            } else if (body.type === "telemetry") {
                this.hooks.onTelemetry?.(body as Telemetry);
            }
        };
        ws.onclose = () => {
            this.state = "closed";
            if (!this.closedByUser) {
                this.hooks.onState?.("closed", `retrying in ${this.backoffMs} ms`);
                setTimeout(() => this.connect(), this.backoffMs);
                this.backoffMs = Math.min(this.backoffMs * 2, RECONNECT_MAX_MS);
            }
        };
        ws.onerror = () => ws.close();
    }

    send(bytes: Uint8Array): void {
        const now = performance.now();
        if (this.state === "connected" && this.ws !== null) {
            this.ws.send(bytes);
            return;
        }
        this.pending.push({ bytes, atMs: now });
        const cutoff = now - BUFFER_MS;
        while (this.pending.length > 0 && this.pending[0].atMs < cutoff) {
            this.pending.shift();
            this.droppedUpdates++;
        }
    }

    private flushPending(): void {
        const cutoff = performance.now() - BUFFER_MS;
        for (const item of this.pending) {
            if (item.atMs >= cutoff) {
                this.ws?.send(item.bytes);
            } else {
                this.droppedUpdates++;
            }
        }
        this.pending = [];
    }

    close(): void {
        this.closedByUser = true;
        this.ws?.close();
        this.state = "closed";
    }
}
