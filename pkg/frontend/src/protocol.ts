/**
 * Framed binary protocol, browser side.
 *
 * Mirrors docs/protocol.md byte for byte: "NUEX" magic, version 1, u8 type,
 * u16 stream id, u64 microsecond timestamp, u16 payload length, float64
 * payload, CRC-32 over header+payload. All integers little-endian.
 */

export enum MsgType {
    MasterState = 1,
    FollowerState = 2,
    TorqueCmd = 3,
    Heartbeat = 4,
    LogMeta = 5,
}

export interface WireMessage {
    msgType: MsgType;
    streamId: number;
    timestampUs: bigint;
    payload: Float64Array;
}

export const HEADER_SIZE = 18;
const MAGIC = [0x4e, 0x55, 0x45, 0x58]; // "NUEX"
const VERSION = 1;

const CRC_TABLE = (() => {
    const table = new Uint32Array(256);
    for (let n = 0; n < 256; n++) {
        let c = n;
        for (let k = 0; k < 8; k++) {
            c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
        }
        table[n] = c >>> 0;
    }
    return table;
})();

export function crc32(bytes: Uint8Array): number {
    let c = 0xffffffff;
    for (let i = 0; i < bytes.length; i++) {
        c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
    }
    return (c ^ 0xffffffff) >>> 0;
}

export class ProtocolError extends Error {}

export function encodeMessage(msg: WireMessage): Uint8Array {
    const payloadBytes = msg.payload.length * 8;
    if (payloadBytes > 65535) {
        throw new ProtocolError(`payload of ${payloadBytes} bytes exceeds 65535`);
    }
    const out = new Uint8Array(HEADER_SIZE + payloadBytes + 4);
    const view = new DataView(out.buffer);
    out.set(MAGIC, 0);
    view.setUint8(4, VERSION);
    view.setUint8(5, msg.msgType);
    view.setUint16(6, msg.streamId, true);
    view.setBigUint64(8, msg.timestampUs, true);
    view.setUint16(16, payloadBytes, true);
    for (let i = 0; i < msg.payload.length; i++) {
        view.setFloat64(HEADER_SIZE + 8 * i, msg.payload[i], true);
    }
    view.setUint32(HEADER_SIZE + payloadBytes,
        crc32(out.subarray(0, HEADER_SIZE + payloadBytes)), true);
    return out;
}

/** Decode one message; null when more bytes are needed. */
export function decodeMessage(data: Uint8Array): { msg: WireMessage; consumed: number } | null {
    if (data.length < HEADER_SIZE) {
        return null;
    }
    const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
    for (let i = 0; i < 4; i++) {
        if (data[i] !== MAGIC[i]) {
            throw new ProtocolError("bad magic");
        }
    }
    if (view.getUint8(4) !== VERSION) {
        throw new ProtocolError(`unsupported protocol version ${view.getUint8(4)}`);
    }
    const payloadBytes = view.getUint16(16, true);
    if (payloadBytes % 8 !== 0) {
        throw new ProtocolError(`payload length ${payloadBytes} not a multiple of 8`);
    }
    const total = HEADER_SIZE + payloadBytes + 4;
    if (data.length < total) {
        return null;
    }
    const expected = view.getUint32(HEADER_SIZE + payloadBytes, true);
    if (crc32(data.subarray(0, HEADER_SIZE + payloadBytes)) !== expected) {
        throw new ProtocolError("crc32 mismatch");
    }
    const payload = new Float64Array(payloadBytes / 8);
    for (let i = 0; i < payload.length; i++) {
        payload[i] = view.getFloat64(HEADER_SIZE + 8 * i, true);
    }
    return {
        msg: {
            msgType: view.getUint8(5) as MsgType,
            streamId: view.getUint16(6, true),
            timestampUs: view.getBigUint64(8, true),
            payload,
        },
        consumed: total,
    };
}

export function toHex(bytes: Uint8Array): string {
    return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

export function fromHex(hex: string): Uint8Array {
    const out = new Uint8Array(hex.length / 2);
    for (let i = 0; i < out.length; i++) {
        out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
    }
    return out;
}
