/**
 * Client-side playback of a recorded master trajectory with live
 * perturbation. The console is the single master source: either the sliders
 * or a playback drive it, never both, and perturbation offsets ride on top
 * of whichever is active.
 */

import { MASTER_PAYLOAD_LEN, Quat, quatFromXyz, quatMultiply } from "./state.js";

export interface Recording {
    timesUs: number[];
    frames: Float64Array[];   // 28-float master payloads
}

export function parseRecording(body: { times_us: number[]; frames: number[][] }): Recording {
    const frames = body.frames.map((f) => Float64Array.from(f));
    for (const f of frames) {
        if (f.length !== MASTER_PAYLOAD_LEN) {
            throw new Error(`recording frame has ${f.length} floats, expected ${MASTER_PAYLOAD_LEN}`);
        }
    }
    return { timesUs: body.times_us, frames };
}

/** Frame index for an elapsed playback time (last frame at or before t). */
export function frameIndexAt(rec: Recording, elapsedUs: number): number {
    const t0 = rec.timesUs[0];
    let idx = 0;
    while (idx + 1 < rec.timesUs.length && rec.timesUs[idx + 1] - t0 <= elapsedUs) {
        idx++;
    }
    return idx;
}

/** Pre-multiply the recorded shoulder quaternion with a perturbation rotation. */
export function perturbFrame(frame: Float64Array, offset: Quat): Float64Array {
    const out = Float64Array.from(frame);
    const q: Quat = [frame[0], frame[1], frame[2], frame[3]];
    out.set(quatMultiply(offset, q), 0);
    return out;
}

export type MasterMode = "sliders" | "playback";

/**
 * Enforces the sliders-XOR-playback rule and composes the outgoing payload.
 */
export class MasterSourceState {
    mode: MasterMode = "sliders";
    recording: Recording | null = null;
    playStartMs = 0;
    perturbUntilMs = 0;
    perturbAngle = 0.15;

    startPlayback(rec: Recording, nowMs: number): void {
        this.recording = rec;
        this.playStartMs = nowMs;
        this.mode = "playback";
    }

    stopPlayback(): void {
        this.mode = "sliders";
        this.recording = null;
    }

    triggerPerturbation(nowMs: number, durationMs = 500): void {
        this.perturbUntilMs = nowMs + durationMs;
    }

    perturbationOffset(nowMs: number): Quat {
        if (nowMs >= this.perturbUntilMs) {
            return [1, 0, 0, 0];
        }
        return quatFromXyz(this.perturbAngle, 0, 0);
    }

    /** Payload to publish this frame, or null when playback just ended. */
    framePayload(nowMs: number, sliderPayload: Float64Array): Float64Array | null {
        const offset = this.perturbationOffset(nowMs);
        if (this.mode === "sliders") {
            return perturbFrame(sliderPayload, offset);
        }
        const rec = this.recording;
        if (rec === null || rec.frames.length === 0) {
            this.stopPlayback();
            return null;
        }
        const elapsedUs = (nowMs - this.playStartMs) * 1000;
        const last = rec.timesUs[rec.timesUs.length - 1] - rec.timesUs[0];
        if (elapsedUs > last) {
            this.stopPlayback();
            return null;
        }
        return perturbFrame(rec.frames[frameIndexAt(rec, elapsedUs)], offset);
    }
}
