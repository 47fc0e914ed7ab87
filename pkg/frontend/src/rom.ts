/**
 * Client-side range-of-motion handling: the console clamps slider values to
 * the configured limits before anything is published, mirroring the
 * controller-side check (inclusive bounds).
 */

export interface AxisLimit {
    min: number;
    max: number;
}

export type RomLimits = Record<string, AxisLimit>;

export interface AxisStatus {
    value: number;
    within: boolean;
}

const EPS = 1e-9;

export function clampToRom(value: number, limit: AxisLimit): number {
    return Math.min(Math.max(value, limit.min), limit.max);
}

export function axisStatus(value: number, limit: AxisLimit): AxisStatus {
    return {
        value,
        within: value >= limit.min - EPS && value <= limit.max + EPS,
    };
}

/** Clamp a named command vector; returns the clamped values plus per-axis
 * verdicts on the raw input (for the in/out badge). */
export function clampCommand(values: Record<string, number>, rom: RomLimits):
    { clamped: Record<string, number>; status: Record<string, AxisStatus> } {
    const clamped: Record<string, number> = {};
    const status: Record<string, AxisStatus> = {};
    for (const [axis, value] of Object.entries(values)) {
        const limit = rom[axis];
        if (limit === undefined) {
            clamped[axis] = value;
            continue;
        }
        status[axis] = axisStatus(value, limit);
        clamped[axis] = clampToRom(value, limit);
    }
    return { clamped, status };
}
