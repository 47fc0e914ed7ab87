/**
 * Master/follower payload packing and small quaternion helpers.
 *
 * Master payload (28 floats): shoulder quat, wrist quat, elbow, 6 fingers,
 * shoulder angular velocity, wrist angular velocity, elbow velocity,
 * 6 finger velocities. Follower payload (26): 13 angles then 13 velocities.
 */

export type Quat = [number, number, number, number]; // (w, x, y, z)

export const QUAT_IDENTITY: Quat = [1, 0, 0, 0];

export function quatMultiply(a: Quat, b: Quat): Quat {
    return [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ];
}

export function quatAxisAngle(axis: [number, number, number], angle: number): Quat {
    const n = Math.hypot(...axis);
    if (n === 0) {
        return [...QUAT_IDENTITY];
    }
    const s = Math.sin(angle / 2) / n;
    return [Math.cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s];
}

/** Rx(a) * Ry(b) * Rz(c): matches the follower shoulder/wrist clusters. */
export function quatFromXyz(a: number, b: number, c: number): Quat {
    return quatMultiply(quatMultiply(quatAxisAngle([1, 0, 0], a), quatAxisAngle([0, 1, 0], b)),
        quatAxisAngle([0, 0, 1], c));
}

export function rotate(q: Quat, v: [number, number, number]): [number, number, number] {
    const [w, x, y, z] = q;
    const tx = 2 * (y * v[2] - z * v[1]);
    const ty = 2 * (z * v[0] - x * v[2]);
    const tz = 2 * (x * v[1] - y * v[0]);
    return [
        v[0] + w * tx + y * tz - z * ty,
        v[1] + w * ty + z * tx - x * tz,
        v[2] + w * tz + x * ty - y * tx,
    ];
}

export function rotationAngle(q: Quat): number {
    const w = Math.abs(q[0]);
    const s = Math.hypot(q[1], q[2], q[3]);
    return 2 * Math.atan2(s, w);
}

export interface MasterCommand {
    shoulder: [number, number, number];  // x/y/z cluster angles, rad
    wrist: [number, number, number];
    elbow: number;
    fingers: number;                     // one value fans out to all six joints
}

export const MASTER_PAYLOAD_LEN = 28;
export const FOLLOWER_PAYLOAD_LEN = 26;

export function masterPayload(cmd: MasterCommand): Float64Array {
    const p = new Float64Array(MASTER_PAYLOAD_LEN);
    p.set(quatFromXyz(...cmd.shoulder), 0);
    p.set(quatFromXyz(...cmd.wrist), 4);
    p[8] = cmd.elbow;
    for (let i = 0; i < 6; i++) {
        p[9 + i] = cmd.fingers;
    }
    // velocities (indices 15..27) stay zero: the controller treats console
    // updates as setpoints
    return p;
}

export interface MasterView {
    shoulderQ: Quat;
    wristQ: Quat;
    elbow: number;
    fingers: number[];
}

export function parseMasterPayload(p: Float64Array): MasterView {
    return {
        shoulderQ: [p[0], p[1], p[2], p[3]],
        wristQ: [p[4], p[5], p[6], p[7]],
        elbow: p[8],
        fingers: Array.from(p.subarray(9, 15)),
    };
}

export interface FollowerView {
    angles: number[];      // 13: shoulder x/y/z, elbow, wrist x/y/z, fingers
    velocities: number[];
}

export function parseFollowerPayload(p: Float64Array): FollowerView {
    return {
        angles: Array.from(p.subarray(0, 13)),
        velocities: Array.from(p.subarray(13, 26)),
    };
}

/** Shoulder tracking error angle between a commanded and a measured cluster. */
export function shoulderErrorAngle(cmd: Quat, follower: FollowerView): number {
    const meas = quatFromXyz(follower.angles[0], follower.angles[1], follower.angles[2]);
    const conj: Quat = [meas[0], -meas[1], -meas[2], -meas[3]];
    return rotationAngle(quatMultiply(conj, cmd));
}

/**
 * Latest-value cell: rendering reads at its own pace, message arrival only
 * ever replaces the value.
 */
export class LatestValue<T> {
    private value: T | null = null;
    private stamp = 0;

    set(value: T, nowMs: number): void {
        this.value = value;
        this.stamp = nowMs;
    }

    get(): T | null {
        return this.value;
    }

    ageMs(nowMs: number): number {
        return this.value === null ? Infinity : nowMs - this.stamp;
    }
}
