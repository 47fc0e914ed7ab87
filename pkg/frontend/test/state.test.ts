import { describe, expect, it } from "vitest";

import {
    LatestValue, masterPayload, parseFollowerPayload, parseMasterPayload,
    quatFromXyz, quatMultiply, rotationAngle, shoulderErrorAngle,
} from "../src/state.js";

describe("master payload", () => {
    it("packs 28 floats with identity quaternions at rest", () => {
        const p = masterPayload({ shoulder: [0, 0, 0], wrist: [0, 0, 0], elbow: 0, fingers: 0 });
        expect(p.length).toBe(28);
        expect(Array.from(p.subarray(0, 4))).toEqual([1, 0, 0, 0]);
        expect(Array.from(p.subarray(4, 8))).toEqual([1, 0, 0, 0]);
        expect(Array.from(p.subarray(15))).toEqual(new Array(13).fill(0));
    });

    it("round-trips through the view parser", () => {
        const p = masterPayload({
            shoulder: [0.3, -0.2, 0.1], wrist: [0, 0, 0.4], elbow: 0.7, fingers: 0.5,
        });
        const view = parseMasterPayload(p);
        expect(view.elbow).toBeCloseTo(0.7, 12);
        expect(view.fingers).toEqual(new Array(6).fill(0.5));
        const expected = quatFromXyz(0.3, -0.2, 0.1);
        view.shoulderQ.forEach((v, i) => expect(v).toBeCloseTo(expected[i], 12));
    });
});

describe("follower payload", () => {
    it("splits angles and velocities", () => {
        const p = Float64Array.from({ length: 26 }, (_, i) => i);
        const view = parseFollowerPayload(p);
        expect(view.angles).toEqual([...Array(13).keys()]);
        expect(view.velocities[0]).toBe(13);
    });
});

describe("quaternions", () => {
    it("axis compositions match rotation angles", () => {
        const q = quatFromXyz(0.2, 0, 0);
        expect(rotationAngle(q)).toBeCloseTo(0.2, 12);
        const qq = quatMultiply(q, q);
        expect(rotationAngle(qq)).toBeCloseTo(0.4, 12);
    });

    it("shoulder error angle is zero when follower matches command", () => {
        const cmd = quatFromXyz(0.3, -0.1, 0.2);
        const follower = {
            angles: [0.3, -0.1, 0.2, ...new Array(10).fill(0)],
            velocities: new Array(13).fill(0),
        };
        expect(shoulderErrorAngle(cmd, follower)).toBeCloseTo(0, 9);
        const off = { ...follower, angles: [0.4, -0.1, 0.2, ...new Array(10).fill(0)] };
        expect(shoulderErrorAngle(cmd, off)).toBeCloseTo(0.1, 3);
    });
});

describe("latest-value cell", () => {
    it("keeps only the newest value and tracks age", () => {
        const cell = new LatestValue<number>();
        expect(cell.get()).toBeNull();
        expect(cell.ageMs(100)).toBe(Infinity);
        cell.set(1, 100);
        cell.set(2, 150);
        expect(cell.get()).toBe(2);
        expect(cell.ageMs(200)).toBe(50);
    });
});
