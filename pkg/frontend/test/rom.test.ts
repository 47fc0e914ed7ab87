import { describe, expect, it } from "vitest";

import { axisStatus, clampCommand, clampToRom } from "../src/rom.js";

const ROM = {
    flexion: { min: -Math.PI / 3, max: Math.PI },
    abduction: { min: -Math.PI / 6, max: (5 * Math.PI) / 6 },
    horizontal: { min: -Math.PI / 6, max: (3 * Math.PI) / 4 },
};

describe("rom clamp", () => {
    it("accepts the extremes and rejects one degree past them", () => {
        const deg = Math.PI / 180;
        expect(axisStatus(180 * deg, ROM.flexion).within).toBe(true);
        expect(axisStatus(-60 * deg, ROM.flexion).within).toBe(true);
        expect(axisStatus(181 * deg, ROM.flexion).within).toBe(false);
        expect(axisStatus(-61 * deg, ROM.flexion).within).toBe(false);
        expect(axisStatus(150 * deg, ROM.abduction).within).toBe(true);
        expect(axisStatus(-31 * deg, ROM.abduction).within).toBe(false);
    });

    it("clamps values into range", () => {
        expect(clampToRom(10, ROM.flexion)).toBe(ROM.flexion.max);
        expect(clampToRom(-10, ROM.flexion)).toBe(ROM.flexion.min);
        expect(clampToRom(0.5, ROM.flexion)).toBe(0.5);
    });

    it("never lets an out-of-range command through", () => {
        const { clamped, status } = clampCommand(
            { flexion: 9.0, abduction: 0.1, horizontal: -9.0 }, ROM);
        expect(clamped.flexion).toBe(ROM.flexion.max);
        expect(clamped.horizontal).toBe(ROM.horizontal.min);
        expect(clamped.abduction).toBe(0.1);
        expect(status.flexion.within).toBe(false);
        expect(status.abduction.within).toBe(true);
        // every published value sits inside the limits
        for (const [axis, value] of Object.entries(clamped)) {
            const lim = ROM[axis as keyof typeof ROM];
            expect(value).toBeGreaterThanOrEqual(lim.min);
            expect(value).toBeLessThanOrEqual(lim.max);
        }
    });

    it("passes through axes without configured limits", () => {
        const { clamped } = clampCommand({ elbow: 42 }, ROM);
        expect(clamped.elbow).toBe(42);
    });
});
