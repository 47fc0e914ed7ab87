/**
 * Operator console: sliders act as the master device, recorded trajectories
 * can be replayed with live perturbation, and master/follower tracking is
 * plotted continuously alongside ROM badges, a force gauge and a
 * stick-figure arm view.
 */

import { TimeSeriesPlot } from "./plot.js";
import { MasterSourceState, parseRecording } from "./playback.js";
import { encodeMessage, MsgType, WireMessage } from "./protocol.js";
import { clampCommand, RomLimits } from "./rom.js";
import { ConsoleSession, Hello, Telemetry } from "./session.js";
import {
    FollowerView, LatestValue, MasterCommand, masterPayload, MasterView,
    parseFollowerPayload, parseMasterPayload, quatAxisAngle, quatFromXyz,
    quatMultiply, rotate, shoulderErrorAngle,
} from "./state.js";

const SEND_INTERVAL_MS = 30;   // >= 30 Hz publish rate
const STALE_MS = 500;

const $ = (id: string) => document.getElementById(id)!;
const slider = (id: string) => $(id) as HTMLInputElement;

const SLIDERS = ["flexion", "abduction", "horizontal", "elbow", "wrist", "fingers"];

interface ConsoleUi {
    rom: RomLimits;
    session: ConsoleSession;
    source: MasterSourceState;
    reference: LatestValue<MasterView>;
    followers: Map<number, LatestValue<FollowerView>>;
    telemetry: LatestValue<Telemetry>;
    seq: bigint;
}

function sliderCommand(): MasterCommand {
    return {
        shoulder: [Number(slider("flexion").value), Number(slider("abduction").value),
            Number(slider("horizontal").value)],
        wrist: [0, 0, Number(slider("wrist").value)],
        elbow: Number(slider("elbow").value),
        fingers: Number(slider("fingers").value),
    };
}

function applyRomToSliders(rom: RomLimits): void {
    for (const axis of ["flexion", "abduction", "horizontal"]) {
        const lim = rom[axis];
        if (lim !== undefined) {
            slider(axis).min = String(lim.min);
            slider(axis).max = String(lim.max);
        }
    }
}

function updateBadges(ui: ConsoleUi, status: Record<string, { within: boolean }>): void {
    for (const [axis, s] of Object.entries(status)) {
        const el = document.getElementById(`badge-${axis}`);
        if (el !== null) {
            el.textContent = `${axis}: ${s.within ? "in range" : "out of range"}`;
            el.className = `badge ${s.within ? "ok" : "bad"}`;
        }
    }
}

function publishFrame(ui: ConsoleUi): void {
    const cmd = sliderCommand();
    const { clamped, status } = clampCommand(
        { flexion: cmd.shoulder[0], abduction: cmd.shoulder[1], horizontal: cmd.shoulder[2] },
        ui.rom);
    updateBadges(ui, status);
    cmd.shoulder = [clamped.flexion, clamped.abduction, clamped.horizontal];
    // reflect the clamp in the UI so the sliders never sit out of range
    slider("flexion").value = String(clamped.flexion);
    slider("abduction").value = String(clamped.abduction);
    slider("horizontal").value = String(clamped.horizontal);

    const payload = ui.source.framePayload(performance.now(), masterPayload(cmd));
    if (payload === null) {
        setPlaybackUi(false);
        return;
    }
    ui.seq += 1n;
    const msg: WireMessage = {
        msgType: MsgType.MasterState, streamId: 0, timestampUs: ui.seq, payload,
    };
    ui.session.send(encodeMessage(msg));
}

function drawStickFigure(ui: ConsoleUi, canvas: HTMLCanvasElement): void {
    const ctx = canvas.getContext("2d");
    if (ctx === null) {
        return;
    }
    const { width: w, height: h } = canvas;
    ctx.fillStyle = "#10151c";
    ctx.fillRect(0, 0, w, h);
    const origin = { x: w * 0.5, y: h * 0.3 };
    const scale = h * 0.28;
    ctx.strokeStyle = "#44526a";
    ctx.strokeRect(origin.x - 14, origin.y - 10, 28, 60);   // torso

    const first = ui.followers.values().next().value as LatestValue<FollowerView> | undefined;
    const view = first?.get();
    if (view === undefined || view === null) {
        return;
    }
    const shoulderQ = quatFromXyz(view.angles[0], view.angles[1], view.angles[2]);
    const upper = rotate(shoulderQ, [0, 0, -1]);
    const elbowQ = quatMultiply(shoulderQ, quatAxisAngle([0, 1, 0], view.angles[3]));
    const fore = rotate(elbowQ, [0, 0, -1]);
    // project onto the sagittal plane: x forward (right on canvas), z up
    const elbow = {
        x: origin.x + upper[0] * scale,
        y: origin.y - upper[2] * scale,
    };
    const wrist = {
        x: elbow.x + fore[0] * scale * 0.85,
        y: elbow.y - fore[2] * scale * 0.85,
    };
    ctx.lineWidth = 4;
    ctx.strokeStyle = "#58a6ff";
    ctx.beginPath();
    ctx.moveTo(origin.x, origin.y);
    ctx.lineTo(elbow.x, elbow.y);
    ctx.stroke();
    ctx.strokeStyle = "#7ee787";
    ctx.beginPath();
    ctx.moveTo(elbow.x, elbow.y);
    ctx.lineTo(wrist.x, wrist.y);
    ctx.stroke();
    ctx.fillStyle = "#e6edf3";
    for (const p of [origin, elbow, wrist]) {
        ctx.beginPath();
        ctx.arc(p.x, p.y, 4, 0, 2 * Math.PI);
        ctx.fill();
    }
    const grip = 1 - Math.min(Math.max(view.angles[7], 0), 1.6) / 1.6;
    ctx.fillStyle = "#8899aa";
    ctx.fillText(`grip ${(grip * 100).toFixed(0)}%`, wrist.x + 8, wrist.y);
}

function setPlaybackUi(playing: boolean): void {
    ($("play") as HTMLButtonElement).disabled = playing;
    ($("stop") as HTMLButtonElement).disabled = !playing;
    for (const id of SLIDERS) {
        slider(id).disabled = playing;
    }
    $("mode").textContent = playing ? "playback" : "sliders";
}

function banner(text: string, kind: "ok" | "warn" | "bad"): void {
    const el = $("banner");
    el.textContent = text;
    el.className = `banner ${kind}`;
}

function main(): void {
    const plotTrack = new TimeSeriesPlot(
        [{ label: "master flexion", color: "#58a6ff" },
         { label: "follower", color: "#7ee787" }]);
    const plotError = new TimeSeriesPlot([{ label: "shoulder error (rad)", color: "#ff7b72" }]);

    const ui: ConsoleUi = {
        rom: {},
        session: null as unknown as ConsoleSession,
        source: new MasterSourceState(),
        reference: new LatestValue<MasterView>(),
        followers: new Map(),
        telemetry: new LatestValue<Telemetry>(),
        seq: 0n,
    };

    const proto = location.protocol === "https:" ? "wss" : "ws";
    ui.session = new ConsoleSession(`${proto}://${location.host}/ws/console`, {
        onHello: (hello: Hello) => {
            ui.rom = hello.rom;
            applyRomToSliders(hello.rom);
            $("followers").textContent = hello.followers.join(", ");
            banner(`connected (${hello.tickHz} Hz controller)`, "ok");
        },
        onState: (state, detail) => {
            if (state === "connected") {
                banner("connected", "ok");
            } else if (state === "connecting") {
                banner(`connecting to ${detail}`, "warn");
            } else {
                banner(`connection lost; ${detail}`, "bad");
            }
        },
        onMessage: (msg) => {
            const now = performance.now();
            if (msg.msgType === MsgType.MasterState) {
                ui.reference.set(parseMasterPayload(msg.payload), now);
            } else if (msg.msgType === MsgType.FollowerState) {
                let cell = ui.followers.get(msg.streamId);
                if (cell === undefined) {
                    cell = new LatestValue<FollowerView>();
                    ui.followers.set(msg.streamId, cell);
                }
                cell.set(parseFollowerPayload(msg.payload), now);
            }
        },
        onTelemetry: (t) => ui.telemetry.set(t, performance.now()),
    });
    ui.session.connect();

    setInterval(() => publishFrame(ui), SEND_INTERVAL_MS);

    const t0 = performance.now();
    setInterval(() => {
        const now = performance.now();
        const tS = (now - t0) / 1000;
        const ref = ui.reference.get();
        const cell = ui.followers.values().next().value as LatestValue<FollowerView> | undefined;
        const follower = cell?.get();
        if (ref !== null && follower !== undefined && follower !== null) {
            // track the flexion axis: commanded vs measured shoulder x
            const cmdAngle = 2 * Math.atan2(ref.shoulderQ[1], ref.shoulderQ[0]);
            plotTrack.push(tS, [cmdAngle, follower.angles[0]]);
            plotError.push(tS, [shoulderErrorAngle(ref.shoulderQ, follower)]);
        }
        plotTrack.draw($("plot-track") as HTMLCanvasElement);
        plotError.draw($("plot-error") as HTMLCanvasElement);
        drawStickFigure(ui, $("figure") as HTMLCanvasElement);

        const age = cell === undefined ? Infinity : cell.ageMs(now);
        $("latency").textContent = isFinite(age) ? `${age.toFixed(0)} ms` : "no data";
        $("stale").textContent = age > STALE_MS ? "STALE" : "";
        const tele = ui.telemetry.get();
        if (tele !== null) {
            const gauge = $("force-fill");
            const mag = Math.min(tele.force / 2.0, 1.0);
            gauge.style.width = `${(mag * 100).toFixed(0)}%`;
            $("force-value").textContent = `${tele.force.toFixed(2)} N`;
            if (tele.events.length > 0) {
                $("events").textContent = tele.events.join(", ");
            }
        }
        if (ui.session.droppedUpdates > 0) {
            $("dropped").textContent = `${ui.session.droppedUpdates} updates dropped`;
        }
    }, 33);

    $("perturb").addEventListener("click", () => {
        ui.source.triggerPerturbation(performance.now());
    });
    $("play").addEventListener("click", async () => {
        const path = (slider("recording") as HTMLInputElement).value.trim();
        if (path === "") {
            banner("enter a recording path first", "warn");
            return;
        }
        try {
            const resp = await fetch("/api/log/master-frames", {
                method: "POST",
                headers: { "content-type": "application/json" },
                body: JSON.stringify({ path }),
            });
            if (!resp.ok) {
                throw new Error((await resp.json()).detail ?? resp.statusText);
            }
            ui.source.startPlayback(parseRecording(await resp.json()), performance.now());
            setPlaybackUi(true);
        } catch (err) {
            banner(`playback failed: ${err}`, "bad");
        }
    });
    $("stop").addEventListener("click", () => {
        ui.source.stopPlayback();
        setPlaybackUi(false);
    });

    for (const id of SLIDERS) {
        slider(id).addEventListener("input", () => {
            $(`value-${id}`).textContent = Number(slider(id).value).toFixed(2);
        });
    }
}

main();
