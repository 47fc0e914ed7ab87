/**
 * Minimal canvas time-series plot: fixed time window, auto-scaled y, one
 * colored trace per channel.
 */

export interface Trace {
    label: string;
    color: string;
}

export class TimeSeriesPlot {
    private times: number[] = [];
    private values: number[][] = [];

    constructor(private traces: Trace[], private windowS = 10, private yPad = 0.1) {
        this.values = traces.map(() => []);
    }

    push(t: number, vs: number[]): void {
        this.times.push(t);
        vs.forEach((v, i) => this.values[i].push(v));
        const cutoff = t - this.windowS;
        while (this.times.length > 0 && this.times[0] < cutoff) {
            this.times.shift();
            this.values.forEach((arr) => arr.shift());
        }
    }

    draw(canvas: HTMLCanvasElement): void {
        const ctx = canvas.getContext("2d");
        if (ctx === null) {
            return;
        }
        const { width: w, height: h } = canvas;
        ctx.fillStyle = "#10151c";
        ctx.fillRect(0, 0, w, h);
        if (this.times.length < 2) {
            return;
        }
        let lo = Infinity;
        let hi = -Infinity;
        for (const arr of this.values) {
            for (const v of arr) {
                lo = Math.min(lo, v);
                hi = Math.max(hi, v);
            }
        }
        if (!isFinite(lo) || hi - lo < 1e-9) {
            lo -= 0.1;
            hi += 0.1;
        }
        const pad = (hi - lo) * this.yPad;
        lo -= pad;
        hi += pad;
        const t0 = this.times[this.times.length - 1] - this.windowS;
        const sx = (t: number) => ((t - t0) / this.windowS) * w;
        const sy = (v: number) => h - ((v - lo) / (hi - lo)) * h;

        ctx.strokeStyle = "#2a3442";
        ctx.lineWidth = 1;
        const zeroY = sy(0);
        if (zeroY >= 0 && zeroY <= h) {
            ctx.beginPath();
            ctx.moveTo(0, zeroY);
            ctx.lineTo(w, zeroY);
            ctx.stroke();
        }

        this.traces.forEach((trace, i) => {
            ctx.strokeStyle = trace.color;
            ctx.lineWidth = 1.5;
            ctx.beginPath();
            this.times.forEach((t, k) => {
                const x = sx(t);
                const y = sy(this.values[i][k]);
                if (k === 0) {
                    ctx.moveTo(x, y);
                } else {
                    ctx.lineTo(x, y);
                }
            });
            ctx.stroke();
            ctx.fillStyle = trace.color;
            ctx.font = "11px sans-serif";
            ctx.fillText(trace.label, 8 + i * 90, 14);
        });

        ctx.fillStyle = "#8899aa";
        ctx.font = "10px sans-serif";
        ctx.fillText(hi.toFixed(3), w - 44, 12);
        ctx.fillText(lo.toFixed(3), w - 44, h - 4);
    }
}
