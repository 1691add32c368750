import init, { ecg_chain, emd, fundus } from "./pkg/cardiofuse_web.js";

const $ = (id) => document.getElementById(id);

function line(ctx, xs, ys, color, box) {
  const [x0, x1, y0, y1] = box;
  const { width: w, height: h } = ctx.canvas;
  ctx.strokeStyle = color;
  ctx.lineWidth = 1;
  ctx.beginPath();
  xs.forEach((x, i) => {
    const px = ((x - x0) / (x1 - x0)) * w;
    const py = h - ((ys[i] - y0) / (y1 - y0)) * h;
    i ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
  });
  ctx.stroke();
}

function bars(ctx, values, color, top) {
  const { width: w, height: h } = ctx.canvas;
  const bw = w / values.length;
  ctx.fillStyle = color;
  values.forEach((v, i) => {
    const bh = (v / top) * (h - 4);
    ctx.fillRect(i * bw + 1, h - bh, bw - 2, bh);
  });
}

function clear(ctx) {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
}

function runEcg() {
  const r = JSON.parse(ecg_chain(Number($("ecg-seed").value) >>> 0, $("ecg-anomaly").value));
  const t = r.raw.map((_, i) => i / r.fs);
  const all = r.raw.concat(r.filtered);
  const box = [0, t[t.length - 1], Math.min(...all) - 0.1, Math.max(...all) + 0.1];
  const wave = $("ecg-wave").getContext("2d");
  clear(wave);
  line(wave, t, r.raw, "#bbb", box);
  line(wave, t, r.filtered, "#2563eb", box);
  wave.fillStyle = "#dc2626";
  for (const p of r.peaks_s) {
    const i = Math.round(p * r.fs);
    const px = (p / box[1]) * wave.canvas.width;
    const py = wave.canvas.height - ((r.filtered[i] - box[2]) / (box[3] - box[2])) * wave.canvas.height;
    wave.beginPath();
    wave.arc(px, py, 3, 0, 2 * Math.PI);
    wave.fill();
  }
  const spec = $("ecg-spectrum").getContext("2d");
  clear(spec);
  bars(spec, r.spectrum, "#2563eb", Math.max(...r.spectrum));
  const fmt = (v, d) => (v == null ? "NA" : v.toFixed(d));
  $("ecg-stats").textContent =
    `${r.peaks_s.length} peaks (truth ${r.true_peaks_s.length}), ${r.beats} beats, ` +
    `HR ${fmt(r.mean_hr, 1)} bpm, SDNN ${fmt(r.hrv_sdnn && r.hrv_sdnn * 1000, 1)} ms, ` +
    `spectrum 0-${r.freq_hz[r.freq_hz.length - 1].toFixed(0)} Hz`;
}

const BINS = 24;
const hist = { p: [], q: [] };

function resetHist() {
  hist.p = Array.from({ length: BINS }, (_, i) => Math.exp(-((i - 6) ** 2) / 8));
  hist.q = Array.from({ length: BINS }, (_, i) => Math.exp(-((i - 15) ** 2) / 12));
}

function drawEmd() {
  const r = JSON.parse(emd(Float64Array.from(hist.p), Float64Array.from(hist.q)));
  for (const [key, color] of [["p", "#2563eb"], ["q", "#ea580c"]]) {
    const ctx = $(`emd-${key}`).getContext("2d");
    clear(ctx);
    bars(ctx, hist[key], color, 1);
  }
  const cdf = $("emd-cdf").getContext("2d");
  clear(cdf);
  const { width: w, height: h } = cdf.canvas;
  const step = w / BINS;
  // the EMD is the area between the two CDFs
  cdf.fillStyle = "rgba(120,120,120,0.25)";
  r.cdf_p.forEach((a, i) => {
    const b = r.cdf_q[i];
    cdf.fillRect(i * step, h - Math.max(a, b) * h, step, Math.abs(a - b) * h);
  });
  const xs = r.cdf_p.map((_, i) => i + 1);
  line(cdf, xs, r.cdf_p, "#2563eb", [0, BINS, 0, 1]);
  line(cdf, xs, r.cdf_q, "#ea580c", [0, BINS, 0, 1]);
  $("emd-value").textContent = `EMD = ${r.emd.toFixed(4)} bins`;
}

function editable(key) {
  const canvas = $(`emd-${key}`);
  let down = false;
  const set = (ev) => {
    const rect = canvas.getBoundingClientRect();
    const i = Math.floor(((ev.clientX - rect.left) / rect.width) * BINS);
    const v = 1 - (ev.clientY - rect.top) / rect.height;
    if (i >= 0 && i < BINS) {
      hist[key][i] = Math.max(0, Math.min(1, v));
      try {
        drawEmd();
      } catch (e) {
        $("emd-value").textContent = e.message;
      }
    }
  };
  canvas.addEventListener("pointerdown", (ev) => { down = true; set(ev); });
  canvas.addEventListener("pointermove", (ev) => down && set(ev));
  window.addEventListener("pointerup", () => { down = false; });
}

function gray(canvas, width, height, pixels) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(width, height);
  pixels.forEach((v, i) => {
    img.data.set([v, v, v, 255], 4 * i);
  });
  ctx.putImageData(img, 0, 0);
}

function runFundus() {
  const r = JSON.parse(fundus(Number($("fundus-seed").value) >>> 0, $("fundus-abnormal").checked));
  gray($("fundus-image"), r.width, r.height, r.pixels);
  gray($("fundus-fft"), r.width, r.height, r.spectrum_pixels);
  const ctx = $("fundus-radial").getContext("2d");
  clear(ctx);
  bars(ctx, r.radial, "#059669", Math.max(...r.radial));
  $("fundus-stats").textContent = `tortuosity ${r.tortuosity.toFixed(2)}`;
}

await init();
resetHist();
editable("p");
editable("q");
$("ecg-run").addEventListener("click", runEcg);
$("fundus-run").addEventListener("click", runFundus);
$("emd-reset").addEventListener("click", () => { resetHist(); drawEmd(); });
runEcg();
drawEmd();
runFundus();
