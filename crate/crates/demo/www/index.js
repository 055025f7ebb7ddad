import init, { mixing_curves, eigenvalue_paths, spectrum_histogram } from "./pkg/bernoulli_walk_demo.js";

const $ = (id) => document.getElementById(id);

function settings() {
  return { kind: $("kind").value, n: Number($("n").value), seed: BigInt($("seed").value || 0) };
}

function rows(table) {
  const data = table.data;
  const out = [];
  for (let i = 0; i < data.length; i += table.columns) out.push(data.subarray(i, i + table.columns));
  table.free();
  return out;
}

function plot(canvas, series, { xs, bars = null }) {
  const ratio = window.devicePixelRatio || 1;
  canvas.width = canvas.clientWidth * ratio;
  canvas.height = canvas.clientHeight * ratio;
  const ctx = canvas.getContext("2d");
  ctx.scale(ratio, ratio);
  const w = canvas.clientWidth, h = canvas.clientHeight, pad = 36;
  const finite = (v) => Number.isFinite(v);
  const all = series.flatMap((s) => s.ys).concat(bars ? bars.ys : []).filter(finite);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(0, ...all), Math.max(...all)];
  const px = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);

  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#bbb";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px system-ui";
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad - 24, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  ctx.fillText(y0.toPrecision(3), 2, h - pad);

  if (bars) {
    ctx.fillStyle = bars.color;
    const bw = (w - 2 * pad) / xs.length;
    xs.forEach((x, i) => ctx.fillRect(px(x) - bw / 2, py(bars.ys[i]), bw - 1, py(0) - py(bars.ys[i])));
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width || 1.5;
    ctx.beginPath();
    s.ys.forEach((y, i) => (i ? ctx.lineTo(px(xs[i]), py(y)) : ctx.moveTo(px(xs[i]), py(y))));
    ctx.stroke();
  }
}

function guarded(statusId, f) {
  return () => {
    $(statusId).textContent = "";
    try {
      f();
    } catch (e) {
      $(statusId).textContent = e.message || String(e);
    }
  };
}

function drawMixing() {
  const { kind, n } = settings();
  const r = rows(mixing_curves(kind, n, Number($("mix-eta").value)));
  const xs = r.map((row) => row[0]);
  const tail = r.map((row) => Math.min(row[3], 1.05));
  plot($("mix"), [
    { ys: tail, color: "#999", width: 1 },
    { ys: r.map((row) => row[2]), color: "#e65100" },
    { ys: r.map((row) => row[1]), color: "#1565c0", width: 2 },
  ], { xs });
}

function drawPaths() {
  const { kind, n, seed } = settings();
  const r = rows(eigenvalue_paths(kind, n, Number($("path-eta").value), seed));
  const xs = r.map((row) => row[0]);
  const series = [];
  for (let k = 1; k < r[0].length; k++) series.push({ ys: r.map((row) => row[k]), color: "#1565c0", width: 1 });
  plot($("paths"), series, { xs });
}

function drawHistogram() {
  const { kind, n, seed } = settings();
  const draws = Number($("hist-draws").value), bins = Number($("hist-bins").value);
  const r = rows(spectrum_histogram(kind, n, draws, bins, seed));
  const xs = r.map((row) => row[0]);
  plot($("hist"), [{ ys: r.map((row) => row[2]), color: "#e65100", width: 2 }], {
    xs,
    bars: { ys: r.map((row) => row[1]), color: "#90caf9" },
  });
}

await init();
$("mix-run").onclick = guarded("mix-status", drawMixing);
$("path-run").onclick = guarded("path-status", drawPaths);
$("hist-run").onclick = guarded("hist-status", drawHistogram);
$("mix-run").click();
$("path-run").click();
$("hist-run").click();
