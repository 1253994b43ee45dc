import init, { model_curves, torque_vs_tilt, angle_error_profile } from "./pkg/nearground_demo.js";

const $ = (id) => document.getElementById(id);

function call(fn, ...args) {
  const out = JSON.parse(fn(...args));
  if (out.error) throw new Error(out.error);
  return out;
}

// Draws one or more [x, y] series with shared axes.
function plot(canvas, series, xLabel, yLabel) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 50;
  ctx.clearRect(0, 0, w, h);
  const pts = series.flatMap((s) => s.points).filter(([x, y]) => Number.isFinite(x) && Number.isFinite(y));
  if (pts.length === 0) return;
  let [x0, x1] = [Math.min(...pts.map((p) => p[0])), Math.max(...pts.map((p) => p[0]))];
  let [y0, y1] = [Math.min(0, ...pts.map((p) => p[1])), Math.max(...pts.map((p) => p[1]))];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) y1 = y0 + 1;
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const sy = (y) => h - pad + ((y0 - y) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#333";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();
  ctx.fillText(x0.toPrecision(3), pad, h - pad + 14);
  ctx.fillText(x1.toPrecision(3), w - pad - 20, h - pad + 14);
  ctx.fillText(y1.toPrecision(3), 4, pad);
  ctx.fillText(y0.toPrecision(3), 4, h - pad);
  ctx.fillText(xLabel, w / 2, h - 12);
  ctx.fillText(yLabel, 4, pad / 2 - 6);

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.points.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
  }
}

function column(data, name) {
  const i = data.columns.indexOf(name);
  return data.rows.map((r) => [r[0], r[i]]);
}

function drawCurves() {
  const data = call(model_curves, Number($("hmax").value), 300);
  const name = $("curve").value;
  plot($("curves"), [{ color: "#1565c0", points: column(data, name) }], "h (m)", name);
}

function drawTilt() {
  const h = Number($("tilt-h").value);
  $("tilt-h-val").textContent = h.toFixed(2);
  const data = call(torque_vs_tilt, h, 15, 60);
  plot(
    $("tilt"),
    [
      { color: "#1565c0", points: column(data, "model") },
      { color: "#c62828", points: column(data, "closed_form") },
      { color: "#2e7d32", points: column(data, "quadrature") },
    ],
    "tilt (deg)",
    "torque (N m)",
  );
}

function fly() {
  $("fly-summary").textContent = "flying...";
  setTimeout(() => {
    try {
      const out = call(angle_error_profile, $("mode").value, BigInt($("seed").value), Number($("dtime").value));
      plot($("profile"), [{ color: "#6a1b9a", points: out.profile }], "h0 (m)", "E (deg)");
      const peak = out.peak ? `peak ${out.peak[1].toFixed(4)} deg at ${out.peak[0].toFixed(3)} m` : "no samples";
      const flat = out.max_over_mean ? `, max/mean ${out.max_over_mean.toFixed(2)}` : "";
      const crash = out.crashed_at !== null ? `, crashed at ${out.crashed_at.toFixed(2)} s` : "";
      $("fly-summary").textContent = peak + flat + crash;
    } catch (e) {
      $("fly-summary").textContent = e.message;
    }
  }, 10);
}

await init();
$("status").textContent = "";
$("hmax").addEventListener("input", drawCurves);
$("curve").addEventListener("change", drawCurves);
$("tilt-h").addEventListener("input", drawTilt);
$("fly").addEventListener("click", fly);
drawCurves();
drawTilt();
