import init, { builtin, analyze, fluid, simulate } from "./pkg/subopt_web.js";

const $ = (id) => document.getElementById(id);

function show(id, fn) {
  const out = $(id);
  out.classList.remove("err");
  try {
    return fn(out);
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

// Two series against t on a shared axis, drawn straight onto the canvas.
function plot(canvas, points, keys, colors) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  if (points.length < 2) return;
  const t0 = points[0].t, t1 = points[points.length - 1].t || 1;
  const ymax = Math.max(1e-12, ...points.flatMap((p) => keys.map((k) => p[k])));
  const x = (t) => 40 + ((t - t0) / (t1 - t0 || 1)) * (w - 50);
  const y = (v) => h - 20 - (v / ymax) * (h - 30);
  ctx.fillStyle = "#eee";
  points.forEach((p, i) => {
    if (p.phase === "hold" && i + 1 < points.length) ctx.fillRect(x(p.t), 10, x(points[i + 1].t) - x(p.t), h - 30);
  });
  keys.forEach((k, n) => {
    ctx.strokeStyle = colors[n];
    ctx.beginPath();
    points.forEach((p, i) => (i ? ctx.lineTo(x(p.t), y(p[k])) : ctx.moveTo(x(p.t), y(p[k]))));
    ctx.stroke();
    ctx.fillStyle = colors[n];
    ctx.fillText(k, w - 60, 20 + 14 * n);
  });
  ctx.fillStyle = "#000";
  ctx.fillText(ymax.toPrecision(3), 2, 14);
  ctx.fillText(`t = ${t1.toPrecision(3)}`, w - 80, h - 4);
}

await init();

$("load").onclick = () => show("analysis", (out) => {
  $("network").value = builtin(Number($("builtin").value));
  out.textContent = "";
});

$("analyze").onclick = () => show("analysis", (out) => {
  const r = JSON.parse(analyze($("network").value));
  const lines = [
    `verdict: ${r.verdict}   M_max = ${r.m_max}`,
    `x* = ${r.allocation.x_star.map((v) => v.toFixed(4)).join(", ")}`,
    ...r.paths.map((p) => `${p.kind.padEnd(6)} ${p.label.padEnd(20)} weight ${p.weight}`),
  ];
  if (r.witness) lines.push(`witness: ${r.witness.label} (${r.witness.weight})`);
  out.textContent = lines.join("\n");
});

$("fluid").onclick = () => show("fluid-out", (out) => {
  const r = JSON.parse(fluid($("network").value, Number($("eps").value), $("pert").value));
  plot($("fluid-chart"), r.points, ["queued", "dev"], ["#c33", "#36c"]);
  out.textContent = [
    `tau = ${r.tau}${r.tau_tilde === r.tau ? " (deviation limit)" : ""}, holds = ${r.holds}`,
    ...r.checks.map((c) => `[${c.passed ? "pass" : "FAIL"}] ${c.name}: ${c.measured.toExponential(3)} vs ${c.bound.toExponential(3)}`),
  ].join("\n");
});

$("simulate").onclick = () => show("sim-out", (out) => {
  const r = JSON.parse(simulate($("network").value, BigInt($("n").value), Number($("horizon").value), BigInt($("seed").value)));
  plot($("sim-chart"), r.points, ["queued", "dev"], ["#c33", "#36c"]);
  const m = r.metrics;
  out.textContent = [
    r.error ? `stopped: ${r.error}` : "completed",
    `events ${m.event_count} (drain ${m.drain_events}, hold ${m.hold_events}, after stop ${m.post_tau_events})`,
    `busy fraction ${m.busy_fraction.toFixed(4)}, sup |X - X0| ${m.sup_x_dev}, K = ${m.k}`,
  ].join("\n");
});

$("load").click();
