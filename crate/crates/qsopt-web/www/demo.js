import init, { optimize, s_curve, success_curves } from "./pkg/qsopt_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

const field = (box, name) => Number(box.querySelector(`[name=${name}]`).value);

function fail(box, err) {
  box.querySelector(".out, .key").innerHTML = `<span class="err">${err.message ?? err}</span>`;
}

// Minimal line plot: series = [{ label, xs, ys }], optional log x axis.
function plot(canvas, series, { logX = false, xLabel = "", yLabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = { l: 60, r: 12, t: 12, b: 36 };
  const tx = logX ? Math.log10 : (x) => x;
  const all = series.flatMap((s) => s.xs.map(tx));
  const ally = series.flatMap((s) => s.ys);
  const [x0, x1] = [Math.min(...all), Math.max(...all)];
  let [y0, y1] = [Math.min(...ally), Math.max(...ally)];
  if (y0 === y1) { y0 -= 1; y1 += 1; }
  const px = (x) => pad.l + ((tx(x) - x0) / (x1 - x0)) * (w - pad.l - pad.r);
  const py = (y) => h - pad.b - ((y - y0) / (y1 - y0)) * (h - pad.t - pad.b);

  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  ctx.fillStyle = "#444";
  ctx.font = "12px system-ui";
  for (let i = 0; i <= 4; i++) {
    const y = y0 + ((y1 - y0) * i) / 4;
    ctx.fillText(y.toPrecision(4), 4, py(y) + 4);
    const x = x0 + ((x1 - x0) * i) / 4;
    const shown = logX ? `1e${x.toFixed(1)}` : x.toPrecision(3);
    ctx.fillText(shown, pad.l + ((x - x0) / (x1 - x0)) * (w - pad.l - pad.r) - 14, h - pad.b + 16);
  }
  ctx.fillText(xLabel, w / 2, h - 4);
  ctx.fillText(yLabel, pad.l + 6, pad.t + 14);

  series.forEach((s, i) => {
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.xs.forEach((x, j) => (j ? ctx.lineTo(px(x), py(s.ys[j])) : ctx.moveTo(px(x), py(s.ys[j]))));
    ctx.stroke();
  });
}

function legend(box, series) {
  box.querySelector(".key").innerHTML = series
    .map((s, i) => `<span style="background:${COLORS[i % COLORS.length]}"></span>${s.label}`)
    .join("");
}

function runOptimize() {
  const box = document.getElementById("opt");
  try {
    const r = optimize(field(box, "n"), field(box, "k"), field(box, "p"), field(box, "dp"));
    const rows = [
      ["iterations, standard", r.j_standard],
      ["iterations, optimized", r.j_min],
      ["simulated average success", r.simulated_success.toFixed(6)],
      ["oracle calls per success", r.queries_per_success.toFixed(3)],
      ["curvature factor S", r.s_factor.toPrecision(6)],
      ["dλ", `${r.delta_lambda.toPrecision(6)} (${r.third_order ? "third" : "second"} order)`],
      ["effective range of ΔP", r.valid_range.toPrecision(4)],
    ];
    box.querySelector(".out").innerHTML =
      "<table>" + rows.map(([k, v]) => `<tr><td>${k}</td><td>${v}</td></tr>`).join("") + "</table>";
    r.free();
  } catch (e) {
    fail(box, e);
  }
}

function runCurvature() {
  const box = document.getElementById("curv");
  try {
    const n = field(box, "n");
    const ks = box.querySelector("[name=ks]").value.split(",").map(Number).filter((k) => k > 0 && k < n);
    const series = ks.map((k) => {
      const flat = s_curve(n, k, 121);
      const xs = [], ys = [];
      for (let i = 0; i < flat.length; i += 2) { xs.push(flat[i]); ys.push(flat[i + 1]); }
      return { label: `K = ${k}`, xs, ys };
    });
    legend(box, series);
    plot(box.querySelector("canvas"), series, { logX: true, xLabel: "p", yLabel: "S" });
  } catch (e) {
    fail(box, e);
  }
}

function runPath() {
  const box = document.getElementById("path");
  try {
    const flat = success_curves(field(box, "n"), field(box, "k"), field(box, "p"), field(box, "max"), 201);
    const xs = [], opt = [], std = [];
    for (let i = 0; i < flat.length; i += 3) { xs.push(flat[i]); opt.push(flat[i + 1]); std.push(flat[i + 2]); }
    const series = [
      { label: "optimized state and axis", xs, ys: opt },
      { label: "uniform state and axis", xs, ys: std },
    ];
    legend(box, series);
    plot(box.querySelector("canvas"), series, { xLabel: "dλ", yLabel: "average success" });
  } catch (e) {
    fail(box, e);
  }
}

await init();
for (const [id, run] of [["opt", runOptimize], ["curv", runCurvature], ["path", runPath]]) {
  document.querySelector(`#${id} button`).addEventListener("click", run);
  run();
}
