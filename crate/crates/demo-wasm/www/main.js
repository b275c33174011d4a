import init, { unfollow_entropy, fit_power_law, svm_decision_grid } from "./pkg/shadowmarket_demo.js";

await init();

const $ = (id) => document.getElementById(id);

function show(id, f) {
  try {
    $(id).textContent = f();
  } catch (e) {
    $(id).textContent = "error: " + (e.message ?? e);
  }
}

$("entropy-run").onclick = () =>
  show("entropy-out", () => {
    const counts = $("counts").value.split(",").map((s) => Number(s.trim()));
    return "H = " + unfollow_entropy(Float64Array.from(counts)).toFixed(4);
  });

$("pl-run").onclick = () =>
  show("pl-out", () => {
    const alpha = Number($("pl-alpha").value);
    const xmin = Number($("pl-xmin").value);
    const n = Number($("pl-n").value);
    const xs = new Float64Array(n);
    for (let i = 0; i < n; i++) xs[i] = xmin * Math.pow(1 - Math.random(), -1 / (alpha - 1));
    const [a, sigma, x0] = fit_power_law(xs);
    return `alpha = ${a.toFixed(4)} ± ${sigma.toFixed(4)}  (x_min = ${x0.toPrecision(4)}, n = ${n})`;
  });

const canvas = $("svm");
const ctx = canvas.getContext("2d");
let points = [];
const RES = 80;

function draw() {
  const w = canvas.width;
  ctx.clearRect(0, 0, w, w);
  const labels = points.map((p) => p.label);
  if (labels.includes(1) && labels.includes(-1)) {
    show("svm-out", () => {
      const grid = svm_decision_grid(
        Float64Array.from(points.flatMap((p) => [p.x, p.y])),
        Float64Array.from(labels),
        Number($("svm-c").value),
        Number($("svm-gamma").value),
        RES,
      );
      const cell = w / (RES - 1);
      for (let r = 0; r < RES; r++) {
        for (let q = 0; q < RES; q++) {
          const v = grid[r * RES + q];
          const s = Math.min(1, Math.abs(v));
          ctx.fillStyle = v > 0 ? `rgba(214,39,40,${0.15 + 0.35 * s})` : `rgba(31,119,180,${0.15 + 0.35 * s})`;
          ctx.fillRect(q * cell - cell / 2, w - r * cell - cell / 2, cell, cell);
        }
      }
      return `${points.length} points`;
    });
  } else {
    $("svm-out").textContent = "add points of both classes";
  }
  for (const p of points) {
    ctx.beginPath();
    ctx.arc(p.x * w, w - p.y * w, 5, 0, 2 * Math.PI);
    ctx.fillStyle = p.label > 0 ? "#d62728" : "#1f77b4";
    ctx.fill();
    ctx.strokeStyle = "#000";
    ctx.stroke();
  }
}

canvas.onclick = (ev) => {
  const rect = canvas.getBoundingClientRect();
  points.push({
    x: (ev.clientX - rect.left) / rect.width,
    y: 1 - (ev.clientY - rect.top) / rect.height,
    label: ev.shiftKey ? -1 : 1,
  });
  draw();
};
$("svm-clear").onclick = () => {
  points = [];
  draw();
};
$("svm-c").onchange = draw;
$("svm-gamma").onchange = draw;
draw();
