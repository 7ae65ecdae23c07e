import init, { simulate_paths, loglik_spread, correlated_pairs } from "./pkg/sdemem_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function extent(values) {
  let lo = Infinity, hi = -Infinity;
  for (const v of values) { if (v < lo) lo = v; if (v > hi) hi = v; }
  return hi > lo ? [lo, hi] : [lo - 1, hi + 1];
}

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

const palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

function drawPaths() {
  const units = num("sim-units"), n = num("sim-n");
  const y = simulate_paths(units, n, 0.5, 10.0, 0.4, num("sim-sd"), BigInt(num("sim-seed")));
  const canvas = $("sim-plot");
  const ctx = clear(canvas);
  const [lo, hi] = extent(y);
  const sx = (t) => 10 + (t / (n - 1)) * (canvas.width - 20);
  const sy = (v) => canvas.height - 10 - ((v - lo) / (hi - lo)) * (canvas.height - 20);
  for (let i = 0; i < units; i++) {
    ctx.strokeStyle = palette[i % palette.length];
    ctx.beginPath();
    for (let t = 0; t < n; t++) {
      const v = y[i * n + t];
      t === 0 ? ctx.moveTo(sx(t), sy(v)) : ctx.lineTo(sx(t), sy(v));
    }
    ctx.stroke();
  }
}

function sd(xs) {
  const m = xs.reduce((a, b) => a + b, 0) / xs.length;
  return Math.sqrt(xs.reduce((a, b) => a + (b - m) ** 2, 0) / (xs.length - 1));
}

function drawSpread() {
  const args = [num("ll-n"), num("ll-reps"), 50, num("ll-sd"), 7n];
  const series = [["bootstrap", loglik_spread("bootstrap", ...args)], ["bridge", loglik_spread("bridge", ...args)]];
  const canvas = $("ll-plot");
  const ctx = clear(canvas);
  const [lo, hi] = extent(series.flatMap(([, v]) => Array.from(v)));
  const bins = 40, w = (hi - lo) / bins;
  series.forEach(([name, v], k) => {
    const counts = new Array(bins).fill(0);
    for (const x of v) counts[Math.min(bins - 1, Math.floor((x - lo) / w))]++;
    const top = Math.max(...counts);
    ctx.fillStyle = palette[k] + "99";
    counts.forEach((c, b) => {
      const h = (c / top) * (canvas.height - 20);
      ctx.fillRect(10 + (b / bins) * (canvas.width - 20), canvas.height - 10 - h, (canvas.width - 20) / bins - 1, h);
    });
  });
  $("ll-out").textContent = series.map(([name, v]) => `${name}: sd ${sd(Array.from(v)).toFixed(3)}`).join("   ");
}

function drawPairs() {
  const reps = num("cp-reps");
  const flat = correlated_pairs(num("cp-rho"), num("cp-n"), reps, 50, 11n);
  const a = [], b = [];
  for (let k = 0; k < reps; k++) { a.push(flat[2 * k]); b.push(flat[2 * k + 1]); }
  const canvas = $("cp-plot");
  const ctx = clear(canvas);
  const [lo, hi] = extent(a.concat(b));
  const s = (v) => 10 + ((v - lo) / (hi - lo)) * (canvas.width - 20);
  ctx.fillStyle = palette[0];
  for (let k = 0; k < reps; k++) ctx.fillRect(s(a[k]) - 1.5, canvas.height - s(b[k]) - 1.5, 3, 3);
  const ma = a.reduce((x, y) => x + y) / reps, mb = b.reduce((x, y) => x + y) / reps;
  let sab = 0, saa = 0, sbb = 0;
  for (let k = 0; k < reps; k++) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) ** 2;
    sbb += (b[k] - mb) ** 2;
  }
  const diff = a.map((x, k) => b[k] - x);
  $("cp-out").textContent =
    `corr ${(sab / Math.sqrt(saa * sbb)).toFixed(3)}   sd of log ratio ${sd(diff).toFixed(3)}`;
}

function guard(f, out) {
  return () => {
    try { f(); } catch (e) { if (out) $(out).textContent = String(e); else console.error(e); }
  };
}

await init();
$("sim-run").onclick = guard(drawPaths);
$("ll-run").onclick = guard(drawSpread, "ll-out");
$("cp-run").onclick = guard(drawPairs, "cp-out");
drawPaths();
