import init, { beta_histogram, solver_paths, RingDemo } from "./pkg/flowdj_web.js";

const $ = (id) => document.getElementById(id);

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();
}

function polyline(ctx, pts, sx, sy, colour, dots) {
  ctx.strokeStyle = colour;
  ctx.fillStyle = colour;
  ctx.lineWidth = 2;
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
  ctx.stroke();
  if (dots) {
    for (const [x, y] of pts) {
      ctx.beginPath();
      ctx.arc(sx(x), sy(y), 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

// 1. Beta histogram -------------------------------------------------------------

let betaSeed = 1;

function drawBeta() {
  const alpha = +$("alpha").value;
  $("alpha-v").textContent = alpha.toFixed(2);
  const bins = 40;
  const out = beta_histogram(alpha, +$("draws").value, bins, BigInt(betaSeed));
  const hist = out.slice(0, bins);
  const dens = out.slice(bins);
  const c = $("beta-canvas");
  const ctx = c.getContext("2d");
  const pad = 30;
  axes(ctx, c.width, c.height, pad);
  const top = Math.min(6, Math.max(...hist, ...dens) * 1.05);
  const sx = (t) => pad + t * (c.width - 1.5 * pad);
  const sy = (y) => c.height - pad - (Math.min(y, top) / top) * (c.height - 1.5 * pad);
  ctx.fillStyle = "#9ec5e8";
  for (let i = 0; i < bins; i++) {
    const x0 = sx(i / bins), x1 = sx((i + 1) / bins);
    ctx.fillRect(x0, sy(hist[i]), x1 - x0 - 1, sy(0) - sy(hist[i]));
  }
  polyline(ctx, Array.from(dens, (d, i) => [(i + 0.5) / bins, d]), sx, sy, "#c0392b", false);
  ctx.fillStyle = "#444";
  ctx.fillText("0", sx(0) - 3, c.height - pad + 14);
  ctx.fillText("1", sx(1) - 3, c.height - pad + 14);
  ctx.fillText(top.toFixed(1), 2, sy(top) + 4);
}

// 2. Solver paths ---------------------------------------------------------------

function drawPaths() {
  const steps = +$("steps").value, tj = +$("tjump").value, a0 = +$("a0").value;
  $("steps-v").textContent = steps;
  $("tjump-v").textContent = tj.toFixed(2);
  $("a0-v").textContent = a0.toFixed(1);
  const r = JSON.parse(solver_paths($("field").value, steps, tj, a0));
  $("err-u").textContent = r.uniform_error.toExponential(2);
  $("err-d").textContent = r.dense_jump_error.toExponential(2);
  const all = [...r.exact, ...r.uniform, ...r.dense_jump].map((p) => p[1]);
  let lo = Math.min(...all), hi = Math.max(...all);
  if (hi - lo < 1e-9) { lo -= 1; hi += 1; }
  const c = $("path-canvas");
  const ctx = c.getContext("2d");
  const pad = 30;
  axes(ctx, c.width, c.height, pad);
  const sx = (t) => pad + t * (c.width - 1.5 * pad);
  const sy = (y) => c.height - pad - ((y - lo) / (hi - lo)) * (c.height - 1.5 * pad);
  polyline(ctx, r.exact, sx, sy, "#aaa", false);
  polyline(ctx, r.uniform, sx, sy, "#2471a3", true);
  polyline(ctx, r.dense_jump, sx, sy, "#e67e22", true);
  ctx.fillStyle = "#444";
  ctx.fillText("t = 0", sx(0) - 8, c.height - pad + 14);
  ctx.fillText("t = 1", sx(1) - 14, c.height - pad + 14);
}

// 3. Ring policy ----------------------------------------------------------------

let ring = null;
let training = false;

function newRing() {
  ring = new RingDemo(200, $("law").value === "beta", 7n);
  $("ring-steps").textContent = "0";
  $("ring-loss").textContent = "–";
  drawRing();
}

function drawRing() {
  const hint = +$("hint").value, n = +$("ring-n").value;
  $("hint-v").textContent = hint.toFixed(2);
  $("ring-n-v").textContent = n;
  const c = $("ring-canvas");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const scale = c.width / 6.4, cx = c.width / 2, cy = c.height / 2;
  const sx = (x) => cx + x * scale, sy = (y) => cy - y * scale;
  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.arc(cx, cy, 2 * scale, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(sx(2.9 * Math.cos(hint)), sy(2.9 * Math.sin(hint)));
  ctx.stroke();
  const modes = ring.modes(hint);
  ctx.strokeStyle = "#c0392b";
  for (let k = 0; k < 2; k++) {
    ctx.beginPath();
    ctx.arc(sx(modes[2 * k]), sy(modes[2 * k + 1]), ring.goal_radius() * scale, 0, 2 * Math.PI);
    ctx.stroke();
  }
  const pts = ring.sample(hint, 300, n, $("ring-dj").checked, 0.5);
  ctx.fillStyle = "rgba(36, 113, 163, 0.55)";
  for (let i = 0; i < pts.length; i += 2) {
    ctx.fillRect(sx(pts[i]) - 1.5, sy(pts[i + 1]) - 1.5, 3, 3);
  }
}

function trainLoop(remaining) {
  if (!training || remaining <= 0) {
    training = false;
    $("train").textContent = "train";
    return;
  }
  const loss = ring.train(100);
  $("ring-steps").textContent = ring.steps_done();
  $("ring-loss").textContent = loss.toFixed(4);
  drawRing();
  requestAnimationFrame(() => trainLoop(remaining - 100));
}

async function main() {
  await init();
  $("status").textContent = "";
  ["alpha", "draws"].forEach((id) => $(id).addEventListener("input", drawBeta));
  $("resample").addEventListener("click", () => { betaSeed += 1; drawBeta(); });
  ["field", "steps", "tjump", "a0"].forEach((id) => $(id).addEventListener("input", drawPaths));
  ["hint", "ring-n", "ring-dj"].forEach((id) => $(id).addEventListener("input", drawRing));
  $("law").addEventListener("change", () => { training = false; newRing(); });
  $("reset").addEventListener("click", () => { training = false; newRing(); });
  $("train").addEventListener("click", () => {
    training = !training;
    $("train").textContent = training ? "stop" : "train";
    if (training) trainLoop(3000);
  });
  drawBeta();
  drawPaths();
  newRing();
}

main().catch((e) => { $("status").textContent = String(e); });
