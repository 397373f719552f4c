// Built with `wasm-pack build crates/web --target web --out-dir www/pkg`.
import init, { forceLengthCurves, forceVelocityCurve, Manifold, WalkerDemo } from "./pkg/sde_web.js";

const GROUPS = ["hip flex", "hip ext", "knee flex", "knee ext", "dorsi", "plantar", "hamstr", "rect fem"];
const $ = (id) => document.getElementById(id);

function axes(ctx, x, y, w, h, title) {
  ctx.strokeStyle = "#888";
  ctx.strokeRect(x, y, w, h);
  ctx.fillStyle = "#222";
  ctx.fillText(title, x + 4, y + 12);
}

function plot(ctx, pts, box, range, color) {
  const [x, y, w, h] = box;
  const [x0, x1, y0, y1] = range;
  ctx.strokeStyle = color;
  ctx.beginPath();
  pts.forEach(([px, py], i) => {
    const sx = x + ((px - x0) / (x1 - x0)) * w;
    const sy = y + h - ((py - y0) / (y1 - y0)) * h;
    i ? ctx.lineTo(sx, sy) : ctx.moveTo(sx, sy);
  });
  ctx.stroke();
}

function drawCurves() {
  const kappa = parseFloat($("kappa").value);
  $("kappa-val").textContent = kappa.toFixed(2);
  const ctx = $("curves").getContext("2d");
  ctx.clearRect(0, 0, 880, 260);
  const fl = forceLengthCurves(kappa, 121);
  const active = [], passive = [];
  for (let i = 0; i < fl.length; i += 3) {
    active.push([fl[i], fl[i + 1]]);
    passive.push([fl[i], fl[i + 2]]);
  }
  axes(ctx, 10, 10, 420, 240, "force-length: active (blue), passive (red)");
  plot(ctx, active, [10, 10, 420, 240], [0.4, 1.6, 0, 1.6], "#1f5fbf");
  plot(ctx, passive, [10, 10, 420, 240], [0.4, 1.6, 0, 1.6], "#c0392b");
  const fv = forceVelocityCurve(121);
  const vel = [];
  for (let i = 0; i < fv.length; i += 2) vel.push([fv[i], fv[i + 1]]);
  axes(ctx, 450, 10, 420, 240, "force-velocity (shortening > 0)");
  plot(ctx, vel, [450, 10, 420, 240], [-1, 1, 0, 1.6], "#1f5fbf");
}

let manifold = null;

function buildManifold() {
  const k = parseInt($("k").value, 10);
  manifold?.free();
  manifold = new Manifold(4000, 0, k);
  const cum = manifold.cumulativeExplainedVariance();
  $("variance").textContent = `explained variance at k=${k}: ${(100 * cum[k - 1]).toFixed(2)}%`;
  const box = $("latent");
  box.innerHTML = "";
  ["σ", "ν", "κ"].forEach((b) => {
    for (let i = 0; i < k; i++) {
      const label = document.createElement("label");
      label.innerHTML = `z<sub>${b}${i + 1}</sub> <input type="range" min="-2" max="2" step="0.05" value="0">`;
      label.querySelector("input").addEventListener("input", drawTheta);
      box.appendChild(label);
    }
  });
  drawTheta();
}

function drawTheta() {
  const z = Float64Array.from(document.querySelectorAll("#latent input"), (el) => parseFloat(el.value));
  const theta = manifold.decode(z);
  const m = manifold.groups();
  const ctx = $("theta").getContext("2d");
  ctx.clearRect(0, 0, 880, 240);
  const colors = ["#1f5fbf", "#27ae60", "#c0392b"];
  const bw = 880 / m;
  for (let g = 0; g < m; g++) {
    for (let b = 0; b < 3; b++) {
      const v = theta[b * m + g];
      const h = (v / 2) * 190;
      ctx.fillStyle = colors[b];
      ctx.fillRect(g * bw + 12 + b * 22, 210 - h, 18, h);
    }
    ctx.fillStyle = "#222";
    ctx.fillText(GROUPS[g] ?? `g${g}`, g * bw + 12, 228);
  }
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(0, 210 - 95);
  ctx.lineTo(880, 210 - 95);
  ctx.stroke();
  ctx.fillText("1.0", 2, 210 - 98);
}

let walker = null;
let checkpointText = null;
let tick = 0;

function newWalker() {
  walker?.free();
  walker = checkpointText ? WalkerDemo.fromCheckpoint(checkpointText, 0) : new WalkerDemo($("terrain").value, 0);
  tick = 0;
}

function excitations() {
  const n = walker.muscles();
  const drive = $("drive").value;
  if (drive === "random") return walker.randomExcitations();
  const u = new Float64Array(n);
  if (drive === "sine") {
    const phase = (2 * Math.PI * tick) / 50;
    for (let i = 0; i < n; i++) {
      const side = i < n / 2 ? 0 : Math.PI;
      u[i] = 0.5 + 0.4 * Math.sin(phase + side + (i % (n / 2)) * 0.8);
    }
  }
  return u;
}

function drawWalker() {
  const ctx = $("walker").getContext("2d");
  ctx.clearRect(0, 0, 880, 320);
  const p = walker.pose();
  const cx = p[0];
  const scale = 180;
  const sx = (x) => 440 + (x - cx) * scale;
  const sy = (z) => 290 - z * scale;
  const x0 = cx - 2.5, x1 = cx + 2.5;
  const ground = walker.ground(x0, x1, 200);
  ctx.strokeStyle = "#6b4f2a";
  ctx.beginPath();
  ground.forEach((h, i) => {
    const x = x0 + ((x1 - x0) * i) / (ground.length - 1);
    i ? ctx.lineTo(sx(x), sy(h)) : ctx.moveTo(sx(x), sy(h));
  });
  ctx.stroke();
  const line = (pts, color) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 4;
    ctx.beginPath();
    pts.forEach(([x, z], i) => (i ? ctx.lineTo(sx(x), sy(z)) : ctx.moveTo(sx(x), sy(z))));
    ctx.stroke();
    ctx.lineWidth = 1;
  };
  const hip = [p[0], p[1]];
  line([hip, [p[2], p[3]]], "#333");
  for (let leg = 0; leg < 2; leg++) {
    const o = 4 + leg * 8;
    const knee = [p[o], p[o + 1]], ankle = [p[o + 2], p[o + 3]];
    const heel = [p[o + 4], p[o + 5]], toe = [p[o + 6], p[o + 7]];
    line([hip, knee, ankle], leg ? "#c0392b" : "#1f5fbf");
    line([heel, toe], leg ? "#c0392b" : "#1f5fbf");
  }
  $("readout").textContent =
    `t ${walker.time().toFixed(2)} s   x ${walker.distance().toFixed(2)} m   ` +
    `return ${walker.totalReward().toFixed(2)}${walker.fell() ? "   fell" : ""}` +
    (walker.isPolicyDriven() ? "   (checkpoint policy)" : "");
}

function frame() {
  if (walker) {
    const done = walker.step(excitations());
    tick++;
    drawWalker();
    if (done) {
      setTimeout(() => { newWalker(); requestAnimationFrame(frame); }, 800);
      return;
    }
  }
  requestAnimationFrame(frame);
}

async function main() {
  await init();
  $("status").textContent = "";
  $("kappa").addEventListener("input", drawCurves);
  $("k").addEventListener("change", buildManifold);
  $("zero").addEventListener("click", () => {
    document.querySelectorAll("#latent input").forEach((el) => (el.value = 0));
    drawTheta();
  });
  $("terrain").addEventListener("change", () => { checkpointText = null; $("checkpoint").value = ""; newWalker(); });
  $("restart").addEventListener("click", newWalker);
  $("checkpoint").addEventListener("change", async (ev) => {
    const file = ev.target.files[0];
    if (!file) return;
    const text = await file.text();
    try {
      WalkerDemo.fromCheckpoint(text, 0).free();
      checkpointText = text;
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = `checkpoint rejected: ${e.message ?? e}`;
    }
    newWalker();
  });
  drawCurves();
  buildManifold();
  newWalker();
  requestAnimationFrame(frame);
}

main().catch((e) => ($("status").textContent = `failed to start: ${e.message ?? e}`));
