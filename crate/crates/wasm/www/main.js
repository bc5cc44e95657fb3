import init, { stitch_synthetic, gate_preview, cluster_preview } from "./pkg/panostitch_wasm.js";

const $ = (id) => document.getElementById(id);

function paint(canvas, frame, scale = 1) {
  const { width, height } = frame;
  const off = new OffscreenCanvas(width, height);
  off.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(frame.rgba()), width, height), 0, 0);
  canvas.width = Math.round(width * scale);
  canvas.height = Math.round(height * scale);
  const ctx = canvas.getContext("2d");
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

function bindLabel(id) {
  const show = () => ($(`${id}-v`).textContent = $(id).value);
  $(id).addEventListener("input", show);
  show();
}

function runStitch() {
  $("status").textContent = "stitching…";
  // Let the status paint before the synchronous call blocks the thread.
  setTimeout(() => {
    try {
      const t0 = performance.now();
      const r = stitch_synthetic(+$("seed").value, +$("shift").value, +$("parallax").value, +$("angle").value);
      paint($("src"), r.source(), 0.5);
      paint($("tgt"), r.target(), 0.5);
      paint($("seams"), r.seams(), 0.5);
      paint($("pano"), r.panorama(), 0.5);
      $("report").textContent = r.report();
      $("status").textContent = `done in ${(performance.now() - t0).toFixed(0)} ms`;
      r.free();
    } catch (e) {
      $("status").textContent = `error: ${e}`;
    }
  }, 10);
}

const gatePoints = [];
const QUAD = [40, 20, 300, 40, 280, 200, 20, 180];

function drawGate() {
  const c = $("gate");
  const f = gate_preview(c.width, c.height, new Float64Array(QUAD), new Float64Array(gatePoints),
    +$("rho").value, +$("sigd").value, +$("gp").value, +$("gmin").value);
  paint(c, f);
  f.free();
  const ctx = c.getContext("2d");
  ctx.fillStyle = "#fff";
  for (let i = 0; i < gatePoints.length; i += 2) {
    ctx.fillRect(gatePoints[i] - 1, gatePoints[i + 1] - 1, 3, 3);
  }
}

function parseList(s) {
  return s.split(",").map((x) => x.trim()).filter((x) => x.length).map(Number);
}

function drawClusters() {
  const means = parseList($("means").value);
  const counts = parseList($("counts").value);
  const tile = 32;
  let out;
  try {
    out = JSON.parse(cluster_preview(new Float64Array(means), new Uint32Array(counts), tile, +$("v").value, +$("lambda").value));
  } catch (e) {
    $("clusters").textContent = `error: ${e}`;
    return;
  }
  $("clusters").textContent = JSON.stringify(out, null, 2);
  const c = $("bars");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const n = Math.max(means.length, 1);
  const bw = c.width / n;
  const hi = Math.max(...means, 1);
  const owner = new Map();
  out.clusters.forEach((cl, k) => cl.tiles.forEach((t) => owner.set(t, k)));
  means.forEach((m, i) => {
    const k = owner.get(i);
    ctx.fillStyle = k === undefined ? "#bbb" : k === out.best ? "#d33" : "#36c";
    const h = (m / hi) * (c.height - 20);
    ctx.fillRect(i * bw + 2, c.height - h, bw - 4, h);
    ctx.fillStyle = "#000";
    ctx.fillText(String(counts[i] ?? 0), i * bw + bw / 2 - 3, c.height - h - 4);
  });
}

await init();
["shift", "parallax", "angle"].forEach(bindLabel);
$("run").addEventListener("click", runStitch);
["rho", "sigd", "gp", "gmin"].forEach((id) => $(id).addEventListener("input", drawGate));
$("gate").addEventListener("click", (ev) => {
  const r = ev.target.getBoundingClientRect();
  gatePoints.push(ev.clientX - r.left, ev.clientY - r.top);
  drawGate();
});
$("clear").addEventListener("click", () => {
  gatePoints.length = 0;
  drawGate();
});
["means", "counts", "v", "lambda"].forEach((id) => $(id).addEventListener("input", drawClusters));
drawGate();
drawClusters();
runStitch();
