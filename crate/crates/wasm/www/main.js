import init, { Scene, shrinkSpectrum } from "./pkg/swlrtr_wasm.js";

const $ = (id) => document.getElementById(id);
const LAYERS = ["clean", "noisy", "denoised", "sparse"];
const Q = 70;

let scene = null;
let spectrum = null;
let trace = [];

function status(text, error = false) {
  $("status").textContent = text;
  $("status").className = error ? "error" : "";
}

// yields to the browser so the status line repaints before blocking work
const repaint = () => new Promise((r) => setTimeout(r, 20));

function drawBand() {
  const band = Number($("band").value);
  $("band-label").textContent = band;
  const n = scene.size();
  for (const layer of LAYERS) {
    const canvas = $(layer);
    canvas.width = n;
    canvas.height = n;
    const ctx = canvas.getContext("2d");
    let pixels;
    try {
      pixels = scene.bandRgba(layer, band);
    } catch {
      ctx.clearRect(0, 0, n, n);
      continue;
    }
    ctx.putImageData(new ImageData(new Uint8ClampedArray(pixels), n, n), 0, 0);
  }
}

function showMetrics() {
  const rows = [["noisy MPSNR", scene.noisyMpsnr().toFixed(2) + " dB"]];
  const m = scene.metrics();
  if (m.length) {
    rows.push(["denoised MPSNR", m[0].toFixed(2) + " dB"]);
    rows.push(["MSSIM", m[1].toFixed(4)]);
    rows.push(["ERGAS", m[2].toFixed(3)]);
    rows.push(["MSA", m[3].toFixed(4) + " rad"]);
    rows.push(["MPSNR per iteration", trace.map((v) => v.toFixed(2)).join(" → ")]);
  }
  $("metrics").innerHTML = rows.map(([k, v]) => `<tr><td>${k}</td><td>${v}</td></tr>`).join("");
}

function drawSpectrum() {
  const sigma = Number($("sigma").value);
  const c = Number($("c").value);
  $("sigma-label").textContent = sigma.toFixed(2);
  $("c-label").textContent = c.toFixed(1);
  const canvas = $("spectrum");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!spectrum) {
    $("kept").textContent = "Click the noisy image to pick a group.";
    return;
  }
  const shown = spectrum.slice(0, 150);
  const kept = shrinkSpectrum(shown, sigma, c, Q);
  const survivors = shrinkSpectrum(spectrum, sigma, c, Q).filter((v) => v > 0).length;
  $("kept").textContent = `${survivors} of ${spectrum.length} core entries survive.`;
  // log scale keeps the long tail visible next to the leading entries
  const top = Math.log10(shown[0] + 1e-12);
  const bottom = top - 5;
  const y = (v) => {
    const t = (Math.log10(Math.max(v, 1e-12)) - bottom) / (top - bottom);
    return canvas.height * (1 - Math.max(0, Math.min(1, t)));
  };
  const w = canvas.width / shown.length;
  shown.forEach((v, i) => {
    ctx.fillStyle = "#bbb";
    ctx.fillRect(i * w, y(v), w - 1, canvas.height - y(v));
    if (kept[i] > 0) {
      ctx.fillStyle = "#2a6fdb";
      ctx.fillRect(i * w + w / 4, y(kept[i]), w / 2, canvas.height - y(kept[i]));
    }
  });
}

async function generate() {
  status("Generating…");
  await repaint();
  try {
    scene?.free();
    scene = new Scene(
      Number($("size").value),
      Number($("bands").value),
      Number($("case").value),
      Number($("seed").value),
    );
  } catch (e) {
    status(String(e), true);
    return;
  }
  trace = [];
  spectrum = null;
  $("band").max = scene.bands() - 1;
  $("band").value = Math.min(Number($("band").value), scene.bands() - 1);
  $("run").disabled = false;
  drawBand();
  showMetrics();
  drawSpectrum();
  status("Ready.");
}

async function run() {
  status("Denoising… (the page is busy until this finishes)");
  $("run").disabled = true;
  await repaint();
  const started = performance.now();
  try {
    trace = Array.from(
      scene.denoise(
        Number($("lambda1").value),
        Number($("lambda2").value),
        Number($("iters").value),
        Number($("k").value),
      ),
    );
    status(`Done in ${((performance.now() - started) / 1000).toFixed(1)} s.`);
  } catch (e) {
    status(String(e), true);
  }
  $("run").disabled = false;
  drawBand();
  showMetrics();
}

function pickGroup(event) {
  const canvas = $("noisy");
  const rect = canvas.getBoundingClientRect();
  const n = scene.size();
  const col = Math.floor(((event.clientX - rect.left) / rect.width) * n);
  const row = Math.floor(((event.clientY - rect.top) / rect.height) * n);
  try {
    spectrum = Array.from(scene.groupSpectrum(row, col));
  } catch (e) {
    status(String(e), true);
    return;
  }
  drawSpectrum();
}

await init();
$("generate").addEventListener("click", generate);
$("run").addEventListener("click", run);
$("band").addEventListener("input", drawBand);
$("noisy").addEventListener("click", pickGroup);
$("sigma").addEventListener("input", drawSpectrum);
$("c").addEventListener("input", drawSpectrum);
await generate();
