// Build the package first: wasm-pack build crates/web --target web --out-dir www/pkg
import init, { Preview, checkFormula, libraryNames, libraryTacton } from "./pkg/adaptics_web.js";

const RATE = 40000;
const TRAIL_SECONDS = 0.25;
const MM_PER_CANVAS = 120; // canvas spans [-60, 60] mm on x and y
const STRIDE = 5;

const canvas = document.getElementById("trail");
const ctx = canvas.getContext("2d");
const paramsBox = document.getElementById("params");
const statusLine = document.getElementById("status");
const formula = document.getElementById("formula");
const formulaResult = document.getElementById("formula-result");
const library = document.getElementById("library");

let preview = null;
let source = "";
let values = {};
let trail = new Float64Array(0);
let lastFrame = null;

function load(name) {
  source = libraryTacton(name);
  preview = new Preview(source, RATE);
  values = {};
  paramsBox.replaceChildren();
  for (const p of preview.paramNames()) {
    values[p] = 0;
    const label = document.createElement("label");
    const slider = Object.assign(document.createElement("input"), { type: "range", min: 0, max: 1, step: 0.01, value: 0 });
    const shown = document.createElement("span");
    shown.textContent = "0.00";
    slider.addEventListener("input", () => {
      values[p] = Number(slider.value);
      shown.textContent = values[p].toFixed(2);
      preview.setParam(p, values[p]);
      refreshFormula();
    });
    label.append(p, slider, shown);
    paramsBox.append(label);
  }
  trail = new Float64Array(0);
  refreshFormula();
}

function refreshFormula() {
  const check = JSON.parse(checkFormula(formula.value, JSON.stringify(values)));
  formulaResult.classList.toggle("bad", !check.ok);
  formulaResult.textContent = check.ok
    ? `= ${check.value}${check.sanitized ? " (non-finite, read as 0)" : ""}; uses ${check.params.join(", ") || "no parameters"}`
    : `${" ".repeat(check.position)}^ ${check.message}`;
}

function toCanvas(mm) {
  return (mm / MM_PER_CANVAS + 0.5) * canvas.width;
}

function frame(now) {
  const elapsed = lastFrame === null ? 1 / 60 : Math.min((now - lastFrame) / 1000, 0.1);
  lastFrame = now;
  const fresh = preview.step(Math.round(elapsed * RATE));
  const keep = Math.round(TRAIL_SECONDS * RATE) * STRIDE;
  const merged = new Float64Array(Math.min(keep, trail.length + fresh.length));
  const tail = trail.subarray(Math.max(0, trail.length - (merged.length - fresh.length)));
  merged.set(tail);
  merged.set(fresh.subarray(Math.max(0, fresh.length - merged.length)), tail.length);
  trail = merged;

  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  // every 8th sample keeps the path smooth at 40 kHz without drawing 10k segments
  for (let i = STRIDE * 8; i < trail.length; i += STRIDE * 8) {
    const amp = trail[i + 3];
    if (amp <= 0) continue;
    ctx.strokeStyle = `rgba(120, 220, 255, ${amp * (i / trail.length)})`;
    ctx.beginPath();
    ctx.moveTo(toCanvas(trail[i - STRIDE * 8]), toCanvas(-trail[i - STRIDE * 8 + 1]));
    ctx.lineTo(toCanvas(trail[i]), toCanvas(-trail[i + 1]));
    ctx.stroke();
  }
  statusLine.textContent = `pattern time ${preview.patternTime.toFixed(3)} s${preview.finished ? " (finished)" : ""}`;
  requestAnimationFrame(frame);
}

await init();
for (const name of libraryNames()) library.add(new Option(name, name));
library.addEventListener("change", () => load(library.value));
document.getElementById("restart").addEventListener("click", () => {
  preview.restart(source);
  for (const [k, v] of Object.entries(values)) preview.setParam(k, v);
});
formula.addEventListener("input", refreshFormula);
load(library.value);
requestAnimationFrame(frame);
