import init, { regretChart, epsilonCurve, pickSlate } from "./pkg/topk_bandit_wasm.js";

const $ = (id) => document.getElementById(id);
const int = (id) => parseInt($(id).value, 10);
const num = (id) => parseFloat($(id).value);

function report(el, message, isError) {
  el.textContent = message;
  el.className = isError ? "error" : "";
}

function simulate() {
  const status = $("simulate-status");
  report(status, "running…", false);
  // Let the status line paint before the synchronous simulation blocks the page.
  setTimeout(() => {
    const started = performance.now();
    try {
      $("chart").innerHTML = regretChart(
        $("policies").value, $("model").value,
        int("arms"), int("slate"), int("horizon"), int("seed"));
      report(status, `done in ${((performance.now() - started) / 1000).toFixed(2)} s`, false);
    } catch (e) {
      $("chart").innerHTML = "";
      report(status, String(e.message ?? e), true);
    }
  }, 10);
}

function schedule() {
  const status = $("schedule-status");
  let values;
  try {
    values = epsilonCurve($("eps-policy").value, num("eps0"), num("decay"), int("eps-horizon"));
  } catch (e) {
    report(status, String(e.message ?? e), true);
    return;
  }
  const canvas = $("eps-canvas");
  const ctx = canvas.getContext("2d");
  const pad = 30;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  const top = Math.max(...values, 1e-9);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#333";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.fillText(top.toPrecision(3), 2, pad + 4);
  ctx.fillText("0", 2, pad + h + 4);
  ctx.fillText(`round ${values.length}`, pad + w - 70, pad + h + 18);
  ctx.strokeStyle = "#1f77b4";
  ctx.lineWidth = 1.6;
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = pad + (w * i) / Math.max(values.length - 1, 1);
    const y = pad + h * (1 - v / top);
    if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
  });
  ctx.stroke();
  const last = values[values.length - 1];
  report(status, `ε at round 1: ${values[0].toPrecision(4)}, at round ${values.length}: ${last.toPrecision(4)}`, false);
}

function pick() {
  const out = $("pick-result");
  const scores = $("scores").value.split(",").map((s) => parseFloat(s));
  if (scores.some(Number.isNaN)) {
    report(out, "scores must be comma-separated numbers", true);
    return;
  }
  try {
    const picks = pickSlate(new Float64Array(scores), int("pick-k"),
      $("pick-policy").value, num("pick-eps"), int("pick-seed"));
    const listing = Array.from(picks, (p) => `arm ${p} (score ${scores[p]})`).join(", then ");
    report(out, `slate: ${listing}`, false);
  } catch (e) {
    report(out, String(e.message ?? e), true);
  }
}

await init();
$("simulate").addEventListener("click", simulate);
$("schedule").addEventListener("click", schedule);
$("pick").addEventListener("click", pick);
schedule();
pick();
