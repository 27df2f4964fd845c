import init, { decayCurves, rankMemories, simulate } from "./pkg/layered_trading_demo.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#c0392b", "#2471a3", "#1e8449", "#7d3c98", "#b9770e", "#17202a"];

function plot(canvas, series, { yMin, yMax } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 30;
  ctx.clearRect(0, 0, w, h);
  const all = series.flatMap((s) => s.values);
  const lo = yMin ?? Math.min(...all), hi = yMax ?? Math.max(...all);
  const span = hi - lo || 1;
  const n = Math.max(...series.map((s) => s.values.length));
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 5, w - pad - 5, h - pad - 5);
  ctx.fillStyle = "#555";
  ctx.fillText(hi.toPrecision(4), 2, 12);
  ctx.fillText(lo.toPrecision(4), 2, h - pad);
  series.forEach((s, i) => {
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.beginPath();
    s.values.forEach((v, j) => {
      const x = pad + (j / Math.max(1, n - 1)) * (w - pad - 5);
      const y = 5 + (1 - (v - lo) / span) * (h - pad - 10);
      j ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    });
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.name, pad + 10 + i * 120, h - 8);
  });
}

function table(headers, rows) {
  const esc = (s) => String(s).replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);
  const head = headers.map((h) => `<th class="${h === "text" ? "text" : ""}">${h}</th>`).join("");
  const body = rows
    .map((r) => "<tr>" + r.map((c, i) => `<td class="${headers[i] === "text" ? "text" : ""}">${esc(c)}</td>`).join("") + "</tr>")
    .join("");
  return `<table><tr>${head}</tr>${body}</table>`;
}

function showError(el, e) {
  el.innerHTML = `<p class="err">${String(e)}</p>`;
}

function drawDecay() {
  const days = Number($("decay-days").value);
  $("decay-label").textContent = `${days} days`;
  const c = JSON.parse(decayCurves(days));
  plot($("decay"), [
    { name: "short (Q=3)", values: c.short },
    { name: "middle (Q=90)", values: c.middle },
    { name: "long (Q=365)", values: c.long },
  ], { yMin: 0, yMax: 1 });
}

function rank() {
  const out = $("rank-out");
  try {
    const memories = $("memories").value
      .split("\n")
      .filter((l) => l.trim())
      .map((line, i) => {
        const parts = line.split("|").map((p) => p.trim());
        if (parts.length < 4) throw new Error(`line ${i + 1}: expected 4 fields separated by |`);
        return {
          layer: parts[0].toLowerCase(),
          age_days: Number(parts[1]),
          accesses: Number(parts[2]),
          text: parts.slice(3).join(" | "),
        };
      });
    const rows = JSON.parse(rankMemories(JSON.stringify(memories), $("prompt").value, Number($("k").value)));
    out.innerHTML = table(
      ["layer", "gamma", "recency", "relevancy", "importance", "bonus", "age", "text"],
      rows.map((r) => [r.layer, r.gamma.toFixed(2), r.recency.toFixed(3), r.relevancy.toFixed(3),
        r.importance.toFixed(2), r.bonus, r.age_days.toFixed(1), r.text]),
    );
  } catch (e) {
    showError(out, e);
  }
}

function runSim() {
  const out = $("sim-out");
  try {
    const r = JSON.parse(simulate(Number($("sim-days").value), Number($("sim-agents").value), Number($("sim-seed").value)));
    plot($("sim"), [{ name: "total portfolio value", values: r.days.map((d) => d.value) }]);
    const sum = (f) => r.days.reduce((a, d) => a + d[f], 0);
    const sharpe = (s) => (s === null ? "undefined" : s.toFixed(3));
    out.innerHTML =
      `<p>${r.days.length} days, ${sum("trades")} trades, ${sum("debates")} debates, ` +
      `${sum("promoted")} promotions, ${sum("purged")} purges. ` +
      `Cumulative return ${(100 * r.cumulative_return).toFixed(2)}%, Sharpe ${sharpe(r.sharpe)}.</p>` +
      table(["agent", "return %", "sharpe", "short", "middle", "long"],
        r.agents.map(([id, ret, s], i) => [id, (100 * ret).toFixed(2), sharpe(s), ...r.memories[i].slice(1)]));
  } catch (e) {
    showError(out, e);
  }
}

await init();
$("decay-days").addEventListener("input", drawDecay);
$("rank").addEventListener("click", rank);
$("simulate").addEventListener("click", runSim);
drawDecay();
rank();
