// Built by `wasm-pack build crates/web --target web --out-dir www/pkg`.
import init, { House, Graph, returnToGo } from "./pkg/gve_web.js";

await init();

const $ = (id) => document.getElementById(id);
let house;
let rewards = [];

function drawHouse(view) {
  const canvas = $("house");
  const ctx = canvas.getContext("2d");
  const cell = Math.floor(Math.min(canvas.width / view.width, canvas.height / view.height));
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  view.cells.forEach((row, y) => {
    [...row].forEach((c, x) => {
      ctx.fillStyle = c === "#" ? "#555" : "#fff";
      ctx.fillRect(x * cell, y * cell, cell, cell);
      ctx.strokeStyle = "#ddd";
      ctx.strokeRect(x * cell, y * cell, cell, cell);
    });
  });
  ctx.font = `${Math.floor(cell * 0.45)}px sans-serif`;
  ctx.textAlign = "center";
  ctx.textBaseline = "middle";
  for (const o of view.objects) {
    ctx.fillStyle = o.target ? "#d62728" : o.visible ? "#1f77b4" : "#999";
    ctx.fillRect(o.x * cell + 3, o.y * cell + 3, cell - 6, cell - 6);
    ctx.fillStyle = "#fff";
    ctx.fillText(o.name.slice(0, 3), (o.x + 0.5) * cell, (o.y + 0.5) * cell);
  }
  const [ax, ay] = view.agent;
  const angle = { North: -Math.PI / 2, East: 0, South: Math.PI / 2, West: Math.PI }[view.heading];
  ctx.save();
  ctx.translate((ax + 0.5) * cell, (ay + 0.5) * cell);
  ctx.rotate(angle);
  ctx.fillStyle = "#2ca02c";
  ctx.beginPath();
  ctx.moveTo(cell * 0.38, 0);
  ctx.lineTo(-cell * 0.3, -cell * 0.28);
  ctx.lineTo(-cell * 0.3, cell * 0.28);
  ctx.closePath();
  ctx.fill();
  ctx.restore();
}

function refresh() {
  const view = JSON.parse(house.view());
  rewards = view.rewards;
  drawHouse(view);
  const visible = view.objects.filter((o) => o.visible).map((o) => o.name);
  $("status").textContent =
    `room      ${view.room}\ntarget    ${view.target}\n` +
    `pitch     ${view.pitch}\nstep      ${view.steps}/${view.max_steps}\n` +
    `in view   ${visible.join(", ") || "-"}\n` +
    (view.done ? (view.success ? "reached the target" : "episode over") : "");
  document.querySelectorAll("#actions button").forEach((b) => (b.disabled = view.done));
  drawReturns();
}

function newEpisode() {
  house = new House(Number($("seed").value) >>> 0);
  refresh();
}

House.actions().forEach((name, i) => {
  const b = document.createElement("button");
  b.textContent = name;
  b.onclick = () => {
    house.step(i);
    refresh();
  };
  $("actions").appendChild(b);
});
$("reset").onclick = newEpisode;

const graph = new Graph(0);
const channels = graph.channels();
const logits = channels.map(() => 0);
$("density").textContent = `room-channel edge density ${graph.density().toFixed(3)}`;
for (const name of graph.objects()) {
  const opt = document.createElement("option");
  opt.textContent = name;
  $("object").appendChild(opt);
}
channels.forEach((label, c) => {
  const wrap = document.createElement("div");
  const input = document.createElement("input");
  Object.assign(input, { type: "range", min: -6, max: 6, step: 0.1, value: 0 });
  const weight = document.createElement("span");
  weight.id = `w${c}`;
  input.oninput = () => {
    logits[c] = Number(input.value);
    drawMix();
  };
  wrap.append(`${label} `, input, " ", weight);
  $("sliders").appendChild(wrap);
});
$("object").onchange = drawMix;

function drawMix() {
  const mix = JSON.parse(graph.mix(Float64Array.from(logits), $("object").value, 8));
  mix.weights.forEach((w, c) => ($(`w${c}`).textContent = w.toFixed(3)));
  const rows = mix.neighbours
    .map((n) => `<tr><td>${n.name}</td><td>${n.mixed.toFixed(3)}</td><td>${n.propagation.toFixed(3)}</td></tr>`)
    .join("");
  $("neighbours").innerHTML =
    `<tr><th>neighbour</th><th>mixed edge</th><th>propagation</th></tr>` +
    `<tr><td><i>${mix.object} (self)</i></td><td></td><td>${mix.self_weight.toFixed(3)}</td></tr>` +
    rows;
}

function drawReturns() {
  const gamma = Number($("gamma").value);
  $("gamma-value").textContent = gamma.toFixed(2);
  const g = Array.from(returnToGo(Float64Array.from(rewards), gamma));
  const canvas = $("returns");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (g.length === 0) return;
  const pad = 30;
  const lo = Math.min(0, ...g, ...rewards);
  const hi = Math.max(0.01, ...g, ...rewards);
  const x = (t) => pad + (t / Math.max(1, g.length - 1)) * (canvas.width - 2 * pad);
  const y = (v) => canvas.height - pad - ((v - lo) / (hi - lo)) * (canvas.height - 2 * pad);
  ctx.strokeStyle = "#aaa";
  ctx.beginPath();
  ctx.moveTo(pad, y(0));
  ctx.lineTo(canvas.width - pad, y(0));
  ctx.stroke();
  const line = (values, color) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    values.forEach((v, t) => (t ? ctx.lineTo(x(t), y(v)) : ctx.moveTo(x(t), y(v))));
    ctx.stroke();
  };
  line(rewards, "#999");
  line(g, "#1f77b4");
  ctx.fillStyle = "#222";
  ctx.fillText(`G_0 = ${g[0].toFixed(3)}   (blue: return to go, grey: reward)`, pad, 14);
}
$("gamma").oninput = drawReturns;

newEpisode();
drawMix();
