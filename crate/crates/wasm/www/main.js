import init, { renderPrompt, correlations, crossAttention } from "./pkg/spark_wasm.js";

const $ = (id) => document.getElementById(id);

function show(el, text, isError = false) {
  el.textContent = text;
  el.classList.toggle("error", isError);
}

function heatmap(view, head) {
  const table = document.createElement("table");
  table.className = "heat";
  const header = table.insertRow();
  header.insertCell().textContent = `head ${head}`;
  for (const k of view.keys) {
    const th = document.createElement("th");
    th.textContent = k;
    header.appendChild(th);
  }
  view.weights[head].forEach((row, q) => {
    const tr = table.insertRow();
    const th = document.createElement("th");
    th.textContent = view.queries[q];
    tr.appendChild(th);
    for (const p of row) {
      const td = tr.insertCell();
      td.title = p.toFixed(4);
      td.style.background = `rgba(30, 90, 200, ${Math.min(1, p * view.keys.length / 2)})`;
      td.textContent = " ";
    }
  });
  return table;
}

await init();

$("render").onclick = () => {
  const s = $("scores").value.split(/[\s,]+/).filter(Boolean).map(Number);
  try {
    show($("prompt"), renderPrompt($("kind").value, $("topic").value, $("argument").value, s[0], s[1], s[2]));
  } catch (e) {
    show($("prompt"), e.message ?? String(e), true);
  }
};

$("corr").onclick = () => {
  try {
    const r = JSON.parse(correlations($("xs").value, $("ys").value));
    const fmt = (v) => (v === null ? "undefined (constant input)" : v.toFixed(4));
    show($("corr-out"), `n = ${r.n}\nPearson  = ${fmt(r.pearson)}\nSpearman = ${fmt(r.spearman)}`);
  } catch (e) {
    show($("corr-out"), e.message ?? String(e), true);
  }
};

$("attn").onclick = () => {
  const out = $("attn-out");
  out.replaceChildren();
  try {
    const seed = Math.max(0, Number($("seed").value) | 0);
    const view = JSON.parse(crossAttention($("topic").value, $("argument").value, $("feedback").value, seed));
    view.weights.forEach((_, h) => out.appendChild(heatmap(view, h)));
    const p = document.createElement("p");
    p.textContent = `outputs (cogency, effectiveness, reasonableness): ${view.outputs.map((v) => v.toFixed(3)).join(", ")}`;
    out.appendChild(p);
  } catch (e) {
    const p = document.createElement("p");
    show(p, e.message ?? String(e), true);
    out.appendChild(p);
  }
};
