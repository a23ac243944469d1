import init, { taxonomy, tag, gate, kappa, token_f1 } from "./pkg/haf_wasm.js";

const $ = (id) => document.getElementById(id);

function chips(el, labels, orphans = []) {
  el.replaceChildren(...labels.map((slug) => {
    const s = document.createElement("span");
    s.textContent = slug;
    if (orphans.includes(slug)) s.className = "orphan";
    return s;
  }));
  if (!labels.length) el.textContent = "(none)";
}

// Offsets are in code points; Array.from splits the same way.
function highlight(text, spans) {
  const chars = Array.from(text);
  const seen = new Set();
  const ordered = spans
    .filter((s) => !seen.has(`${s.start}:${s.end}`) && seen.add(`${s.start}:${s.end}`))
    .sort((a, b) => a.start - b.start || b.end - a.end);
  const out = [];
  let at = 0;
  for (const s of ordered) {
    if (s.start < at) continue;
    out.push(document.createTextNode(chars.slice(at, s.start).join("")));
    const m = document.createElement("mark");
    m.className = s.category;
    m.title = spans.filter((t) => t.start === s.start && t.end === s.end).map((t) => t.aspect).join(", ");
    m.textContent = chars.slice(s.start, s.end).join("");
    out.push(m);
    at = s.end;
  }
  out.push(document.createTextNode(chars.slice(at).join("")));
  return out;
}

function runTag() {
  const text = $("review").value;
  $("tag-error").textContent = "";
  try {
    const r = JSON.parse(tag(text));
    chips($("tag-labels"), r.labels);
    $("tag-text").replaceChildren(...highlight(text, r.spans));
  } catch (e) {
    $("tag-error").textContent = String(e);
    $("tag-labels").textContent = "";
    $("tag-text").textContent = "";
  }
}

const scores = {};

function runGate() {
  const t = Number($("threshold").value);
  $("threshold-value").textContent = t.toFixed(2);
  $("gate-error").textContent = "";
  try {
    const r = JSON.parse(gate(JSON.stringify(scores), t));
    chips($("flat"), r.flat.labels, r.flat.orphans);
    chips($("hier"), r.hierarchical.labels);
    const ran = Object.entries(r.hierarchical.specific_scorer_ran);
    $("ran").textContent = "Specific scorers run: " +
      (ran.filter(([, v]) => v).map(([g]) => g).join(", ") || "none");
  } catch (e) {
    $("gate-error").textContent = String(e);
  }
}

function buildSliders() {
  const defaults = { PRICE: 0.45, "PRICE.Affordability": 0.9, DELIVERY: 0.8, "DELIVERY.Timeliness": 0.65 };
  const grid = $("scores");
  for (const entry of JSON.parse(taxonomy()).labels) {
    scores[entry.slug] = defaults[entry.slug] ?? 0;
    const name = document.createElement("label");
    name.textContent = entry.slug;
    if (entry.level === "general") name.className = "general";
    const input = document.createElement("input");
    Object.assign(input, { type: "range", min: 0, max: 1, step: 0.05, value: scores[entry.slug] });
    const value = document.createElement("span");
    value.textContent = Number(input.value).toFixed(2);
    input.addEventListener("input", () => {
      scores[entry.slug] = Number(input.value);
      value.textContent = scores[entry.slug].toFixed(2);
      runGate();
    });
    grid.append(name, input, value);
  }
}

function runKappa() {
  try {
    const r = JSON.parse(kappa($("counts").value));
    $("kappa-out").textContent = `kappa = ${r.kappa.toFixed(4)} (${r.interpretation})`;
  } catch (e) {
    $("kappa-out").textContent = String(e);
  }
}

function runF1() {
  try {
    const rows = JSON.parse(token_f1($("span-text").value, $("gold").value, $("pred").value));
    $("f1-out").textContent = rows
      .map((s) => `${s.category.padEnd(9)} tp=${s.tp} fp=${s.fp} fn=${s.fn}  P=${s.precision.toFixed(3)} R=${s.recall.toFixed(3)} F1=${s.f1.toFixed(3)}`)
      .join("\n");
  } catch (e) {
    $("f1-out").textContent = String(e);
  }
}

await init();
$("status").textContent = "";
buildSliders();
$("review").addEventListener("input", runTag);
$("threshold").addEventListener("input", runGate);
$("counts").addEventListener("input", runKappa);
for (const id of ["span-text", "gold", "pred"]) $(id).addEventListener("input", runF1);
runTag();
runGate();
runKappa();
runF1();
