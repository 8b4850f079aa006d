import init, { encode_utterance, activation, lattice } from "./pkg/dyntask_demo.js";

const $ = (id) => document.getElementById(id);

function taskBits() {
  let bits = 0;
  for (const box of document.querySelectorAll(".task")) {
    if (box.checked) bits |= 1 << Number(box.value);
  }
  return bits;
}

function call(fn, ...args) {
  const out = JSON.parse(fn(...args));
  if (out.error) throw new Error(out.error);
  return out;
}

function showError(el, e) {
  el.innerHTML = "";
  const p = document.createElement("p");
  p.className = "err";
  p.textContent = e.message;
  el.appendChild(p);
}

function renderTokens() {
  const box = $("tokens");
  try {
    const r = call(encode_utterance, Number($("utt").value), taskBits());
    box.innerHTML = "";
    for (const t of r.tokens) {
      const span = document.createElement("span");
      span.className = "tok " + t.kind;
      span.textContent = t.text;
      box.appendChild(span);
    }
    $("parsed").textContent = JSON.stringify(
      { lang: r.lang, speaker_changes: r.speaker_changes, endpoints: r.endpoints, entities: r.entities, malformed: r.malformed },
      null,
      1,
    );
  } catch (e) {
    showError(box, e);
  }
}

// Diverging blue/red scale around zero.
function color(v, max) {
  const x = Math.max(-1, Math.min(1, v / max));
  const c = Math.round(255 * (1 - Math.abs(x)));
  return x >= 0 ? `rgb(255,${c},${c})` : `rgb(${c},${c},255)`;
}

function renderHeatmap() {
  const canvas = $("heat");
  try {
    const r = call(activation, $("strategy").value, taskBits(), Number($("dim").value), 7);
    const rows = [...r.bank, r.vector];
    const cell = 14;
    canvas.width = r.vector.length * cell;
    canvas.height = (rows.length + 1) * cell;
    const ctx = canvas.getContext("2d");
    const max = Math.max(1e-9, ...rows.flat().map(Math.abs));
    rows.forEach((row, i) => {
      const y = (i === rows.length - 1 ? i + 1 : i) * cell;
      row.forEach((v, j) => {
        ctx.fillStyle = color(v, max);
        ctx.fillRect(j * cell, y, cell, cell);
      });
      if (r.used.includes(i)) {
        ctx.strokeStyle = "#000";
        ctx.lineWidth = 2;
        ctx.strokeRect(1, y + 1, canvas.width - 2, cell - 2);
      }
    });
  } catch (e) {
    showError(canvas.parentElement, e);
  }
}

function renderLattice() {
  const table = $("alpha");
  try {
    const r = call(lattice, Number($("frames").value), Number($("labels").value), Number($("width").value), Number($("lseed").value));
    const brute = r.bruteforce === null ? "too many paths to enumerate" : r.bruteforce.toFixed(10);
    $("loss").textContent = `loss ${r.loss.toFixed(10)}, enumerated ${brute} over ${r.paths} alignments`;
    table.innerHTML = "<tr><th>t \\ u</th>" + r.alpha[0].map((_, u) => `<th>${u}</th>`).join("") + "</tr>";
    r.alpha.forEach((row, t) => {
      table.innerHTML += `<tr><th>${t}</th>` + row.map((v) => `<td>${v.toFixed(3)}</td>`).join("") + "</tr>";
    });
  } catch (e) {
    $("loss").textContent = e.message;
    table.innerHTML = "";
  }
}

await init();
for (const el of document.querySelectorAll(".task, #utt")) {
  el.addEventListener("input", () => {
    renderTokens();
    renderHeatmap();
  });
}
for (const id of ["strategy", "dim"]) $(id).addEventListener("input", renderHeatmap);
for (const id of ["frames", "labels", "width", "lseed"]) $(id).addEventListener("input", renderLattice);
renderTokens();
renderHeatmap();
renderLattice();
