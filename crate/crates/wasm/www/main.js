import init, { sc_crops, sc_sample, kp_perturb, infonce_explore } from "./pkg/citss_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function context() {
  const lines = $("context").value.split("\n").map((l) => l.trim()).filter((l) => l.length > 0);
  const idx = lines.findIndex((l) => l.includes("#CITATION_TAG"));
  return { text: lines.join("\n"), idx: Math.max(idx, 0) };
}

function show(el, fn) {
  try {
    el.classList.remove("err");
    fn();
  } catch (e) {
    el.classList.add("err");
    el.textContent = String(e.message ?? e);
  }
}

const esc = (s) => s.replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);

function listCrops() {
  show($("sc-out"), () => {
    const { text, idx } = context();
    const r = JSON.parse(sc_crops(text, idx));
    const head = `original window b=${r.before}, v=${r.after}; ${r.candidates.length} candidates\n\n`;
    $("sc-out").textContent = head + r.candidates.map((c) => `(b=${c.b}, v=${c.v})  ${c.text}`).join("\n");
  });
}

function sampleCrop() {
  show($("sc-out"), () => {
    const { text, idx } = context();
    const r = JSON.parse(sc_sample(text, idx, num("epoch"), BigInt(num("seed"))));
    const crop = r.crop ? `(b=${r.crop.b}, v=${r.crop.v})` : "(no shorter window)";
    $("sc-out").textContent = `${crop}\n${r.sentences.join(" ")}`;
  });
}

function perturb() {
  show($("kp-out"), () => {
    const { text, idx } = context();
    const r = JSON.parse(
      kp_perturb(text, idx, $("op").value, num("beta"), num("gamma"), num("epoch"), BigInt(num("seed"))),
    );
    let out = esc(r.text);
    const replaced = r.sample.log.map((e) => e.replacement).filter(Boolean);
    for (const w of [...new Set(replaced)].sort((a, b) => b.length - a.length)) {
      out = out.split(esc(w)).join(`<mark>${esc(w)}</mark>`);
    }
    const found = r.mentions.map((m) => `${m.surface} (${m.type})`).join(", ") || "none";
    const log = r.sample.log
      .map((e) =>
        e.event === "synonym"
          ? `synonym   ${e.word} → ${e.replacement}`
          : e.event === "fallback"
            ? `fallback  ${e.surface}: no same-type alternative for ${e.requested}, abstracted`
            : `${e.op.padEnd(9)} ${e.surface} → ${e.replacement}`,
      )
      .join("\n");
    $("kp-out").innerHTML = `keyphrases: ${esc(found)}\n\n${out}\n\n${esc(log || "no changes")}`;
  });
}

function drawCurve(sweep, lnB, tau) {
  const svg = $("curve");
  const [w, h, pad] = [svg.width.baseVal.value, svg.height.baseVal.value, 28];
  const ymax = Math.max(lnB * 1.15, ...sweep.map((p) => p.loss).filter(Number.isFinite));
  const x = (t) => pad + ((Math.log10(t) + 2) / 3) * (w - 2 * pad);
  const y = (v) => h - pad - (v / ymax) * (h - 2 * pad);
  const path = sweep
    .filter((p) => Number.isFinite(p.loss))
    .map((p, i) => `${i ? "L" : "M"}${x(p.tau).toFixed(1)},${y(p.loss).toFixed(1)}`)
    .join("");
  const ticks = [0.01, 0.1, 1, 10]
    .map((t) => `<text x="${x(t)}" y="${h - 8}" font-size="10" text-anchor="middle">${t}</text>`)
    .join("");
  svg.innerHTML =
    `<line x1="${pad}" x2="${w - pad}" y1="${y(lnB)}" y2="${y(lnB)}" stroke="#999" stroke-dasharray="4 3"/>` +
    `<line x1="${x(tau)}" x2="${x(tau)}" y1="${pad}" y2="${h - pad}" stroke="#d55"/>` +
    `<path d="${path}" fill="none" stroke="#246" stroke-width="2"/>` +
    ticks +
    `<text x="4" y="${pad - 10}" font-size="10">loss (max ${ymax.toFixed(2)})</text>`;
}

function explore() {
  const tau = 10 ** num("tau");
  $("tau-v").textContent = tau.toFixed(3);
  $("align-v").textContent = num("align").toFixed(2);
  show($("nce-out"), () => {
    const r = JSON.parse(infonce_explore(num("nb"), num("nd"), num("align"), tau, 7n));
    $("nce-out").textContent = `InfoNCE = ${r.loss.toFixed(4)}    ln B = ${r.ln_batch.toFixed(4)}`;
    $("heat").innerHTML = r.probabilities
      .map(
        (row, i) =>
          "<tr>" +
          row
            .map((p, j) => {
              const shade = Math.round(255 - 200 * p);
              const border = i === j ? "outline:2px solid #d55" : "";
              return `<td style="background:rgb(${shade},${shade},255);${border}">${p.toFixed(2)}</td>`;
            })
            .join("") +
          "</tr>",
      )
      .join("");
    drawCurve(r.sweep, r.ln_batch, tau);
  });
}

await init();
$("sc-all").onclick = listCrops;
$("sc-one").onclick = sampleCrop;
$("kp").onclick = perturb;
for (const id of ["nb", "nd", "align", "tau"]) $(id).oninput = explore;
listCrops();
explore();
