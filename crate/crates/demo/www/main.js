import init, { run_scenario, variable_histograms, format_map, bundled_map } from "./pkg/msm_demo.js";

const $ = (id) => document.getElementById(id);
const params = () => [$("scenario").value, Number($("n").value), Number($("seed").value)];

function guarded(fn) {
  return () => {
    try {
      fn();
    } catch (e) {
      $("report").textContent = String(e.message ?? e);
      $("report").className = "err";
    }
  };
}

function trace() {
  const report = JSON.parse(run_scenario(...params(), $("alert").value.trim(), 200));
  $("report").className = "";
  $("report").textContent = `${report.scenario.name}: ${report.scenario.description}\n\n${report.text}`;
}

function histograms() {
  const { variables } = JSON.parse(variable_histograms(...params(), 8));
  const box = $("histograms");
  box.replaceChildren();
  for (const v of variables) {
    const card = document.createElement("div");
    const title = document.createElement("strong");
    title.textContent = `${v.name}  jsd=${v.jsd.toFixed(4)}`;
    card.append(title);
    v.labels.forEach((label, i) => {
      const row = document.createElement("div");
      row.className = "bar";
      const r = document.createElement("span");
      r.className = "ref";
      r.style.width = `${v.reference[i] * 200}px`;
      const c = document.createElement("span");
      c.className = "cur";
      c.style.width = `${v.current[i] * 200}px`;
      row.append(label, r, c);
      card.append(row);
    });
    box.append(card);
  }
}

function format() {
  const out = JSON.parse(format_map($("map").value));
  if (out.ok) {
    $("map").value = out.canonical;
    $("format-status").textContent = "ok";
    $("format-status").className = "";
  } else {
    $("format-status").textContent = `${out.line}:${out.column}: ${out.message}`;
    $("format-status").className = "err";
  }
}

await init();
$("map").value = bundled_map();
$("run").onclick = guarded(trace);
$("hist").onclick = guarded(histograms);
$("format").onclick = format;
guarded(trace)();
