// Browser wiring: intro with labelled examples, the timed trial loop, and
// the results chart.  All logic that matters for correctness lives in
// session.ts / results.ts; this file only touches the DOM.

import { ApiClient } from "./api.js";
import { renderResultsSvg } from "./results.js";
import { Session, browserScheduler, practiceReveal, type Phase } from "./session.js";

const api = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const intro = el<HTMLDivElement>("intro");
const experiment = el<HTMLDivElement>("experiment");
const resultsBox = el<HTMLDivElement>("results");
const stage = el<HTMLDivElement>("stage");
const stimulusImg = el<HTMLImageElement>("stimulus");
const maskImg = el<HTMLImageElement>("mask");
const fixation = el<HTMLDivElement>("fixation");
const btnReal = el<HTMLButtonElement>("btn-real");
const btnGen = el<HTMLButtonElement>("btn-generated");
const status = el<HTMLDivElement>("status");

let session: Session | null = null;

function showPhase(phase: Phase, image: string | null) {
  fixation.style.display = phase === "fixation" ? "block" : "none";
  stimulusImg.style.display = phase === "stimulus" ? "block" : "none";
  maskImg.style.display = phase === "mask" || phase === "response" ? "block" : "none";
  if (image && phase === "stimulus") stimulusImg.src = image;
  // forced choice opens at stimulus onset, never before
  const open = phase === "stimulus" || phase === "mask" || phase === "response";
  btnReal.disabled = !open;
  btnGen.disabled = !open;
  if (phase === "response") status.textContent = "Real or generated?";
  else if (phase === "done") status.textContent = "Session complete - thank you.";
  else status.textContent = "";
}

async function runSession() {
  const subject = (el<HTMLInputElement>("subject-id").value || "anon").trim();
  const nTrials = parseInt(el<HTMLInputElement>("n-trials").value || "20", 10);
  maskImg.src = await api.mask();
  intro.style.display = "none";
  experiment.style.display = "block";
  session = new Session(api, subject, nTrials, browserScheduler, {
    onPhase: (phase, trial) => showPhase(phase, trial?.image ?? null),
    onDiscarded: () => {
      status.textContent = "Network hiccup - that trial was discarded.";
    },
  });
  await session.run();
  experiment.style.display = "none";
  await showResults();
}

async function showResults() {
  resultsBox.style.display = "block";
  const payload = await api.results();
  el<HTMLDivElement>("chart").innerHTML = renderResultsSvg(payload);
}

async function showExample() {
  const subject = (el<HTMLInputElement>("subject-id").value || "anon").trim();
  const target = el<HTMLDivElement>("examples");
  try {
    const ex = await practiceReveal(api, subject);
    const label = ex.isReal ? "real" : "generated";
    target.insertAdjacentHTML(
      "beforeend",
      `<figure class="example"><img src="${ex.image}" alt=""><figcaption>${label}</figcaption></figure>`,
    );
  } catch (err) {
    target.insertAdjacentHTML("beforeend", `<p class="error">backend unreachable</p>`);
  }
}

function respond(choice: "real" | "generated") {
  void session?.respond(choice);
}

btnReal.addEventListener("click", () => respond("real"));
btnGen.addEventListener("click", () => respond("generated"));
document.addEventListener("keydown", (ev) => {
  // keyboard mirrors the two buttons; ignored while they are disabled
  if (btnReal.disabled) return;
  if (ev.key === "r" || ev.key === "R") respond("real");
  if (ev.key === "g" || ev.key === "G") respond("generated");
});
el<HTMLButtonElement>("btn-example").addEventListener("click", () => void showExample());
el<HTMLButtonElement>("btn-start").addEventListener("click", () => void runSession());
el<HTMLButtonElement>("btn-results").addEventListener("click", () => void showResults());

stage.style.minHeight = "160px";
