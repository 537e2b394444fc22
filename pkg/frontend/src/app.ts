// DOM wiring for the explorer. Every number shown here comes from the API;
// the client holds only edit state.

import { ApiClient, ApiError, Attrition, Concept } from "./api.js";
import {
  ConceptSetDraft,
  UiCohortDraft,
  addConcept,
  emptyDraft,
  serialize,
  validate,
} from "./model.js";

const api = new ApiClient();
const DEBOUNCE_MS = 250;

let draft: UiCohortDraft = emptyDraft();
let savedId: number | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function banner(message: string, isError = true): void {
  const box = el<HTMLDivElement>("banner");
  box.textContent = message;
  box.className = message ? (isError ? "banner error" : "banner ok") : "banner";
}

// -- concept search ---------------------------------------------------------

let searchTimer: number | undefined;

function onSearchInput(): void {
  window.clearTimeout(searchTimer);
  searchTimer = window.setTimeout(runSearch, DEBOUNCE_MS);
}

async function runSearch(): Promise<void> {
  const query = el<HTMLInputElement>("search").value;
  const results = el<HTMLTableSectionElement>("search-results");
  try {
    const page = await api.searchConcepts(query);
    results.replaceChildren(...page.items.map(conceptRow));
    banner("");
  } catch (err) {
    banner(`search failed: ${(err as Error).message}`);
  }
}

function conceptRow(c: Concept): HTMLTableRowElement {
  const tr = document.createElement("tr");
  tr.innerHTML =
    `<td>${c.concept_id}</td><td>${c.concept_name}</td>` +
    `<td>${c.vocabulary_id}</td><td>${c.concept_code}</td>`;
  const td = document.createElement("td");
  const btn = document.createElement("button");
  btn.textContent = "add";
  btn.onclick = () => addToCurrentSet(c.concept_id);
  td.appendChild(btn);
  tr.appendChild(td);
  return tr;
}

// -- concept sets -----------------------------------------------------------

function currentSet(): ConceptSetDraft | null {
  const picker = el<HTMLSelectElement>("set-picker");
  const id = Number(picker.value);
  return draft.conceptSets.find((cs) => cs.id === id) ?? null;
}

function addToCurrentSet(conceptId: number): void {
  const set = currentSet();
  if (!set) {
    banner("create a concept set first");
    return;
  }
  const updated = addConcept(set, conceptId);
  draft.conceptSets = draft.conceptSets.map((cs) => (cs.id === set.id ? updated : cs));
  draft.unsaved = true;
  renderSets();
}

function newSet(): void {
  const name = el<HTMLInputElement>("set-name").value.trim();
  if (!name) return;
  const nextId = draft.conceptSets.reduce((m, cs) => Math.max(m, cs.id + 1), 0);
  draft.conceptSets.push({ id: nextId, name, concept_ids: [] });
  draft.unsaved = true;
  el<HTMLInputElement>("set-name").value = "";
  renderSets();
}

function renderSets(): void {
  const picker = el<HTMLSelectElement>("set-picker");
  const keep = picker.value;
  picker.replaceChildren(
    ...draft.conceptSets.map((cs) => {
      const opt = document.createElement("option");
      opt.value = String(cs.id);
      opt.textContent = `${cs.name} (${cs.concept_ids.length})`;
      return opt;
    }),
  );
  if ([...picker.options].some((o) => o.value === keep)) picker.value = keep;
  const list = el<HTMLUListElement>("set-list");
  list.replaceChildren(
    ...draft.conceptSets.map((cs) => {
      const li = document.createElement("li");
      li.textContent = `${cs.id}: ${cs.name} -> [${cs.concept_ids.join(", ")}]`;
      return li;
    }),
  );
  renderEntryPickers();
}

// -- builder ----------------------------------------------------------------

function renderEntryPickers(): void {
  for (const select of document.querySelectorAll<HTMLSelectElement>(".set-ref")) {
    const keep = select.value;
    select.replaceChildren(
      ...draft.conceptSets.map((cs) => {
        const opt = document.createElement("option");
        opt.value = String(cs.id);
        opt.textContent = cs.name;
        return opt;
      }),
    );
    if ([...select.options].some((o) => o.value === keep)) select.value = keep;
  }
}

function addGroup(): void {
  draft.inclusion.push({ name: `group ${draft.inclusion.length + 1}`, mode: "all", criteria: [] });
  draft.unsaved = true;
  renderGroups();
}

function addCriterion(groupIndex: number): void {
  draft.inclusion[groupIndex].criteria.push({
    domain: "condition",
    concept_set: draft.conceptSets[0]?.id ?? 0,
    op: ">=",
    count: 1,
    start_offset_days: null,
    end_offset_days: null,
  });
  draft.unsaved = true;
  renderGroups();
}

function renderGroups(): void {
  const host = el<HTMLDivElement>("groups");
  host.replaceChildren(
    ...draft.inclusion.map((g, gi) => {
      const box = document.createElement("fieldset");
      const legend = document.createElement("legend");
      legend.textContent = `${g.name} (${g.mode})`;
      if (g.mode === "any" && g.criteria.length === 1) {
        legend.textContent += " - single criterion: any behaves like all";
      }
      box.appendChild(legend);
      const ul = document.createElement("ul");
      ul.replaceChildren(
        ...g.criteria.map((c) => {
          const li = document.createElement("li");
          const window =
            c.start_offset_days === null && c.end_offset_days === null
              ? "any time"
              : `[${c.start_offset_days ?? "-inf"}, ${c.end_offset_days ?? "+inf"}] days`;
          li.textContent = `${c.domain} in set ${c.concept_set}: ${c.op} ${c.count}, ${window}`;
          return li;
        }),
      );
      box.appendChild(ul);
      const btn = document.createElement("button");
      btn.textContent = "add criterion";
      btn.onclick = () => addCriterion(gi);
      box.appendChild(btn);
      return box;
    }),
  );
}

function readEntryForm(): void {
  draft.name = el<HTMLInputElement>("cohort-name").value;
  draft.entry = {
    domain: el<HTMLSelectElement>("entry-domain").value as UiCohortDraft["entry"]["domain"],
    concept_set: Number(el<HTMLSelectElement>("entry-set").value),
    limit: el<HTMLSelectElement>("entry-limit").value as UiCohortDraft["entry"]["limit"],
    prior_obs_days: Number(el<HTMLInputElement>("prior-days").value || 0),
    post_obs_days: Number(el<HTMLInputElement>("post-days").value || 0),
  };
  draft.unsaved = true;
}

async function saveDraft(): Promise<void> {
  readEntryForm();
  const problems = validate(draft);
  const saveBtn = el<HTMLButtonElement>("save");
  if (problems.length > 0) {
    banner(problems.join("; "));
    saveBtn.disabled = true;
    window.setTimeout(() => (saveBtn.disabled = false), 1200);
    return;
  }
  try {
    const created = await api.saveCohort(serialize(draft));
    savedId = created.id;
    draft.unsaved = false;
    banner(`saved cohort ${created.id}`, false);
  } catch (err) {
    banner(err instanceof ApiError ? err.message : String(err));
  }
}

// -- results ----------------------------------------------------------------

async function generateSaved(): Promise<void> {
  if (savedId === null) {
    banner("save the cohort first");
    return;
  }
  try {
    const result = await api.generate(savedId);
    el<HTMLSpanElement>("subject-count").textContent = String(result.subjects);
    renderAttrition(result.attrition);
    const rows = await api.results(savedId);
    el<HTMLTableSectionElement>("result-rows").replaceChildren(
      ...rows.items.map((r) => {
        const tr = document.createElement("tr");
        tr.innerHTML =
          `<td>${r.subject_id}</td><td>${r.cohort_start_date}</td>` +
          `<td>${r.cohort_end_date}</td>`;
        return tr;
      }),
    );
    banner("");
  } catch (err) {
    // validation problems from the engine come back verbatim
    banner(err instanceof ApiError ? err.message : String(err));
  }
}

function renderAttrition(attrition: Attrition): void {
  const list = el<HTMLOListElement>("attrition");
  const rows = [
    `entry events: ${attrition.initial_events}, persons: ${attrition.initial_persons}`,
    ...attrition.after_rule.map((r) => `${r.name}: ${r.persons}`),
    `final subjects: ${attrition.final_subjects}`,
  ];
  list.replaceChildren(
    ...rows.map((text) => {
      const li = document.createElement("li");
      li.textContent = text;
      return li;
    }),
  );
}

// -- variants ---------------------------------------------------------------

async function showVariants(): Promise<void> {
  const conceptId = Number(el<HTMLInputElement>("variant-concept").value);
  if (!conceptId) return;
  try {
    const doc = await api.variants(conceptId);
    el<HTMLSpanElement>("variant-count").textContent = String(doc.distinct_count);
    const sorted = [...doc.variants].sort((a, b) => b.count - a.count);
    el<HTMLTableSectionElement>("variant-rows").replaceChildren(
      ...sorted.map((v) => {
        const tr = document.createElement("tr");
        tr.innerHTML = `<td>${v.variant}</td><td>${v.count}</td>`;
        return tr;
      }),
    );
  } catch (err) {
    banner(err instanceof ApiError ? err.message : String(err));
  }
}

// -- boot -------------------------------------------------------------------

async function boot(): Promise<void> {
  el<HTMLInputElement>("search").addEventListener("input", onSearchInput);
  el<HTMLButtonElement>("new-set").onclick = newSet;
  el<HTMLButtonElement>("add-group").onclick = addGroup;
  el<HTMLButtonElement>("save").onclick = () => void saveDraft();
  el<HTMLButtonElement>("generate").onclick = () => void generateSaved();
  el<HTMLButtonElement>("show-variants").onclick = () => void showVariants();
  renderSets();
  renderGroups();
  try {
    const status = await api.status();
    el<HTMLSpanElement>("pipeline-status").textContent =
      `${status.stage} (${Math.round(status.progress * 100)}%)`;
  } catch {
    el<HTMLSpanElement>("pipeline-status").textContent = "unavailable";
  }
}

if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => void boot());
}
