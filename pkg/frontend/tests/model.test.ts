import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import {
  UiCohortDraft,
  addConcept,
  deserialize,
  emptyDraft,
  serialize,
  validate,
} from "../src/model.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixturePath = join(
  here,
  "..",
  "..",
  "src",
  "caremart",
  "data",
  "cohort_case_study_1.json",
);
const fixture = JSON.parse(readFileSync(fixturePath, "utf-8"));

// Rebuild the shipped stroke/diabetes/physical-therapy definition the way a
// user would in the builder.
function caseStudyDraft(): UiCohortDraft {
  const draft = emptyDraft(2);
  draft.name = "Patients with stroke and diabetes who had physical therapies";
  draft.conceptSets = [
    { id: 0, name: "stroke", concept_ids: [35207821] },
    { id: 1, name: "type 2 diabetes", concept_ids: [35206882] },
    { id: 2, name: "physical therapy", concept_ids: [2314284] },
  ];
  draft.entry = {
    domain: "condition",
    concept_set: 0,
    limit: "earliest",
    prior_obs_days: 0,
    post_obs_days: 0,
  };
  draft.inclusion = [
    {
      name: "Patients with Type II Diabetes",
      mode: "all",
      criteria: [
        {
          domain: "condition",
          concept_set: 1,
          op: ">=",
          count: 1,
          start_offset_days: null,
          end_offset_days: null,
        },
      ],
    },
    {
      name: "Patients who went through physical therapy",
      mode: "all",
      criteria: [
        {
          domain: "procedure",
          concept_set: 2,
          op: ">=",
          count: 1,
          start_offset_days: null,
          end_offset_days: null,
        },
      ],
    },
  ];
  return draft;
}

describe("serialization", () => {
  it("rebuilding the shipped definition matches the fixture document", () => {
    expect(serialize(caseStudyDraft())).toEqual(fixture);
  });

  it("round trips through deserialize without change", () => {
    const doc = serialize(caseStudyDraft());
    expect(serialize(deserialize(doc))).toEqual(doc);
  });

  it("loads the fixture itself and re-emits it unchanged", () => {
    expect(serialize(deserialize(fixture))).toEqual(fixture);
  });
});

describe("validation", () => {
  it("accepts the rebuilt definition", () => {
    expect(validate(caseStudyDraft())).toEqual([]);
  });

  it("flags a dangling concept set reference", () => {
    const draft = caseStudyDraft();
    draft.conceptSets = draft.conceptSets.filter((cs) => cs.id !== 1);
    const problems = validate(draft);
    expect(problems.some((p) => p.includes("missing concept set 1"))).toBe(true);
  });

  it("flags a dangling entry reference", () => {
    const draft = caseStudyDraft();
    draft.entry.concept_set = 9;
    expect(validate(draft)).toContain("entry refers to missing concept set 9");
  });

  it("flags empty sets, empty groups, and empty windows", () => {
    const draft = caseStudyDraft();
    draft.conceptSets[0].concept_ids = [];
    draft.inclusion[0].criteria = [];
    draft.inclusion[1].criteria[0].start_offset_days = 5;
    draft.inclusion[1].criteria[0].end_offset_days = -5;
    const problems = validate(draft);
    expect(problems.some((p) => p.includes("is empty"))).toBe(true);
    expect(problems.some((p) => p.includes("has no criteria"))).toBe(true);
    expect(problems.some((p) => p.includes("empty window"))).toBe(true);
  });

  it("requires a name and non-negative counts", () => {
    const draft = caseStudyDraft();
    draft.name = "  ";
    draft.inclusion[0].criteria[0].count = -1;
    const problems = validate(draft);
    expect(problems).toContain("cohort name is required");
    expect(problems).toContain("occurrence count must be >= 0");
  });
});

describe("concept set edits", () => {
  it("adding a duplicate concept leaves the set unchanged", () => {
    const set = { id: 0, name: "stroke", concept_ids: [35207821] };
    expect(addConcept(set, 35207821)).toBe(set);
  });

  it("adding a new concept appends it", () => {
    const set = { id: 0, name: "stroke", concept_ids: [35207821] };
    expect(addConcept(set, 123).concept_ids).toEqual([35207821, 123]);
  });
});
