// Cohort draft model: the editable client-side state behind the builder.
// validate() mirrors the server's definition parser so problems surface
// before POST; serialize() emits the exact definition document the engine
// consumes. The UI never evaluates cohort logic itself.

export const DOMAINS = ["condition", "procedure", "visit", "note_nlp"] as const;
export const LIMITS = ["earliest", "latest", "all"] as const;
export const OPS = [">=", "<=", "="] as const;

export type Domain = (typeof DOMAINS)[number];
export type EntryLimit = (typeof LIMITS)[number];
export type OccurrenceOp = (typeof OPS)[number];

export interface ConceptSetDraft {
  id: number;
  name: string;
  concept_ids: number[];
}

export interface EntryDraft {
  domain: Domain;
  concept_set: number;
  limit: EntryLimit;
  prior_obs_days: number;
  post_obs_days: number;
}

export interface CriterionDraft {
  domain: Domain;
  concept_set: number;
  op: OccurrenceOp;
  count: number;
  start_offset_days: number | null;
  end_offset_days: number | null;
}

export interface GroupDraft {
  name: string;
  mode: "all" | "any";
  criteria: CriterionDraft[];
}

export interface UiCohortDraft {
  id: number;
  name: string;
  conceptSets: ConceptSetDraft[];
  entry: EntryDraft;
  inclusion: GroupDraft[];
  unsaved: boolean;
}

export function emptyDraft(id = 1): UiCohortDraft {
  return {
    id,
    name: "",
    conceptSets: [],
    entry: {
      domain: "condition",
      concept_set: 0,
      limit: "earliest",
      prior_obs_days: 0,
      post_obs_days: 0,
    },
    inclusion: [],
    unsaved: true,
  };
}

export function addConcept(set: ConceptSetDraft, conceptId: number): ConceptSetDraft {
  // set semantics: re-adding an existing concept changes nothing
  if (set.concept_ids.includes(conceptId)) {
    return set;
  }
  return { ...set, concept_ids: [...set.concept_ids, conceptId] };
}

export function validate(draft: UiCohortDraft): string[] {
  const problems: string[] = [];
  const setIds = new Set<number>();
  for (const cs of draft.conceptSets) {
    if (setIds.has(cs.id)) {
      problems.push(`duplicate concept set ${cs.id}`);
    }
    setIds.add(cs.id);
    if (cs.concept_ids.length === 0) {
      problems.push(`concept set "${cs.name}" is empty`);
    }
  }
  if (draft.name.trim() === "") {
    problems.push("cohort name is required");
  }
  if (!setIds.has(draft.entry.concept_set)) {
    problems.push(`entry refers to missing concept set ${draft.entry.concept_set}`);
  }
  if (draft.entry.prior_obs_days < 0 || draft.entry.post_obs_days < 0) {
    problems.push("observation day requirements must be >= 0");
  }
  draft.inclusion.forEach((group, gi) => {
    if (group.criteria.length === 0) {
      problems.push(`inclusion group "${group.name || gi + 1}" has no criteria`);
    }
    for (const c of group.criteria) {
      if (!setIds.has(c.concept_set)) {
        problems.push(
          `criterion in "${group.name}" refers to missing concept set ${c.concept_set}`,
        );
      }
      if (c.count < 0) {
        problems.push("occurrence count must be >= 0");
      }
      if (
        c.start_offset_days !== null &&
        c.end_offset_days !== null &&
        c.start_offset_days > c.end_offset_days
      ) {
        problems.push(`empty window [${c.start_offset_days}, ${c.end_offset_days}]`);
      }
    }
  });
  return problems;
}

export function serialize(draft: UiCohortDraft): Record<string, unknown> {
  return {
    id: draft.id,
    name: draft.name,
    concept_sets: draft.conceptSets.map((cs) => ({
      id: cs.id,
      name: cs.name,
      concept_ids: [...cs.concept_ids].sort((a, b) => a - b),
    })),
    entry: {
      domain: draft.entry.domain,
      concept_set: draft.entry.concept_set,
      limit: draft.entry.limit,
      prior_obs_days: draft.entry.prior_obs_days,
      post_obs_days: draft.entry.post_obs_days,
    },
    inclusion: draft.inclusion.map((g) => ({
      name: g.name,
      mode: g.mode,
      criteria: g.criteria.map((c) => ({
        domain: c.domain,
        concept_set: c.concept_set,
        occurrences: { op: c.op, count: c.count },
        window: {
          start_offset_days: c.start_offset_days,
          end_offset_days: c.end_offset_days,
        },
      })),
    })),
    exit: "end_of_observation",
  };
}

export function deserialize(doc: Record<string, any>): UiCohortDraft {
  return {
    id: doc.id ?? 1,
    name: doc.name ?? "",
    conceptSets: (doc.concept_sets ?? []).map((cs: any) => ({
      id: cs.id,
      name: cs.name ?? "",
      concept_ids: [...cs.concept_ids],
    })),
    entry: {
      domain: doc.entry.domain,
      concept_set: doc.entry.concept_set,
      limit: doc.entry.limit ?? "earliest",
      prior_obs_days: doc.entry.prior_obs_days ?? 0,
      post_obs_days: doc.entry.post_obs_days ?? 0,
    },
    inclusion: (doc.inclusion ?? []).map((g: any) => ({
      name: g.name ?? "",
      mode: g.mode ?? "all",
      criteria: g.criteria.map((c: any) => ({
        domain: c.domain,
        concept_set: c.concept_set,
        op: c.occurrences.op,
        count: c.occurrences.count,
        start_offset_days: c.window?.start_offset_days ?? null,
        end_offset_days: c.window?.end_offset_days ?? null,
      })),
    })),
    unsaved: false,
  };
}
