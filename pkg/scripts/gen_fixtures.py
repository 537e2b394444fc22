"""Regenerate the packaged fixture files under src/caremart/data/.

Run from the repo root: python scripts/gen_fixtures.py
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "src" / "caremart" / "data"

FALL_VARIANT_EXAMPLES = [
    "accident &fell",
    "Accident a fall",
    "accident and fall",
    "accident and falling",
    "accident and fell",
    "accident from falling",
    "accident/ fall",
    "accidents/falls",
    "down Falls",
    "down Fall",
    "down and falling",
    "down and falls",
    "fall",
    "fall and injured",
]

REHAB_CATEGORIES = {
    "type of motion": [
        "flexion", "extension", "abduction", "adduction", "rotation", "pronation",
        "supination", "dorsiflexion", "plantarflexion", "circumduction", "eversion",
        "inversion", "lateral flexion", "radial deviation", "ulnar deviation",
        "protraction", "retraction", "elevation",
    ],
    "side of body": ["left", "right", "bilateral", "unilateral", "bilaterally", "dominant"],
    "location on body": [
        "shoulder", "knee", "ankle", "hip", "elbow", "wrist", "cervical spine",
        "lumbar spine", "hamstring", "quadriceps", "forearm", "trunk", "calf",
        "achilles", "rotator cuff", "scapula", "patella",
    ],
    "plane of motion": ["sagittal plane", "frontal plane", "transverse plane", "coronal plane"],
    "duration": [
        "ten minutes", "fifteen minutes", "twenty minutes", "thirty minutes",
        "half hour", "one hour", "brief hold", "sustained hold", "five minutes",
        "forty five seconds",
    ],
    "set and rep information": [
        "three sets", "two sets", "ten reps", "fifteen reps", "twelve repetitions",
        "single set", "max reps", "warmup set",
    ],
    "exercise purpose": [
        "strengthening", "stretching", "conditioning", "stabilization",
        "proprioception", "neuromuscular reeducation", "pain reduction", "mobility work",
    ],
    "exercise type": [
        "squat", "lunge", "bridging", "heel raise", "straight leg raise", "wall slide",
        "step up", "resisted band pull", "treadmill walking", "stationary cycling",
        "isometric hold", "pendulum swing", "calf raise", "side plank", "bird dog",
        "clamshell", "seated row", "dead bug",
    ],
    "body position": [
        "supine", "prone", "sidelying", "seated", "standing", "quadruped", "kneeling",
        "semirecumbent", "half kneeling", "hooklying", "long sitting", "tall kneeling",
    ],
}


def concepts_and_relationships():
    concepts = []
    rels = []

    def c(cid, name, domain, vocab, cls, std, code):
        concepts.append([cid, name, domain, vocab, cls, std, code])

    # demographic / visit / type concepts
    c(8507, "MALE", "Gender", "Gender", "Gender", "S", "M")
    c(8532, "FEMALE", "Gender", "Gender", "Gender", "S", "F")
    c(8527, "White", "Race", "Race", "Race", "S", "5")
    c(8516, "Black or African American", "Race", "Race", "Race", "S", "3")
    c(8515, "Asian", "Race", "Race", "Race", "S", "2")
    c(38003563, "Hispanic or Latino", "Ethnicity", "Ethnicity", "Ethnicity", "S", "Hispanic")
    c(38003564, "Not Hispanic or Latino", "Ethnicity", "Ethnicity", "Ethnicity", "S", "Not Hispanic")
    c(32817, "EHR", "Type Concept", "Type Concept", "Type Concept", "S", "OMOP4976890")
    c(44814645, "Encounter note", "Type Concept", "Note Type", "Note Type", "S", "ENC-NOTE")
    c(44814646, "Procedure note", "Type Concept", "Note Type", "Note Type", "S", "PX-NOTE")
    c(45877039, "Abstract encounter", "Visit", "Visit", "Visit", "S", "ABSTRACT")
    c(44791052, "Allergy mixing visit", "Visit", "Visit", "Visit", "S", "ALLERGY-MIX")
    c(46272888, "Allergy shot visit", "Visit", "Visit", "Visit", "S", "ALLERGY-SHOT")
    c(46237886, "Ambulatory visit summary", "Visit", "Visit", "Visit", "S", "AMB-SUMMARY")
    c(35803400, "Anticoagulation visit", "Visit", "Visit", "Visit", "S", "ANTICOAG")
    c(4089197, "Appointment", "Visit", "Visit", "Visit", "S", "APPT")
    c(9201, "Inpatient Visit", "Visit", "Visit", "Visit", "S", "IP")
    c(9202, "Outpatient Visit", "Visit", "Visit", "Visit", "S", "OP")

    # case-study standard concepts
    c(35207821, "Stroke (cerebral infarction)", "Condition", "SNOMED", "Clinical Finding", "S", "230690007")
    c(35206882, "Type 2 diabetes mellitus", "Condition", "SNOMED", "Clinical Finding", "S", "44054006")
    c(436583, "Fall", "Condition", "SNOMED", "Clinical Finding", "S", "1912002")
    c(4029593, "Near fall", "Condition", "SNOMED", "Clinical Finding", "S", "404911009")
    c(2314284, "Therapeutic exercise (physical therapy)", "Procedure", "CPT4", "CPT4", "S", "97110")

    # background standard conditions
    for k in range(30):
        c(4400001 + k, f"Synthetic condition {k + 1}", "Condition", "SNOMED",
          "Clinical Finding", "S", f"SC{k + 1:04d}")

    # ICD10CM source concepts (non-standard, Maps to the standards above)
    c(45601639, "Cerebral infarction, unspecified", "Condition", "ICD10CM",
      "ICD10CM code", "", "I63.9")
    rels.append([45601639, 35207821])
    c(45601119, "Type 2 diabetes mellitus without complications", "Condition",
      "ICD10CM", "ICD10CM code", "", "E11.9")
    rels.append([45601119, 35206882])
    for k in range(30):
        cid = 45610001 + k
        c(cid, f"Synthetic ICD10CM diagnosis {k + 1}", "Condition", "ICD10CM",
          "ICD10CM code", "", f"S{k:02d}.{k % 10}")
        rels.append([cid, 4400001 + (k % 30)])

    # ICD10 (non-CM) codes resolved via the fallback chain
    for k in range(10):
        cid = 45620001 + k
        c(cid, f"Synthetic ICD10 diagnosis {k + 1}", "Condition", "ICD10",
          "ICD10 code", "", f"T{k:02d}")
        rels.append([cid, 4400001 + (k % 30)])

    # ICD9CM codes
    for k in range(5):
        cid = 45630001 + k
        c(cid, f"Synthetic ICD9CM diagnosis {k + 1}", "Condition", "ICD9CM",
          "ICD9CM code", "", f"9{k:02d}.{k % 10}")
        rels.append([cid, 4400001 + (k % 30)])

    # CPT4 procedures (standard, map to themselves)
    for k in range(30):
        c(2313801 + k, f"Synthetic procedure {k + 1}", "Procedure", "CPT4",
          "CPT4", "S", f"9{800 + k:04d}")
    # one non-standard CPT4 code with a Maps to hop
    c(2720001, "Synthetic tracking code", "Observation", "CPT4", "CPT4", "", "0001F")
    rels.append([2720001, 2313801])
    # a code with two Maps to targets (lowest id wins)
    c(45640001, "Ambiguous diagnosis code", "Condition", "ICD10CM", "ICD10CM code", "", "Z99.9")
    rels.append([45640001, 4400002])
    rels.append([45640001, 4400001])

    # custom rehab concepts used by the category dictionary
    rehab_rows = []
    cid = 2000000001
    for category, terms in REHAB_CATEGORIES.items():
        for term in terms:
            c(cid, term.capitalize(), "Observation", "CAREMART", "Rehab Concept", "S",
              f"RHB{cid - 2000000000:03d}")
            rehab_rows.append([term, f"CMX{cid - 2000000000:07d}", cid, category])
            cid += 1
    return concepts, rels, rehab_rows


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    concepts, rels, rehab_rows = concepts_and_relationships()
    assert len(rehab_rows) == 101, len(rehab_rows)

    with open(DATA / "concept.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["concept_id", "concept_name", "domain_id", "vocabulary_id",
                    "concept_class_id", "standard_concept", "concept_code"])
        w.writerows(concepts)
    with open(DATA / "concept_relationship.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["concept_id_1", "concept_id_2", "relationship_id"])
        for c1, c2 in rels:
            w.writerow([c1, c2, "Maps to"])

    rules = [
        {"field": "gender", "rules": [
            {"match": "MALE", "concept_id": 8507},
            {"match": "FEMALE", "concept_id": 8532}], "default": 0},
        {"field": "race", "rules": [
            {"match": "WHITE", "concept_id": 8527},
            {"match": "BLACK", "concept_id": 8516},
            {"match": "ASIAN", "concept_id": 8515}], "default": 0},
        {"field": "ethnicity", "rules": [
            {"match": "HISPANIC OR LATINO", "concept_id": 38003563},
            {"match": "NOT HISPANIC OR LATINO", "concept_id": 38003564}], "default": 0},
        {"field": "enc_type", "rules": [
            {"match": "ABSTRACT", "concept_id": 45877039},
            {"match": "ALLERGY MIXING", "concept_id": 44791052},
            {"match": "ALLERGY SHOT", "concept_id": 46272888},
            {"match": "AMBULATORY VISIT SUMMARY", "concept_id": 46237886},
            {"match": "ANTICOAGULATION", "concept_id": 35803400},
            {"match": "ANTICOAGULATION SCHEDULED", "concept_id": 35803400},
            {"match": "APPOINTMENT", "concept_id": 4089197},
            {"match": "OUTPATIENT", "concept_id": 9202},
            {"match": "INPATIENT", "concept_id": 9201}], "default": 0},
        {"field": "note_type", "rules": [
            {"match": "encounter", "concept_id": 44814645},
            {"match": "procedure", "concept_id": 44814646}], "default": 0},
    ]
    (DATA / "rules.json").write_text(json.dumps(rules, indent=2) + "\n", encoding="utf-8")

    dict_rows = [[v, "C0000921", 436583, ""] for v in FALL_VARIANT_EXAMPLES]
    dict_rows += [
        ["near fall", "C0558873", 0, ""],  # linked via manual_links.json
        ["stroke", "C0038454", 35207821, ""],
        ["cerebral infarction", "C0007785", 35207821, ""],
        ["type 2 diabetes", "C0011860", 35206882, ""],
        ["physical therapy", "C0949766", 2314284, ""],
    ]
    with open(DATA / "dictionary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["surface_term", "cui", "concept_id", "category"])
        w.writerows(dict_rows)

    with open(DATA / "rehab_categories.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["surface_term", "cui", "concept_id", "category"])
        w.writerows(rehab_rows)

    (DATA / "manual_links.json").write_text(
        json.dumps({"C0558873": 4029593}, indent=2) + "\n", encoding="utf-8"
    )

    case_study_1 = {
        "id": 2,
        "name": "Patients with stroke and diabetes who had physical therapies",
        "concept_sets": [
            {"id": 0, "name": "stroke", "concept_ids": [35207821]},
            {"id": 1, "name": "type 2 diabetes", "concept_ids": [35206882]},
            {"id": 2, "name": "physical therapy", "concept_ids": [2314284]},
        ],
        "entry": {
            "domain": "condition",
            "concept_set": 0,
            "limit": "earliest",
            "prior_obs_days": 0,
            "post_obs_days": 0,
        },
        "inclusion": [
            {
                "name": "Patients with Type II Diabetes",
                "mode": "all",
                "criteria": [
                    {
                        "domain": "condition",
                        "concept_set": 1,
                        "occurrences": {"op": ">=", "count": 1},
                        "window": {"start_offset_days": None, "end_offset_days": None},
                    }
                ],
            },
            {
                "name": "Patients who went through physical therapy",
                "mode": "all",
                "criteria": [
                    {
                        "domain": "procedure",
                        "concept_set": 2,
                        "occurrences": {"op": ">=", "count": 1},
                        "window": {"start_offset_days": None, "end_offset_days": None},
                    }
                ],
            },
        ],
        "exit": "end_of_observation",
    }
    (DATA / "cohort_case_study_1.json").write_text(
        json.dumps(case_study_1, indent=2) + "\n", encoding="utf-8"
    )

    default_config = {
        "store_root": ".caremart_store",
        "port": 8017,
        "gen": {
            "seed": 42,
            "n_patients": 1000,
            "date_range": ["2016-01-01", "2018-12-31"],
            "unmappable_procedure_fraction": 0.09627,
            "unmappable_diagnosis_fraction": 0.00129,
            "planted_cohort": {"n_qualifying": 5, "n_entry_only": 3},
            "planted_concepts": [
                {"concept_id": 436583, "variants": 358, "negated_mentions": 5}
            ],
        },
        "nlp": {
            "batch_size": 200,
            "worker_count": 4,
            "memory_budget_mb": 512,
            "checkpoint_every": 10,
        },
        "qa_limits": {},
    }
    (DATA / "caremart.default.json").write_text(
        json.dumps(default_config, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote fixtures to {DATA}")


if __name__ == "__main__":
    main()
