"""Writes the scripted 10-question fixture under tests/golden/fixture/.

Each question lists the scripted replies per purpose in call order. The
comments next to each question describe the path the run takes through the
tree, scoring and selection so the golden records can be checked by hand.
"""

import json
import pathlib

HERE = pathlib.Path(__file__).resolve().parent
OUT = HERE / "fixture"


def ans(letter, lead="Putting the findings together"):
    return f"{lead}, the best option is {letter}.\nThe answer is ({letter})."


def score(n, why="The steps follow from the vignette."):
    return f"SCORE: {n}\n{why}"


QUESTIONS = [
    # Root promising, both children solved on B. Single option: agreement.
    dict(
        id="q01",
        question="A 24-year-old woman has fatigue and a microcytic anemia with low ferritin. What is the most likely cause?",
        options={"A": "Thalassemia trait", "B": "Iron deficiency", "C": "Anemia of chronic disease", "D": "Lead poisoning"},
        gold="B",
        decompose="Low ferritin is the key laboratory finding.",
        validate=["VERDICT: promising", "VERDICT: solved", "VERDICT: solved"],
        extend=["Low ferritin indicates depleted iron stores.", "Microcytosis with low ferritin excludes thalassemia trait."],
        readout=[ans("B"), ans("B")],
        score=[score(8), score(9), score(7), score(8)],
        cot=[ans("B"), ans("B"), ans("B")],
    ),
    # Chains A, C, C. avg: A 2.2255 > C 1.8922; max: C 2.5631 > A. Judge picks A.
    dict(
        id="q02",
        question="A 60-year-old smoker has hyponatremia and a central lung mass. Which tumor is most likely?",
        options={"A": "Small cell carcinoma", "B": "Squamous cell carcinoma", "C": "Adenocarcinoma", "D": "Carcinoid"},
        gold="A",
        decompose="Hyponatremia suggests SIADH from a paraneoplastic source.",
        validate=["VERDICT: promising", "VERDICT: promising", "VERDICT: solved", "VERDICT: solved", "VERDICT: solved"],
        extend=[
            "SIADH with a central mass points to a neuroendocrine tumor.",
            "Adenocarcinoma is the most common lung cancer overall.",
            "Small cell carcinoma secretes ADH.",
            "Adenocarcinoma is common in smokers.",
        ],
        readout=[ans("A"), ans("C"), ans("C")],
        score=[score(8), score(8), score(2), score(2), score(9), score(10)],
        judge=["Ectopic ADH secretion is characteristic of small cell carcinoma.\nThe answer is (A)."],
        cot=[ans("A"), ans("C"), ans("A")],
    ),
    # Chains D, E, E with the q02 score pattern. Judge sides with E (wrong).
    dict(
        id="q03",
        question="A newborn has bilious vomiting and a double bubble sign. Which condition is most associated?",
        options={"A": "Pyloric stenosis", "B": "Hirschsprung disease", "C": "Meconium ileus", "D": "Down syndrome", "E": "Cystic fibrosis"},
        gold="D",
        decompose="The double bubble sign indicates duodenal atresia.",
        validate=["VERDICT: promising", "VERDICT: promising", "VERDICT: solved", "VERDICT: solved", "VERDICT: solved"],
        extend=[
            "Duodenal atresia is associated with trisomy 21.",
            "Bowel obstruction in newborns raises meconium ileus.",
            "Trisomy 21 is the classic association.",
            "Meconium ileus is linked to cystic fibrosis.",
        ],
        readout=[ans("D"), ans("E"), ans("E")],
        score=[score(8), score(8), score(2), score(2), score(9), score(10)],
        judge=["The obstruction pattern fits meconium ileus.\nThe answer is (E)."],
        cot=[ans("E"), ans("E"), ans("D")],
    ),
    # Both children dead ends: no chains, CoT-SC fallback votes C.
    dict(
        id="q04",
        question="A patient on lithium develops polyuria and dilute urine. What is the mechanism?",
        options={"A": "Central diabetes insipidus", "B": "Primary polydipsia", "C": "Nephrogenic diabetes insipidus", "D": "SIADH"},
        gold="C",
        decompose="Lithium affects the collecting duct.",
        validate=["VERDICT: promising", "VERDICT: dead_end", "VERDICT: dead_end"],
        extend=["The pituitary is damaged by lithium.", "The patient drinks too much water."],
        cot=[ans("C"), ans("C"), ans("B")],
    ),
    # Blank decomposition: empty tree, fallback votes B (wrong).
    dict(
        id="q05",
        question="Which vitamin deficiency causes Wernicke encephalopathy?",
        options={"A": "Thiamine", "B": "Niacin", "C": "Cobalamin", "D": "Folate"},
        gold="A",
        decompose="   ",
        cot=["  ", ans("B"), ans("B")],
    ),
    # Root solved at once; first reasoning score unparseable, retry parses.
    dict(
        id="q06",
        question="A tall man with a murmur and lens dislocation most likely has a defect in which protein?",
        options={"A": "Collagen type I", "B": "Fibrillin-1", "C": "Elastin", "D": "Dystrophin"},
        gold="B",
        decompose="Marfan syndrome: fibrillin-1 defect causes lens dislocation and aortic disease.",
        validate=["VERDICT: solved"],
        readout=[ans("B")],
        score=["The reasoning looks sound to me.", score(6), score(7)],
        cot=[ans("B"), ans("B"), ans("B")],
    ),
    # Chain D stays unscored after two bad replies; only A is scored: agreement on A (wrong).
    dict(
        id="q07",
        question="Which drug reverses heparin anticoagulation?",
        options={"A": "Vitamin K", "B": "Idarucizumab", "C": "Andexanet alfa", "D": "Protamine sulfate"},
        gold="D",
        decompose="Heparin reversal uses a positively charged agent.",
        validate=["VERDICT: promising", "VERDICT: solved", "VERDICT: solved"],
        extend=["Protamine binds heparin.", "Vitamin K restores clotting factors."],
        readout=[ans("D"), ans("A")],
        score=["unsure", "still unsure", score(5), score(5)],
        cot=[ans("A"), ans("A"), ans("C")],
    ),
    # Depth limit: a promising grandchild at the last level is pruned; the
    # second branch yields two C chains.
    dict(
        id="q08",
        question="A child has periorbital edema, proteinuria and normal complement. What is the most likely diagnosis?",
        options={"A": "Post-streptococcal glomerulonephritis", "B": "IgA nephropathy", "C": "Minimal change disease", "D": "Alport syndrome"},
        gold="C",
        decompose="Nephrotic picture in a child.",
        validate=[
            "VERDICT: promising",
            "VERDICT: promising",
            "VERDICT: promising",
            "VERDICT: dead_end",
            "VERDICT: promising",
            "VERDICT: solved",
            "VERDICT: solved",
        ],
        extend=[
            "Consider nephritic causes.",
            "Nephrotic syndrome in children is usually minimal change disease.",
            "Complement could still be low later.",
            "Hematuria would be expected.",
            "Normal complement supports minimal change disease.",
            "Steroid responsiveness is typical.",
        ],
        readout=[ans("C"), ans("C")],
        score=[score(6), score(6), score(8), score(7)],
        cot=[ans("C"), ans("C"), ans("B")],
    ),
    # Judge reply names neither finalist: keeps the average-side option A.
    dict(
        id="q09",
        question="Which nerve is injured in a midshaft humerus fracture with wrist drop?",
        options={"A": "Radial nerve", "B": "Ulnar nerve", "C": "Median nerve", "D": "Axillary nerve"},
        gold="A",
        decompose="Wrist drop localizes to the extensors.",
        validate=["VERDICT: promising", "VERDICT: promising", "VERDICT: solved", "VERDICT: solved", "VERDICT: solved"],
        extend=[
            "The radial nerve runs in the spiral groove.",
            "The ulnar nerve is near the elbow.",
            "Radial nerve palsy causes wrist drop.",
            "Claw hand relates to the ulnar nerve.",
        ],
        readout=[ans("A"), ans("B"), ans("B")],
        score=[score(8), score(8), score(2), score(2), score(9), score(10)],
        judge=["Both candidates have merit and I cannot decide."],
        cot=[ans("A"), ans("A"), ans("A")],
    ),
    # Nothing to select from and no usable CoT sample: abstain.
    dict(
        id="q10",
        question="Which enzyme is deficient in classic phenylketonuria?",
        options={"A": "Tyrosinase", "B": "Phenylalanine hydroxylase", "C": "Homogentisate oxidase", "D": "Dihydropteridine reductase"},
        gold="B",
        decompose="",
        cot=["", " ", "\n"],
    ),
]

PURPOSES = ["decompose", "validate", "extend", "readout", "score", "judge", "cot"]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "questions.jsonl", "w", encoding="utf-8") as f:
        for q in QUESTIONS:
            row = {"id": q["id"], "question": q["question"], "options": q["options"],
                   "answer": q["options"][q["gold"]], "answer_idx": q["gold"]}
            f.write(json.dumps(row, ensure_ascii=False) + "\n")

    script = []
    for q in QUESTIONS:
        for purpose in PURPOSES:
            replies = q.get(purpose)
            if replies is None:
                continue
            if isinstance(replies, str):
                replies = [replies]
            for i, text in enumerate(replies):
                script.append({"question_id": q["id"], "purpose": purpose, "index": i, "text": text})
    with open(OUT / "script.json", "w", encoding="utf-8") as f:
        json.dump(script, f, indent=1, ensure_ascii=False)
        f.write("\n")

    config = {
        "seed": 7,
        "alpha": 0.6,
        "max_depth": 2,
        "branching": 2,
        "max_chains": 3,
        "node_budget": 10,
        "cot_samples": 3,
        "backend": {"kind": "scripted", "fixture": "script.json"},
        "difficulty": {"k1": 0.9},
        "fixed_timestamp": "2025-01-01T00:00:00Z",
        "workers": 1,
    }
    with open(OUT / "config.json", "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
