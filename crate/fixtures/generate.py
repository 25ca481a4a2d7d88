"""Regenerates the small committed fixtures. Output is deterministic.

    python3 fixtures/generate.py
"""
import csv
import json
import math
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))

PEOPLE = ["man", "woman", "boy", "girl", "chef", "musician", "cyclist", "farmer", "student", "dancer"]
ACTS = ["running", "painting a fence", "playing guitar", "cooking pasta", "reading a book",
        "riding a bike", "climbing a wall", "washing a car", "selling fruit", "throwing a ball"]
PLACES = ["park", "kitchen", "street", "market", "garden", "gym", "station", "beach"]
NLI = ["entailment", "neutral", "contradiction"]
DNLI = ["weakener", "strengthener"]


def write_jsonl(path, rows):
    with open(os.path.join(HERE, path), "w", encoding="utf-8", newline="\n") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n")


def cap(s):
    return s[0].upper() + s[1:]


def nli_hypothesis(label, person, act, rng):
    if label == "entailment":
        return rng.choice([f"A person is {act}.", f"Someone is {act} outside."])
    if label == "neutral":
        return rng.choice([f"A tall {person} is {act}.", f"A {person} is {act} for a competition."])
    return rng.choice([f"Nobody is {act}.", f"The {person} is sleeping at home."])


def nli_premise_for(target, person, act, place, hyp):
    """A rewritten premise that gives `hyp` the label `target`."""
    if target == "entailment":
        return f"{hyp[:-1]} in the {place}, and the photo shows it clearly."
    if target == "neutral":
        return f"A {person} stands in the {place} holding a coffee."
    if hyp.startswith("Nobody") or "sleeping" in hyp:
        return f"A {person} is {act} in the crowded {place}."
    return f"The {place} is completely empty and no one is {act}."


def snli(rng):
    sizes = {"train": 120, "valid": 30, "test": 60}
    rows = []
    n = 0
    for split, count in sizes.items():
        for i in range(count):
            label = NLI[i % 3]
            person, act, place = rng.choice(PEOPLE), rng.choice(ACTS), rng.choice(PLACES)
            rows.append({
                "id": f"snli-{split}-{i:03d}",
                "task": "nli",
                "premise": f"A {person} is {act} in the {place}.",
                "hypothesis": nli_hypothesis(label, person, act, rng),
                "update": None,
                "gold": label,
                "split": split,
                "_slots": (person, act, place),
            })
            n += 1
    return rows


def dnli_update(label, person, rng):
    if label == "strengthener":
        return rng.choice([f"The {person} looks focused.", f"The {person} has practiced for years."])
    return rng.choice([f"The {person} is exhausted.", f"The {person} is asleep on a bench."])


def dsnli(rng):
    sizes = {"train": 80, "valid": 20, "test": 40}
    rows = []
    for split, count in sizes.items():
        for i in range(count):
            label = DNLI[i % 2]
            person, act, place = rng.choice(PEOPLE), rng.choice(ACTS), rng.choice(PLACES)
            rows.append({
                "id": f"dsnli-{split}-{i:03d}",
                "task": "dnli",
                "premise": f"A {person} is in the {place}.",
                "hypothesis": f"The {person} is {act}.",
                "update": dnli_update(label, person, rng),
                "gold": label,
                "split": split,
                "_slots": (person, act, place),
            })
    return rows


def public(rows):
    return [{k: v for k, v in r.items() if not k.startswith("_")} for r in rows]


def logits_for(labels, predicted, confidence, scale, rng):
    """Logits whose softmax gives roughly `confidence` to `predicted`, then
    multiplied by `scale` to make the model over- or under-confident."""
    k = len(labels)
    rest = [rng.random() + 0.2 for _ in range(k - 1)]
    total = sum(rest)
    probs, j = [], 0
    for l in labels:
        if l == predicted:
            probs.append(confidence)
        else:
            probs.append((1 - confidence) * rest[j] / total)
            j += 1
    return [round(scale * math.log(p), 6) for p in probs]


def predictions(rows, labels, model, view, accuracy, scale, rng):
    out = []
    for r in rows:
        if r["split"] == "train":
            continue
        gold = r["gold"]
        if rng.random() < accuracy:
            predicted = gold
        else:
            predicted = rng.choice([l for l in labels if l != gold])
        conf = rng.uniform(0.45, 0.97) if len(labels) == 3 else rng.uniform(0.55, 0.97)
        out.append({
            "instance_id": r["id"],
            "model_id": model,
            "view": view,
            "logits": logits_for(labels, predicted, conf, scale, rng),
            "gold": gold,
        })
    return out


def snli_edits(rows, rng):
    test = [r for r in rows if r["split"] == "test"]
    edits = []
    by_label = {l: [r for r in test if r["gold"] == l] for l in NLI}
    n = 0
    for l in NLI:
        targets = [t for t in NLI if t != l]
        for j, r in enumerate(by_label[l]):
            t = targets[j % 2]
            person, act, place = r["_slots"]
            n += 1
            edits.append({
                "id": f"snli-edit-{n:03d}",
                "orig_id": r["id"],
                "sentence1": nli_premise_for(t, person, act, place, r["hypothesis"]),
                "sentence2": r["hypothesis"],
                "label": l,
                "new_label": t,
            })
    return edits


def dsnli_edits(rows):
    test = [r for r in rows if r["split"] == "test"]
    edits = []
    counts = {"weakener": 0, "strengthener": 0}
    for r in test:
        l = r["gold"]
        if counts[l] == 10:
            continue
        counts[l] += 1
        t = "strengthener" if l == "weakener" else "weakener"
        person, act, place = r["_slots"]
        if t == "strengthener":
            hyp = f"The {person} is resting in the {place}."
        else:
            hyp = f"The {person} is {act} with great energy."
        edits.append({
            "edit_id": f"dsnli-edit-{len(edits) + 1:03d}",
            "original_id": r["id"],
            "premise": r["premise"],
            "edited_hypothesis": hyp,
            "update": r["update"],
            "original_label": l,
            "target_label": t,
        })
    return edits


# Correct predictions per (l, l') cell of the edited sets, out of the cell
# size. The expected matrices under expected/ are written from these.
SNLI_CORRECT = {("entailment", "neutral"): 8, ("entailment", "contradiction"): 7,
                ("neutral", "entailment"): 4, ("neutral", "contradiction"): 8,
                ("contradiction", "entailment"): 9, ("contradiction", "neutral"): 10}
DSNLI_CORRECT = {("weakener", "strengthener"): 8, ("strengthener", "weakener"): 7}


def edited_predictions(edits, labels, correct, model, rng, id_key, l_key, t_key):
    seen = {}
    out = []
    for e in edits:
        cell = (e[l_key], e[t_key])
        seen[cell] = seen.get(cell, 0) + 1
        predicted = e[t_key] if seen[cell] <= correct[cell] else e[l_key]
        out.append({
            "instance_id": e[id_key],
            "model_id": model,
            "view": "full",
            "logits": logits_for(labels, predicted, rng.uniform(0.5, 0.95), 1.8, rng),
            "gold": e[t_key],
        })
    return out


def main():
    rng = random.Random(20231)
    os.makedirs(os.path.join(HERE, "predictions"), exist_ok=True)
    os.makedirs(os.path.join(HERE, "edits"), exist_ok=True)

    s = snli(rng)
    d = dsnli(rng)
    write_jsonl("snli_tiny.jsonl", public(s))
    write_jsonl("dsnli_tiny.jsonl", public(d))

    write_jsonl("predictions/snli_partial.jsonl", predictions(s, NLI, "roberta-partial", "partial", 0.7, 1.6, rng))
    write_jsonl("predictions/snli_full.jsonl", predictions(s, NLI, "roberta-full", "full", 0.9, 1.8, rng))
    write_jsonl("predictions/dsnli_partial.jsonl", predictions(d, DNLI, "roberta-partial", "partial", 0.65, 1.5, rng))
    write_jsonl("predictions/dsnli_full.jsonl", predictions(d, DNLI, "roberta-full", "full", 0.82, 1.7, rng))

    se = snli_edits(s, rng)
    with open(os.path.join(HERE, "edits/snli_released.csv"), "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(se[0].keys()), lineterminator="\n")
        w.writeheader()
        w.writerows(se)
    de = dsnli_edits(d)
    write_jsonl("edits/dsnli_released.jsonl", de)

    write_jsonl("predictions/snli_edited_full.jsonl",
                edited_predictions(se, NLI, SNLI_CORRECT, "roberta-full", rng, "id", "label", "new_label"))
    write_jsonl("predictions/dsnli_edited_full.jsonl",
                edited_predictions(de, DNLI, DSNLI_CORRECT, "roberta-full", rng,
                                   "edit_id", "original_label", "target_label"))

    pairs = ([("entailment", "entailment")] * 40 + [("entailment", "contradiction")] * 10
             + [("contradiction", "entailment")] * 10 + [("contradiction", "contradiction")] * 40)
    with open(os.path.join(HERE, "kappa_contingency.csv"), "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["annotator_a", "annotator_b"])
        w.writerows(pairs)


if __name__ == "__main__":
    main()
