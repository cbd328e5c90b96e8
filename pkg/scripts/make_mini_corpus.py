#!/usr/bin/env python3
"""Regenerate the bundled mini spam corpus and its fixtures.

Deterministic: a fixed seed produces the exact files committed under
src/weakforge/data/mini_spam. The script self-checks the properties the
test suite depends on (human-LF coverage near 40%, synthesized coverage
100%, and the union training set beating the human-only one on test F1)
and fails loudly if regeneration would break them.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
DATA = REPO / "src" / "weakforge" / "data" / "mini_spam"

SEED = 20230207
N_TRAIN, N_VALID, N_TEST = 200, 50, 60
SPAM_FRACTION = 0.4
HUMAN_CUE_FRACTION = 0.385  # fraction of each class carrying human-known cues

# Cues the bundled human LFs know about. Keyword matching is substring
# based, so every other phrase below must avoid these as substrings.
HUMAN_SPAM_CUES = ["free", "win", "cash", "www", "http"]
HUMAN_HAM_CUES = ["meeting", "lunch", "dinner", "thanks", "love"]

SPAM_HUMAN_PHRASES = [
    "free entry in the weekly draw",
    "win a brand new phone today",
    "cash reward waiting for you",
    "free ringtones for your mobile",
    "visit www.promo-point.example to collect",
    "click http://deal.example for your bonus",
    "winner of our cash giveaway",
    "get free minutes this month",
    "win big cash in the instant lottery",
    "free upgrade if you act on www.offers.example",
]
SPAM_OTHER_PHRASES = [
    "claim your prize before midnight",
    "urgent: your voucher expires today",
    "congratulations you are selected for a jackpot",
    "exclusive offer just for you",
    "subscribe today and get a discount code",
    "txt YES to 80082 to claim the deal",
    "limited offer on designer watches",
    "your loyalty points expire, redeem the voucher",
    "hot singles in your area, reply to chat",
    "final notice about your unclaimed prize",
    "double your airtime with this secret promo",
    "your number was drawn for a mystery reward",
]

HAM_HUMAN_PHRASES = [
    "are we still on for lunch tomorrow",
    "the meeting moved to three pm",
    "dinner at mums on sunday",
    "thanks for the lift this morning",
    "love you, see you tonight",
    "lunch was great, same place next week",
    "running late for the meeting, start without me",
    "happy to host dinner on friday",
    "thanks again for watching the kids",
    "team meeting ran long, heading back now",
]
HAM_OTHER_PHRASES = [
    "i will be home by seven",
    "can you pick me up at the station",
    "the game last night was unbelievable",
    "did you finish the report for class",
    "my train is delayed again",
    "forgot my umbrella, it is pouring here",
    "call me when you get this",
    "the doctor moved my appointment to monday",
    "do we need anything from the shop",
    "that film was longer than i expected",
    "my phone battery is about to die",
    "the plumber finally turned up",
]

# Intros and outros are shared across classes so they carry no label signal;
# the discriminative vocabulary lives in the phrases alone.
SHARED_INTROS = ["", "hey, ", "hi! ", "fyi ", "ok so ", "by the way, ", "quick one - ", "reminder: "]
SHARED_OUTROS = ["", " talk later", " see you", " let me know", " cheers", " ok?"]


def _contains_human_cue(text: str) -> bool:
    lowered = text.lower()
    return any(c in lowered for c in HUMAN_SPAM_CUES + HUMAN_HAM_CUES)


def _make_doc(rng: random.Random, spam: bool, with_human_cue: bool) -> str:
    if spam:
        phrase = rng.choice(SPAM_HUMAN_PHRASES if with_human_cue else SPAM_OTHER_PHRASES)
    else:
        phrase = rng.choice(HAM_HUMAN_PHRASES if with_human_cue else HAM_OTHER_PHRASES)
    text = rng.choice(SHARED_INTROS) + phrase + rng.choice(SHARED_OUTROS)
    if spam and rng.random() < 0.25:
        text = text.upper()
    if with_human_cue != _contains_human_cue(text):
        raise AssertionError(f"cue bookkeeping broken for: {text!r}")
    return text


def _make_split(rng: random.Random, prefix: str, n: int) -> list[dict]:
    n_spam = round(n * SPAM_FRACTION)
    labels = [1] * n_spam + [0] * (n - n_spam)
    rng.shuffle(labels)
    records = []
    for i, label in enumerate(labels):
        with_cue = rng.random() < HUMAN_CUE_FRACTION
        records.append(
            {
                "id": f"{prefix}{i:04d}",
                "text": _make_doc(rng, spam=bool(label), with_human_cue=with_cue),
                "label": "spam" if label else "ham",
            }
        )
    return records


HUMAN_LFS = {
    "hlf_money_words": {
        "name": "hlf_money_words",
        "source": "human",
        "kind": "rule_program",
        "rules": [{"if": {"keyword_any": ["free", "win", "cash"]}, "emit": 1}],
        "default": -1,
    },
    "hlf_links": {
        "name": "hlf_links",
        "source": "human",
        "kind": "rule_program",
        "rules": [{"if": {"keyword_any": ["www", "http"]}, "emit": 1}],
        "default": -1,
    },
    "hlf_plans": {
        "name": "hlf_plans",
        "source": "human",
        "kind": "rule_program",
        "rules": [{"if": {"keyword_any": ["meeting", "lunch", "dinner"]}, "emit": 0}],
        "default": -1,
    },
    "hlf_warmth": {
        "name": "hlf_warmth",
        "source": "human",
        "kind": "rule_program",
        "rules": [{"if": {"keyword_any": ["thanks", "love"]}, "emit": 0}],
        "default": -1,
    },
}

_ALL_SPAM_CUES = [
    "free", "win", "cash", "www", "http", "prize", "claim", "urgent", "offer",
    "subscribe", "txt", "discount", "congratulations", "voucher", "jackpot",
    "singles", "redeem",
]

COMPLETIONS = {
    # Bare JSON program: broad cue list, defaults to ham -> full coverage.
    "completion_01.txt": json.dumps(
        {
            "rules": [{"if": {"keyword_any": _ALL_SPAM_CUES}, "emit": 1}],
            "default": 0,
        },
        indent=2,
    ),
    # Fenced block with chatter around it, exercising block extraction.
    "completion_02.txt": (
        "Here is a labeling function for the task:\n\n"
        "```json\n"
        + json.dumps(
            {
                "rules": [
                    {
                        "if": {
                            "or": [
                                {"regex": "(?i)(https?://|www\\.)"},
                                {"fraction_upper_cmp": {"op": ">=", "threshold": 0.7}},
                            ]
                        },
                        "emit": 1,
                    },
                    {
                        "if": {
                            "and": [
                                {"keyword_any": ["txt", "80082", "reply to chat", "promo"]},
                                {"not": {"length_cmp": {"op": "<", "threshold": 10}}},
                            ]
                        },
                        "emit": 1,
                    },
                ],
                "default": 0,
            },
            indent=2,
        )
        + "\n```\n\nThis should handle promotional messages well.\n"
    ),
    # Trailing prose after the closing brace, exercising brace trimming.
    "completion_03.txt": (
        json.dumps(
            {
                "rules": [
                    {"if": {"keyword_any": ["lunch", "dinner", "meeting", "home", "train",
                                            "later", "tonight", "tomorrow"]}, "emit": 0},
                    {"if": {"keyword_any": ["prize", "claim", "voucher", "jackpot",
                                            "offer", "urgent"]}, "emit": 1},
                ],
                "default": -1,
            },
            indent=2,
        )
        + "\nI hope the rules above are useful.\n"
    ),
}


def _task_specs() -> dict[str, dict]:
    base = {
        "language_line": "Target representation: a JSON rule program for the weakforge rule DSL.",
        "task_description": (
            "Write a labeling function that decides whether a short text message is "
            "spam (unsolicited promotional content) or ham (a normal personal message)."
        ),
        "function_signature": "def label_message(message):",
        "labeling_instructions": (
            "Return 1 for spam, 0 for ham, and -1 to abstain when unsure. Output a JSON "
            "object with a 'rules' list of {\"if\": condition, \"emit\": vote} entries "
            "evaluated first-match-wins and a 'default' vote. Conditions may use "
            "keyword_any, regex, length_cmp, fraction_upper_cmp, and, or, not."
        ),
        "output_form": "rule_program",
        "mission": None,
        "heuristics": None,
        "lf_exemplars": None,
        "data_exemplars": None,
    }
    specs = {"general": dict(base)}
    specs["mission_statement"] = dict(
        base,
        mission=(
            "Mobile spam drowns out real conversations. The classes are 'spam' "
            "(promotions, prize scams, link bait) and 'ham' (plans, check-ins, chatter "
            "between people who know each other); most messages are ham."
        ),
    )
    specs["human_heuristic"] = dict(
        base,
        heuristics=[
            "Words like 'free', 'win', or 'cash' usually indicate spam.",
            "URLs (http, www) in a short message are a strong spam signal.",
            "Mentions of shared plans such as 'lunch', 'dinner', or 'meeting' indicate ham.",
        ],
    )
    specs["lf_exemplars"] = dict(
        base,
        lf_exemplars=[
            json.dumps(
                {"rules": [{"if": {"keyword_any": ["free", "win", "cash"]}, "emit": 1}],
                 "default": -1},
                indent=2,
            )
        ],
    )
    specs["data_exemplars"] = dict(
        base,
        data_exemplars=[
            ["WIN a free cruise, txt YES now", "spam"],
            ["running late for the meeting, start without me", "ham"],
            ["claim your prize before midnight", "spam"],
            ["can you pick me up at the station", "ham"],
        ],
    )
    return specs


def _write_jsonl(records: list[dict], path: Path) -> None:
    with path.open("w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def main() -> int:
    rng = random.Random(SEED)
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "human_lfs").mkdir(exist_ok=True)
    (DATA / "prompts").mkdir(exist_ok=True)
    (DATA / "completions").mkdir(exist_ok=True)

    (DATA / "classes.json").write_text(
        json.dumps({"names": ["ham", "spam"], "positive_class": "spam", "prior": None})
        + "\n",
        encoding="utf-8",
    )
    splits = {
        "train": _make_split(rng, "tr", N_TRAIN),
        "valid": _make_split(rng, "va", N_VALID),
        "test": _make_split(rng, "te", N_TEST),
    }
    for name, records in splits.items():
        _write_jsonl(records, DATA / f"{name}.jsonl")
    for name, doc in HUMAN_LFS.items():
        (DATA / "human_lfs" / f"{name}.json").write_text(
            json.dumps(doc, indent=2) + "\n", encoding="utf-8"
        )
    for name, spec in _task_specs().items():
        (DATA / "prompts" / f"{name}.json").write_text(
            json.dumps(spec, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
    for name, text in COMPLETIONS.items():
        (DATA / "completions" / name).write_text(text, encoding="utf-8")

    # --- self-checks -------------------------------------------------------
    sys.path.insert(0, str(REPO / "src"))
    from weakforge import endmodel, labelmodels
    from weakforge.corpus import load_dataset
    from weakforge.lfkit.apply import apply_all
    from weakforge.lfkit.types import load_lf_dir
    from weakforge.lfkit.rules import parse_rule_program
    from weakforge.lfkit.types import LabelingFunction
    from weakforge.pipeline.artifacts import from_posterior
    from weakforge.pipeline.combine import combine_union
    from weakforge.promptforge.synth import extract_code

    dataset = load_dataset(DATA)
    classes = dataset.classes
    train = dataset.split("train")
    test = dataset.split("test")
    human = load_lf_dir(DATA / "human_lfs", classes.k)
    synth = []
    for i, text in enumerate(COMPLETIONS.values()):
        program = parse_rule_program(json.loads(extract_code(text, "rule_program")), classes.k)
        synth.append(
            LabelingFunction(
                name=f"slf_{i:02d}", source="synthesized", body=program, provenance="fixture"
            )
        )

    human_votes = apply_all(human, train, classes).matrix
    synth_votes = apply_all(synth, train, classes).matrix
    human_cov = float((human_votes.votes != -1).any(axis=1).mean())
    synth_cov = float((synth_votes.votes != -1).any(axis=1).mean())
    print(f"human train coverage: {human_cov:.3f}")
    print(f"synthesized train coverage: {synth_cov:.3f}")
    if not 0.35 <= human_cov <= 0.45:
        raise SystemExit(f"human coverage {human_cov:.3f} drifted outside [0.35, 0.45]")
    if synth_cov != 1.0:
        raise SystemExit(f"synthesized coverage {synth_cov:.3f} != 1.0")

    ids = [d.id for d in train]
    test_texts = [d.text for d in test]
    test_gold = [d.gold for d in test]
    results = {}
    for tag, votes in (("human", human_votes), ("synthesized", synth_votes)):
        model = labelmodels.fit("mv", votes, classes)
        pls = from_posterior(labelmodels.infer(model, votes), ids, origin=tag)
        results[tag] = pls
    combined = combine_union(results["human"], results["synthesized"], ids)
    print(f"combined coverage: {combined.coverage:.3f}")
    if combined.coverage != 1.0:
        raise SystemExit("combined coverage != 1.0")

    docs_by_id = {d.id: d for d in train}
    scores = {}
    for tag, pls in (("human", results["human"]), ("combined", combined)):
        model = endmodel.train(
            [docs_by_id[e.doc_id].text for e in pls.entries],
            [e.label for e in pls.entries],
            classes.k,
            featurize_config=endmodel.FeaturizeConfig(dim=2**14),
            config=endmodel.TrainConfig(epochs=300),
        )
        scores[tag] = endmodel.evaluate(model, test_texts, test_gold, classes).f1_binary
        print(f"end-model test F1 [{tag}]: {scores[tag]:.3f}")
    if scores["combined"] < scores["human"]:
        raise SystemExit("combined F1 fell below human-only F1")
    print("mini corpus OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())
