#!/usr/bin/env python3
"""Generate a small synthetic workspace: paragraph corpus, questions,
rationales, and eval/train splits for the audit.

Usage: python scripts/make_toy_data.py [--out DIR] [--docs N] [--seed S]
"""

import argparse
import json
from pathlib import Path

import numpy as np

TOPICS = [
    "glaciers", "volcanoes", "spiders", "railways", "ciphers", "orchids",
    "meteors", "harbors", "violins", "reactors", "fossils", "turbines",
]


def paragraph(rng, doc_id: str, topic: str) -> dict:
    n_sents = int(rng.integers(2, 5))
    sentences = []
    for s in range(n_sents):
        extra = " ".join(rng.choice(TOPICS, size=3))
        sentences.append(
            f"Fact {s} about {topic} in document {doc_id} also touches on {extra}."
        )
    return {"doc_id": doc_id, "title": f"{topic.title()} {doc_id}", "text": " ".join(sentences)}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="toy_data", type=Path)
    parser.add_argument("--docs", default=120, type=int)
    parser.add_argument("--questions", default=10, type=int)
    parser.add_argument("--seed", default=0, type=int)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)

    with (args.out / "paragraphs.jsonl").open("w") as fh:
        for i in range(args.docs):
            topic = TOPICS[i % len(TOPICS)]
            fh.write(json.dumps(paragraph(rng, f"doc{i:04d}", topic)) + "\n")

    with (args.out / "questions.jsonl").open("w") as fh, \
         (args.out / "rationales.jsonl").open("w") as rfh:
        for i in range(args.questions):
            topic = TOPICS[i % len(TOPICS)]
            question = f"what do the documents say about {topic}?"
            fh.write(json.dumps({"id": f"q{i}", "question": question,
                                 "answer": topic}) + "\n")
            rfh.write(json.dumps({
                "id": f"q{i}", "question": question,
                "rationale": f"Several documents discuss {topic} and related subjects.",
            }) + "\n")

    eval_rows = [
        {"id": "e0", "question": "what color is the clear daytime sky", "answer": "blue"},
        {"id": "e1", "question": "how many planets orbit the sun", "answer": "8"},
        {"id": "e2", "question": "who chased the butterflies in the park", "answer": "children"},
    ]
    train_rows = [
        {"id": "t0", "question": "what color is the clear daytime sky", "answer": "blue"},
        {"id": "t1", "question": "name the large red planet", "answer": "mars"},
        {"id": "t2", "question": "what did the children chase outside", "answer": "butterflies"},
    ]
    with (args.out / "eval.jsonl").open("w") as fh:
        fh.writelines(json.dumps(r) + "\n" for r in eval_rows)
    with (args.out / "train.jsonl").open("w") as fh:
        fh.writelines(json.dumps(r) + "\n" for r in train_rows)
    print(f"wrote toy workspace under {args.out}/")


if __name__ == "__main__":
    main()
