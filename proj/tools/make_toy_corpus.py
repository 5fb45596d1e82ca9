# SPDX-License-Identifier: Apache-2.0
"""Writes a small template-grammar corpus for desk-scale training runs."""

import argparse
import pathlib
import random

DETS = ["the", "a", "every", "one"]
ADJS = ["small", "old", "quiet", "bright", "lazy", "green", "famous", "strange",
        "young", "happy", "tired", "clever"]
NOUNS = ["dog", "cat", "teacher", "farmer", "bird", "child", "doctor", "king",
         "sailor", "student", "painter", "baker", "horse", "friend"]
VERBS = ["sees", "likes", "follows", "helps", "calls", "finds", "watches",
         "meets", "visits", "knows"]
IVERBS = ["sleeps", "sings", "waits", "runs", "smiles", "works", "laughs"]
PREPS = ["in", "near", "behind", "under", "beside"]
PLACES = ["garden", "market", "house", "river", "forest", "station", "school",
          "village"]
TIMES = ["today", "again", "at night", "in the morning", "every day"]
CONJ = ["and", "but", "because"]


def noun_phrase(rng):
    parts = [rng.choice(DETS)]
    if rng.random() < 0.6:
        parts.append(rng.choice(ADJS))
    parts.append(rng.choice(NOUNS))
    return " ".join(parts)


def clause(rng):
    if rng.random() < 0.6:
        words = [noun_phrase(rng), rng.choice(VERBS), noun_phrase(rng)]
    else:
        words = [noun_phrase(rng), rng.choice(IVERBS)]
    if rng.random() < 0.5:
        words += [rng.choice(PREPS), "the", rng.choice(PLACES)]
    if rng.random() < 0.3:
        words.append(rng.choice(TIMES))
    return " ".join(words)


def sentence(rng, max_len):
    while True:
        text = clause(rng)
        if rng.random() < 0.25:
            text += " " + rng.choice(CONJ) + " " + clause(rng)
        text += " ."
        if len(text.split()) < max_len:
            return text


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/toy")
    ap.add_argument("--train", type=int, default=800)
    ap.add_argument("--valid", type=int, default=200)
    ap.add_argument("--max-len", type=int, default=20,
                    help="sentences keep fewer tokens than this (room for EOS)")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, count in (("train", args.train), ("valid", args.valid)):
        lines = [sentence(rng, args.max_len) for _ in range(count)]
        (out / f"{name}.txt").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
