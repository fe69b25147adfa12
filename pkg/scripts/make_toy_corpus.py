"""Regenerate the bundled toy dialog corpus and prompt file.

Usage: python scripts/make_toy_corpus.py [--seed 7]
"""
import argparse
import random
from pathlib import Path

SUBJECTS = ["i", "you", "we", "they", "he", "she", "nobody", "everyone", "the captain",
            "my brother", "your friend", "the doctor", "the old man", "that girl"]
VERBS = ["know", "think", "said", "want", "need", "saw", "found", "lost", "heard",
         "told me", "can see", "will find", "must stop", "left", "remember"]
OBJECTS = ["it", "the money", "the car", "a way out", "the truth", "what happened",
           "the door", "nothing", "something strange", "the house", "my keys", "the letter",
           "your father", "the ship", "a good idea", "the plan", "the answer"]
TAILS = ["", "", "", " here", " again", " tonight", " right now", " before", " at six",
         " in the city", " yesterday", " for a while", " at the station", " by the river"]
OPENERS = ["", "", "", "look, ", "well, ", "listen, ", "okay, ", "no, ", "yes, ", "hey, "]
QUESTIONS = ["what do you mean?", "why did you do that?", "where are you going?",
             "who told you?", "how do you know that?", "what happened here?",
             "are you sure?", "can you help me?", "do you want to come?", "is it true?",
             "what is going on?", "did you see it?", "where is the car?",
             "why not?", "what time is it?", "how did you find me?"]
SHORT = ["i don't know.", "i don't think so.", "of course.", "thank you.", "get out!",
         "come on.", "not now.", "i'm sorry.", "that's right.", "let's go.", "wait!",
         "forget it.", "me too.", "no way.", "it's all right.", "good night."]


def sentence(rng, p_question=0.35, p_short=0.45):
    r = rng.random()
    if r < p_question:
        return rng.choice(QUESTIONS)
    if r < p_question + p_short:
        return rng.choice(SHORT)
    s = rng.choice(OPENERS) + " ".join(
        [rng.choice(SUBJECTS), rng.choice(VERBS), rng.choice(OBJECTS)]) + rng.choice(TAILS)
    return s + rng.choice([".", ".", ".", "!", "?"])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--bytes", type=int, default=50_000)
    ap.add_argument("--p-question", type=float, default=0.35)
    ap.add_argument("--p-short", type=float, default=0.45)
    ap.add_argument("--out", default=str(Path(__file__).parents[1] / "src/divdecode/data"))
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    lines, size = [], 0
    while size < args.bytes:
        line = sentence(rng, args.p_question, args.p_short)
        if rng.random() < 0.3:
            line += " " + sentence(rng, args.p_question, args.p_short)
        lines.append(line)
        size += len(line) + 1
    (out / "toy_corpus.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    # prompts: opening fragments of fresh sentences
    prompts = []
    while len(prompts) < 100:
        words = sentence(rng).split()
        prompts.append(" ".join(words[: rng.randint(1, 2)]) + " ")
    (out / "toy_prompts.txt").write_text("".join(p.rstrip() + "\n" for p in prompts),
                                         encoding="utf-8")


if __name__ == "__main__":
    main()
