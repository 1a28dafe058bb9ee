#!/usr/bin/env python3
# Copyright 2026 The stepgate Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes data/mini_corpus.jsonl and the expected replay outcomes.

The expectations are computed here by direct recounting, independent of the
C++ monitor, for delta = 1/2 and window = 5.
"""

import argparse
import json
import math
from fractions import Fraction
from pathlib import Path

DELIM = "\n\n"
EXIT_PROMPT = "\n\nTime is up. Given my reasoning so far, the single most likely final answer is \\boxed{"
DELTA = Fraction(1, 2)
WINDOW = 5

CONSTRUCTIVE = {"problem_restatement", "definition_recall"}
EVALUATIVE = {"verification", "final_conclusion"}

SHORT = {
    "PR": "problem_restatement", "CR": "context_repetition", "DR": "definition_recall",
    "FS": "formula_substitution", "ST": "symbolic_transformation", "EC": "edge_case",
    "PAT": "pattern_recognition", "EX": "exploration", "IN": "interpretation",
    "SELF": "self_talk", "V": "verification", "HI": "heuristic_intuition",
    "FC": "final_conclusion", "O": "other",
}

SENTENCES = {
    "problem_restatement": "So the problem asks us to {task}.",
    "context_repetition": "As stated, we only need the value asked for, nothing more.",
    "definition_recall": "Recall that {fact}.",
    "formula_substitution": "Plugging the numbers in gives {work}.",
    "symbolic_transformation": "Rewriting the expression step by step, {work}.",
    "edge_case": "What if one of the quantities were zero? That case does not apply here.",
    "pattern_recognition": "I notice a pattern: the terms pair up nicely.",
    "exploration": "Alternatively, I could try another approach and see if it agrees.",
    "interpretation": "This means the quantity we computed is the one asked for.",
    "self_talk": "Hmm, okay, let me think about this for a moment.",
    "verification": "Wait, let me double-check that result: {check}.",
    "heuristic_intuition": "Intuitively the answer should be small.",
    "final_conclusion": "Therefore, the final answer is \\boxed{{{answer}}}.",
    "other": "Okay.",
}

PROBLEMS = [
    {"key": "p1", "prompt": "What is 6 times 7?", "gold": "42", "mode": "boxed_math",
     "task": "multiply 6 by 7", "fact": "multiplication is repeated addition",
     "work": "6 * 7 = 42", "check": "7 + 7 + 7 + 7 + 7 + 7 = 42", "wrong": ["36", "48"]},
    {"key": "p2", "prompt": "Simplify the fraction 6/8.", "gold": "3/4", "mode": "boxed_math",
     "task": "reduce 6/8 to lowest terms", "fact": "a fraction is reduced by the gcd of its terms",
     "work": "gcd(6, 8) = 2 so 6/8 = 3/4", "check": "3 * 8 = 24 = 6 * 4", "wrong": ["5/8", "2/3"]},
    {"key": "p3", "prompt": "Which number is prime? (A) 4 (B) 6 (C) 7 (D) 9", "gold": "C",
     "mode": "mcq", "task": "pick the prime among the choices",
     "fact": "a prime has exactly two divisors", "work": "4 = 2*2, 6 = 2*3, 9 = 3*3",
     "check": "7 has divisors 1 and 7 only", "wrong": ["D", "B"]},
    {"key": "p4", "prompt": "What is the sum of the integers from 1 to 10?", "gold": "55",
     "mode": "boxed_math", "task": "add the integers 1 through 10",
     "fact": "the sum 1 + ... + n equals n(n + 1)/2", "work": "10 * 11 / 2 = 55",
     "check": "1 + 10 = 11 five times gives 55", "wrong": ["45", "50"]},
]

# Per record: the step tags ("-" is a blank step) and the index (1-based,
# counting every step) of the first step whose snapshot is correct, or None.
DESIGNS = {
    # Early stop in the middle of a long verification tail.
    ("p1", 40): ("PR DR FS ST V V V V V V V V FC", 5),
    # Ratio lands exactly on delta at step 4 and 6, which must not flag.
    ("p1", 41): ("PR FS V PR V V FS V V V V FC", 3),
    # All constructive: never stops.
    ("p1", 42): ("PR DR FS ST PR DR FS ST FC", 5),
    # Blank steps inside the violation window are skipped by the monitor.
    ("p2", 40): ("PR DR ST V - V V - V V V V FC", 4),
    # Never correct.
    ("p2", 41): ("PR FS ST V V V V V V FC", None),
    # A flag run broken by a constructive step, then a later stop.
    ("p2", 42): ("PR V V PR V V PR V V V V V V V FC", 2),
    # Only "other" steps until the end: ratio stays 1.
    ("p3", 40): ("SELF EX IN PAT EC HI CR FC", 8),
    # Stops on the very last step.
    ("p3", 41): ("PR FS V V V V V FC", 6),
    # Isolated flags that never fill the window.
    ("p3", 42): ("PR DR V V V PR V PR V FC", 3),
    # Leading blank step.
    ("p4", 40): ("- PR DR FS V V V V V V FC", 5),
    # Never correct, early stop.
    ("p4", 41): ("PR V V V V V V V FC", None),
    # Correct from the first step.
    ("p4", 42): ("DR PR FS V V V V V V V V FC", 1),
}


def step_tokens(key, seed, i, text):
    if text == DELIM:
        return 1
    return 12 + (len(text) * 3 + seed + i * 7 + ord(key[-1])) % 37


def build_record(problem, seed):
    tags_str, first_correct = DESIGNS[(problem["key"], seed)]
    tags = tags_str.split()
    gold = problem["gold"]
    wrong = problem["wrong"]
    steps = []
    snapshot = None
    n = len(tags)
    for i, short in enumerate(tags, start=1):
        if first_correct is not None and i >= first_correct:
            answer = gold
        else:
            answer = wrong[(i // 3) % len(wrong)]
        if short == "-":
            steps.append({"text": DELIM, "token_count": step_tokens(problem["key"], seed, i, DELIM),
                          "gold_tag": None, "answer_snapshot": None, "answer_correct": None})
            continue
        tag = SHORT[short]
        fields = dict(problem)
        fields["answer"] = answer
        text = SENTENCES[tag].format(**fields)
        if i < n:
            text += DELIM
        snapshot = answer
        steps.append({"text": text, "token_count": step_tokens(problem["key"], seed, i, text),
                      "gold_tag": tag, "answer_snapshot": snapshot,
                      "answer_correct": snapshot == gold})
    # The final answer is whatever the closing step boxed.
    final = snapshot
    total = sum(s["token_count"] for s in steps)
    record = {
        "id": f"mini-{problem['key']}-s{seed}",
        "dataset": "mini",
        "model": "synthetic",
        "seed": seed,
        "prompt": problem["prompt"],
        "gold_answer": gold,
        "answer_mode": problem["mode"],
        "final_answer": final,
        "correct": final == gold,
        "runtime_s": round(1.5 + 0.02 * total, 4),
        "steps": steps,
    }
    if seed == 40 and problem["key"] in ("p1", "p2"):
        record["output"] = "".join(s["text"] for s in steps)
    return record


def words_x13(text):
    return math.floor(len(text.split()) * 1.3 + 0.5)


def expected(record):
    counted = []  # (step index, code) for tagged steps
    flags = []
    stop = None
    c = e = 0
    for s in record["steps"]:
        if s["gold_tag"] is None:
            continue
        tag = s["gold_tag"]
        c += tag in CONSTRUCTIVE
        e += tag in EVALUATIVE
        ratio = Fraction(1) if c + e == 0 else Fraction(c, c + e)
        flags.append(ratio < DELTA)
        if len(flags) >= WINDOW and all(flags[-WINDOW:]):
            stop = record["steps"].index(s) + 1
            break
    steps = record["steps"]
    total = sum(s["token_count"] for s in steps)
    out = {"id": record["id"], "standard_tokens": total, "standard_correct": record["correct"]}
    ies = next((i for i, s in enumerate(steps, 1) if s["answer_correct"]), None)
    out["ies_step"] = ies if ies is not None else len(steps)
    out["never_correct"] = ies is None
    if stop is None:
        out.update({"stopped_early": False, "stop_step": None, "tokens_main": total,
                    "tokens_exit": 0, "correct": record["correct"]})
        return out
    snapshot = None
    for s in steps[:stop]:
        if s["answer_snapshot"] is not None:
            snapshot = s["answer_snapshot"]
    forced = snapshot + "}"
    out.update({
        "stopped_early": True,
        "stop_step": stop,
        "tokens_main": sum(s["token_count"] for s in steps[:stop]),
        "tokens_exit": max(1, words_x13(forced)),
        "forced_answer": forced,
        "correct": snapshot == record["gold_answer"],
    })
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=str(Path(__file__).resolve().parent.parent / "data"))
    args = parser.parse_args()
    out_dir = Path(args.out_dir)
    records = [build_record(p, seed) for p in PROBLEMS for seed in (40, 41, 42)]
    with open(out_dir / "mini_corpus.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False, separators=(",", ":")) + "\n")
    exp = {"delta": "0.5", "window": WINDOW, "exit_prompt": EXIT_PROMPT,
           "records": [expected(r) for r in records]}
    with open(out_dir / "mini_corpus_expected.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(exp, f, indent=2, ensure_ascii=False)
        f.write("\n")


if __name__ == "__main__":
    main()
