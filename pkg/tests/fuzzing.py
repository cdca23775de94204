"""Random and mutation-based inputs for parser fuzzing."""

from __future__ import annotations

import numpy as np

ALPHABET = list('{}[]",:0123456789.-+eE <>/\\ntrufalsxyz\n\t`') + ["<result>", "</result>", "<type>", "</type>",
                                                                     "<instruction>", "<reverse>", '"score"',
                                                                     '"reasoning"', "```json", "&amp;", "é"]

SEEDS = [
    '{"score": [7, 9], "reasoning": "ok"}',
    '```json\n{\n  "score": [3.5, 10],\n  "reasoning": "fine"\n}\n```',
    'Sure! {"score": [12, -1], "reasoning": "over"} trailing',
    "<result><type>Add/Remove Object</type><instruction>Add a cat</instruction><reverse>Remove the cat</reverse>"
    "</result>",
    "<result><type>Change Background</type><instruction>x</instruction><reverse>y</reverse></result>",
    "[[0, 0, 100, 100]]",
    "[[10,10,50,50],[60,60,90,90]]",
    "Boxes: [[1.5, 2.9, 30, 40.2], [5, 5, 5]]",
    "[]",
]


def mutate(text: str, rng: np.random.Generator) -> str:
    chars = list(text)
    for _ in range(int(rng.integers(1, 6))):
        op = int(rng.integers(0, 5))
        pos = int(rng.integers(0, len(chars) + 1))
        if op == 0 and chars:
            del chars[min(pos, len(chars) - 1)]
        elif op == 1:
            chars.insert(pos, ALPHABET[int(rng.integers(len(ALPHABET)))])
        elif op == 2 and chars:
            end = min(len(chars), pos + int(rng.integers(1, 12)))
            chars[pos:pos] = chars[pos:end]
        elif op == 3 and len(chars) > 1:
            i, j = rng.integers(0, len(chars), size=2)
            chars[i], chars[j] = chars[j], chars[i]
        else:
            chars = chars[:pos]
    return "".join(chars)


def random_text(rng: np.random.Generator, max_len: int = 80) -> str:
    n = int(rng.integers(0, max_len))
    return "".join(ALPHABET[int(i)] for i in rng.integers(0, len(ALPHABET), size=n))


def inputs(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    for k in range(n):
        if k % 4 == 0:
            yield random_text(rng)
        else:
            yield mutate(SEEDS[int(rng.integers(len(SEEDS)))], rng)


def run_parser(fn, n: int, seed: int = 0) -> dict:
    """Feed ``n`` fuzz inputs to ``fn``; only success or ParseFailure may come back."""
    from gvcot.errors import ParseFailure

    tally = {"ok": 0, "error": 0}
    for text in inputs(n, seed):
        try:
            fn(text)
        except ParseFailure:
            tally["error"] += 1
        else:
            tally["ok"] += 1
    return tally
