#!/usr/bin/env python3
"""Builds the mini BPE fixture (vocab + merges) and golden encodings.

The encoder here is an independent reference implementation of byte-level
BPE (the published algorithm: byte-to-unicode remapping, the canonical split
pattern, lowest-rank merge applied to every occurrence per round). The C++
tokenizer is tested against the files this script writes.

Usage:
  python3 tools/make_bpe_fixture.py --out tests/fixtures
  python3 tools/make_bpe_fixture.py --verify vocab.json merges.txt "some text"
"""

import argparse
import json
import os

import regex

SPLIT_PATTERN = regex.compile(
    r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
)

END_OF_TEXT = "<|endoftext|>"


def bytes_to_unicode():
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(2**8):
        if b not in bs:
            bs.append(b)
            cs.append(2**8 + n)
            n += 1
    return dict(zip(bs, [chr(c) for c in cs]))


BYTE_ENCODER = bytes_to_unicode()
BYTE_DECODER = {v: k for k, v in BYTE_ENCODER.items()}


class ReferenceBpe:
    def __init__(self, vocab, merges):
        self.vocab = vocab
        self.ranks = {pair: i for i, pair in enumerate(merges)}

    def bpe(self, token):
        word = tuple(token)
        while len(word) >= 2:
            pairs = {(word[i], word[i + 1]) for i in range(len(word) - 1)}
            best = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if best not in self.ranks:
                break
            first, second = best
            new_word = []
            i = 0
            while i < len(word):
                if (
                    i + 1 < len(word)
                    and word[i] == first
                    and word[i + 1] == second
                ):
                    new_word.append(first + second)
                    i += 2
                else:
                    new_word.append(word[i])
                    i += 1
            word = tuple(new_word)
        return word

    def encode(self, text):
        ids = []
        for fragment in SPLIT_PATTERN.findall(text):
            remapped = "".join(BYTE_ENCODER[b] for b in fragment.encode("utf-8"))
            ids.extend(self.vocab[sym] for sym in self.bpe(remapped))
        return ids

    def decode(self, ids):
        inv = {v: k for k, v in self.vocab.items()}
        text = "".join(inv[i] for i in ids)
        return bytes(BYTE_DECODER[ch] for ch in text).decode(
            "utf-8", errors="replace"
        )


def word_chain(word):
    """Left-to-right merge chain turning `word` into a single symbol."""
    symbols = list(word)
    merges = []
    acc = symbols[0]
    for ch in symbols[1:]:
        merges.append((acc, ch))
        acc += ch
    return merges


def build_mini_vocab():
    # Signal keywords first (highest priority: guaranteed single tokens),
    # then generic bigrams that create real priority competition, then
    # filler-word chains that the bigrams may disrupt.
    keywords = ["pneumonia", "effusion", "edema", "opacity", "fracture"]
    fillers = [
        "the", "lungs", "clear", "chest", "heart", "normal", "acute",
        "pleural", "right", "lower", "lobe", "seen", "with", "report",
        "findings", "world", "hello", "size", "and", "there",
    ]
    bigrams = [
        ("h", "e"), ("i", "n"), ("e", "r"), ("o", "n"), ("r", "e"),
        ("a", "t"), ("e", "n"), ("e", "s"), ("o", "r"), ("a", "n"),
        ("Ġ", "t"), ("Ġ", "a"), ("t", "h"), ("Ġt", "h"),
        ("Ġth", "e"),
    ]

    merges = []
    seen = set()

    def add(pair):
        if pair not in seen:
            seen.add(pair)
            merges.append(pair)

    for w in keywords:
        for pair in word_chain("Ġ" + w):
            add(pair)
        for pair in word_chain(w):
            add(pair)
    for pair in bigrams:
        add(pair)
    for w in fillers:
        for pair in word_chain("Ġ" + w):
            add(pair)

    vocab = {}
    for b in range(256):
        vocab[BYTE_ENCODER[b]] = b
    next_id = 256
    for first, second in merges:
        out = first + second
        if out not in vocab:
            vocab[out] = next_id
            next_id += 1
    vocab[END_OF_TEXT] = next_id
    return vocab, merges


GOLDEN_TEXTS = [
    "",
    "hello world",
    "Hello world",
    "No acute pneumonia.",
    "The chest x-ray shows pleural effusion and edema.",
    "  two  spaces",
    "don't stop",
    "a\n\nb",
    "trailing space ",
    "isn't it's",
    "café 中文 \U0001f600",
    "numbers 123 456",
    "a\t b",
    "<|endoftext|>",
    "Findings: possible opacity in the right lower lobe, but no fracture.",
]

BATCH_TEXTS = [
    "the lungs are clear",
    "pneumonia in the right lower lobe",
    "no acute findings",
    "pleural effusion seen with edema and a large heart",
    "normal chest report",
]


def write_fixture(out_dir):
    vocab, merges = build_mini_vocab()
    os.makedirs(out_dir, exist_ok=True)

    with open(os.path.join(out_dir, "mini_vocab.json"), "w") as f:
        json.dump(vocab, f, ensure_ascii=False, indent=0, sort_keys=False)
        f.write("\n")
    with open(os.path.join(out_dir, "mini_merges.txt"), "w") as f:
        f.write("#version: 0.2\n")
        for a, b in merges:
            f.write(f"{a} {b}\n")

    enc = ReferenceBpe(vocab, merges)
    goldens = []
    for text in GOLDEN_TEXTS:
        ids = enc.encode(text)
        assert enc.decode(ids) == text, f"round-trip failed for {text!r}"
        goldens.append({"text": text, "ids": ids})

    # golden batch: truncate to max_len, right-pad with <|endoftext|>
    max_len = 8
    pad = vocab[END_OF_TEXT]
    rows = []
    for text in BATCH_TEXTS:
        ids = enc.encode(text)[:max_len]
        mask = [1] * len(ids) + [0] * (max_len - len(ids))
        last = len(ids) - 1
        ids = ids + [pad] * (max_len - len(ids))
        rows.append({"ids": ids, "mask": mask, "last_index": last})

    with open(os.path.join(out_dir, "bpe_golden.json"), "w") as f:
        json.dump(
            {
                "goldens": goldens,
                "batch": {
                    "texts": BATCH_TEXTS,
                    "max_len": max_len,
                    "rows": rows,
                },
            },
            f,
            ensure_ascii=False,
            indent=1,
        )
        f.write("\n")
    print(f"wrote fixture with {len(vocab)} tokens, {len(merges)} merges")


def verify(vocab_path, merges_path, text):
    with open(vocab_path) as f:
        vocab = json.load(f)
    merges = []
    with open(merges_path) as f:
        next(f)
        for line in f:
            line = line.rstrip("\n")
            if line:
                a, b = line.split(" ")
                merges.append((a, b))
    enc = ReferenceBpe(vocab, merges)
    print(enc.encode(text))


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/fixtures")
    ap.add_argument("--verify", nargs=3, metavar=("VOCAB", "MERGES", "TEXT"))
    args = ap.parse_args()
    if args.verify:
        verify(*args.verify)
    else:
        write_fixture(args.out)
