# Copyright 2026 The loosecf Authors.
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

"""Regenerates embeddings.txt: seeded Gaussian word vectors for every word in
the bundled fixtures, with a few planted near-neighbour pairs."""
import hashlib
import re

import numpy as np

DIM = 16
PUNCT = set(".,!?;:\"'()")


def tokens(text):
    out, cur = [], ""
    for ch in text:
        if ch.isspace():
            if cur:
                out.append(cur)
            cur = ""
        elif ch in PUNCT:
            if cur:
                out.append(cur)
            cur = ""
            out.append(ch)
        else:
            cur += ch
    if cur:
        out.append(cur)
    return [t.lower() for t in out]


def vec(word):
    seed = int(hashlib.sha256(word.encode()).hexdigest()[:8], 16)
    return np.random.default_rng(seed).standard_normal(DIM)


words = set()
for name in ["toy_reviews.tsv", "fixture5.tsv", "negative_openers.tsv"]:
    for line in open(name, encoding="utf-8"):
        words.update(tokens(line.rstrip("\n").split("\t")[2]))
for line in open("concepts.txt", encoding="utf-8"):
    toks = tokens(line)
    words.update(toks)
    if len(toks) > 1:
        words.add("_".join(toks))

table = {w: vec(w) for w in sorted(words) if w not in PUNCT}
# Planted neighbours: (anchor, neighbour, noise scale).
planted = [
    ("spoof", "parodied", 0.2),
    ("comedy", "comedic", 0.2),
    ("movies", "citizen_kane", 0.3),
    ("hocus_pocus", "mumbo_jumbo", 0.2),
    ("tale", "story", 0.3),
    ("brother", "younger_sibling", 0.3),
    ("movie", "film", 0.5),
]
for anchor, neighbour, scale in planted:
    table[neighbour] = table[anchor] + scale * vec(neighbour + "#noise")

with open("embeddings.txt", "w", encoding="utf-8") as f:
    f.write(f"{len(table)} {DIM}\n")
    for w in sorted(table):
        f.write(w + " " + " ".join(f"{x:.6f}" for x in table[w]) + "\n")
