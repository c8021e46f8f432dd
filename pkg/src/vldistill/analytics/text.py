"""Caption tokenization for topic modeling.

Lowercase, split on non-alphabetic runs, drop short tokens, stopwords
and rare words. The vocabulary is sorted lexicographically so token ids
are stable across runs.
"""
from __future__ import annotations

import re
from collections import Counter
from importlib import resources

_WORD_RE = re.compile(r"[a-z]+")


def load_stopwords(path: str | None = None) -> set:
    """Stopword set; defaults to the packaged list. # comments ignored."""
    if path is None:
        text = (resources.files("vldistill.resources")
                .joinpath("stopwords.txt").read_text(encoding="utf-8"))
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    out = set()
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            out.add(line)
    return out


def tokenize_corpus(texts: list, min_len: int = 3, min_count: int = 5,
                    stopwords: set | None = None):
    """Returns (vocab, docs) with docs as lists of vocab indices.

    Empty documents stay in place as empty lists so doc ids keep their
    alignment with the input.
    """
    stop = load_stopwords() if stopwords is None else set(stopwords)

    token_docs = []
    freq = Counter()
    for text in texts:
        tokens = [
            t for t in _WORD_RE.findall(text.lower())
            if len(t) >= min_len and t not in stop
        ]
        token_docs.append(tokens)
        freq.update(tokens)

    vocab = sorted(w for w, c in freq.items() if c >= min_count)
    index = {w: i for i, w in enumerate(vocab)}
    docs = [[index[t] for t in tokens if t in index] for tokens in token_docs]
    return vocab, docs
