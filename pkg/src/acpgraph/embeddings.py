"""Pretrained word vectors in the plain-text ``token v1 v2 ... vD`` layout."""
from __future__ import annotations

import logging
from typing import Iterable

import numpy as np

log = logging.getLogger("acpgraph.embeddings")


class WordVectors:
    def __init__(self, tokens: Iterable[str], matrix: np.ndarray):
        self.tokens = list(tokens)
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.tokens):
            raise ValueError("matrix rows must match token count")
        self.ids = {t: k for k, t in enumerate(self.tokens)}
        if len(self.ids) != len(self.tokens):
            raise ValueError("duplicate tokens in word vectors")
        self.oov_hits = 0
        self._mean = self.matrix.mean(axis=0) if len(self.tokens) else np.zeros(self.matrix.shape[1])

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self.ids

    def __len__(self) -> int:
        return len(self.tokens)

    def get(self, token: str) -> np.ndarray | None:
        k = self.ids.get(token)
        return None if k is None else self.matrix[k]

    def lookup(self, token: str) -> np.ndarray:
        """Vector for ``token``; unknown tokens get the mean of all known vectors."""
        v = self.get(token)
        if v is None:
            self.oov_hits += 1
            log.debug("out-of-vocabulary token %r", token)
            return self._mean
        return v

    @classmethod
    def loads(cls, text: str) -> "WordVectors":
        tokens, rows = [], []
        dim = None
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            # word2vec-style "<count> <dim>" header
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            vec = [float(x) for x in parts[1:]]
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"line {lineno}: expected {dim} components, got {len(vec)}")
            tokens.append(parts[0])
            rows.append(vec)
        if dim is None:
            raise ValueError("no vectors found")
        return cls(tokens, np.array(rows))

    def dumps(self) -> str:
        return "".join(t + " " + " ".join(repr(float(x)) for x in row) + "\n"
                       for t, row in zip(self.tokens, self.matrix))
