"""Pluggable sentence embedders.

The default is a deterministic hashed bag-of-ngrams embedder so the whole
pipeline (training, tests, CLI) runs offline. A sentence-transformers
provider can be selected when that model is available locally; the chosen
embedder id is recorded in dataset records and checkpoints and must stay
consistent within a run.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import EmptyText
from .vocab import tokenize


class HashedNGramEmbedder:
    """L2-normalized hashed token 1/2-gram counts (seeded sha256 hashing)."""

    def __init__(self, dim: int = 384, seed: int = 0):
        self.dim = dim
        self.seed = seed

    @property
    def embedder_id(self) -> str:
        return f"hashed-ngram-{self.dim}-seed{self.seed}-v1"

    def _slot(self, gram: str) -> tuple[int, float]:
        digest = hashlib.sha256(f"{self.seed}:{gram}".encode("utf-8")).digest()
        index = int.from_bytes(digest[:8], "little") % self.dim
        sign = 1.0 if digest[8] & 1 else -1.0
        return index, sign

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyText("cannot embed empty or punctuation-only text")
        vec = np.zeros(self.dim, dtype=np.float64)
        grams = list(tokens)
        grams += [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
        for gram in grams:
            index, sign = self._slot(gram)
            vec[index] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # Sign collisions cancelled everything; fall back to unsigned counts.
            for gram in grams:
                index, _ = self._slot(gram)
                vec[index] += 1.0
            norm = np.linalg.norm(vec)
        return (vec / norm).astype(np.float32)


class SbertEmbedder:
    """sentence-transformers provider; requires the model to be present."""

    def __init__(self, model_name: str = "all-MiniLM-L6-v2"):
        from sentence_transformers import SentenceTransformer

        self.model_name = model_name
        self._model = SentenceTransformer(model_name)
        self.dim = self._model.get_sentence_embedding_dimension()

    @property
    def embedder_id(self) -> str:
        return f"sbert-{self.model_name}"

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        vec = self._model.encode([text], normalize_embeddings=True)[0]
        return np.asarray(vec, dtype=np.float32)


def get_embedder(name: str = "hashed", seed: int = 0):
    if name == "hashed":
        return HashedNGramEmbedder(seed=seed)
    if name.startswith("sbert"):
        _, _, model_name = name.partition(":")
        return SbertEmbedder(model_name or "all-MiniLM-L6-v2")
    raise ValueError(f"unknown embedder '{name}' (use 'hashed' or 'sbert[:model]')")


def embed_sentence(text: str, embedder=None) -> np.ndarray:
    """One-shot sentence embedding with the default (or given) embedder."""
    return (embedder or HashedNGramEmbedder()).embed(text)
