"""Tokenization and the caption vocabulary.

The same tokenizer is used for training captions, decoding output, and
metric scoring, so candidates and references always live in one token space.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation, dropping the punctuation."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    """Ordered token list with the four specials pinned to indices 0-3."""

    tokens: list[str] = field(default_factory=lambda: list(SPECIAL_TOKENS))

    def __post_init__(self) -> None:
        if tuple(self.tokens[:4]) != SPECIAL_TOKENS:
            raise ValueError("special tokens must occupy indices 0-3")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._index = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @classmethod
    def build(cls, captions: Iterable[str], min_freq: int = 2) -> "Vocabulary":
        """Build from raw caption strings; tokens below min_freq map to UNK.

        Tokens are ordered by descending frequency then alphabetically so the
        same corpus always yields the same index assignment.
        """
        counts: Counter[str] = Counter()
        for caption in captions:
            counts.update(tokenize(caption))
        kept = sorted(
            (tok for tok, n in counts.items() if n >= min_freq),
            key=lambda tok: (-counts[tok], tok),
        )
        return cls(list(SPECIAL_TOKENS) + kept)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self._index.get(tok, UNK) for tok in tokens]

    def encode_caption(self, caption: str, max_len: int = 30) -> list[int]:
        """Token ids for a caption, truncated to max_len, with EOS appended."""
        ids = self.encode(tokenize(caption)[:max_len])
        return ids + [EOS]

    def decode(self, ids: Iterable[int]) -> list[str]:
        """Tokens for the given ids, skipping PAD/BOS/EOS."""
        return [self.tokens[i] for i in ids if i not in (PAD, BOS, EOS)]

    def to_json(self) -> str:
        return json.dumps(self.tokens, ensure_ascii=False)

    @classmethod
    def from_json(cls, payload: str) -> "Vocabulary":
        return cls(list(json.loads(payload)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
