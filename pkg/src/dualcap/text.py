"""Tokenization, vocabulary construction, and fixed-length caption encoding.

The tokenizer is deliberately small and rule-based so its output is exactly
reproducible: lowercase, split on whitespace, peel leading/trailing ASCII
punctuation into separate tokens, split the "'s" clitic. Captions encode to
a fixed 32-slot layout: begin marker, up to 30 content tokens, end marker,
zero padding.
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UKN_ID = 3

PAD_TOKEN = "<PAD>"
BOS_TOKEN = "<BOS>"
EOS_TOKEN = "<EOS>"
UKN_TOKEN = "UKN"

RESERVED_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UKN_TOKEN)

MAX_CONTENT_TOKENS = 30
CAPTION_SLOTS = MAX_CONTENT_TOKENS + 2  # begin marker + content + end marker
DEFAULT_VOCAB_CAP = 15000

_PUNCT = set(string.punctuation)


def tokenize(text: str) -> list[str]:
    """Split a caption into lowercase tokens; never returns empty tokens."""
    tokens: list[str] = []
    for chunk in text.lower().split():
        leading: list[str] = []
        trailing: list[str] = []
        while chunk and chunk[0] in _PUNCT:
            leading.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in _PUNCT:
            trailing.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(leading)
        if chunk:
            if chunk.endswith("'s") and len(chunk) > 2:
                tokens.append(chunk[:-2])
                tokens.append("'s")
            else:
                tokens.append(chunk)
        tokens.extend(reversed(trailing))
    return tokens


@dataclass
class Vocabulary:
    """Token/id maps with fixed reserved ids PAD=0, BOS=1, EOS=2, UKN=3."""

    id_to_token: list[str] = field(default_factory=lambda: list(RESERVED_TOKENS))
    token_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        if tuple(self.id_to_token[:4]) != RESERVED_TOKENS:
            raise ValueError("first four vocabulary entries must be the reserved tokens")
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("vocabulary contains duplicate tokens")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UKN_ID)

    def token(self, token_id: int) -> str:
        if not 0 <= token_id < self.size:
            raise ValueError(f"token id {token_id} out of range for vocabulary of {self.size}")
        return self.id_to_token[token_id]

    def save(self, path: str | Path) -> None:
        """One token per line, line number = id - 4; reserved tokens implicit."""
        Path(path).write_text("".join(t + "\n" for t in self.id_to_token[4:]), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(id_to_token=list(RESERVED_TOKENS) + lines)


def build_vocab(corpus: Iterable[Sequence[str]], cap: int = DEFAULT_VOCAB_CAP) -> Vocabulary:
    """Keep the ``cap`` most frequent tokens; ties break lexicographically."""
    if cap < 1:
        raise ValueError(f"vocabulary cap must be >= 1, got {cap}")
    counts: Counter[str] = Counter()
    n_captions = 0
    for caption in corpus:
        n_captions += 1
        counts.update(caption)
    if n_captions == 0:
        raise ValueError("build_vocab: empty corpus")
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    kept = [token for token, _ in ranked[:cap]]
    return Vocabulary(id_to_token=list(RESERVED_TOKENS) + kept)


@dataclass
class TokenizedCaption:
    """Fixed 32-slot encoded caption: BOS, content, EOS, then PAD fill."""

    ids: list[int]
    content_length: int

    def validate(self) -> "TokenizedCaption":
        ids, n = self.ids, self.content_length
        if len(ids) != CAPTION_SLOTS:
            raise ValueError(f"encoded caption must have {CAPTION_SLOTS} slots, got {len(ids)}")
        if not 0 <= n <= MAX_CONTENT_TOKENS:
            raise ValueError(f"content length {n} out of range")
        if ids[0] != BOS_ID:
            raise ValueError("encoded caption must start with the begin marker")
        if ids[n + 1] != EOS_ID:
            raise ValueError(f"end marker expected at slot {n + 1}")
        if any(i == PAD_ID for i in ids[1 : n + 1]):
            raise ValueError("padding id inside caption content")
        if any(i != PAD_ID for i in ids[n + 2 :]):
            raise ValueError("non-padding id after the end marker")
        return self


def encode(tokens: Sequence[str], vocab: Vocabulary) -> TokenizedCaption:
    """Encode tokens into the fixed layout, truncating content to 30 tokens."""
    content = [vocab.lookup(t) for t in tokens[:MAX_CONTENT_TOKENS]]
    ids = [BOS_ID] + content + [EOS_ID]
    ids += [PAD_ID] * (CAPTION_SLOTS - len(ids))
    return TokenizedCaption(ids=ids, content_length=len(content))


def decode_ids(ids: Sequence[int], vocab: Vocabulary) -> str:
    """Drop PAD/BOS/EOS and join the remaining tokens with single spaces."""
    words = []
    for i in ids:
        token = vocab.token(i)
        if i in (PAD_ID, BOS_ID, EOS_ID):
            continue
        words.append(token)
    return " ".join(words)
