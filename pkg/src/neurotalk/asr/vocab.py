"""Token inventories for the character (CTC, RNN-T) and word (attention) models."""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable, Sequence

BLANK = "<blank>"
START = "<s>"
END = "</s>"
CHARSET = " '" + string.ascii_lowercase


class UnknownTokenError(KeyError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Dense token ids; the specials come first.

    Character mode: id 0 is the blank, followed by space, apostrophe and a..z.
    Word mode: ids 0 and 1 are the start and end tokens, then the words.
    """

    tokens: tuple[str, ...]
    mode: str  # "char" or "word"

    def __post_init__(self):
        if self.mode not in ("char", "word"):
            raise ValueError(f"unknown vocabulary mode {self.mode!r}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def chars(cls) -> "Vocabulary":
        return cls((BLANK,) + tuple(CHARSET), "char")

    @classmethod
    def words(cls, transcripts: Iterable[str]) -> "Vocabulary":
        seen = sorted({w for t in transcripts for w in normalize(t).split()})
        return cls((START, END) + tuple(seen), "word")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def specials(self) -> tuple[str, ...]:
        return (BLANK,) if self.mode == "char" else (START, END)

    @property
    def blank(self) -> int:
        return self._require(BLANK)

    @property
    def start(self) -> int:
        return self._require(START)

    @property
    def end(self) -> int:
        return self._require(END)

    def _require(self, tok: str) -> int:
        if tok not in self._index:
            raise UnknownTokenError(f"{self.mode} vocabulary has no {tok!r} token")
        return self._index[tok]

    def id(self, tok: str) -> int:
        try:
            return self._index[tok]
        except KeyError:
            raise UnknownTokenError(f"token {tok!r} not in {self.mode} vocabulary") from None

    def encode(self, text: str) -> list[int]:
        text = normalize(text)
        units = list(text) if self.mode == "char" else text.split()
        return [self.id(u) for u in units]

    def decode(self, ids: Sequence[int]) -> str:
        specials = set(self.specials)
        out = [self.tokens[i] for i in ids if self.tokens[i] not in specials]
        return "".join(out) if self.mode == "char" else " ".join(out)

    def to_lines(self) -> list[str]:
        return [self.mode, *self.tokens]

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> "Vocabulary":
        return cls(tuple(lines[1:]), lines[0])


def normalize(text: str) -> str:
    """Lowercase, map anything outside the character set to space, squeeze spaces."""
    allowed = set(CHARSET)
    cleaned = "".join(c if c in allowed else " " for c in text.lower())
    return " ".join(cleaned.split())
