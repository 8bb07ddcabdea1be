"""Character vocabulary shared by the encoder and the value resolvers."""

from __future__ import annotations

DEFAULT_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789 ,.-"
UNK = 0


class CharVocab:
    """Fixed alphabet -> contiguous ids; unknown characters map to UNK."""

    def __init__(self, alphabet: str = DEFAULT_ALPHABET):
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("alphabet has duplicate characters")
        self.alphabet = alphabet
        self._index = {ch: i + 1 for i, ch in enumerate(alphabet)}

    @property
    def size(self) -> int:
        return len(self.alphabet) + 1  # + UNK

    def encode(self, text: str) -> list:
        return [self._index.get(ch, UNK) for ch in text]

    def to_json(self) -> dict:
        return {"alphabet": self.alphabet}

    @classmethod
    def from_json(cls, obj: dict) -> "CharVocab":
        return cls(obj["alphabet"])
