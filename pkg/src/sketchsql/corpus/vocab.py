"""The synthetic question language.

Design notes, because several corpus properties hang off this module:

* Content words are built from consonant+vowel syllables over the letters
  b..t / aeiou. Every TEXT attribute owns a family of value words sharing a
  unique leading syllable, so a value mention identifies its column even when
  the question omits the column name (schema omission stays learnable).
* Alias surface forms are spelled with the disjoint letters q/x/z/y, which
  never occur in content words. A character-overlap matcher therefore cannot
  recover the canonical value of an alias; only a trained resolver that has
  seen the (global, fixed) alias pairing can. Abbreviations, vowel-shifted
  adaptations, and suffix rewrites all keep most canonical characters, so
  overlap matching does recover those.
* Glue words (question templates, operators, aggregations) either start with
  a vowel or contain v/w — letter patterns no content word can produce — so
  they never collide with attribute or value words.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

CONSONANTS = "bdfghjklmnprst"
VOWELS = "aeiou"
SYLLABLES = tuple(c + v for c in CONSONANTS for v in VOWELS)

ALIAS_LETTERS = "qxzy"
ALIAS_LEN = 6

# Fixed language seed: the vocabulary is a property of the generator, not of
# any particular corpus; corpus seeds control sampling only.
LANGUAGE_SEED = 0xA11A5

N_TEXT_ATTRS = 10
FAMILY_SIZE = 8
WORD_SYLLABLES = 3  # family prefix + two more

# word used to express a ten-thousands quantity ("3 wan" = 30000)
MYRIAD_WORD = "wan"

ASK = "wat"
WHERE = "wen"
SELECT_JOIN = "an"
CONNECTOR_WORDS = {1: "also", 2: "oder"}  # AND, OR
OP_WORDS = {0: ("ova",), 1: ("unda",), 2: ("iz",), 3: ("aint",)}  # GT, LT, EQ, NEQ
AGG_WORDS = {1: "avrij", 2: "upmost", 3: "inmost", 4: "owmeni", 5: "alsum"}

GLUE_WORDS = frozenset(
    [ASK, WHERE, SELECT_JOIN, MYRIAD_WORD]
    + list(CONNECTOR_WORDS.values())
    + [w for ws in OP_WORDS.values() for w in ws]
    + list(AGG_WORDS.values())
)


@dataclass(frozen=True)
class TextAttr:
    name: str
    prefix: str
    values: tuple


@dataclass(frozen=True)
class RealAttr:
    name: str
    lo: int
    hi: int
    step: int


@dataclass(frozen=True)
class Vocabulary:
    text_attrs: tuple
    real_attrs: tuple
    alias_of: dict  # canonical value word -> alias spelling

    @property
    def attr_names(self) -> tuple:
        return tuple(a.name for a in self.text_attrs + self.real_attrs)

    @functools.cached_property
    def value_words(self) -> frozenset:
        return frozenset(w for a in self.text_attrs for w in a.values)

    @functools.cached_property
    def family_of(self) -> dict:
        return {w: a.name for a in self.text_attrs for w in a.values}

    def text_attr(self, name: str) -> TextAttr:
        for a in self.text_attrs:
            if a.name == name:
                return a
        raise KeyError(name)

    def real_attr(self, name: str) -> RealAttr:
        for a in self.real_attrs:
            if a.name == name:
                return a
        raise KeyError(name)


def _new_word(rng, n_syllables, used, prefix=None):
    while True:
        parts = [prefix] if prefix else []
        while len(parts) < n_syllables:
            parts.append(SYLLABLES[rng.integers(len(SYLLABLES))])
        word = "".join(parts)
        if word not in used:
            used.add(word)
            return word


def _new_alias(rng, used):
    while True:
        alias = "".join(ALIAS_LETTERS[rng.integers(len(ALIAS_LETTERS))] for _ in range(ALIAS_LEN))
        if alias not in used:
            used.add(alias)
            return alias


@functools.lru_cache(maxsize=1)
def default_vocabulary() -> Vocabulary:
    rng = np.random.default_rng(np.random.PCG64(LANGUAGE_SEED))
    used = set(GLUE_WORDS)

    prefixes = []
    while len(prefixes) < N_TEXT_ATTRS:
        syl = SYLLABLES[rng.integers(len(SYLLABLES))]
        if syl not in prefixes:
            prefixes.append(syl)

    text_attrs = []
    for prefix in prefixes:
        name = _new_word(rng, 2, used)
        values = tuple(_new_word(rng, WORD_SYLLABLES, used, prefix=prefix) for _ in range(FAMILY_SIZE))
        text_attrs.append(TextAttr(name=name, prefix=prefix, values=values))

    # Value ranges: four plain counters, four thousands-scaled quantities
    # (number-format rewrites need divisibility by 1000), two ten-thousands
    # quantities (unit rewrites need divisibility by 10000).
    ranges = [(1, 500, 1)] * 4 + [(1000, 400000, 1000)] * 4 + [(10000, 990000, 10000)] * 2
    real_attrs = [RealAttr(_new_word(rng, 2, used), lo, hi, step) for lo, hi, step in ranges]

    alias_used = set()
    alias_of = {}
    for attr in text_attrs:
        for word in attr.values:
            alias_of[word] = _new_alias(rng, alias_used)

    return Vocabulary(text_attrs=tuple(text_attrs), real_attrs=tuple(real_attrs), alias_of=alias_of)


def syllables_of(word: str) -> list:
    """Split a content word back into its CV syllables."""
    if len(word) % 2 != 0:
        raise ValueError(f"not a syllabic word: {word!r}")
    return [word[i : i + 2] for i in range(0, len(word), 2)]
