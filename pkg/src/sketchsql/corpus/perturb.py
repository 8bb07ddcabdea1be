"""Rewrite one condition-value mention so it no longer matches the table cell.

Each rewrite keeps the gold SQL untouched and records the new surface form in
the lexicon. Rewrites differ in how much of the canonical spelling survives,
which is what separates the value resolvers downstream.
"""

from __future__ import annotations

from sketchsql.corpus import vocab as V
from sketchsql.corpus.examples import Category, Example
from sketchsql.errors import InapplicablePerturbation
from sketchsql.sql import CondOp, render_number
from sketchsql.tables import ColType, Table

VOWEL_SHIFT = {"a": "e", "e": "i", "i": "o", "o": "u", "u": "a"}

TEXT_CATEGORIES = frozenset(
    {Category.ABBREVIATION, Category.ALIAS, Category.ADAPTATION, Category.OTHER}
)


def _is_round_number(value: str, multiple: int) -> bool:
    try:
        v = float(value)
    except ValueError:
        return False
    return v.is_integer() and v >= multiple and int(v) % multiple == 0


def eligible_conditions(example: Example, table: Table, category: Category) -> list:
    """Indices of gold conditions this category can rewrite."""
    tokens = example.question.split()
    out = []
    for i, cond in enumerate(example.gold.conditions):
        dtype = table.columns[cond.col_index].dtype
        if category in TEXT_CATEGORIES:
            ok = dtype is ColType.TEXT and cond.value in tokens
        elif category is Category.NUMBER_FORMAT:
            ok = (dtype is ColType.REAL and cond.op is CondOp.EQ
                  and _is_round_number(cond.value, 1000) and cond.value in tokens)
        elif category is Category.UNIT_MISMATCH:
            ok = (dtype is ColType.REAL and cond.op is CondOp.EQ
                  and _is_round_number(cond.value, 10000) and cond.value in tokens)
        else:
            ok = False
        if ok:
            out.append(i)
    return out


def abbreviate(word: str) -> str:
    """Leading character of every syllable plus the final character."""
    return "".join(s[0] for s in V.syllables_of(word)) + word[-1]


def shift_vowels(word: str, syllable_index: int) -> str:
    syls = V.syllables_of(word)
    s = syls[syllable_index]
    syls[syllable_index] = s[0] + VOWEL_SHIFT[s[1]]
    return "".join(syls)


def _rewrite_text(word: str, category: Category, rng, vocabulary) -> str:
    if category is Category.ABBREVIATION:
        return abbreviate(word)
    if category is Category.ALIAS:
        return vocabulary.alias_of[word]
    if category is Category.OTHER:
        # replace the final syllable with a marker no content word can contain
        return word[:-2] + "wa"
    if category is Category.ADAPTATION:
        n = len(V.syllables_of(word))
        for idx in rng.permutation(range(1, n)):
            candidate = shift_vowels(word, int(idx))
            if candidate != word and candidate not in vocabulary.value_words:
                return candidate
        raise InapplicablePerturbation(f"no vowel shift of {word!r} avoids the lexicon")
    raise InapplicablePerturbation(f"not a text rewrite: {category}")


def _rewrite_number(value: str, category: Category, rng) -> str:
    v = int(float(value))
    if category is Category.NUMBER_FORMAT:
        if v % 1000 == 0 and rng.random() < 0.5:
            return f"{v // 1000}k"
        return f"{v:,}"
    if category is Category.UNIT_MISMATCH:
        return f"{render_number(v / 10000)} {V.MYRIAD_WORD}"
    raise InapplicablePerturbation(f"not a numeric rewrite: {category}")


def perturb(example: Example, category: Category, rng, *, table: Table,
            vocabulary, lexicon) -> Example:
    """Return a copy of `example` with one value mention rewritten.

    Raises InapplicablePerturbation when the category fits none of the
    conditions (wrong column type, value not quoted verbatim, or the rewrite
    would leave the canonical value visible); the caller redraws.
    """
    if not example.answerable:
        raise InapplicablePerturbation("cannot perturb an unanswerable question")
    candidates = eligible_conditions(example, table, category)
    if not candidates:
        raise InapplicablePerturbation(f"{category.value} fits no condition of this question")
    cond = example.gold.conditions[candidates[rng.integers(len(candidates))]]

    if category in TEXT_CATEGORIES:
        surface = _rewrite_text(cond.value, category, rng, vocabulary)
    else:
        surface = _rewrite_number(cond.value, category, rng)

    tokens = example.question.split()
    at = tokens.index(cond.value)
    tokens[at : at + 1] = surface.split()
    question = " ".join(tokens)
    if cond.value in question:
        raise InapplicablePerturbation(f"canonical value {cond.value!r} still visible after rewrite")

    lexicon.add(example.table_id, surface, cond.value, category)
    return Example(
        table_id=example.table_id,
        question=question,
        gold=example.gold,
        category=category,
        split=example.split,
    )
