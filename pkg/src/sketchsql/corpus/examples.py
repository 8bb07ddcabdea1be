"""Corpus example records, linking categories, and lexicon storage."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from sketchsql.errors import TableParseError
from sketchsql.sql import REJECTED, Rejection, SqlQuery, sql_from_json, sql_to_json


class Category(Enum):
    """How a condition value surface form in the question relates to the cell."""

    NONE = "none"
    ABBREVIATION = "abbreviation"
    ALIAS = "alias"
    NUMBER_FORMAT = "number_format"
    ADAPTATION = "adaptation"
    UNIT_MISMATCH = "unit_mismatch"
    OTHER = "other"


# The perturbation kinds (everything except NONE).
PERTURBATIONS = tuple(c for c in Category if c is not Category.NONE)


class Split(Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


@dataclass(frozen=True)
class Example:
    table_id: str
    question: str
    gold: SqlQuery | Rejection
    category: Category
    split: Split

    @property
    def answerable(self) -> bool:
        return not isinstance(self.gold, Rejection)

    @property
    def tokens(self) -> list:
        return self.question.split()

    def to_json(self) -> dict:
        return {
            "table_id": self.table_id,
            "question": self.question,
            "answerable": self.answerable,
            "sql": sql_to_json(self.gold),
            "category": self.category.value,
            "split": self.split.value,
        }


def example_from_json(obj: dict) -> Example:
    sql = obj.get("sql")
    gold = REJECTED if sql is None else sql_from_json(sql)
    if obj.get("answerable", sql is not None) != (sql is not None):
        raise TableParseError("answerable flag contradicts sql field")
    return Example(
        table_id=obj["table_id"],
        question=obj["question"],
        gold=gold,
        category=Category(obj.get("category", "none")),
        split=Split(obj.get("split", "train")),
    )


def save_examples(examples, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def load_examples(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(example_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise TableParseError(f"bad example record: {exc}", line_no=line_no)
    return out


class Lexicon:
    """Surface form → canonical condition value, per table, with category tags.

    Only perturbed mentions need entries: an unperturbed question quotes the
    canonical value verbatim.
    """

    def __init__(self):
        self._by_table: dict = {}

    def add(self, table_id: str, surface: str, value: str, category: Category):
        self._by_table.setdefault(table_id, {})[surface] = {
            "value": value,
            "category": category.value,
        }

    def lookup(self, table_id: str, surface: str) -> Optional[str]:
        entry = self._by_table.get(table_id, {}).get(surface)
        return None if entry is None else entry["value"]

    def surfaces_for(self, table_id: str, value: str) -> list:
        """All known surface forms that map to `value` in this table."""
        entries = self._by_table.get(table_id, {})
        return sorted(s for s, e in entries.items() if e["value"] == value)

    def table_entries(self, table_id: str) -> dict:
        return dict(self._by_table.get(table_id, {}))

    def __len__(self):
        return sum(len(v) for v in self._by_table.values())

    def to_json(self) -> dict:
        return {tid: dict(sorted(entries.items())) for tid, entries in sorted(self._by_table.items())}

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, ensure_ascii=False, indent=0)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Lexicon":
        lex = cls()
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        for tid, entries in data.items():
            for surface, entry in entries.items():
                lex.add(tid, surface, entry["value"], Category(entry["category"]))
        return lex
