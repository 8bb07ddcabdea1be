"""Generator configuration."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from sketchsql.corpus.examples import Category
from sketchsql.errors import ConfigError


def default_category_weights() -> dict:
    return {
        Category.ABBREVIATION: 0.201,
        Category.ALIAS: 0.141,
        Category.NUMBER_FORMAT: 0.257,
        Category.ADAPTATION: 0.325,
        Category.OTHER: 0.076,
        Category.UNIT_MISMATCH: 0.0,
    }


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_tables: int = 40
    n_questions_per_table: int = 25
    # Observed fraction of questions no table column can answer (~5500/64891).
    unanswerable_rate: float = 0.085
    # Fraction of questions whose condition value is not quoted verbatim.
    entity_link_rate: float = 0.30
    category_weights: dict = field(default_factory=default_category_weights)
    mean_conditions: float = 1.6
    mean_selects: float = 1.1
    schema_omission_rate: float = 0.30
    split_fractions: tuple = (0.8, 0.1, 0.1)

    @property
    def n_examples(self) -> int:
        return self.n_tables * self.n_questions_per_table

    def validate(self):
        if self.n_tables < 3:
            raise ConfigError("need at least 3 tables to populate all three splits")
        if self.n_questions_per_table < 1:
            raise ConfigError("n_questions_per_table must be positive")
        for name in ("unanswerable_rate", "entity_link_rate", "schema_omission_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not 1.0 <= self.mean_conditions <= 3.0:
            raise ConfigError("mean_conditions must lie in [1, 3]")
        if not 1.0 <= self.mean_selects <= 2.0:
            raise ConfigError("mean_selects must lie in [1, 2]")
        if len(self.split_fractions) != 3 or any(f < 0 for f in self.split_fractions):
            raise ConfigError("split_fractions must be three non-negative numbers")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError("split_fractions must sum to 1")
        weights = self.category_weights
        if set(weights) - set(Category) or Category.NONE in weights:
            raise ConfigError("category_weights keys must be perturbation categories")
        if any(w < 0 for w in weights.values()):
            raise ConfigError("category weights must be non-negative")
        if abs(sum(weights.values()) - 1.0) > 1e-9:
            raise ConfigError(f"category weights must sum to 1, got {sum(weights.values())}")

    def to_json(self) -> dict:
        obj = dataclasses.asdict(self)
        obj["category_weights"] = {c.value: w for c, w in self.category_weights.items()}
        obj["split_fractions"] = list(self.split_fractions)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "GenConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(obj)
        if "category_weights" in kwargs:
            try:
                kwargs["category_weights"] = {
                    Category(k): float(v) for k, v in kwargs["category_weights"].items()
                }
            except ValueError as exc:
                raise ConfigError(f"bad category name: {exc}")
        if "split_fractions" in kwargs:
            kwargs["split_fractions"] = tuple(kwargs["split_fractions"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def config_hash(obj: dict) -> str:
    """Stable short hash of any JSON-serializable config, for run logs."""
    blob = json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]
