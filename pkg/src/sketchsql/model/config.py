"""Training configuration and the condition-value resolver switch."""

from __future__ import annotations

from dataclasses import dataclass, fields
from enum import Enum

from sketchsql.chars import DEFAULT_ALPHABET
from sketchsql.errors import ConfigError


class Resolver(Enum):
    """How a predicted condition-value span becomes the emitted value.

    SPAN_ONLY keeps the raw extracted substring. OFFLINE post-matches the
    substring against the column's cells by embedding similarity. END2END
    scores cells with the learned attention head.
    """

    SPAN_ONLY = "span"
    OFFLINE = "offline"
    END2END = "end2end"


@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 32
    epochs: int = 12
    batch_size: int = 16
    learning_rate: float = 2e-3
    seed: int = 0
    resolver: Resolver = Resolver.SPAN_ONLY
    alphabet: str = DEFAULT_ALPHABET

    def validate(self):
        if self.hidden_size < 2 or self.hidden_size % 2:
            raise ConfigError("hidden_size must be an even integer >= 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not isinstance(self.resolver, Resolver):
            raise ConfigError(f"unknown resolver {self.resolver!r}")
        if not self.alphabet:
            raise ConfigError("alphabet must be nonempty")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ConfigError("alphabet has duplicate characters")

    def to_json(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["resolver"] = self.resolver.value
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown training config fields: {sorted(unknown)}")
        kwargs = dict(obj)
        if "resolver" in kwargs:
            try:
                kwargs["resolver"] = Resolver(kwargs["resolver"])
            except ValueError:
                raise ConfigError(f"unknown resolver {kwargs['resolver']!r}") from None
        config = cls(**kwargs)
        config.validate()
        return config
