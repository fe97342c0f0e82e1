"""Synthetic process tokens built from MES attribute records."""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import MissingAttribute

DEFAULT_ATTRIBUTES = ("eqp", "recipe", "tool_type", "photo_layer", "route")
DEFAULT_SEPARATOR = "|"
SANITIZE_CHAR = "_"


@dataclass(frozen=True)
class ProcessRecord:
    wafer_id: str
    step_index: int
    timestamp: float
    attributes: tuple  # ordered (name, value) pairs

    def get(self, name):
        for key, value in self.attributes:
            if key == name:
                return value
        raise MissingAttribute(name)


@dataclass
class Vocabulary:
    tokens: list = field(default_factory=list)
    index: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tokens)

    def add(self, token):
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens


def sanitize(value, separator=DEFAULT_SEPARATOR):
    return str(value).replace(separator, SANITIZE_CHAR)


def make_token(record, attribute_order=DEFAULT_ATTRIBUTES, separator=DEFAULT_SEPARATOR):
    """Join the sanitized attribute values of ``record`` in ``attribute_order``."""
    if not attribute_order:
        raise ValueError("attribute_order must be non-empty")
    if len(separator) != 1:
        raise ValueError("separator must be a single character")
    return separator.join(sanitize(record.get(name), separator) for name in attribute_order)


def build_vocabulary(records, attribute_order=DEFAULT_ATTRIBUTES, separator=DEFAULT_SEPARATOR):
    if not records:
        raise ValueError("records must be non-empty")
    vocab = Vocabulary()
    for rec in records:
        vocab.add(make_token(rec, attribute_order, separator))
    return vocab


def vocabulary_from_tokens(tokens):
    vocab = Vocabulary()
    for tok in tokens:
        vocab.add(tok)
    return vocab
