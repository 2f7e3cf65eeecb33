"""Multiple-choice datasets in the canonical JSONL layout.

One object per line::

    {"id": "q1", "question": "...", "options": [{"label": "A", "text": "..."}, ...],
     "gold": "B", "subject": "physics"}
"""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .labels import OPTION_LABELS

MIN_OPTIONS, MAX_OPTIONS = 2, 10


class DatasetError(ValueError):
    pass


class ParseError(DatasetError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class ValidationError(DatasetError):
    def __init__(self, item_id: str, reason: str):
        super().__init__(f"item {item_id!r}: {reason}")
        self.item_id = item_id


@dataclass(frozen=True)
class McqaItem:
    id: str
    question: str
    options: tuple[tuple[str, str], ...]
    gold_label: str
    subject: str | None = None

    def __post_init__(self):
        labels = self.labels
        if not MIN_OPTIONS <= len(labels) <= MAX_OPTIONS:
            raise ValidationError(self.id, f"needs {MIN_OPTIONS}-{MAX_OPTIONS} options, has {len(labels)}")
        if list(labels) != list(OPTION_LABELS[: len(labels)]):
            raise ValidationError(self.id, f"option labels must run A, B, ... in order, got {list(labels)}")
        if self.gold_label not in labels:
            raise ValidationError(self.id, f"gold label {self.gold_label!r} is not an option")
        if not self.question.strip():
            raise ValidationError(self.id, "empty question")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.options)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "options": [{"label": label, "text": text} for label, text in self.options],
            "gold": self.gold_label,
            "subject": self.subject,
        }

    @classmethod
    def from_json(cls, data: dict) -> "McqaItem":
        item_id = str(data.get("id", "?"))
        try:
            options = tuple((str(o["label"]), str(o["text"])) for o in data["options"])
            return cls(item_id, str(data["question"]), options, str(data["gold"]), data.get("subject"))
        except (KeyError, TypeError) as exc:
            raise ValidationError(item_id, f"missing or malformed field {exc}") from None


def load_dataset(path: str | Path) -> list[McqaItem]:
    items: list[McqaItem] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, str(exc)) from None
            if not isinstance(data, dict):
                raise ParseError(lineno, "expected a JSON object")
            item = McqaItem.from_json(data)
            if item.id in seen:
                raise ValidationError(item.id, "duplicate id")
            seen.add(item.id)
            items.append(item)
    return items


def write_dataset(items: Iterable[McqaItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_json(), ensure_ascii=False) + "\n")


def stratified_subset(items: Sequence[McqaItem], per_subject: int, seed: int) -> list[McqaItem]:
    """Draw up to ``per_subject`` items from each subject, keeping file order."""
    rng = random.Random(seed)
    groups: dict[str | None, list[int]] = defaultdict(list)
    for i, item in enumerate(items):
        groups[item.subject].append(i)
    keep: set[int] = set()
    for subject in sorted(groups, key=lambda s: (s is None, s or "")):
        idx = groups[subject]
        keep.update(rng.sample(idx, min(per_subject, len(idx))))
    return [items[i] for i in sorted(keep)]
