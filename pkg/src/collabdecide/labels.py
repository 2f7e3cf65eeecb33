"""Option-label normalisation shared by answer scoring and ballot extraction."""

from __future__ import annotations

import re
from typing import Sequence

OPTION_LABELS = tuple("ABCDEFGHIJ")


def _tokens(text: str, options: Sequence[str]) -> list[str]:
    allowed = {o.upper() for o in options}
    cleaned = text.strip().upper().strip("().[]{}* ")
    found = re.findall(r"(?<![A-Z0-9])([A-Z])(?![A-Z0-9])", cleaned)
    return [t for t in found if t in allowed]


def first_label(text: str, options: Sequence[str] = OPTION_LABELS) -> str | None:
    """First standalone option token, e.g. ``"(b)."`` -> ``"B"``."""
    found = _tokens(text, options)
    return found[0] if found else None


def last_label(text: str, options: Sequence[str] = OPTION_LABELS) -> str | None:
    found = _tokens(text, options)
    return found[-1] if found else None
