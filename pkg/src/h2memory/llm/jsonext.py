"""Pull one JSON document out of a model reply."""

from __future__ import annotations

import json
from typing import Any

_decoder = json.JSONDecoder()


class JSONExtractionError(ValueError):
    pass


def extract_json(text: str) -> Any:
    """Return the single top-level JSON object or array embedded in ``text``.

    Surrounding prose and markdown code fences are ignored. Replies with no
    decodable value, or with more than one, are rejected.
    """
    found: list[Any] = []
    i, n = 0, len(text)
    while i < n:
        if text[i] in "{[":
            try:
                value, end = _decoder.raw_decode(text, i)
            except json.JSONDecodeError:
                i += 1
                continue
            found.append(value)
            i = end
        else:
            i += 1
    if not found:
        raise JSONExtractionError("no JSON object or array found in reply")
    if len(found) > 1:
        raise JSONExtractionError(f"reply contains {len(found)} top-level JSON values")
    return found[0]
