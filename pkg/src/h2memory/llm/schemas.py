"""Output contracts for every registered template.

Shapes are plain JSON Schema; rules that need call context (which log ids a
window may cite, which turns a dialogue has) are expressed as check callables
built by the helpers at the bottom of this module and passed to the gateway.
"""

from __future__ import annotations

import re
from typing import Any, Callable, Iterable, Sequence

from jsonschema import Draft202012Validator

ASPECTS = ("work", "health", "family", "leisure")
FEEDBACK_TYPES = ("pos", "neg", "others")
GSCORE_VALUES = (0, 0.5, 1, 1.5, 2)


class SchemaViolation(ValueError):
    """Parsed output does not satisfy the template's contract."""


def _obj(props: dict[str, Any], required: Iterable[str] | None = None, extra: bool = True) -> dict[str, Any]:
    return {
        "type": "object",
        "properties": props,
        "required": list(props if required is None else required),
        "additionalProperties": extra,
    }


_TEXT = {"type": "string", "minLength": 1, "pattern": r"\S"}
_ID_LIST = {"type": "array", "items": {"type": "string", "pattern": r"^log_\d+$"}}
_SCORE = {"type": "integer", "minimum": 1, "maximum": 10}
_ADJUST = {"type": "string", "enum": ["Yes", "No"]}

OUTPUT_SCHEMAS: dict[str, dict[str, Any]] = {
    "mem.log_relations": {
        "type": "object",
        "propertyNames": {"pattern": r"^log_\d+$"},
        "additionalProperties": _obj({"caused_by": _ID_LIST, "follows": _ID_LIST}, extra=False),
    },
    "mem.situation": _obj(
        {
            "situation": _TEXT,
            "situation_aspects": {
                "type": "array",
                "items": {"type": "string", "enum": list(ASPECTS)},
                "minItems": 1,
                "uniqueItems": True,
            },
        }
    ),
    "mem.topic_outline": {
        "type": "array",
        "minItems": 1,
        "items": _obj(
            {
                "turn_span": {
                    "type": "array",
                    "items": {"type": "string", "pattern": r"^turn_\d+$"},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "requirement": _TEXT,
                "solution_list": {
                    "type": "array",
                    "minItems": 1,
                    "items": _obj(
                        {
                            "solution": _TEXT,
                            "user_feedback": {"type": "string"},
                            "feedback_type": {"type": "string", "enum": list(FEEDBACK_TYPES)},
                        }
                    ),
                },
                "preference": {"type": "string"},
            }
        ),
    },
    "mem.requirement_rewrite": _obj({"requirement": _TEXT}),
    "mem.background_update": _obj(
        {
            "updating_aspects": {
                "type": "array",
                "items": {"type": "string", "enum": list(ASPECTS)},
                "uniqueItems": True,
            },
            "updating_content": {
                "type": "object",
                "propertyNames": {"enum": list(ASPECTS)},
                "additionalProperties": {"type": "string"},
            },
        }
    ),
    "mem.req_abstraction": _obj({"general_requirement": _TEXT}),
    "mem.pref_abstraction": _obj({"principle": _TEXT}),
    "mem.req_update": {
        **_obj({"adjust": _ADJUST, "general_requirement": _TEXT}, required=["adjust"]),
        "if": {"properties": {"adjust": {"const": "Yes"}}},
        "then": {"required": ["general_requirement"]},
    },
    "mem.pref_update": {
        **_obj({"adjust": _ADJUST, "principle": _TEXT}, required=["adjust"]),
        "if": {"properties": {"adjust": {"const": "Yes"}}},
        "then": {"required": ["principle"]},
    },
    "rag.query_formation": _obj({"requirement": _TEXT}),
    "rag.respond": _obj({"content": _TEXT}),
    "task.restate": _obj({"requirement": _TEXT}),
    "task.solution_generate": _obj({"solution": _TEXT}),
    "task.solution_select": _obj(
        {
            "analysis": {"type": "string"},
            "selected_solutions": {
                "type": "array",
                "items": {"type": ["string", "integer"]},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        required=["selected_solutions"],
    ),
    "judge.gscore": _obj(
        {"analysis": {"type": "string"}, "score": {"type": "number", "enum": list(GSCORE_VALUES)}},
        required=["score"],
    ),
    "judge.requirement": _obj(
        {
            "analysis": {"type": ["object", "string"]},
            "scores": _obj({"assistant-1": _SCORE, "assistant-2": _SCORE}, extra=False),
        },
        required=["scores"],
    ),
    "judge.preference": None,  # filled below, same contract as judge.requirement
    "sim.user": _obj({"content": _TEXT}),
    "sim.assistant": _obj({"content": _TEXT}),
    "baseline.dialogue_summary": _obj({"summary": _TEXT}),
    "baseline.log_summary": _obj({"summary": _TEXT}),
}
OUTPUT_SCHEMAS["judge.preference"] = OUTPUT_SCHEMAS["judge.requirement"]

_VALIDATORS = {k: Draft202012Validator(v) for k, v in OUTPUT_SCHEMAS.items()}


def validate_output(template_id: str, parsed: Any) -> None:
    """Raise SchemaViolation if ``parsed`` breaks the template's JSON contract."""
    validator = _VALIDATORS[template_id]
    errors = sorted(validator.iter_errors(parsed), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise SchemaViolation(f"{template_id}: {path}: {e.message}")
    if template_id.startswith("judge.") and template_id != "judge.gscore":
        # JSON Schema "integer" admits 7.0; the judge contract wants literal integers
        for key, value in parsed["scores"].items():
            if isinstance(value, bool) or not isinstance(value, int):
                raise SchemaViolation(f"{template_id}: scores/{key}: {value!r} is not an integer")
    if template_id == "judge.gscore" and isinstance(parsed["score"], bool):
        raise SchemaViolation("judge.gscore: score must be numeric")


Check = Callable[[Any], None]


def _log_index(log_id: str) -> int:
    return int(log_id.split("_", 1)[1])


def log_relations_check(span_ids: Sequence[int], visible_ids: Sequence[int]) -> Check:
    """Every log in the analysed span gets an entry; cited logs are visible and strictly earlier."""
    span = set(span_ids)
    visible = set(visible_ids)

    def check(parsed: dict[str, Any]) -> None:
        keys = {_log_index(k) for k in parsed}
        if keys != span:
            raise SchemaViolation(
                f"mem.log_relations: expected entries for {sorted(span)}, got {sorted(keys)}"
            )
        for key, rel in parsed.items():
            current = _log_index(key)
            for kind in ("caused_by", "follows"):
                for ref in rel[kind]:
                    idx = _log_index(ref)
                    if idx >= current:
                        raise SchemaViolation(
                            f"mem.log_relations: {key} {kind} {ref}: related logs must precede the current log"
                        )
                    if idx not in visible:
                        raise SchemaViolation(f"mem.log_relations: {key} cites {ref} outside the window")

    return check


_TURN = re.compile(r"^turn_(\d+)$")


def topic_outline_check(n_turns: int) -> Check:
    """Topic turn spans must tile turns 1..n_turns in order without gaps or overlaps."""

    def check(parsed: list[dict[str, Any]]) -> None:
        expected_start = 1
        for i, topic in enumerate(parsed):
            start = int(_TURN.match(topic["turn_span"][0]).group(1))
            end = int(_TURN.match(topic["turn_span"][1]).group(1))
            if end < start:
                raise SchemaViolation(f"mem.topic_outline: topic {i} span is reversed")
            if start != expected_start:
                kind = "overlap" if start < expected_start else "gap"
                raise SchemaViolation(f"mem.topic_outline: topic {i} span {kind} at turn_{start}")
            expected_start = end + 1
        if expected_start != n_turns + 1:
            raise SchemaViolation(
                f"mem.topic_outline: spans cover turns 1..{expected_start - 1}, dialogue has {n_turns}"
            )

    return check


def background_update_check(parsed: dict[str, Any]) -> None:
    aspects = set(parsed["updating_aspects"])
    content = set(parsed["updating_content"])
    if aspects != content:
        raise SchemaViolation(
            f"mem.background_update: updating_aspects {sorted(aspects)} do not match content keys {sorted(content)}"
        )


def selection_check(candidate_ids: Sequence[str]) -> Check:
    known = {str(c) for c in candidate_ids}

    def check(parsed: dict[str, Any]) -> None:
        picked = [str(x) for x in parsed["selected_solutions"]]
        if len(set(picked)) != 2:
            raise SchemaViolation("task.solution_select: the 2 selected ids must be distinct")
        unknown = [p for p in picked if p not in known]
        if unknown:
            raise SchemaViolation(f"task.solution_select: unknown solution ids {unknown}")

    return check
