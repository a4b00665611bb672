"""JSON schemas for the on-disk records (manifest, session, report)."""

from __future__ import annotations

import jsonschema

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["version", "samples"],
    "properties": {
        "version": {"type": "integer", "minimum": 1},
        "samples": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "image", "mask", "input_text",
                             "edit_text", "category"],
                "properties": {
                    "id": {"type": "string"},
                    "image": {"type": "string"},
                    "mask": {"type": "string"},
                    "input_text": {"type": "string"},
                    "edit_text": {"type": "string"},
                    "category": {"enum": ["main-object", "secondary-object",
                                          "background"]},
                },
            },
        },
    },
}

SESSION_SCHEMA = {
    "type": "object",
    "required": ["version", "config", "tau", "timesteps", "steps",
                 "final_mask_area_ratio", "position_vector"],
    "properties": {
        "version": {"type": "integer", "minimum": 1},
        "config": {
            "type": "object",
            "required": ["strength", "steps", "cfg_scale", "rounds", "seed",
                         "maskgen"],
        },
        "tau": {"type": "integer", "minimum": 1},
        "timesteps": {"type": "array", "items": {"type": "integer"}},
        "steps": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["timestep", "mask_area_ratio"],
            },
        },
        "final_mask_area_ratio": {"type": "number", "minimum": 0,
                                  "maximum": 1},
        "position_vector": {"type": "array",
                            "items": {"enum": [-1, 0, 1]}},
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["version", "config", "per_sample", "aggregates",
                 "by_category", "errors"],
    "properties": {
        "version": {"type": "integer", "minimum": 1},
        "config": {"type": "object"},
        "per_sample": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "category"],
            },
        },
        "aggregates": {"type": "object"},
        "by_category": {"type": "object"},
        "errors": {"type": "integer", "minimum": 0},
    },
}


def _validate(instance, schema, what: str) -> None:
    try:
        jsonschema.validate(instance=instance, schema=schema)
    except jsonschema.ValidationError as exc:
        raise ValueError(f"invalid {what}: {exc.message}") from exc


def validate_manifest(d) -> None:
    _validate(d, MANIFEST_SCHEMA, "manifest")


def validate_session(d) -> None:
    _validate(d, SESSION_SCHEMA, "session record")


def validate_report(d) -> None:
    _validate(d, REPORT_SCHEMA, "metrics report")
