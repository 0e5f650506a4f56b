"""JSON schemas for run documents, reports and manifests."""

import jsonschema

_num = {"type": ["number", "null"]}

REPORT = {
    "type": "object",
    "required": [
        "quantity", "empirical_mean", "empirical_sd", "lower_tail_freq", "upper_tail_freq",
        "theory_lower_bound", "theory_upper_bound", "thresholds", "trials", "seed", "samples", "extras",
    ],
    "properties": {
        "quantity": {"enum": ["InterferenceJ", "InterferenceI", "CutCapacityK", "CodingCapacity", "AnnulusCount"]},
        "empirical_mean": _num,
        "empirical_sd": _num,
        "lower_tail_freq": {"type": "number", "minimum": 0, "maximum": 1},
        "upper_tail_freq": {"type": "number", "minimum": 0, "maximum": 1},
        "theory_lower_bound": {"type": "number", "minimum": 0},
        "theory_upper_bound": {"type": "number", "minimum": 0},
        "thresholds": {"type": "object"},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "samples": {"type": "integer", "minimum": 1},
        "extras": {"type": "object"},
    },
    "additionalProperties": False,
}

MANIFEST = {
    "type": "object",
    "required": ["tool", "version", "base_seed", "experiments", "config", "started", "finished", "files"],
    "properties": {
        "tool": {"const": "sinrcap"},
        "version": {"type": "string"},
        "base_seed": {"type": "integer"},
        "experiments": {"type": "array", "items": {"type": "string"}},
        "config": {"type": "object"},
        "started": {"type": "string"},
        "finished": {"type": "string"},
        "files": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path", "sha256", "bytes"],
                "properties": {
                    "path": {"type": "string"},
                    "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                    "bytes": {"type": "integer", "minimum": 0},
                },
            },
        },
    },
}

RUN_DOCUMENT = {
    "type": "object",
    "required": ["schema_version", "experiments", "config"],
    "properties": {
        "schema_version": {"const": 1},
        "experiments": {"type": "array", "items": {"enum": ["interference", "cut", "capacity", "annulus"]}},
        "config": {
            "type": "object",
            "required": ["scenario", "n", "m", "loss", "sinr", "power"],
            "properties": {
                "scenario": {"enum": ["constant", "heterogeneous"]},
                "n": {"type": "integer", "minimum": 2},
                "m": {"type": "integer", "minimum": 0},
                "l": {"type": "integer", "minimum": 1},
                "k": {"type": "integer", "minimum": 0},
                "trials": {"type": "integer", "minimum": 1},
                "base_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "loss": {"type": "object"},
                "sinr": {"type": "object"},
                "power": {"type": "object"},
            },
        },
    },
}


def validate(doc, schema):
    """Raise ``jsonschema.ValidationError`` if ``doc`` does not match."""
    jsonschema.validate(doc, schema)
