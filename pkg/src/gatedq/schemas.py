"""JSON schemas for run configs and emitted reports."""

SCHEMA_VERSION = "1.0"

_number = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

DIST = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["deterministic", "exponential", "erlang", "hyperexponential", "uniform"]},
        "d": _pos,
        "rate": _pos,
        "shape": {"type": "integer", "minimum": 1},
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "rates": {"type": "array", "items": _pos, "minItems": 1},
        "a": {"type": "number", "minimum": 0},
        "b": _pos,
    },
    "additionalProperties": False,
}

MATRIX = {"type": "array", "items": {"type": "array", "items": _number, "minItems": 1}, "minItems": 1}

KINDS = ["single_vacation_gated", "multiple_vacation_gated", "batch_service"]

CONFIG = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "gatedq run config",
    "type": "object",
    "properties": {
        "schema_version": {"type": "string"},
        "model": {
            "type": "object",
            "required": ["lam", "service", "vacation"],
            "properties": {"lam": _pos, "service": DIST, "vacation": DIST},
            "additionalProperties": False,
        },
        "truncation": {
            "type": "object",
            "properties": {"eps": _pos, "max_n": {"type": "integer", "minimum": 16}},
            "additionalProperties": False,
        },
        "solve": {
            "type": "object",
            "properties": {
                "max_order": {"type": "integer", "minimum": 1, "maximum": 4},
                "pmf_max_k": {"type": ["integer", "null"], "minimum": 0},
            },
            "additionalProperties": False,
        },
        "simulation": {
            "type": "object",
            "properties": {
                "kind": {"enum": KINDS},
                "horizon": {"type": "integer", "minimum": 100000},
                "replications": {"type": "integer", "minimum": 10},
                "warmup": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0, "maximum": 18446744073709551615},
                "lst_points": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "pgf_points": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                "age_point": {"type": "array", "items": _number, "minItems": 3, "maxItems": 3},
            },
            "additionalProperties": False,
        },
        "compare": {
            "type": "object",
            "properties": {
                "analytic_kind": {"enum": KINDS},
                "pmf_max_k": {"type": "integer", "minimum": 0, "maximum": 64},
                "width_multiplier": _pos,
            },
            "additionalProperties": False,
        },
        "busycycle": {
            "type": "object",
            "properties": {"theta_terms": {"type": "integer", "minimum": 1, "maximum": 100000}},
            "additionalProperties": False,
        },
        "batch": {
            "type": "object",
            "properties": {"pmf_max_k": {"type": ["integer", "null"], "minimum": 0}},
            "additionalProperties": False,
        },
        "mapcheck": {
            "type": "object",
            "properties": {
                "maps": {
                    "type": "object",
                    "additionalProperties": {
                        "type": "object",
                        "required": ["C", "D"],
                        "properties": {"C": MATRIX, "D": MATRIX},
                        "additionalProperties": False,
                    },
                },
                "service": DIST,
                "vacation": DIST,
                "z_grid": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                "initial_customers": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"format": {"enum": ["json", "csv"]}, "path": {"type": ["string", "null"]}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_estimate = {
    "type": "object",
    "required": ["mean", "half_width"],
    "properties": {"mean": {}, "half_width": {}, "variance": {}},
}

_results = {
    "solve": {
        "type": "object",
        "required": ["ell_E0", "mean_queue_length", "factorial_moments", "mean_delay", "pmf", "p_idle", "mv_mean_gap"],
    },
    "simulate": {
        "type": "object",
        "required": ["kind", "observables"],
        "properties": {"observables": {"type": "object", "additionalProperties": _estimate}},
    },
    "compare": {
        "type": "object",
        "required": ["rows", "all_pass"],
        "properties": {
            "rows": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["observable", "analytic", "simulated", "half_width", "status"],
                    "properties": {"status": {"enum": ["PASS", "FAIL"]}},
                },
            },
            "all_pass": {"type": "boolean"},
        },
    },
    "busycycle": {
        "type": "object",
        "required": ["mean_customers", "mean_length", "mean_vacations", "theta"],
    },
    "batch": {
        "type": "object",
        "required": ["utilization", "mean_service", "mean_cycle", "mean_queue_length", "mean_delay", "batch_pmf"],
    },
    "mapcheck": {
        "type": "object",
        "required": ["rows"],
        "properties": {
            "rows": {
                "type": "array",
                "items": {"type": "object", "required": ["example", "commutative", "interchange_residual"]},
            }
        },
    },
}


def report_schema(command: str) -> dict:
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "required": ["schema_version", "command", "result"],
        "properties": {
            "schema_version": {"const": SCHEMA_VERSION},
            "command": {"const": command},
            "model": {"type": "object"},
            "result": _results[command],
        },
    }
