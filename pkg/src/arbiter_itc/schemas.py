"""JSON schemas for every document the package reads or writes."""

SCHEMA_VERSION = "arbiter-itc/v1"

_num = {"type": "number"}
_num_or_null = {"type": ["number", "null"]}
_version = {"const": SCHEMA_VERSION}
_names = {"type": "array", "items": {"type": "string"}}
_hash = {"type": "string", "pattern": "^[0-9a-f]{64}$"}

AGD_SCHEMA = {
    "type": "object",
    "required": ["schema", "trial_id", "arm_labels", "arm_sizes", "covariates", "covariate_means"],
    "properties": {
        "schema": _version,
        "kind": {"const": "agd"},
        "trial_id": {"enum": ["AC", "BC"]},
        "arm_labels": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        "arm_sizes": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "covariates": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "kind"],
                "properties": {"name": {"type": "string"}, "kind": {"enum": ["binary", "continuous"]}},
            },
        },
        "covariate_means": {"type": "array", "items": _num},
        "covariate_covariance": {"type": ["array", "null"], "items": {"type": "array", "items": _num}},
        "outcomes": {
            "type": ["object", "null"],
            "additionalProperties": {
                "type": "object",
                "required": ["n"],
                "properties": {
                    "n": {"type": "integer", "minimum": 0},
                    "events": {"type": "integer"},
                    "nonevents": {"type": "integer"},
                    "mean": _num,
                    "sd": _num,
                },
                "additionalProperties": False,
            },
        },
        "event": {"type": "integer"},
        "published_effect": {
            "type": ["object", "null"],
            "required": ["scale", "point"],
            "properties": {
                "scale": {"enum": ["logOR", "riskdiff", "meandiff"]},
                "point": _num,
                "se": _num_or_null,
            },
        },
    },
}

ESTIMATE_SCHEMA = {
    "type": "object",
    "required": ["scale", "estimand", "point", "se", "ci95", "provenance"],
    "properties": {
        "scale": {"enum": ["logOR", "riskdiff", "meandiff"]},
        "estimand": {"type": "string"},
        "point": _num,
        "se": {"type": ["number", "null"], "minimum": 0},
        "ci95": {"type": ["array", "null"], "items": _num, "minItems": 2, "maxItems": 2},
        "provenance": {"type": "string"},
    },
}

WEIGHT_VECTOR_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "subject_ids", "weights", "normalization", "ess"],
    "properties": {
        "schema": _version,
        "kind": {"const": "weight-vector"},
        "subject_ids": _names,
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "normalization": {"enum": ["sum-to-one", "mean-one", "raw"]},
        "ess": _num,
    },
}

PROPENSITY_MODEL_SCHEMA = {
    "type": "object",
    "required": ["covariates", "coefficients", "link", "iterations", "converged", "max_score"],
    "properties": {
        "covariates": _names,
        "coefficients": {"type": "array", "items": _num},
        "link": {"const": "logit"},
        "iterations": {"type": "integer"},
        "converged": {"type": "boolean"},
        "max_score": _num,
    },
}

COVGEN_SCHEMA = {
    "type": "object",
    "required": ["covariates", "means", "sds", "correlation_source", "latent_correlation",
                 "generator", "seed", "binary_margin"],
    "properties": {
        "covariates": AGD_SCHEMA["properties"]["covariates"],
        "means": {"type": "array", "items": _num},
        "sds": {"type": "array", "items": _num_or_null},
        "correlation_source": {"enum": ["published", "borrowed", "independence"]},
        "latent_correlation": {"type": "array", "items": {"type": "array", "items": _num}},
        "generator": {"const": "philox4x64-10"},
        "seed": {"type": "integer", "minimum": 0},
        "binary_margin": {"enum": ["threshold", "exact-count"]},
        "degenerate": _names,
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "protocol", "covariates", "propensity", "scale", "estimand"],
    "properties": {
        "schema": _version,
        "kind": {"const": "arbitration-config"},
        "protocol": {"enum": ["ipd-shared", "covariate-simulation"]},
        "covariates": _names,
        "propensity": {
            "type": "object",
            "required": ["covariates", "link"],
            "properties": {"covariates": _names, "link": {"const": "logit"}},
        },
        "covgen": {
            "type": ["object", "null"],
            "properties": {
                "correlation_source": {"enum": ["auto", "published", "borrowed", "independence"]},
                "binary_margin": {"enum": ["threshold", "exact-count"]},
                "generator": {"const": "philox4x64-10"},
            },
        },
        "seed": {"type": ["integer", "null"], "minimum": 0},
        "scale": {"enum": ["logOR", "riskdiff", "meandiff"]},
        "estimand": {"const": "ATO"},
    },
}

WEIGHTS_PACKAGE_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "recipient", "trial_id", "weights", "propensity", "config_hash"],
    "properties": {
        "schema": _version,
        "kind": {"const": "weights-package"},
        "recipient": {"enum": ["sponsorA", "sponsorB"]},
        "trial_id": {"enum": ["AC", "BC"]},
        "weights": WEIGHT_VECTOR_SCHEMA,
        "propensity": PROPENSITY_MODEL_SCHEMA,
        "config_hash": _hash,
    },
}

RESULTS_PACKAGE_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "sender", "trial_id", "protocol", "estimate", "ess", "balance",
                 "config_hash", "covariate_hash"],
    "properties": {
        "schema": _version,
        "kind": {"const": "results-package"},
        "sender": {"enum": ["sponsorA", "sponsorB"]},
        "trial_id": {"enum": ["AC", "BC"]},
        "protocol": {"enum": ["ipd-shared", "covariate-simulation"]},
        "estimate": ESTIMATE_SCHEMA,
        "ess": _num,
        "balance": {
            "type": "object",
            "required": ["covariates", "means"],
            "properties": {"covariates": _names, "means": {"type": "array", "items": _num}},
        },
        "config_hash": _hash,
        "covariate_hash": {"anyOf": [_hash, {"type": "null"}]},
    },
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "n_per_arm", "covariates", "trial_means", "outcome_model",
                 "replicates", "seed"],
    "properties": {
        "schema": _version,
        "kind": {"const": "scenario"},
        "name": {"type": "string"},
        "n_per_arm": {"type": "integer", "minimum": 1},
        "covariates": AGD_SCHEMA["properties"]["covariates"],
        "trial_means": {
            "type": "object",
            "required": ["AC", "BC"],
            "additionalProperties": {"type": "array", "items": _num},
        },
        "outcome_model": {
            "type": "object",
            "required": ["AC", "BC"],
            "additionalProperties": {
                "type": "object",
                "required": ["intercept", "prognostic", "treatment", "interaction"],
                "properties": {
                    "intercept": _num,
                    "prognostic": {"type": "array", "items": _num},
                    "treatment": _num,
                    "interaction": {"type": "array", "items": _num},
                },
            },
        },
        "replicates": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "event": {"type": "integer"},
    },
}

_method_summary = {
    "type": "object",
    "required": ["mean", "empirical_se", "mean_se", "coverage", "truth", "n_ok"],
    "properties": {
        "mean": _num_or_null,
        "empirical_se": _num_or_null,
        "mean_se": _num_or_null,
        "coverage": _num_or_null,
        "truth": _num_or_null,
        "n_ok": {"type": "integer"},
    },
}

STUDY_REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "scenario", "replicates", "aborted", "failed", "methods",
                 "sign_flip_rate", "all_methods_agree"],
    "properties": {
        "schema": _version,
        "kind": {"const": "study-report"},
        "scenario": {"type": "string"},
        "replicates": {"type": "integer"},
        "aborted": {"type": "integer"},
        "failed": {"type": "boolean"},
        "methods": {
            "type": "object",
            "required": ["maic_sponsor_a", "maic_sponsor_b", "arbitrated_ipd", "arbitrated_simulation"],
            "additionalProperties": _method_summary,
        },
        "sign_flip_rate": _num_or_null,
        "all_methods_agree": {"type": "boolean"},
        "errors": {"type": "array", "items": {"type": "string"}},
    },
}

_check = {
    "type": "object",
    "required": ["name", "value", "expected", "tolerance", "ok"],
    "properties": {
        "name": {"type": "string"},
        "value": _num,
        "expected": _num,
        "tolerance": _num,
        "ok": {"type": "boolean"},
    },
}


def command_schema(report_schema: dict) -> dict:
    return {
        "type": "object",
        "required": ["schema", "command", "exit_code", "errors", "report"],
        "properties": {
            "schema": _version,
            "command": {"type": "string"},
            "exit_code": {"enum": [0, 1, 2]},
            "errors": {"type": "array", "items": {"type": "string"}},
            "report": report_schema,
        },
    }


COMMAND_SCHEMAS = {
    "reproduce-paper": command_schema({
        "type": "object",
        "required": ["checks", "values"],
        "properties": {"checks": {"type": "array", "items": _check}, "values": {"type": "object"}},
    }),
    "maic": command_schema({
        "type": ["object", "null"],
        "required": ["estimate", "ipd_effect", "agd_effect", "ess", "balance"],
        "properties": {
            "estimate": ESTIMATE_SCHEMA,
            "ipd_effect": ESTIMATE_SCHEMA,
            "agd_effect": ESTIMATE_SCHEMA,
            "ess": _num,
            "balance": {"type": "array", "items": {
                "type": "object",
                "required": ["covariate", "target", "unweighted", "weighted"],
            }},
        },
    }),
    "arbitrate": command_schema({
        "type": ["object", "null"],
        "required": ["role", "outputs"],
        "properties": {
            "role": {"enum": ["arbitrator-weights", "sponsor-run", "sponsor-selfservice", "arbitrator-combine"]},
            "outputs": _names,
            "estimate": ESTIMATE_SCHEMA,
        },
    }),
    "simulate": command_schema({"anyOf": [STUDY_REPORT_SCHEMA, {"type": "null"}]}),
}
