//! JSON schema of run configs, with the CSV columns each suite writes.

use serde_json::{json, Value};

fn interval() -> Value {
    json!({
        "type": "array",
        "description": "Open interval [lower, upper]; an end may be \"-inf\", \"inf\" or \"+inf\".",
        "minItems": 2,
        "maxItems": 2,
        "items": { "oneOf": [{ "type": "number" }, { "enum": ["-inf", "inf", "+inf"] }] }
    })
}

fn field_recipe() -> Value {
    json!({
        "oneOf": [
            {
                "type": "object",
                "required": ["kind", "t0"],
                "additionalProperties": false,
                "properties": {
                    "kind": { "const": "constant" },
                    "t0": { "type": "number" }
                }
            },
            {
                "type": "object",
                "description": "t0 + a sin(kx x) cos(ky y) on the torus (periods rescaled to 2 pi); t0 + a sin(kx X) cos(ky Y) in the unit embedding on the sphere.",
                "required": ["kind", "t0", "amplitude", "wavevector"],
                "additionalProperties": false,
                "properties": {
                    "kind": { "const": "single_mode" },
                    "t0": { "type": "number" },
                    "amplitude": { "type": "number", "minimum": 0 },
                    "wavevector": { "type": "array", "items": { "type": "integer" }, "minItems": 2, "maxItems": 2 }
                }
            },
            {
                "type": "object",
                "description": "Seeded band-limited trigonometric sum; the run seed is added to `seed`.",
                "required": ["kind", "t0", "amplitude", "max_mode", "seed"],
                "additionalProperties": false,
                "properties": {
                    "kind": { "const": "random_band_limited" },
                    "t0": { "type": "number" },
                    "amplitude": { "type": "number", "minimum": 0 },
                    "max_mode": { "type": "integer", "minimum": 1 },
                    "seed": { "type": "integer", "minimum": 0 }
                }
            }
        ],
        "description": "Amplitudes are scaled down as needed so that |Du|/f(u) stays below the solver safeguard."
    })
}

/// The config schema.
pub fn schema() -> Value {
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "RunConfig",
        "type": "object",
        "required": ["spacetime", "fiber", "suites"],
        "additionalProperties": false,
        "properties": {
            "spacetime": {
                "type": "object",
                "required": ["warping"],
                "additionalProperties": false,
                "properties": {
                    "warping": {
                        "type": "object",
                        "required": ["family"],
                        "additionalProperties": false,
                        "properties": {
                            "family": { "enum": ["constant", "exp", "cosh", "powerlaw", "affine"] },
                            "params": {
                                "type": "object",
                                "additionalProperties": false,
                                "description": "constant: c (default 1); powerlaw: k; affine: m, q.",
                                "properties": {
                                    "c": { "type": "number", "exclusiveMinimum": 0 },
                                    "k": { "type": "number" },
                                    "m": { "type": "number" },
                                    "q": { "type": "number" }
                                }
                            },
                            "domain": interval()
                        }
                    },
                    "window": interval()
                }
            },
            "fiber": {
                "type": "object",
                "required": ["kind", "resolution"],
                "additionalProperties": false,
                "properties": {
                    "kind": { "enum": ["torus", "sphere"] },
                    "resolution": {
                        "type": "array",
                        "description": "Nodes per axis, each at least 8; the sphere needs an even second entry.",
                        "items": { "type": "integer", "minimum": 8 },
                        "minItems": 2,
                        "maxItems": 2
                    },
                    "size": {
                        "type": "array",
                        "description": "Torus: one or two periods (default 2 pi). Sphere: the radius (default 1).",
                        "items": { "type": "number", "exclusiveMinimum": 0 },
                        "minItems": 1,
                        "maxItems": 2
                    }
                }
            },
            "fields": { "type": "array", "items": field_recipe() },
            "suites": {
                "type": "array",
                "minItems": 1,
                "uniqueItems": true,
                "items": { "enum": ["identities", "conditions", "slice-solve", "inequality-scan", "energy", "convergence"] }
            },
            "tolerances": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "identity_order": { "type": "number", "default": 1.8 },
                    "sphere_identity_order": { "type": "number", "default": 1.5 },
                    "levels": { "type": "integer", "minimum": 3, "default": 3 },
                    "oscillation": { "type": "number", "default": 1e-6 },
                    "superharmonic_c": { "type": "number", "default": 1.0 },
                    "scan_epsilon": { "type": "number", "description": "Default 1e-3 (h / (2 pi / 128))^2." },
                    "samples": { "type": "integer", "minimum": 2, "default": 201 }
                }
            },
            "solver": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "max_iterations": { "type": "integer", "minimum": 1, "default": 400 },
                    "residual_tolerance": { "type": "number", "default": 1e-10 },
                    "damping": { "type": "number", "default": 1.0 },
                    "pseudo_time_step": { "type": "number", "default": 20.0 },
                    "spacelike_safeguard": { "type": "number", "default": 0.95 }
                }
            },
            "output_dir": { "type": "string", "default": "out" },
            "seed": { "type": "integer", "minimum": 0, "default": 0 }
        },
        "x-outputs": {
            "report.json": "config echo, versions, per-suite results, pass/fail rollup, failures, timings",
            "identities.csv": ["field", "identity", "n0", "n1", "h", "max_abs_residual", "l2_residual", "interior_max_abs_residual"],
            "convergence.csv": ["field", "identity", "n0", "n1", "h", "max_abs_residual", "l2_residual", "interior_max_abs_residual"],
            "solver_history.csv": ["field", "iteration", "residual_inf", "oscillation", "max_speed"],
            "inequality_scan.csv": ["field", "max_residual", "argmax"],
            "energy.csv": ["field", "e_s", "bound_rhs", "bound_holds", "ncc_holds"]
        }
    })
}
