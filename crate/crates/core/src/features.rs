//! Feature layouts shared by the analyzer, the models and the executor.

use serde::{Deserialize, Serialize};

/// Names of the six model features, in vector order (the bias slot is not named).
pub const MODEL_FEATURES: [&str; 6] = [
    "threads",
    "iterations",
    "total_ops",
    "float_ops",
    "comparison_ops",
    "loop_level",
];

/// Names of the full twelve-feature layout: the two dynamic features first,
/// then the ten static ones. The first six are the model features.
pub const FULL_FEATURES: [&str; 12] = [
    "threads",
    "iterations",
    "total_ops",
    "float_ops",
    "comparison_ops",
    "loop_level",
    "int_vars",
    "float_vars",
    "if_stmts",
    "if_stmts_inner",
    "calls",
    "calls_inner",
];

/// Whether a feature is a count that spans orders of magnitude. Count features
/// go through `log10(1 + v)` before standardization.
pub fn is_count_feature(name: &str) -> bool {
    matches!(
        name,
        "iterations" | "total_ops" | "float_ops" | "comparison_ops"
    )
}

/// Dispatch-time model input.
///
/// Layout: `[1 (bias), threads, iterations, total_ops, float_ops, comparison_ops, loop_level]`,
/// raw (un-normalized) values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector([f64; 7]);

impl FeatureVector {
    pub const LEN: usize = 7;

    /// Builds a vector from the six raw features; the bias slot is filled in.
    ///
    /// Panics if any value is non-finite.
    pub fn from_raw(raw: [f64; 6]) -> Self {
        assert!(
            raw.iter().all(|v| v.is_finite()),
            "feature values must be finite"
        );
        let mut values = [1.0; 7];
        values[1..].copy_from_slice(&raw);
        FeatureVector(values)
    }

    pub fn values(&self) -> &[f64; 7] {
        &self.0
    }

    /// The six features without the bias slot.
    pub fn raw(&self) -> &[f64] {
        &self.0[1..]
    }

    pub fn threads(&self) -> f64 {
        self.0[1]
    }

    pub fn iterations(&self) -> f64 {
        self.0[2]
    }
}
