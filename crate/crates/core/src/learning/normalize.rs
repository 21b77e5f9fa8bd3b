use std::f64::consts::LN_10;

use super::Dataset;
use crate::features::is_count_feature;

/// Forward transform of one raw feature: optional `log10(1 + v)`, then z-score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureTransform {
    pub log10p1: bool,
    pub mean: f64,
    pub stddev: f64,
}

impl FeatureTransform {
    pub fn apply(&self, v: f64) -> f64 {
        let v = if self.log10p1 { v.ln_1p() / LN_10 } else { v };
        (v - self.mean) / self.stddev
    }
}

/// Per-feature transforms for every non-bias feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub features: Vec<FeatureTransform>,
}

impl Normalizer {
    /// Pass-through transform over `n` features.
    pub fn identity(n: usize) -> Self {
        Normalizer {
            features: vec![
                FeatureTransform {
                    log10p1: false,
                    mean: 0.0,
                    stddev: 1.0,
                };
                n
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Transforms raw features (no bias slot).
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        assert_eq!(raw.len(), self.features.len(), "feature length mismatch");
        raw.iter()
            .zip(&self.features)
            .map(|(&v, t)| t.apply(v))
            .collect()
    }

    /// Transformed features with the bias `1` prepended: one design-matrix row.
    pub fn design_row(&self, raw: &[f64]) -> Vec<f64> {
        let mut row = Vec::with_capacity(raw.len() + 1);
        row.push(1.0);
        row.extend(self.apply(raw));
        row
    }

    pub fn design_matrix(&self, data: &Dataset) -> nalgebra::DMatrix<f64> {
        let d = self.features.len() + 1;
        let rows: Vec<f64> = data
            .samples()
            .iter()
            .flat_map(|s| self.design_row(&s.features))
            .collect();
        nalgebra::DMatrix::from_row_slice(data.len(), d, &rows)
    }
}

/// Fits log flags (count features only), means and population standard
/// deviations on `data`. A feature that is constant in `data` gets
/// `stddev = 1`, so it maps to 0.
pub fn fit_normalizer(data: &Dataset) -> Normalizer {
    let n = data.len() as f64;
    let features = data
        .feature_names()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let log10p1 = is_count_feature(name);
            let values: Vec<f64> = data
                .samples()
                .iter()
                .map(|s| {
                    let v = s.features[j];
                    if log10p1 {
                        v.ln_1p() / LN_10
                    } else {
                        v
                    }
                })
                .collect();
            if values.iter().all(|&v| v == values[0]) {
                return FeatureTransform {
                    log10p1,
                    mean: values[0],
                    stddev: 1.0,
                };
            }
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let stddev = if var > 0.0 { var.sqrt() } else { 1.0 };
            FeatureTransform {
                log10p1,
                mean,
                stddev,
            }
        })
        .collect();
    Normalizer { features }
}
