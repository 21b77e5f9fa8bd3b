//! Logistic-regression models that drive the executors.
//!
//! A binary model chooses between sequential and parallel execution; two
//! multinomial (softmax) models choose the chunk-size fraction and the
//! prefetch distance. Binary weights are fitted with iteratively reweighted
//! least squares, multinomial weights with Newton-Raphson on the
//! cross-entropy. Both add a small ridge term so separable data stays
//! solvable, and both halve a step that would increase the objective.

mod binary;
mod bundle;
mod dataset;
mod multinomial;
mod normalize;
mod select;

pub use binary::{
    binary_cross_entropy, fit_binary_irls, predict_binary, sigmoid, train_binary_irls, BinaryModel,
    BinaryPrediction,
};
pub use bundle::{
    load_weights, save_weights, WeightsBundle, CHUNK_CLASSES, FORMAT_VERSION, POLICY_CLASSES,
    PREFETCH_CLASSES,
};
pub use dataset::{Dataset, Sample};
pub use multinomial::{
    cross_entropy, fit_multinomial_newton, fit_multinomial_padded, multinomial_gradient,
    multinomial_hessian, predict_class, softmax, softmax_probs, train_multinomial_newton,
    ClassPrediction, MultinomialModel,
};
pub use normalize::{fit_normalizer, FeatureTransform, Normalizer};
pub use select::{information_gains, quartile_cuts, select_features_info_gain};

use std::path::PathBuf;

/// Probability clamp used by [`sigmoid`], [`softmax`] and the losses.
pub const PROB_EPS: f64 = 1e-12;

/// Largest ridge value tried when a damped system is not positive definite.
const MAX_RIDGE: f64 = 1e-2;

/// Largest number of times a rejected step is halved.
const MAX_HALVINGS: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature length mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("unknown class label `{0}`")]
    UnknownLabel(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("{model}: training data contains a single class ({class}); need at least two")]
    SingleClass { model: String, class: String },
    #[error("{model}: class `{class}` has no training samples")]
    MissingClass { model: String, class: String },
    #[error("expected {expected} classes, found {found}")]
    ClassCount { expected: usize, found: usize },
    #[error("cannot select {k} features out of {available}")]
    TooManyFeatures { k: usize, available: usize },
    #[error("models in a bundle must share one normalizer")]
    NormalizerMismatch,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("weights file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Solver settings shared by IRLS and Newton-Raphson.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_iters: usize,
    /// Stop when the infinity norm of the accepted weight change drops below this.
    pub convergence_tol: f64,
    /// Ridge added to the diagonal of the normal equations / Hessian.
    pub ridge: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 100,
            convergence_tol: 1e-8,
            ridge: 1e-6,
        }
    }
}

impl TrainConfig {
    fn validate(&self) {
        assert!(self.max_iters >= 1, "max_iters must be at least 1");
        assert!(
            self.convergence_tol > 0.0,
            "convergence_tol must be positive"
        );
        assert!(self.ridge >= 0.0, "ridge must be non-negative");
    }
}

/// A fitted model plus solver diagnostics.
#[derive(Clone, Debug)]
pub struct Trained<M> {
    pub model: M,
    pub converged: bool,
    pub iterations: usize,
    /// Ridge-penalized objective after the initial point and each accepted step.
    pub objective_history: Vec<f64>,
}

/// Solves `(a + ridge*I) x = b` by Cholesky, escalating the ridge tenfold
/// (up to [`MAX_RIDGE`]) when the damped matrix is not positive definite.
fn solve_damped(
    a: &nalgebra::DMatrix<f64>,
    b: &nalgebra::DVector<f64>,
    ridge: f64,
) -> Option<nalgebra::DVector<f64>> {
    let mut lambda = ridge;
    loop {
        let mut damped = a.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += lambda;
        }
        if let Some(chol) = damped.cholesky() {
            let x = chol.solve(b);
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
        lambda = if lambda == 0.0 { 1e-8 } else { lambda * 10.0 };
        if lambda > MAX_RIDGE * (1.0 + 1e-9) {
            return None;
        }
    }
}
