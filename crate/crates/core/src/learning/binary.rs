use nalgebra::{DMatrix, DVector};

use super::{
    fit_normalizer, solve_damped, Dataset, LearnError, Normalizer, TrainConfig, Trained,
    MAX_HALVINGS, PROB_EPS,
};
use crate::features::FeatureVector;

/// Logistic function clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Binary logistic regression over normalized features.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryModel {
    /// Bias weight first, then one weight per feature.
    pub weights: Vec<f64>,
    pub normalizer: Normalizer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryPrediction {
    /// 1 iff `probability > 0.5`.
    pub class: usize,
    /// Probability of class 1.
    pub probability: f64,
}

impl BinaryModel {
    pub fn new(weights: Vec<f64>, normalizer: Normalizer) -> Result<Self, LearnError> {
        if weights.len() != normalizer.len() + 1 {
            return Err(LearnError::DimensionMismatch {
                expected: normalizer.len() + 1,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(LearnError::NonFinite("binary weights".into()));
        }
        Ok(BinaryModel {
            weights,
            normalizer,
        })
    }

    pub fn zeros(normalizer: Normalizer) -> Self {
        BinaryModel {
            weights: vec![0.0; normalizer.len() + 1],
            normalizer,
        }
    }

    /// Linear score `w . [1, normalize(raw)]`.
    pub fn score(&self, raw: &[f64]) -> f64 {
        self.normalizer
            .design_row(raw)
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum()
    }

    pub fn predict_raw(&self, raw: &[f64]) -> BinaryPrediction {
        let probability = sigmoid(self.score(raw));
        BinaryPrediction {
            class: usize::from(probability > 0.5),
            probability,
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> BinaryPrediction {
        self.predict_raw(x.raw())
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let hits = data
            .samples()
            .iter()
            .filter(|s| self.predict_raw(&s.features).class == s.label)
            .count();
        hits as f64 / data.len() as f64
    }
}

/// Decision rule: class 1 iff `p(class 1 | x) > 0.5`; an exact tie is class 0.
pub fn predict_binary(model: &BinaryModel, x: &FeatureVector) -> BinaryPrediction {
    model.predict(x)
}

/// Summed binary cross-entropy of `model` on `data`, with clamped probabilities.
pub fn binary_cross_entropy(model: &BinaryModel, data: &Dataset) -> f64 {
    let x = model.normalizer.design_matrix(data);
    let y = targets(data);
    cross_entropy_at(&x, &y, &DVector::from_column_slice(&model.weights))
}

fn targets(data: &Dataset) -> DVector<f64> {
    DVector::from_iterator(data.len(), data.samples().iter().map(|s| s.label as f64))
}

fn probabilities(x: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    (x * w).map(sigmoid)
}

fn cross_entropy_at(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let mu = probabilities(x, w);
    -y.iter()
        .zip(mu.iter())
        .map(|(&t, &m)| t * m.ln() + (1.0 - t) * (1.0 - m).ln())
        .sum::<f64>()
}

fn objective(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, ridge: f64) -> f64 {
    cross_entropy_at(x, y, w) + 0.5 * ridge * w.norm_squared()
}

fn check_two_classes(data: &Dataset) -> Result<(), LearnError> {
    if data.num_classes() != 2 {
        return Err(LearnError::ClassCount {
            expected: 2,
            found: data.num_classes(),
        });
    }
    let counts = data.class_counts();
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(LearnError::SingleClass {
            model: "binary policy model".into(),
            class: data.class_names()[1 - missing].clone(),
        });
    }
    Ok(())
}

/// Fits a normalizer on `data`, then runs [`fit_binary_irls`].
pub fn train_binary_irls(
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Trained<BinaryModel>, LearnError> {
    check_two_classes(data)?;
    fit_binary_irls(data, fit_normalizer(data), cfg)
}

/// Iteratively reweighted least squares from zero weights.
///
/// Each iteration solves `(X'SX + ridge*I) w_new = X'(SXw + y - mu)` with
/// `S = diag(mu (1 - mu))`, then halves the step `w_new - w` (up to 20 times)
/// until the ridge-penalized cross-entropy does not increase. Stops when the
/// accepted change has infinity norm below `convergence_tol`, when no halving
/// helps, or after `max_iters`; the best weights so far are returned either way.
pub fn fit_binary_irls(
    data: &Dataset,
    normalizer: Normalizer,
    cfg: &TrainConfig,
) -> Result<Trained<BinaryModel>, LearnError> {
    cfg.validate();
    check_two_classes(data)?;
    if normalizer.len() != data.num_features() {
        return Err(LearnError::DimensionMismatch {
            expected: data.num_features(),
            found: normalizer.len(),
        });
    }
    let x = normalizer.design_matrix(data);
    let y = targets(data);
    let d = x.ncols();
    let xt = x.transpose();

    let mut w = DVector::zeros(d);
    let mut loss = objective(&x, &y, &w, cfg.ridge);
    let mut history = vec![loss];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let mu = probabilities(&x, &w);
        let s = mu.map(|m| m * (1.0 - m));
        let mut sx = x.clone();
        for (i, mut row) in sx.row_iter_mut().enumerate() {
            row *= s[i];
        }
        let normal = &xt * &sx;
        let rhs = &xt * (&sx * &w + &y - &mu);
        let Some(w_new) = solve_damped(&normal, &rhs, cfg.ridge) else {
            break;
        };
        let delta = w_new - &w;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &w + &delta * step;
            let l = objective(&x, &y, &candidate, cfg.ridge);
            if l <= loss {
                accepted = Some((candidate, l));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, l)) = accepted else {
            converged = delta.amax() < cfg.convergence_tol;
            break;
        };
        let change = (&candidate - &w).amax();
        w = candidate;
        loss = l;
        history.push(loss);
        if change < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(Trained {
        model: BinaryModel::new(w.iter().copied().collect(), normalizer)?,
        converged,
        iterations,
        objective_history: history,
    })
}
