use nalgebra::{DMatrix, DVector};

use super::{
    fit_normalizer, solve_damped, Dataset, LearnError, Normalizer, TrainConfig, Trained,
    MAX_HALVINGS, PROB_EPS,
};
use crate::features::FeatureVector;

/// Bias offset (in normalized logit units) given to classes that never occur
/// in the training data, see [`fit_multinomial_padded`].
const ABSENT_CLASS_OFFSET: f64 = 30.0;

/// Softmax regression. Row `c` of `weights` scores class `c`; the last row is
/// the reference class and stays zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MultinomialModel {
    pub weights: DMatrix<f64>,
    pub class_names: Vec<String>,
    pub normalizer: Normalizer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassPrediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

impl MultinomialModel {
    pub fn new(
        weights: DMatrix<f64>,
        class_names: Vec<String>,
        normalizer: Normalizer,
    ) -> Result<Self, LearnError> {
        let c = class_names.len();
        if c < 2 {
            return Err(LearnError::ClassCount {
                expected: 2,
                found: c,
            });
        }
        if weights.nrows() != c {
            return Err(LearnError::ClassCount {
                expected: c,
                found: weights.nrows(),
            });
        }
        if weights.ncols() != normalizer.len() + 1 {
            return Err(LearnError::DimensionMismatch {
                expected: normalizer.len() + 1,
                found: weights.ncols(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(LearnError::NonFinite("multinomial weights".into()));
        }
        if weights.row(c - 1).iter().any(|&w| w != 0.0) {
            return Err(LearnError::NonFinite(
                "multinomial weights: reference (last) row must be zero".into(),
            ));
        }
        Ok(MultinomialModel {
            weights,
            class_names,
            normalizer,
        })
    }

    pub fn zeros(class_names: Vec<String>, normalizer: Normalizer) -> Self {
        let weights = DMatrix::zeros(class_names.len(), normalizer.len() + 1);
        MultinomialModel {
            weights,
            class_names,
            normalizer,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn logits(&self, raw: &[f64]) -> Vec<f64> {
        let row = DVector::from_vec(self.normalizer.design_row(raw));
        (&self.weights * row).iter().copied().collect()
    }

    pub fn predict_raw(&self, raw: &[f64]) -> ClassPrediction {
        let logits = self.logits(raw);
        ClassPrediction {
            class: argmax(&logits),
            probabilities: softmax(&logits),
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> ClassPrediction {
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

/// First index of the maximum; ties go to the smaller index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax. Probabilities are clamped to at least
/// `PROB_EPS` and renormalized, so every entry lies strictly inside (0, 1).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let clamped: Vec<f64> = exps.iter().map(|e| (e / sum).max(PROB_EPS)).collect();
    let total: f64 = clamped.iter().sum();
    clamped.iter().map(|p| p / total).collect()
}

pub fn softmax_probs(model: &MultinomialModel, x: &FeatureVector) -> Vec<f64> {
    softmax(&model.logits(x.raw()))
}

/// Argmax class of the softmax posterior; ties go to the smaller class index.
pub fn predict_class(model: &MultinomialModel, x: &FeatureVector) -> ClassPrediction {
    model.predict(x)
}

/// Posterior matrix, one row per sample.
fn posteriors(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let logits = x * w.transpose();
    let mut p = DMatrix::zeros(logits.nrows(), logits.ncols());
    for (n, row) in logits.row_iter().enumerate() {
        let row: Vec<f64> = row.iter().copied().collect();
        for (c, v) in softmax(&row).into_iter().enumerate() {
            p[(n, c)] = v;
        }
    }
    p
}

fn ce_at(x: &DMatrix<f64>, labels: &[usize], w: &DMatrix<f64>) -> f64 {
    let p = posteriors(x, w);
    -labels
        .iter()
        .enumerate()
        .map(|(n, &t)| p[(n, t)].clamp(PROB_EPS, 1.0 - PROB_EPS).ln())
        .sum::<f64>()
}

fn gradient_at(x: &DMatrix<f64>, labels: &[usize], w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut residual = posteriors(x, w);
    for (n, &t) in labels.iter().enumerate() {
        residual[(n, t)] -= 1.0;
    }
    residual.transpose() * x
}

fn hessian_at(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let (c, d) = (w.nrows(), w.ncols());
    let p = posteriors(x, w);
    let mut h = DMatrix::zeros(c * d, c * d);
    for n in 0..x.nrows() {
        let xn = x.row(n).transpose();
        let outer = &xn * xn.transpose();
        for i in 0..c {
            for j in 0..c {
                let delta = if i == j { 1.0 } else { 0.0 };
                let coef = p[(n, i)] * (delta - p[(n, j)]);
                if coef != 0.0 {
                    let mut block = h.view_mut((i * d, j * d), (d, d));
                    block += &outer * coef;
                }
            }
        }
    }
    h
}

fn labels(data: &Dataset) -> Vec<usize> {
    data.samples().iter().map(|s| s.label).collect()
}

/// Cross-entropy `-sum_n ln y_{n,t_n}` with clamped probabilities.
pub fn cross_entropy(model: &MultinomialModel, data: &Dataset) -> f64 {
    ce_at(
        &model.normalizer.design_matrix(data),
        &labels(data),
        &model.weights,
    )
}

/// Gradient of [`cross_entropy`] with respect to every weight, shaped like
/// `model.weights`: row `c` is `sum_n (y_nc - t_nc) x_n`.
pub fn multinomial_gradient(model: &MultinomialModel, data: &Dataset) -> DMatrix<f64> {
    gradient_at(
        &model.normalizer.design_matrix(data),
        &labels(data),
        &model.weights,
    )
}

/// Hessian of [`cross_entropy`] over the class-major flattening of the weights
/// (index `c * d + j`). Block `(i, j)` is `sum_n y_ni (I_ij - y_nj) x_n x_n'`.
pub fn multinomial_hessian(model: &MultinomialModel, data: &Dataset) -> DMatrix<f64> {
    hessian_at(&model.normalizer.design_matrix(data), &model.weights)
}

fn check_all_classes(data: &Dataset, model_name: &str) -> Result<(), LearnError> {
    if data.num_classes() < 2 {
        return Err(LearnError::ClassCount {
            expected: 2,
            found: data.num_classes(),
        });
    }
    if let Some(missing) = data.class_counts().iter().position(|&c| c == 0) {
        return Err(LearnError::MissingClass {
            model: model_name.into(),
            class: data.class_names()[missing].clone(),
        });
    }
    Ok(())
}

/// Fits a normalizer on `data`, then runs [`fit_multinomial_newton`].
pub fn train_multinomial_newton(
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Trained<MultinomialModel>, LearnError> {
    check_all_classes(data, "multinomial model")?;
    fit_multinomial_newton(data, fit_normalizer(data), cfg)
}

/// Newton-Raphson on the ridge-penalized cross-entropy, from zero weights.
///
/// The last class row is pinned to zero; only the first `C - 1` rows are
/// free. Each iteration solves `(H_free + ridge*I) delta = grad_free` (the
/// gradient includes the ridge term), escalating the damping tenfold up to
/// `1e-2` if the system is not positive definite, then halves the step until
/// the objective does not increase. Every class must occur in `data`.
pub fn fit_multinomial_newton(
    data: &Dataset,
    normalizer: Normalizer,
    cfg: &TrainConfig,
) -> Result<Trained<MultinomialModel>, LearnError> {
    cfg.validate();
    check_all_classes(data, "multinomial model")?;
    if normalizer.len() != data.num_features() {
        return Err(LearnError::DimensionMismatch {
            expected: data.num_features(),
            found: normalizer.len(),
        });
    }
    let x = normalizer.design_matrix(data);
    let labels = labels(data);
    let c = data.num_classes();
    let d = x.ncols();
    let free = (c - 1) * d;

    let objective = |w: &DMatrix<f64>| {
        let penalty: f64 = w.rows(0, c - 1).iter().map(|v| v * v).sum();
        ce_at(&x, &labels, w) + 0.5 * cfg.ridge * penalty
    };

    let mut w = DMatrix::zeros(c, d);
    let mut loss = objective(&w);
    let mut history = vec![loss];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let grad = gradient_at(&x, &labels, &w);
        let g = DVector::from_iterator(
            free,
            (0..c - 1)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .map(|(i, j)| grad[(i, j)] + cfg.ridge * w[(i, j)]),
        );
        let h = hessian_at(&x, &w).view((0, 0), (free, free)).into_owned();
        let Some(delta) = solve_damped(&h, &g, cfg.ridge) else {
            break;
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut candidate = w.clone();
            for i in 0..c - 1 {
                for j in 0..d {
                    candidate[(i, j)] -= step * delta[i * d + j];
                }
            }
            let l = objective(&candidate);
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
        model: MultinomialModel::new(w, data.class_names().to_vec(), normalizer)?,
        converged,
        iterations,
        objective_history: history,
    })
}

/// Like [`fit_multinomial_newton`], but tolerates classes with no samples as
/// long as at least two classes occur. The model is fitted on the classes
/// present; each absent class gets a constant logit `ABSENT_CLASS_OFFSET`
/// below the reference, so it is never predicted. Rows are then shifted so the
/// last row is zero again (softmax is invariant under the shift).
pub fn fit_multinomial_padded(
    data: &Dataset,
    normalizer: Normalizer,
    cfg: &TrainConfig,
    model_name: &str,
) -> Result<Trained<MultinomialModel>, LearnError> {
    let counts = data.class_counts();
    let present: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
    if present.len() < 2 {
        return Err(LearnError::SingleClass {
            model: model_name.into(),
            class: data.class_names()[present[0]].clone(),
        });
    }
    if present.len() == counts.len() {
        return fit_multinomial_newton(data, normalizer, cfg);
    }
    let sub = data.restrict_classes(&present)?;
    let fitted = fit_multinomial_newton(&sub, normalizer, cfg)?;
    let d = fitted.model.weights.ncols();
    let mut full = DMatrix::zeros(counts.len(), d);
    for c in 0..counts.len() {
        match present.iter().position(|&p| p == c) {
            Some(k) => full.row_mut(c).copy_from(&fitted.model.weights.row(k)),
            None => full[(c, 0)] = -ABSENT_CLASS_OFFSET,
        }
    }
    let reference = full.row(counts.len() - 1).into_owned();
    for mut row in full.row_iter_mut() {
        row -= &reference;
    }
    Ok(Trained {
        model: MultinomialModel::new(full, data.class_names().to_vec(), fitted.model.normalizer)?,
        converged: fitted.converged,
        iterations: fitted.iterations,
        objective_history: fitted.objective_history,
    })
}
