use std::collections::HashMap;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smartexec::learning::*;
use smartexec::FeatureVector;

fn generic(rows: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Dataset {
    let f = rows[0].len();
    Dataset::new(
        (0..f).map(|i| format!("g{i}")).collect(),
        (0..classes).map(|c| format!("c{c}")).collect(),
        rows.into_iter()
            .zip(labels)
            .map(|(features, label)| Sample { features, label })
            .collect(),
    )
    .unwrap()
}

// ---------- finite differences ----------

fn random_instance(rng: &mut ChaCha8Rng) -> (MultinomialModel, Dataset) {
    let c = rng.gen_range(2..=4);
    let n = rng.gen_range(1..=10);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let data = generic(rows, labels, c);
    let mut model = MultinomialModel::zeros(data.class_names().to_vec(), Normalizer::identity(6));
    model.weights = DMatrix::from_fn(c, 7, |_, _| rng.gen_range(-1.0..1.0));
    (model, data)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    for _ in 0..25 {
        let (model, data) = random_instance(&mut rng);
        let g = multinomial_gradient(&model, &data);
        for idx in 0..model.weights.len() {
            let mut plus = model.clone();
            plus.weights[idx] += h;
            let mut minus = model.clone();
            minus.weights[idx] -= h;
            let fd = (cross_entropy(&plus, &data) - cross_entropy(&minus, &data)) / (2.0 * h);
            assert!(
                rel_err(g[idx], fd) < 1e-5,
                "entry {idx}: {} vs {fd}",
                g[idx]
            );
        }
    }
}

#[test]
fn hessian_matches_differences_of_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    for _ in 0..25 {
        let (model, data) = random_instance(&mut rng);
        let c = model.num_classes();
        let hess = multinomial_hessian(&model, &data);
        assert_eq!(hess.shape(), (c * 7, c * 7));
        for a in 0..c {
            for i in 0..7 {
                let mut plus = model.clone();
                plus.weights[(a, i)] += h;
                let mut minus = model.clone();
                minus.weights[(a, i)] -= h;
                let gp = multinomial_gradient(&plus, &data);
                let gm = multinomial_gradient(&minus, &data);
                for b in 0..c {
                    for j in 0..7 {
                        let fd = (gp[(b, j)] - gm[(b, j)]) / (2.0 * h);
                        let an = hess[(b * 7 + j, a * 7 + i)];
                        assert!(rel_err(an, fd) < 1e-4, "({b},{j})x({a},{i}): {an} vs {fd}");
                    }
                }
            }
        }
        assert!((&hess - hess.transpose()).amax() < 1e-10);
        let min_eig = hess.symmetric_eigenvalues().min();
        assert!(
            min_eig > -1e-9 * hess.amax().max(1.0),
            "eigenvalue {min_eig}"
        );
    }
}

#[test]
fn hessian_hand_blocks() {
    let x = [1.0, 0.5, -2.0, 0.0, 3.0, 1.0, -1.0];
    let data = generic(vec![x[1..].to_vec()], vec![0], 2);
    let model = MultinomialModel::zeros(data.class_names().to_vec(), Normalizer::identity(6));
    let h = multinomial_hessian(&model, &data);
    for i in 0..7 {
        for j in 0..7 {
            let q = 0.25 * x[i] * x[j];
            assert_eq!(h[(i, j)], q);
            assert_eq!(h[(7 + i, 7 + j)], q);
            assert_eq!(h[(i, 7 + j)], -q);
            assert_eq!(h[(7 + i, j)], -q);
        }
    }
}

// ---------- gradient-descent oracle for IRLS ----------

fn gd_oracle(data: &Dataset, ridge: f64) -> BinaryModel {
    let normalizer = fit_normalizer(data);
    let x = normalizer.design_matrix(data);
    let y: Vec<f64> = data.samples().iter().map(|s| s.label as f64).collect();
    let mut w = vec![0.0; x.ncols()];
    for _ in 0..10_000 {
        let mut grad: Vec<f64> = w.iter().map(|wi| ridge * wi).collect();
        for (r, &t) in y.iter().enumerate() {
            let z: f64 = (0..w.len()).map(|j| x[(r, j)] * w[j]).sum();
            let mu = 1.0 / (1.0 + (-z).exp());
            for (j, g) in grad.iter_mut().enumerate() {
                *g += (mu - t) * x[(r, j)];
            }
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= 0.1 * g;
        }
    }
    BinaryModel::new(w, normalizer).unwrap()
}

/// Tiny datasets paired with the ridge used by both solvers. The separable
/// set uses a ridge large enough for gradient descent to reach the optimum in
/// 10,000 steps.
fn irls_oracle_datasets() -> Vec<(Dataset, f64)> {
    vec![
        (
            generic(
                vec![vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]],
                vec![0, 0, 1, 1],
                2,
            ),
            1e-3,
        ),
        (
            generic(
                vec![
                    vec![0.0, 1.0],
                    vec![1.0, 0.0],
                    vec![2.0, 2.0],
                    vec![3.0, 1.0],
                    vec![1.5, 2.5],
                    vec![0.5, 0.5],
                ],
                vec![0, 1, 0, 1, 1, 0],
                2,
            ),
            1e-6,
        ),
        (
            generic(
                (0..8)
                    .map(|i| vec![i as f64, (i * i % 5) as f64, 1.0])
                    .collect(),
                vec![0, 0, 1, 0, 1, 1, 0, 1],
                2,
            ),
            1e-6,
        ),
    ]
}

#[test]
fn irls_agrees_with_gradient_descent() {
    for (k, (data, ridge)) in irls_oracle_datasets().iter().enumerate() {
        let cfg = TrainConfig {
            ridge: *ridge,
            ..TrainConfig::default()
        };
        let irls = train_binary_irls(data, &cfg).unwrap().model;
        let gd = gd_oracle(data, cfg.ridge);
        for s in data.samples() {
            let a = irls.predict_raw(&s.features).probability;
            let b = gd.predict_raw(&s.features).probability;
            assert!((a - b).abs() < 1e-3, "dataset {k}: irls {a} vs gd {b}");
        }
    }
}

#[test]
fn irls_beats_unconverged_descent_on_separable_toy() {
    let (data, _) = &irls_oracle_datasets()[0];
    let cfg = TrainConfig::default();
    let irls = train_binary_irls(data, &cfg).unwrap().model;
    let gd = gd_oracle(data, cfg.ridge);
    let penalized = |m: &BinaryModel| {
        binary_cross_entropy(m, data)
            + 0.5 * cfg.ridge * m.weights.iter().map(|w| w * w).sum::<f64>()
    };
    assert!(penalized(&irls) < penalized(&gd));
    for s in data.samples() {
        assert_eq!(irls.predict_raw(&s.features).class, s.label);
        assert_eq!(gd.predict_raw(&s.features).class, s.label);
    }
}

// ---------- synthetic ground truth ----------

fn synthetic_binary(rng: &mut ChaCha8Rng, w: &[f64], n: usize) -> Dataset {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    while rows.len() < n {
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let z = w[0] + x.iter().zip(&w[1..]).map(|(a, b)| a * b).sum::<f64>();
        if z.abs() < 2.0 {
            continue;
        }
        labels.push(usize::from(z > 0.0));
        rows.push(x);
    }
    generic(rows, labels, 2)
}

fn synthetic_multi(rng: &mut ChaCha8Rng, w: &DMatrix<f64>, n: usize) -> Dataset {
    let c = w.nrows();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    while rows.len() < n {
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let logits: Vec<f64> = (0..c)
            .map(|k| w[(k, 0)] + (0..6).map(|j| w[(k, j + 1)] * x[j]).sum::<f64>())
            .collect();
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]));
        if logits[order[0]] - logits[order[1]] < 2.0 {
            continue;
        }
        labels.push(order[0]);
        rows.push(x);
    }
    generic(rows, labels, c)
}

#[test]
fn binary_recovers_ground_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let w: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let train = synthetic_binary(&mut rng, &w, 1000);
    let test = synthetic_binary(&mut rng, &w, 200);
    let model = train_binary_irls(&train, &TrainConfig::default())
        .unwrap()
        .model;
    assert_eq!(model.accuracy(&test), 1.0);
}

#[test]
fn multinomial_recovers_ground_truth() {
    for (c, seed) in [(3, 1), (4, 2), (5, 3)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DMatrix::from_fn(c, 7, |_, _| rng.gen_range(-2.0..2.0));
        let train = synthetic_multi(&mut rng, &w, 1000);
        let test = synthetic_multi(&mut rng, &w, 200);
        let t = train_multinomial_newton(&train, &TrainConfig::default()).unwrap();
        assert!(t.model.accuracy(&train) >= 0.95);
        assert!(
            t.model.accuracy(&test) >= 0.95,
            "C={c}: {}",
            t.model.accuracy(&test)
        );
        assert!(t.model.weights.row(c - 1).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn one_hot_indicators_classified_perfectly() {
    let rows: Vec<Vec<f64>> = (0..12)
        .map(|i| {
            let mut r = vec![0.0; 3];
            r[i % 3] = 1.0;
            r
        })
        .collect();
    let labels = (0..12).map(|i| i % 3).collect();
    let data = generic(rows, labels, 3);
    let model = train_multinomial_newton(&data, &TrainConfig::default())
        .unwrap()
        .model;
    assert_eq!(model.accuracy(&data), 1.0);
}

#[test]
fn two_class_multinomial_matches_binary() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let rows: Vec<Vec<f64>> = (0..60)
        .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let labels = rows
        .iter()
        .map(|r| usize::from(r[0] + 0.5 * r[1] + rng.gen_range(-0.7..0.7) > 0.0))
        .collect();
    let data = generic(rows, labels, 2);
    let cfg = TrainConfig::default();
    let bin = train_binary_irls(&data, &cfg).unwrap().model;
    let multi = train_multinomial_newton(&data, &cfg).unwrap().model;
    for s in data.samples() {
        assert_eq!(
            bin.predict_raw(&s.features).class,
            multi.predict_raw(&s.features).class
        );
    }
}

#[test]
fn count_feature_scaling_keeps_predictions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..300 {
        let iters = 10f64.powf(rng.gen_range(3.0..7.0));
        let ops = 10f64.powf(rng.gen_range(3.0..6.0));
        let threads: f64 = [1.0, 2.0, 4.0, 8.0][rng.gen_range(0..4)];
        let score = iters.log10() + 0.5 * ops.log10() - 6.0 + 0.3 * threads.log2();
        if score.abs() < 0.3 {
            continue;
        }
        raw.push([threads, iters, ops, ops / 2.0, ops / 10.0, 1.0]);
        labels.push(usize::from(score > 0.0));
    }
    let build = |scale: f64| {
        Dataset::from_feature_vectors(
            &POLICY_CLASSES,
            raw.iter().zip(&labels).map(|(r, &l)| {
                let mut r = *r;
                r[1] *= scale;
                (FeatureVector::from_raw(r), l)
            }),
        )
        .unwrap()
    };
    let (base, scaled) = (build(1.0), build(10.0));
    let cfg = TrainConfig::default();
    let m1 = train_binary_irls(&base, &cfg).unwrap().model;
    let m2 = train_binary_irls(&scaled, &cfg).unwrap().model;
    for (a, b) in base.samples().iter().zip(scaled.samples()) {
        assert_eq!(
            m1.predict_raw(&a.features).class,
            m2.predict_raw(&b.features).class
        );
    }
}

// ---------- properties ----------

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-800.0f64..800.0, 2..8)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (PROB_EPS * 0.5..=1.0).contains(v)));
    }

    #[test]
    fn binary_decision_invariant_under_positive_scaling(
        w in prop::collection::vec(-5.0f64..5.0, 7),
        x in prop::array::uniform6(0.0f64..1e6),
        scale in 0.01f64..100.0,
    ) {
        let m = BinaryModel::new(w.clone(), Normalizer::identity(6)).unwrap();
        let s = BinaryModel::new(w.iter().map(|v| v * scale).collect(), Normalizer::identity(6)).unwrap();
        let fv = FeatureVector::from_raw(x);
        let z = m.score(fv.raw());
        prop_assume!(z.abs() > 1e-9);
        prop_assert_eq!(predict_binary(&m, &fv).class, predict_binary(&s, &fv).class);
    }

    #[test]
    fn irls_objective_monotone(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(4..30);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let data = generic(rows, labels, 2);
        let t = train_binary_irls(&data, &TrainConfig::default()).unwrap();
        prop_assert!(t.objective_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(t.model.weights.iter().all(|w| w.is_finite()));
    }
}

// ---------- feature selection ----------

/// Four features over 20 samples: f0 and f1 track the label, f2 and f3 do not.
pub fn selection_fixture() -> Dataset {
    let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
    let rows = (0..20)
        .map(|i| {
            let f0 = i as f64;
            let f1 = if (i >= 10) != (i == 4 || i == 15) {
                5.0 + (i % 3) as f64
            } else {
                (i % 3) as f64
            };
            let f2 = ((i * 7) % 20) as f64;
            let f3 = [3.0, 1.0, 4.0, 1.0, 5.0][i % 5];
            vec![f0, f1, f2, f3]
        })
        .collect();
    generic(rows, labels, 2)
}

fn brute_force_gains(data: &Dataset) -> Vec<f64> {
    fn h(counts: &HashMap<usize, usize>) -> f64 {
        let n: usize = counts.values().sum();
        counts
            .values()
            .map(|&c| {
                let p = c as f64 / n as f64;
                -p * p.log2()
            })
            .sum()
    }
    let n = data.len();
    let mut label_counts = HashMap::new();
    for s in data.samples() {
        *label_counts.entry(s.label).or_insert(0) += 1;
    }
    (0..data.num_features())
        .map(|j| {
            let mut v: Vec<f64> = data.samples().iter().map(|s| s.features[j]).collect();
            v.sort_by(f64::total_cmp);
            let q = |p: f64| {
                let h = (n - 1) as f64 * p;
                let lo = h.floor();
                v[lo as usize] + (h - lo) * (v[h.ceil() as usize] - v[lo as usize])
            };
            let mut cuts = vec![q(0.25), q(0.5), q(0.75)];
            cuts.dedup();
            let mut bins: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
            for s in data.samples() {
                let b = cuts.iter().filter(|&&c| s.features[j] > c).count();
                *bins.entry(b).or_default().entry(s.label).or_insert(0) += 1;
            }
            let cond: f64 = bins
                .values()
                .map(|c| c.values().sum::<usize>() as f64 / n as f64 * h(c))
                .sum();
            h(&label_counts) - cond
        })
        .collect()
}

#[test]
fn selection_matches_brute_force() {
    let data = selection_fixture();
    let oracle = brute_force_gains(&data);
    let gains = information_gains(&data);
    for (a, b) in gains.iter().zip(&oracle) {
        assert!((a - b.max(0.0)).abs() < 1e-12);
    }
    let chosen = select_features_info_gain(&data, 2).unwrap();
    let mut by_oracle: Vec<usize> = (0..4).collect();
    by_oracle.sort_by(|&a, &b| oracle[b].total_cmp(&oracle[a]).then(a.cmp(&b)));
    assert_eq!(chosen, by_oracle[..2]);
    assert_eq!(chosen, vec![0, 1]);
}

// ---------- persistence ----------

fn random_bundle(rng: &mut ChaCha8Rng) -> WeightsBundle {
    let mut v = || -> f64 {
        let mag = 10f64.powi(rng.gen_range(-300..300));
        rng.gen_range(-1.0..1.0) * mag
    };
    let mut n = Normalizer::identity(6);
    for (i, t) in n.features.iter_mut().enumerate() {
        t.log10p1 = (1..=4).contains(&i);
        t.mean = v();
        t.stddev = v().abs().max(f64::MIN_POSITIVE);
    }
    let policy = BinaryModel::new((0..7).map(|_| v()).collect(), n.clone()).unwrap();
    let mut matrix = |c: usize| DMatrix::from_fn(c, 7, |r, _| if r + 1 == c { 0.0 } else { v() });
    let chunk = MultinomialModel::new(
        matrix(4),
        CHUNK_CLASSES.iter().map(|s| s.to_string()).collect(),
        n.clone(),
    )
    .unwrap();
    let prefetch = MultinomialModel::new(
        matrix(5),
        PREFETCH_CLASSES.iter().map(|s| s.to_string()).collect(),
        n,
    )
    .unwrap();
    WeightsBundle::new(policy, chunk, prefetch).unwrap()
}

#[test]
fn save_load_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.dat");
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let b = random_bundle(&mut rng);
        save_weights(&b, &path).unwrap();
        let back = load_weights(&path).unwrap();
        let bits = |m: &WeightsBundle| -> Vec<u64> {
            m.policy_model
                .weights
                .iter()
                .chain(m.chunk_model.weights.iter())
                .chain(m.prefetch_model.weights.iter())
                .chain(
                    m.normalizer()
                        .features
                        .iter()
                        .flat_map(|t| [&t.mean, &t.stddev]),
                )
                .map(|v| v.to_bits())
                .collect()
        };
        assert_eq!(bits(&b), bits(&back));
        assert_eq!(b, back);
    }
}

#[test]
fn load_reports_missing_file() {
    let err = load_weights(std::path::Path::new("/nonexistent/weights.dat")).unwrap_err();
    assert!(matches!(err, LearnError::Io { .. }));
}
