use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LearnError;
use crate::features::{FeatureVector, MODEL_FEATURES};

/// One labeled observation. `features` holds raw values without the bias slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Labeled observations over a named feature layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    class_names: Vec<String>,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        class_names: Vec<String>,
        samples: Vec<Sample>,
    ) -> Result<Self, LearnError> {
        if samples.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        for s in &samples {
            if s.features.len() != feature_names.len() {
                return Err(LearnError::DimensionMismatch {
                    expected: feature_names.len(),
                    found: s.features.len(),
                });
            }
            if s.label >= class_names.len() {
                return Err(LearnError::LabelOutOfRange {
                    label: s.label,
                    classes: class_names.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(LearnError::NonFinite("sample features".into()));
            }
        }
        Ok(Dataset {
            feature_names,
            class_names,
            samples,
        })
    }

    /// Dataset over the six model features.
    pub fn from_feature_vectors(
        class_names: &[&str],
        rows: impl IntoIterator<Item = (FeatureVector, usize)>,
    ) -> Result<Self, LearnError> {
        let samples = rows
            .into_iter()
            .map(|(x, label)| Sample {
                features: x.raw().to_vec(),
                label,
            })
            .collect();
        Dataset::new(
            MODEL_FEATURES.iter().map(|s| s.to_string()).collect(),
            class_names.iter().map(|s| s.to_string()).collect(),
            samples,
        )
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Same samples, same order, restricted to a subset of classes. Labels are
    /// renumbered in `keep` order; samples of dropped classes are removed.
    pub fn restrict_classes(&self, keep: &[usize]) -> Result<Dataset, LearnError> {
        let samples = self
            .samples
            .iter()
            .filter_map(|s| {
                keep.iter().position(|&c| c == s.label).map(|label| Sample {
                    features: s.features.clone(),
                    label,
                })
            })
            .collect();
        Dataset::new(
            self.feature_names.clone(),
            keep.iter().map(|&c| self.class_names[c].clone()).collect(),
            samples,
        )
    }

    /// Deterministic shuffle followed by a `train_fraction` / rest split.
    /// The held-out part is `None` when it would be empty.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (Dataset, Option<Dataset>) {
        assert!(
            (0.0..=1.0).contains(&train_fraction),
            "train fraction must lie in [0, 1]"
        );
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.samples.len() as f64) * train_fraction).round() as usize;
        let n_train = n_train.clamp(1, self.samples.len());
        let pick = |idx: &[usize]| Dataset {
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        };
        let train = pick(&order[..n_train]);
        let test = (n_train < order.len()).then(|| pick(&order[n_train..]));
        (train, test)
    }

    /// Reads a CSV with header `<feature names...>,label`; labels are class names.
    pub fn read_csv(path: &Path, class_names: &[&str]) -> Result<Dataset, LearnError> {
        let csv_err = |message: String| LearnError::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => LearnError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => csv_err(format!("{other:?}")),
        })?;
        let headers = reader
            .headers()
            .map_err(|e| csv_err(e.to_string()))?
            .clone();
        let names: Vec<String> = headers.iter().map(str::to_string).collect();
        if names.last().map(String::as_str) != Some("label") {
            return Err(csv_err("last column must be `label`".into()));
        }
        let feature_names = names[..names.len() - 1].to_vec();
        let mut samples = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_err(e.to_string()))?;
            let mut features = Vec::with_capacity(feature_names.len());
            for field in record.iter().take(feature_names.len()) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| csv_err(format!("row {}: bad number `{field}`", row + 2)))?;
                features.push(v);
            }
            let label_text = record.get(feature_names.len()).unwrap_or("").trim();
            let label = class_names
                .iter()
                .position(|c| *c == label_text)
                .ok_or_else(|| LearnError::UnknownLabel(label_text.to_string()))?;
            samples.push(Sample { features, label });
        }
        Dataset::new(
            feature_names,
            class_names.iter().map(|s| s.to_string()).collect(),
            samples,
        )
        .map_err(|e| match e {
            LearnError::EmptyDataset => csv_err("no data rows".into()),
            other => other,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), LearnError> {
        let io_err = |source| LearnError::Io {
            path: path.to_path_buf(),
            source,
        };
        std::fs::write(path, self.to_csv_string()).map_err(io_err)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.feature_names.join(",");
        out.push_str(",label\n");
        for s in &self.samples {
            for v in &s.features {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&self.class_names[s.label]);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::from_feature_vectors(
            &["seq", "par"],
            (0..10).map(|i| {
                (
                    FeatureVector::from_raw([1.0 + i as f64, 100.0, 8.0, 8.0, 0.0, 0.0]),
                    i % 2,
                )
            }),
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        assert!(matches!(
            Dataset::new(vec!["x".into()], vec!["a".into()], vec![]),
            Err(LearnError::EmptyDataset)
        ));
        let bad = Sample {
            features: vec![1.0],
            label: 2,
        };
        assert!(Dataset::new(vec!["x".into()], vec!["a".into(), "b".into()], vec![bad]).is_err());
        let nan = Sample {
            features: vec![f64::NAN],
            label: 0,
        };
        assert!(Dataset::new(vec!["x".into()], vec!["a".into()], vec![nan]).is_err());
    }

    #[test]
    fn split_is_deterministic_and_complete() {
        let d = toy();
        let (a, b) = d.split(0.8, 7);
        let (c, e) = d.split(0.8, 7);
        assert_eq!(a, c);
        assert_eq!(b, e);
        assert_eq!(a.len(), 8);
        assert_eq!(b.unwrap().len(), 2);
        let (all, none) = d.split(1.0, 7);
        assert_eq!(all.len(), 10);
        assert!(none.is_none());
    }

    #[test]
    fn csv_round_trip() {
        let d = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.csv");
        d.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "threads,iterations,total_ops,float_ops,comparison_ops,loop_level,label\n1,100,8,8,0,0,seq\n"
        ));
        let back = Dataset::read_csv(&path, &["seq", "par"]).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_unknown_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "threads,label\n1,fast\n").unwrap();
        assert!(matches!(
            Dataset::read_csv(&path, &["seq", "par"]),
            Err(LearnError::UnknownLabel(_))
        ));
    }

    #[test]
    fn restrict_renumbers() {
        let d = toy();
        let r = d.restrict_classes(&[1]).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.samples().iter().all(|s| s.label == 0));
        assert_eq!(r.class_names(), &["par".to_string()]);
    }
}
