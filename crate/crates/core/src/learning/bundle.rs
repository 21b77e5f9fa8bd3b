//! `weights.dat`: the three trained models plus their shared normalizer.
//!
//! ```text
//! hpxml-weights v1
//! features bias threads iterations total_ops float_ops comparison_ops loop_level
//! normalizer <feature> <log10p1:0|1> <mean> <stddev>    (one line per non-bias feature)
//! binary policy <7 weights>
//! multinomial chunk classes 0.001 0.01 0.10 0.50
//! row <7 weights>                                       (4 rows, last all zero)
//! multinomial prefetch classes 1 5 10 100 500
//! row <7 weights>                                       (5 rows, last all zero)
//! ```
//!
//! Numbers are written with 17 significant digits so every weight survives a
//! save/load cycle bit for bit. Blank lines and `#` comments are ignored on load.
//! The binary model's classes are fixed by the format: 0 = `seq`, 1 = `par`.

use std::path::Path;

use nalgebra::DMatrix;

use super::{BinaryModel, FeatureTransform, LearnError, MultinomialModel, Normalizer};
use crate::features::MODEL_FEATURES;

pub const FORMAT_VERSION: &str = "v1";
const MAGIC: &str = "hpxml-weights";

/// Class names of the policy model, by class index.
pub const POLICY_CLASSES: [&str; 2] = ["seq", "par"];
/// Chunk-size classes: fractions of the iteration count.
pub const CHUNK_CLASSES: [&str; 4] = ["0.001", "0.01", "0.10", "0.50"];
/// Prefetch-distance classes, in cache lines.
pub const PREFETCH_CLASSES: [&str; 5] = ["1", "5", "10", "100", "500"];

#[derive(Clone, Debug, PartialEq)]
pub struct WeightsBundle {
    pub policy_model: BinaryModel,
    pub chunk_model: MultinomialModel,
    pub prefetch_model: MultinomialModel,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_classes(model: &MultinomialModel, expected: &[&str]) -> Result<(), LearnError> {
    if model.class_names.len() != expected.len()
        || model.class_names.iter().zip(expected).any(|(a, b)| a != b)
    {
        return Err(LearnError::ClassCount {
            expected: expected.len(),
            found: model.class_names.len(),
        });
    }
    Ok(())
}

impl WeightsBundle {
    /// Checks the class lists, the 7-column layout and that all three models
    /// share one normalizer.
    pub fn new(
        policy_model: BinaryModel,
        chunk_model: MultinomialModel,
        prefetch_model: MultinomialModel,
    ) -> Result<Self, LearnError> {
        check_classes(&chunk_model, &CHUNK_CLASSES)?;
        check_classes(&prefetch_model, &PREFETCH_CLASSES)?;
        if policy_model.normalizer.len() != MODEL_FEATURES.len() {
            return Err(LearnError::DimensionMismatch {
                expected: MODEL_FEATURES.len(),
                found: policy_model.normalizer.len(),
            });
        }
        if chunk_model.normalizer != policy_model.normalizer
            || prefetch_model.normalizer != policy_model.normalizer
        {
            return Err(LearnError::NormalizerMismatch);
        }
        Ok(WeightsBundle {
            policy_model,
            chunk_model,
            prefetch_model,
        })
    }

    /// All-zero weights over a pass-through normalizer.
    pub fn zeros() -> Self {
        let n = Normalizer::identity(MODEL_FEATURES.len());
        WeightsBundle {
            policy_model: BinaryModel::zeros(n.clone()),
            chunk_model: MultinomialModel::zeros(
                CHUNK_CLASSES.iter().map(|s| s.to_string()).collect(),
                n.clone(),
            ),
            prefetch_model: MultinomialModel::zeros(
                PREFETCH_CLASSES.iter().map(|s| s.to_string()).collect(),
                n,
            ),
        }
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.policy_model.normalizer
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {FORMAT_VERSION}\nfeatures bias");
        for f in MODEL_FEATURES {
            out.push(' ');
            out.push_str(f);
        }
        out.push('\n');
        for (name, t) in MODEL_FEATURES.iter().zip(&self.normalizer().features) {
            out.push_str(&format!(
                "normalizer {name} {} {} {}\n",
                u8::from(t.log10p1),
                num(t.mean),
                num(t.stddev)
            ));
        }
        let join =
            |it: &mut dyn Iterator<Item = &f64>| it.map(|v| num(*v)).collect::<Vec<_>>().join(" ");
        out.push_str(&format!(
            "binary policy {}\n",
            join(&mut self.policy_model.weights.iter())
        ));
        for (label, model, classes) in [
            ("chunk", &self.chunk_model, &CHUNK_CLASSES[..]),
            ("prefetch", &self.prefetch_model, &PREFETCH_CLASSES[..]),
        ] {
            out.push_str(&format!(
                "multinomial {label} classes {}\n",
                classes.join(" ")
            ));
            for row in model.weights.row_iter() {
                out.push_str(&format!("row {}\n", join(&mut row.iter())));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, LearnError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| LearnError::Format {
                line: text.lines().count() + 1,
                message: format!("unexpected end of file, expected {what}"),
            })
        };
        let err = |line, message: String| LearnError::Format { line, message };

        let (ln, header) = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(err(
                ln,
                format!("expected `{MAGIC} {FORMAT_VERSION}` header"),
            ));
        }
        match parts.next() {
            Some(FORMAT_VERSION) if parts.next().is_none() => {}
            other => {
                return Err(err(
                    ln,
                    format!("unsupported format version `{}`", other.unwrap_or("")),
                ))
            }
        }

        let (ln, features) = next("features line")?;
        let expected_features = format!("features bias {}", MODEL_FEATURES.join(" "));
        if features.split_whitespace().collect::<Vec<_>>().join(" ") != expected_features {
            return Err(err(ln, format!("expected `{expected_features}`")));
        }

        let mut transforms = Vec::with_capacity(MODEL_FEATURES.len());
        for name in MODEL_FEATURES {
            let (ln, line) = next("normalizer line")?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 || fields[0] != "normalizer" || fields[1] != name {
                return Err(err(
                    ln,
                    format!("expected `normalizer {name} <0|1> <mean> <stddev>`"),
                ));
            }
            let log10p1 = match fields[2] {
                "0" => false,
                "1" => true,
                other => return Err(err(ln, format!("log flag must be 0 or 1, got `{other}`"))),
            };
            let values = parse_numbers(&fields[3..], 2, ln)?;
            if values[1] <= 0.0 {
                return Err(err(ln, "stddev must be positive".into()));
            }
            transforms.push(FeatureTransform {
                log10p1,
                mean: values[0],
                stddev: values[1],
            });
        }
        let normalizer = Normalizer {
            features: transforms,
        };

        let (ln, line) = next("binary policy line")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 || fields[0] != "binary" || fields[1] != "policy" {
            return Err(err(ln, "expected `binary policy <weights>`".into()));
        }
        let policy = parse_numbers(&fields[2..], MODEL_FEATURES.len() + 1, ln)?;
        let policy_model = BinaryModel::new(policy, normalizer.clone())?;

        let mut read_multinomial = |label: &str, classes: &[&str]| {
            let (ln, line) = next("multinomial header")?;
            let expected = format!("multinomial {label} classes {}", classes.join(" "));
            if line.split_whitespace().collect::<Vec<_>>().join(" ") != expected {
                return Err(err(ln, format!("expected `{expected}`")));
            }
            let d = MODEL_FEATURES.len() + 1;
            let mut values = Vec::with_capacity(classes.len() * d);
            for r in 0..classes.len() {
                let (ln, line) = next("row line")?;
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.first() != Some(&"row") {
                    return Err(err(ln, format!("expected row {} of {label} model", r + 1)));
                }
                let row = parse_numbers(&fields[1..], d, ln)?;
                if r + 1 == classes.len() && row.iter().any(|&v| v != 0.0) {
                    return Err(err(ln, "last row must be all zeros".into()));
                }
                values.extend(row);
            }
            MultinomialModel::new(
                DMatrix::from_row_slice(classes.len(), d, &values),
                classes.iter().map(|s| s.to_string()).collect(),
                normalizer.clone(),
            )
        };
        let chunk_model = read_multinomial("chunk", &CHUNK_CLASSES)?;
        let prefetch_model = read_multinomial("prefetch", &PREFETCH_CLASSES)?;

        if let Some((ln, line)) = lines.next() {
            return Err(err(ln, format!("unexpected trailing content `{line}`")));
        }
        WeightsBundle::new(policy_model, chunk_model, prefetch_model)
    }
}

fn parse_numbers(fields: &[&str], expected: usize, line: usize) -> Result<Vec<f64>, LearnError> {
    if fields.len() != expected {
        return Err(LearnError::Format {
            line,
            message: format!("expected {expected} columns, found {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|f| match f.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(LearnError::Format {
                line,
                message: format!("`{f}` is not a finite number"),
            }),
        })
        .collect()
}

pub fn save_weights(bundle: &WeightsBundle, path: &Path) -> Result<(), LearnError> {
    std::fs::write(path, bundle.to_text()).map_err(|source| LearnError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_weights(path: &Path) -> Result<WeightsBundle, LearnError> {
    let text = std::fs::read_to_string(path).map_err(|source| LearnError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    WeightsBundle::parse(&text)
}
