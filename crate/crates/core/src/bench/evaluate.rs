use std::fmt::Write as _;

use super::clock::{Clock, RunKey};
use super::kernels::{KernelSpec, Workload};
use super::sweep::{candidate_config, measure, reference_checksum, Dimension, Trial};
use super::BenchError;
use crate::executor::{
    chunk_for_fraction, make_prefetcher_policy, BasePolicy, ChunkParameter, ClassModel, Decision,
    ExecutionPolicy, Executor, PolicyModel, PrefetchDistance,
};
use crate::learning::{WeightsBundle, CHUNK_CLASSES, POLICY_CLASSES, PREFETCH_CLASSES};
use crate::loop_ir::{make_feature_vector, DynamicFeatures};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub kernels: Vec<KernelSpec>,
    pub threads: usize,
    pub dimensions: Vec<Dimension>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub kernel: String,
    pub size: usize,
    pub dimension: Dimension,
    /// A candidate label, or `adaptive(<label>)` for the model-driven run.
    pub config: String,
    pub median_s: f64,
    /// This row's median divided by the adaptive median.
    pub speedup_vs_adaptive: f64,
}

impl ReportRow {
    pub fn is_adaptive(&self) -> bool {
        self.config.starts_with("adaptive")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub threads: usize,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub const CSV_HEADER: &'static str = "kernel,dimension,config,median_s,speedup_vs_adaptive";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:.6}",
                r.kernel, r.dimension, r.config, r.median_s, r.speedup_vs_adaptive
            );
        }
        out
    }

    /// Human-readable table, one block per kernel and dimension.
    pub fn to_table(&self) -> String {
        let mut out = format!("threads: {}\n", self.threads);
        let mut last = None;
        for r in &self.rows {
            let group = (r.kernel.as_str(), r.size, r.dimension);
            if last != Some(group) {
                let _ = writeln!(
                    out,
                    "\n{} (size {}) / {}\n  {:<16} {:>14} {:>10}",
                    r.kernel, r.size, r.dimension, "config", "median [s]", "vs adapt."
                );
                last = Some(group);
            }
            let _ = writeln!(
                out,
                "  {:<16} {:>14.6e} {:>9.3}x",
                r.config, r.median_s, r.speedup_vs_adaptive
            );
        }
        out
    }

    /// Adaptive median over the best fixed candidate's median, per
    /// (kernel, dimension).
    pub fn regrets(&self) -> Vec<(String, Dimension, f64)> {
        let mut out = Vec::new();
        for adaptive in self.rows.iter().filter(|r| r.is_adaptive()) {
            let best = self
                .rows
                .iter()
                .filter(|r| {
                    !r.is_adaptive()
                        && r.kernel == adaptive.kernel
                        && r.size == adaptive.size
                        && r.dimension == adaptive.dimension
                })
                .map(|r| r.median_s)
                .fold(f64::INFINITY, f64::min);
            out.push((
                adaptive.kernel.clone(),
                adaptive.dimension,
                adaptive.median_s / best,
            ));
        }
        out
    }
}

fn check_classes(names: &[String], expected: &[&str]) -> Result<(), BenchError> {
    if names.len() != expected.len() || names.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(BenchError::ModelClasses(format!(
            "expected classes {expected:?}, found {names:?}"
        )));
    }
    Ok(())
}

/// Times every fixed candidate and the model-driven setting of each selected
/// dimension, per kernel.
pub fn evaluate(
    bundle: &WeightsBundle,
    cfg: &EvalConfig,
    clock: &dyn Clock,
) -> Result<Report, BenchError> {
    check_classes(&bundle.chunk_model.class_names, &CHUNK_CLASSES)?;
    check_classes(&bundle.prefetch_model.class_names, &PREFETCH_CLASSES)?;
    if cfg.threads == 0 {
        return Err(BenchError::EmptyGrid(
            "thread count must be at least 1".into(),
        ));
    }
    if cfg.reps < super::sweep::MIN_REPS {
        return Err(BenchError::TooFewReps(cfg.reps));
    }
    let exec = Executor::global();
    let t = cfg.threads;
    let mut rows = Vec::new();

    for &spec in &cfg.kernels {
        let mut workload = Workload::new(spec, cfg.seed);
        let reference = reference_checksum(&mut workload, exec)?;
        let n = spec.iterations();
        let eb = spec.element_bytes();
        let features = make_feature_vector(
            &workload.static_features(),
            &DynamicFeatures::new(t as u64, n as u64),
        );
        let key = |dim: Dimension, config: &str| RunKey {
            kernel: spec.kind.name().into(),
            size: spec.size,
            threads: t,
            dimension: dim.name().into(),
            config: config.into(),
        };

        for &dim in &cfg.dimensions {
            let mut trials: Vec<Trial> = dim
                .classes()
                .iter()
                .map(|label| {
                    let (policy, chunk) = candidate_config(dim, label, t, n, eb);
                    Trial {
                        key: key(dim, label),
                        policy,
                        chunk,
                    }
                })
                .collect();

            let (predicted, policy, chunk): (String, ExecutionPolicy, ChunkParameter) = match dim {
                Dimension::Policy => {
                    let p = bundle.policy_model.predict_policy(&features);
                    (
                        POLICY_CLASSES[p.class].to_string(),
                        ExecutionPolicy::ParIf {
                            model: &bundle.policy_model,
                        },
                        ChunkParameter::DefaultChunk,
                    )
                }
                Dimension::Chunk => {
                    let p = ClassModel::predict_class(&bundle.chunk_model, &features);
                    (
                        CHUNK_CLASSES[p.class].to_string(),
                        ExecutionPolicy::Par { threads: t },
                        ChunkParameter::AdaptiveChunk {
                            model: &bundle.chunk_model,
                        },
                    )
                }
                Dimension::Prefetch => {
                    let p = ClassModel::predict_class(&bundle.prefetch_model, &features);
                    (
                        PREFETCH_CLASSES[p.class].to_string(),
                        make_prefetcher_policy(
                            BasePolicy::Par { threads: t },
                            PrefetchDistance::Adaptive(&bundle.prefetch_model),
                            eb,
                        ),
                        ChunkParameter::DefaultChunk,
                    )
                }
            };
            trials.push(Trial {
                key: key(dim, &predicted),
                policy,
                chunk,
            });
            let mut timed = measure(&mut workload, exec, clock, &trials, t, cfg.reps, reference)?;
            let (adaptive, report) = timed.pop().expect("adaptive trial");
            let consistent = match dim {
                Dimension::Policy => {
                    (report.decision == Decision::Parallel) == (predicted == POLICY_CLASSES[1])
                }
                Dimension::Chunk => {
                    report.chunk_size == chunk_for_fraction(predicted.parse().unwrap_or(0.0), n)
                }
                Dimension::Prefetch => report.prefetch_lines == predicted.parse().ok(),
            };
            assert!(
                consistent,
                "executor resolved {report:?}, model predicted {predicted}"
            );

            for (label, (m, _)) in dim.classes().iter().zip(timed) {
                rows.push(ReportRow {
                    kernel: spec.kind.name().into(),
                    size: spec.size,
                    dimension: dim,
                    config: label.to_string(),
                    median_s: m,
                    speedup_vs_adaptive: m / adaptive,
                });
            }
            rows.push(ReportRow {
                kernel: spec.kind.name().into(),
                size: spec.size,
                dimension: dim,
                config: format!("adaptive({predicted})"),
                median_s: adaptive,
                speedup_vs_adaptive: 1.0,
            });
        }
    }
    Ok(Report { threads: t, rows })
}
