use std::fmt;

use super::clock::{median, Clock, RunKey};
use super::kernels::{KernelKind, KernelSpec, Workload};
use super::BenchError;
use crate::executor::{
    chunk_for_fraction, make_prefetcher_policy, BasePolicy, ChunkParameter, DispatchReport,
    ExecutionPolicy, Executor, PrefetchDistance,
};
use crate::learning::{Dataset, CHUNK_CLASSES, POLICY_CLASSES, PREFETCH_CLASSES};
use crate::loop_ir::{make_feature_vector, DynamicFeatures};
use crate::FeatureVector;

/// Minimum number of timed repetitions per configuration.
pub const MIN_REPS: usize = 5;

/// One of the three decisions the models make.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dimension {
    Policy,
    Chunk,
    Prefetch,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Policy, Dimension::Chunk, Dimension::Prefetch];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Policy => "policy",
            Dimension::Chunk => "chunk",
            Dimension::Prefetch => "prefetch",
        }
    }

    /// Candidate labels, in class order.
    pub fn classes(self) -> &'static [&'static str] {
        match self {
            Dimension::Policy => &POLICY_CLASSES,
            Dimension::Chunk => &CHUNK_CLASSES,
            Dimension::Prefetch => &PREFETCH_CLASSES,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown dimension `{s}` (expected policy, chunk or prefetch)"))
    }
}

/// Policy and chunk parameter for a fixed candidate of `dim`, on `threads`
/// threads. Chunk and prefetch candidates run in parallel.
pub fn candidate_config(
    dim: Dimension,
    label: &str,
    threads: usize,
    n: usize,
    element_bytes: usize,
) -> (ExecutionPolicy<'static>, ChunkParameter<'static>) {
    let par = ExecutionPolicy::Par { threads };
    match dim {
        Dimension::Policy => match label {
            "seq" => (ExecutionPolicy::Seq, ChunkParameter::DefaultChunk),
            "par" => (par, ChunkParameter::DefaultChunk),
            _ => panic!("unknown policy class `{label}`"),
        },
        Dimension::Chunk => {
            let fraction: f64 = label.parse().expect("chunk class is a fraction");
            (
                par,
                ChunkParameter::StaticChunk {
                    size: chunk_for_fraction(fraction, n),
                },
            )
        }
        Dimension::Prefetch => {
            let lines: usize = label.parse().expect("prefetch class is a line count");
            (
                make_prefetcher_policy(
                    BasePolicy::Par { threads },
                    PrefetchDistance::FixedLines(lines),
                    element_bytes,
                ),
                ChunkParameter::DefaultChunk,
            )
        }
    }
}

/// Timing of one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub kernel: KernelKind,
    pub size: usize,
    pub threads: usize,
    pub dimension: Dimension,
    pub config: String,
    pub median_s: f64,
    pub reps: usize,
    pub checksum: u64,
}

/// One configuration to time.
pub(crate) struct Trial<'m> {
    pub key: RunKey,
    pub policy: ExecutionPolicy<'m>,
    pub chunk: ChunkParameter<'m>,
}

/// Runs every trial once as warm-up, then `reps` rounds that run each trial
/// once, in order. The workload is reset before each run and every output is
/// checked against `reference`. Returns each trial's median and last report.
pub(crate) fn measure(
    workload: &mut Workload,
    exec: &Executor,
    clock: &dyn Clock,
    trials: &[Trial<'_>],
    threads: usize,
    reps: usize,
    reference: u64,
) -> Result<Vec<(f64, DispatchReport)>, BenchError> {
    let mut samples = vec![Vec::with_capacity(reps); trials.len()];
    let mut last = vec![None; trials.len()];
    for round in 0..=reps {
        for (k, trial) in trials.iter().enumerate() {
            workload.reset();
            let mut outcome = None;
            let t = clock.time(&trial.key, &mut || {
                outcome = Some(workload.run(exec, trial.policy, trial.chunk, threads))
            })?;
            let report = outcome.expect("clock executed the run")?;
            let sum = workload.checksum();
            if sum != reference {
                return Err(BenchError::ChecksumMismatch {
                    key: trial.key.to_string(),
                    expected: reference,
                    found: sum,
                });
            }
            if round > 0 {
                samples[k].push(t);
            }
            last[k] = Some(report);
        }
    }
    Ok(samples
        .iter()
        .zip(last)
        .map(|(s, r)| (median(s), r.expect("at least one run")))
        .collect())
}

/// Output checksum of a sequential run.
pub(crate) fn reference_checksum(
    workload: &mut Workload,
    exec: &Executor,
) -> Result<u64, BenchError> {
    workload.reset();
    workload.run(exec, ExecutionPolicy::Seq, ChunkParameter::DefaultChunk, 1)?;
    Ok(workload.checksum())
}

/// Sizes swept for `kind` when `count` sizes are requested.
///
/// Stream: geometric from 10^3 to 10^6 elements. Stencil: grid sides 10 to
/// 250. Matmul: matrix sides 8 to 128.
pub fn default_sizes(kind: KernelKind, count: usize) -> Vec<usize> {
    let (lo, hi, geometric): (f64, f64, bool) = match kind {
        KernelKind::Stream => (1e3, 1e6, true),
        KernelKind::Stencil => (10.0, 250.0, false),
        KernelKind::Matmul => (8.0, 128.0, false),
    };
    let mut sizes: Vec<usize> = (0..count)
        .map(|i| {
            let t = if count == 1 {
                0.0
            } else {
                i as f64 / (count - 1) as f64
            };
            let v = if geometric {
                lo * (hi / lo).powf(t)
            } else {
                lo + (hi - lo) * t
            };
            v.round() as usize
        })
        .collect();
    sizes.dedup();
    sizes
}

/// The (kernel, size, threads) cells to sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub cells: Vec<(KernelSpec, usize)>,
    pub reps: usize,
    pub seed: u64,
}

pub const DEFAULT_THREADS: [usize; 4] = [1, 2, 4, 8];
pub const DEFAULT_SIZE_STEPS: usize = 25;

impl Grid {
    /// Every kernel x size x thread count, sizes from [`default_sizes`].
    pub fn new(
        kernels: &[KernelKind],
        size_steps: usize,
        threads: &[usize],
        reps: usize,
        seed: u64,
    ) -> Result<Self, BenchError> {
        if kernels.is_empty() {
            return Err(BenchError::EmptyGrid("no kernels selected".into()));
        }
        if size_steps == 0 || threads.is_empty() {
            return Err(BenchError::EmptyGrid("no sizes or thread counts".into()));
        }
        if threads.contains(&0) {
            return Err(BenchError::EmptyGrid(
                "thread counts must be at least 1".into(),
            ));
        }
        if reps < MIN_REPS {
            return Err(BenchError::TooFewReps(reps));
        }
        let mut cells = Vec::new();
        for &k in kernels {
            for size in default_sizes(k, size_steps) {
                for &t in threads {
                    cells.push((KernelSpec::new(k, size)?, t));
                }
            }
        }
        Ok(Grid { cells, reps, seed })
    }

    /// Explicit cells.
    pub fn from_cells(
        cells: Vec<(KernelSpec, usize)>,
        reps: usize,
        seed: u64,
    ) -> Result<Self, BenchError> {
        if cells.is_empty() {
            return Err(BenchError::EmptyGrid("no cells".into()));
        }
        if cells.iter().any(|&(_, t)| t == 0) {
            return Err(BenchError::EmptyGrid(
                "thread counts must be at least 1".into(),
            ));
        }
        if reps < MIN_REPS {
            return Err(BenchError::TooFewReps(reps));
        }
        Ok(Grid { cells, reps, seed })
    }

    /// 3 kernels x 25 sizes x threads {1, 2, 4, 8}: 300 cells.
    pub fn default_grid(seed: u64) -> Self {
        Self::new(
            &KernelKind::ALL,
            DEFAULT_SIZE_STEPS,
            &DEFAULT_THREADS,
            MIN_REPS,
            seed,
        )
        .expect("default grid is valid")
    }
}

/// The three labeled datasets plus every measurement taken.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub policy: Dataset,
    pub chunk: Dataset,
    pub prefetch: Dataset,
    pub measurements: Vec<Measurement>,
    /// Cells dropped because a configuration changed the kernel's output.
    pub aborted: Vec<String>,
    /// Datasets with fewer than two distinct labels.
    pub warnings: Vec<String>,
}

/// Index of the smallest median; the earlier candidate wins ties.
pub fn argmin(medians: &[f64]) -> usize {
    let mut best = 0;
    for (i, &m) in medians.iter().enumerate() {
        if m < medians[best] {
            best = i;
        }
    }
    best
}

/// Times every candidate of every dimension in every cell and labels each
/// cell with the fastest candidate per dimension.
pub fn generate_training_data(grid: &Grid, clock: &dyn Clock) -> Result<TrainingData, BenchError> {
    let exec = Executor::global();
    let mut rows: [Vec<(FeatureVector, usize)>; 3] = Default::default();
    let mut measurements = Vec::new();
    let mut aborted = Vec::new();

    for &(spec, threads) in &grid.cells {
        let mut workload = Workload::new(spec, grid.seed);
        let reference = reference_checksum(&mut workload, exec)?;
        let n = spec.iterations();
        let features = make_feature_vector(
            &workload.static_features(),
            &DynamicFeatures::new(threads as u64, n as u64),
        );
        let mut trials = Vec::new();
        let mut dims = Vec::new();
        for dim in Dimension::ALL {
            for label in dim.classes() {
                let (policy, chunk) =
                    candidate_config(dim, label, threads, n, spec.element_bytes());
                dims.push(dim);
                trials.push(Trial {
                    key: RunKey {
                        kernel: spec.kind.name().into(),
                        size: spec.size,
                        threads,
                        dimension: dim.name().into(),
                        config: label.to_string(),
                    },
                    policy,
                    chunk,
                });
            }
        }
        let result = measure(
            &mut workload,
            exec,
            clock,
            &trials,
            threads,
            grid.reps,
            reference,
        );
        match result {
            Ok(timed) => {
                let mut offset = 0;
                for (dim, dataset) in Dimension::ALL.into_iter().zip(rows.iter_mut()) {
                    let count = dim.classes().len();
                    let medians: Vec<f64> =
                        timed[offset..offset + count].iter().map(|t| t.0).collect();
                    dataset.push((features, argmin(&medians)));
                    offset += count;
                }
                for ((trial, dim), (m, _)) in trials.iter().zip(dims).zip(&timed) {
                    measurements.push(Measurement {
                        kernel: spec.kind,
                        size: spec.size,
                        threads,
                        dimension: dim,
                        config: trial.key.config.clone(),
                        median_s: *m,
                        reps: grid.reps,
                        checksum: reference,
                    });
                }
            }
            Err(e @ BenchError::ChecksumMismatch { .. }) => {
                aborted.push(format!("{spec} threads {threads}: {e}"));
            }
            Err(e) => return Err(e),
        }
    }

    let [policy_rows, chunk_rows, prefetch_rows] = rows;
    let build = |classes: &[&str], rows: Vec<(FeatureVector, usize)>| {
        Dataset::from_feature_vectors(classes, rows).map_err(BenchError::Learn)
    };
    let data = TrainingData {
        policy: build(&POLICY_CLASSES, policy_rows)?,
        chunk: build(&CHUNK_CLASSES, chunk_rows)?,
        prefetch: build(&PREFETCH_CLASSES, prefetch_rows)?,
        measurements,
        aborted,
        warnings: Vec::new(),
    };
    let warnings = [
        ("policy", &data.policy),
        ("chunk", &data.chunk),
        ("prefetch", &data.prefetch),
    ]
    .iter()
    .filter_map(|(name, d)| {
        let distinct = d.class_counts().iter().filter(|&&c| c > 0).count();
        (distinct < 2).then(|| {
            format!("{name} dataset has {distinct} distinct label(s); its model cannot be trained")
        })
    })
    .collect();
    Ok(TrainingData { warnings, ..data })
}
