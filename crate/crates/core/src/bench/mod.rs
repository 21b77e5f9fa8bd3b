//! Benchmark kernels, the training-data sweep and the evaluation harness.

mod clock;
mod evaluate;
pub mod fixtures;
mod kernels;
mod sweep;

use std::path::PathBuf;

pub use clock::{median, Clock, FakeClock, RealClock, RunKey};
pub use evaluate::{evaluate, EvalConfig, Report, ReportRow};
pub use kernels::{
    checksum, kernel_matmul, kernel_stencil2d, kernel_stream, matmul_loop_spec, stencil_loop_spec,
    KernelKind, KernelSpec, Workload, STENCIL_SWEEPS, STREAM_LOOP, STREAM_SCALAR,
};
pub use sweep::{
    argmin, candidate_config, default_sizes, generate_training_data, Dimension, Grid, Measurement,
    TrainingData, DEFAULT_SIZE_STEPS, DEFAULT_THREADS, MIN_REPS,
};

use crate::executor::ExecError;
use crate::learning::LearnError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown kernel `{0}` (available: stream, stencil, matmul)")]
    UnknownKernel(String),
    #[error("{kernel}: size {size} is below the minimum {min}")]
    InvalidSize {
        kernel: &'static str,
        size: usize,
        min: usize,
    },
    #[error("stencil grid {width}x{height} is too small (need at least 3x3)")]
    InvalidGrid { width: usize, height: usize },
    #[error("empty benchmark grid: {0}")]
    EmptyGrid(String),
    #[error("{0} repetitions requested; at least 5 are required")]
    TooFewReps(usize),
    #[error("{key}: output checksum {found:#018x} differs from sequential {expected:#018x}")]
    ChecksumMismatch {
        key: String,
        expected: u64,
        found: u64,
    },
    #[error("fake clock line {line}: {message}")]
    FakeClock { line: usize, message: String },
    #[error("fake clock has no entry for `{0}`")]
    FakeClockMiss(String),
    #[error("model classes: {0}")]
    ModelClasses(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
