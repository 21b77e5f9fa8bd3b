//! Parallel for-each over `0..n` with model-driven policies.
//!
//! A dispatch resolves its policy, chunk size and prefetch distance once,
//! from the loop's static features plus the thread and iteration counts,
//! then splits the range into chunks and runs them on a [`ThreadPool`].

mod pool;
mod prefetch;

use std::ops::Range;

pub use pool::ThreadPool;
pub use prefetch::{
    distance_in_elements, ContainerRef, HardwarePrefetch, PrefetchSink, RecordingSink,
    CACHE_LINE_BYTES,
};

use crate::features::FeatureVector;
use crate::learning::{BinaryModel, BinaryPrediction, ClassPrediction, MultinomialModel};
use crate::loop_ir::{make_feature_vector, DynamicFeatures, StaticFeatures};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("loop body panicked: {0}")]
    Panicked(String),
    #[error("invalid executor configuration: {0}")]
    InvalidConfig(String),
}

/// Anything that can make the sequential/parallel call.
pub trait PolicyModel: Sync {
    fn predict_policy(&self, x: &FeatureVector) -> BinaryPrediction;
}

impl PolicyModel for BinaryModel {
    fn predict_policy(&self, x: &FeatureVector) -> BinaryPrediction {
        self.predict(x)
    }
}

/// Anything that picks one of several named classes.
pub trait ClassModel: Sync {
    fn predict_class(&self, x: &FeatureVector) -> ClassPrediction;
    fn class_names(&self) -> &[String];
}

impl ClassModel for MultinomialModel {
    fn predict_class(&self, x: &FeatureVector) -> ClassPrediction {
        self.predict(x)
    }

    fn class_names(&self) -> &[String] {
        &self.class_names
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Sequential,
    Parallel,
}

/// Policy a [`ExecutionPolicy::Prefetcher`] wraps. Prefetchers cannot nest.
#[derive(Clone, Copy)]
pub enum BasePolicy<'m> {
    Seq,
    Par { threads: usize },
    ParIf { model: &'m dyn PolicyModel },
}

#[derive(Clone, Copy)]
pub enum PrefetchDistance<'m> {
    /// Distance in cache lines.
    FixedLines(usize),
    Adaptive(&'m dyn ClassModel),
}

#[derive(Clone, Copy)]
pub enum ExecutionPolicy<'m> {
    Seq,
    Par {
        threads: usize,
    },
    /// Sequential or parallel (with the context's thread count), as the model decides.
    ParIf {
        model: &'m dyn PolicyModel,
    },
    Prefetcher {
        base: BasePolicy<'m>,
        distance: PrefetchDistance<'m>,
        element_bytes: usize,
    },
}

impl<'m> From<BasePolicy<'m>> for ExecutionPolicy<'m> {
    fn from(b: BasePolicy<'m>) -> Self {
        match b {
            BasePolicy::Seq => ExecutionPolicy::Seq,
            BasePolicy::Par { threads } => ExecutionPolicy::Par { threads },
            BasePolicy::ParIf { model } => ExecutionPolicy::ParIf { model },
        }
    }
}

pub fn make_prefetcher_policy<'m>(
    base: BasePolicy<'m>,
    distance: PrefetchDistance<'m>,
    element_bytes: usize,
) -> ExecutionPolicy<'m> {
    ExecutionPolicy::Prefetcher {
        base,
        distance,
        element_bytes,
    }
}

#[derive(Clone, Copy)]
pub enum ChunkParameter<'m> {
    StaticChunk {
        size: usize,
    },
    AdaptiveChunk {
        model: &'m dyn ClassModel,
    },
    /// `ceil(n / threads)`.
    DefaultChunk,
}

/// What a loop looks like at dispatch time.
#[derive(Clone)]
pub struct LoopContext<'a> {
    pub static_features: StaticFeatures,
    /// Threads used when a `ParIf` model picks parallel execution; also the
    /// thread feature the models see.
    pub threads: usize,
    /// Containers that receive prefetch hints, in registration order.
    pub containers: Vec<ContainerRef<'a>>,
    /// Hint receiver; the hardware prefetcher when `None`.
    pub sink: Option<&'a dyn PrefetchSink>,
}

impl<'a> LoopContext<'a> {
    pub fn new(static_features: StaticFeatures, threads: usize) -> Self {
        LoopContext {
            static_features,
            threads,
            containers: Vec::new(),
            sink: None,
        }
    }

    pub fn with_container(mut self, c: ContainerRef<'a>) -> Self {
        self.containers.push(c);
        self
    }

    pub fn with_sink(mut self, sink: &'a dyn PrefetchSink) -> Self {
        self.sink = Some(sink);
        self
    }

    /// Model input for a loop of `n` iterations; an empty loop counts as one.
    pub fn features(&self, n: usize) -> FeatureVector {
        make_feature_vector(
            &self.static_features,
            &DynamicFeatures::new(self.threads as u64, n.max(1) as u64),
        )
    }
}

/// How a dispatch was resolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DispatchReport {
    pub decision: Decision,
    pub threads: usize,
    /// Resolved chunk size; 0 for an empty range.
    pub chunk_size: usize,
    pub chunks: usize,
    /// Prefetch distance in cache lines, when prefetching.
    pub prefetch_lines: Option<usize>,
}

/// Maps the policy model's class to a decision: class 1 (`par`) is parallel.
pub fn seq_par(model: &dyn PolicyModel, features: &FeatureVector) -> Decision {
    if model.predict_policy(features).class == 1 {
        Decision::Parallel
    } else {
        Decision::Sequential
    }
}

/// Chunk size from the predicted fraction of the iteration count:
/// `max(1, round(fraction * n))`, at most `n`.
pub fn chunk_size_determination(model: &dyn ClassModel, features: &FeatureVector) -> usize {
    let p = model.predict_class(features);
    let name = &model.class_names()[p.class];
    let fraction: f64 = name
        .parse()
        .unwrap_or_else(|_| panic!("chunk class `{name}` is not a fraction"));
    chunk_for_fraction(fraction, features.iterations().max(1.0) as usize)
}

/// `max(1, round(fraction * n))`, at most `n` (and at least 1 for `n = 0`).
pub fn chunk_for_fraction(fraction: f64, n: usize) -> usize {
    let n = n.max(1) as f64;
    (fraction * n).round().clamp(1.0, n) as usize
}

/// Predicted prefetch distance in cache lines.
pub fn prefetching_distance_determination(
    model: &dyn ClassModel,
    features: &FeatureVector,
) -> usize {
    let p = model.predict_class(features);
    let name = &model.class_names()[p.class];
    name.parse()
        .unwrap_or_else(|_| panic!("prefetch class `{name}` is not a line count"))
}

/// Splits `0..n` into consecutive intervals of `chunk` indices; the last may
/// be shorter.
pub fn plan_chunks(n: usize, chunk: usize) -> Vec<Range<usize>> {
    assert!(chunk >= 1, "chunk size must be at least 1");
    (0..n)
        .step_by(chunk)
        .map(|lo| lo..(lo + chunk).min(n))
        .collect()
}

/// [`Executor::for_each_range`] on the global pool.
pub fn for_each_range(
    policy: ExecutionPolicy<'_>,
    chunk: ChunkParameter<'_>,
    n: usize,
    body: impl Fn(usize) + Sync,
    ctx: &LoopContext<'_>,
) -> Result<DispatchReport, ExecError> {
    Executor::global().for_each_range(policy, chunk, n, body, ctx)
}

/// Runs loops on a [`ThreadPool`].
pub struct Executor {
    pool: ThreadPool,
}

impl Default for Executor {
    fn default() -> Self {
        Self::new()
    }
}

impl Executor {
    pub fn new() -> Self {
        Executor {
            pool: ThreadPool::new(),
        }
    }

    pub fn global() -> &'static Executor {
        static EXEC: std::sync::OnceLock<Executor> = std::sync::OnceLock::new();
        EXEC.get_or_init(Executor::new)
    }

    pub fn pool(&self) -> &ThreadPool {
        &self.pool
    }

    /// Calls `body(i)` exactly once for every `i` in `0..n`.
    ///
    /// Sequential runs visit indices in ascending order; parallel runs hand
    /// chunks to the pool, each chunk ascending. Models are consulted once per
    /// call. With a prefetcher, element `i + distance` of every registered
    /// container is hinted before `body(i)` runs, unless it lies past `n` or
    /// past the container's end. A panic in `body` is returned as
    /// [`ExecError::Panicked`] once all running chunks have finished.
    ///
    /// `body` must tolerate concurrent calls for distinct indices.
    pub fn for_each_range(
        &self,
        policy: ExecutionPolicy<'_>,
        chunk: ChunkParameter<'_>,
        n: usize,
        body: impl Fn(usize) + Sync,
        ctx: &LoopContext<'_>,
    ) -> Result<DispatchReport, ExecError> {
        if ctx.threads == 0 {
            return Err(ExecError::InvalidConfig(
                "context threads must be at least 1".into(),
            ));
        }
        let features = ctx.features(n);
        let (base, prefetch) = match policy {
            ExecutionPolicy::Prefetcher {
                base,
                distance,
                element_bytes,
            } => {
                if element_bytes == 0 {
                    return Err(ExecError::InvalidConfig(
                        "element_bytes must be positive".into(),
                    ));
                }
                let lines = match distance {
                    PrefetchDistance::FixedLines(d) => d,
                    PrefetchDistance::Adaptive(m) => {
                        prefetching_distance_determination(m, &features)
                    }
                };
                (
                    base.into(),
                    Some((lines, distance_in_elements(lines, element_bytes))),
                )
            }
            other => (other, None),
        };
        let (decision, threads) = match base {
            ExecutionPolicy::Seq => (Decision::Sequential, 1),
            ExecutionPolicy::Par { threads } => {
                if threads == 0 {
                    return Err(ExecError::InvalidConfig(
                        "Par threads must be at least 1".into(),
                    ));
                }
                (Decision::Parallel, threads)
            }
            ExecutionPolicy::ParIf { model } => match seq_par(model, &features) {
                Decision::Parallel => (Decision::Parallel, ctx.threads),
                Decision::Sequential => (Decision::Sequential, 1),
            },
            ExecutionPolicy::Prefetcher { .. } => unreachable!("prefetchers do not nest"),
        };
        let chunk_size = if n == 0 {
            0
        } else {
            match chunk {
                ChunkParameter::StaticChunk { size } => {
                    if size == 0 {
                        return Err(ExecError::InvalidConfig(
                            "chunk size must be at least 1".into(),
                        ));
                    }
                    size.min(n)
                }
                ChunkParameter::AdaptiveChunk { model } => {
                    chunk_size_determination(model, &features)
                }
                ChunkParameter::DefaultChunk => n.div_ceil(threads),
            }
        };
        let plan = if n == 0 {
            Vec::new()
        } else {
            plan_chunks(n, chunk_size)
        };
        let report = DispatchReport {
            decision,
            threads,
            chunk_size,
            chunks: plan.len(),
            prefetch_lines: prefetch.map(|(lines, _)| lines),
        };

        let sink: &dyn PrefetchSink = ctx.sink.unwrap_or(&HardwarePrefetch);
        let containers = &ctx.containers;
        let run = |r: Range<usize>| match prefetch {
            None => r.for_each(&body),
            Some((_, dist)) => {
                for i in r {
                    let j = i + dist;
                    if j < n {
                        for (k, c) in containers.iter().enumerate() {
                            if j < c.len() {
                                sink.hint(k, j, c.address(j));
                            }
                        }
                    }
                    body(i);
                }
            }
        };
        self.pool.execute(&plan, threads, &run)?;
        Ok(report)
    }
}
