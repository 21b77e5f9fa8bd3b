//! `smartexec`: analyze loop specs, collect training data, train the models,
//! query them and benchmark the adaptive executors.

use std::fmt::Write as _;
use std::fs;
use std::io::{ErrorKind, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use smartexec::bench::{
    evaluate, generate_training_data, BenchError, Clock, Dimension, EvalConfig, FakeClock, Grid,
    KernelKind, KernelSpec, RealClock, TrainingData, DEFAULT_SIZE_STEPS, MIN_REPS,
};
use smartexec::executor::{
    chunk_size_determination, prefetching_distance_determination, seq_par, ClassModel, Decision,
    PolicyModel,
};
use smartexec::features::{FULL_FEATURES, MODEL_FEATURES};
use smartexec::learning::{
    fit_binary_irls, fit_multinomial_padded, fit_normalizer, load_weights, save_weights, Dataset,
    LearnError, TrainConfig, WeightsBundle, CHUNK_CLASSES, POLICY_CLASSES, PREFETCH_CLASSES,
};
use smartexec::loop_ir::{
    analyze_statement, make_feature_vector, parse_loop_spec, DynamicFeatures, LoopAst,
    StaticFeatures, TripCount,
};
use smartexec::FeatureVector;

const DEFAULT_SEED: u64 = 42;

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<(), Failure> {
    let mut stdout = std::io::stdout().lock();
    match stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
    {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(Failure::internal(e)),
        _ => Ok(()),
    }
}

macro_rules! outln {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))?
    };
}

#[derive(Parser)]
#[command(
    name = "smartexec",
    version,
    about = "Model-driven parallel loop execution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the static features and model input of a loop spec.
    Analyze(AnalyzeArgs),
    /// Time every candidate on a kernel grid and write labeled datasets.
    GenData(GenDataArgs),
    /// Fit the three models and write a weights bundle.
    Train(TrainArgs),
    /// Print the policy, chunk size and prefetch distance for a loop.
    Predict(PredictArgs),
    /// Compare the adaptive settings with every fixed candidate.
    Bench(BenchArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Loop spec file.
    spec: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    /// Defaults to the loop's literal trip count.
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenDataArgs {
    /// Output directory for policy.csv, chunk.csv, prefetch.csv and measurements.csv.
    #[arg(long)]
    out: PathBuf,
    /// Timing table replacing the wall clock.
    #[arg(long)]
    fake_clock: Option<PathBuf>,
    /// Comma-separated kernels.
    #[arg(long, default_value = "stream,stencil,matmul")]
    kernels: String,
    /// Comma-separated thread counts.
    #[arg(long, default_value = "1,2,4,8")]
    threads_grid: String,
    /// Sizes per kernel.
    #[arg(long, default_value_t = DEFAULT_SIZE_STEPS)]
    size_steps: usize,
    /// Comma-separated sizes used for every kernel instead of the default sweep.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long, default_value_t = MIN_REPS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory holding policy.csv, chunk.csv and prefetch.csv.
    data_dir: PathBuf,
    #[arg(long, default_value = "weights.dat")]
    out: PathBuf,
    /// Fraction of samples used for training.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    /// Loop spec file.
    spec: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    threads: u64,
    /// Defaults to the loop's literal trip count.
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Kernel name or `all`.
    kernel: String,
    #[arg(long)]
    weights: PathBuf,
    /// Defaults to the number of available CPUs.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    #[arg(long)]
    fake_clock: Option<PathBuf>,
    /// policy, chunk, prefetch or all.
    #[arg(long, default_value = "all")]
    dimension: String,
    /// Problem size; defaults per kernel (stream 1000000, stencil 128, matmul 128).
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value_t = MIN_REPS)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Report CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 2,
            error: error.into(),
        }
    }

    fn internal(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 1,
            error: error.into(),
        }
    }
}

impl From<LearnError> for Failure {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::NormalizerMismatch => Failure::internal(e),
            _ => Failure::input(e),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::ChecksumMismatch { .. } | BenchError::Exec(_) => Failure::internal(e),
            BenchError::Learn(inner) => inner.into(),
            _ => Failure::input(e),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let mut msg = f.error.to_string();
            for cause in f.error.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg.push_str(": ");
                    msg.push_str(&c);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(f.code)
        }
    }
}

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::input)
}

/// Writes a result file; failures count as internal.
fn write_output(path: &Path, text: &str) -> CliResult {
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::internal)
}

fn load_spec(path: &Path) -> CliResult<LoopAst> {
    let text = read_input(path)?;
    parse_loop_spec(&text).map_err(|e| Failure::input(anyhow!("{}: {e}", path.display())))
}

fn resolve_iterations(ast: &LoopAst, flag: Option<u64>) -> CliResult<u64> {
    match (flag, ast.trip_count) {
        (Some(n), _) => Ok(n),
        (None, TripCount::Literal(n)) => Ok(n),
        (None, TripCount::Symbolic) => Err(Failure::input(anyhow!(
            "the loop's trip count is symbolic; pass --iterations"
        ))),
    }
}

fn format_vector(v: &FeatureVector) -> String {
    let parts: Vec<String> = v.values().iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn print_json(value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(Failure::internal)?;
    outln!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeOutput {
    spec: String,
    static_features: StaticFeatures,
    threads: u64,
    iterations: u64,
    feature_vector: FeatureVector,
}

fn cmd_analyze(a: AnalyzeArgs) -> CliResult {
    let ast = load_spec(&a.spec)?;
    let iterations = resolve_iterations(&ast, a.iterations)?;
    let s = analyze_statement(&ast);
    let d = DynamicFeatures::new(a.threads, iterations);
    let fv = make_feature_vector(&s, &d);
    if a.json {
        return print_json(&AnalyzeOutput {
            spec: a.spec.display().to_string(),
            static_features: s,
            threads: a.threads,
            iterations,
            feature_vector: fv,
        });
    }
    let mut out = format!(
        "loop {} (trip count {})\n",
        a.spec.display(),
        ast.trip_count
    );
    for (name, value) in FULL_FEATURES.iter().zip(s.full_row(&d)) {
        let _ = writeln!(out, "  {name:<16} {value}");
    }
    let _ = writeln!(out, "feature vector {}", format_vector(&fv));
    emit(&out)?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| Failure::input(anyhow!("{what} `{s}`: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(Failure::input(anyhow!("no {what}s given")));
    }
    Ok(items)
}

fn make_clock(fake: Option<&Path>) -> CliResult<Box<dyn Clock>> {
    Ok(match fake {
        Some(path) => Box::new(FakeClock::load(path)?),
        None => Box::new(RealClock),
    })
}

fn label_summary(data: &Dataset) -> String {
    data.class_names()
        .iter()
        .zip(data.class_counts())
        .map(|(c, n)| format!("{c}: {n}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn measurements_csv(data: &TrainingData) -> String {
    let mut out = String::from("kernel,size,threads,dimension,config,median_s,reps\n");
    for m in &data.measurements {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:e},{}",
            m.kernel.name(),
            m.size,
            m.threads,
            m.dimension,
            m.config,
            m.median_s,
            m.reps
        );
    }
    out
}

fn cmd_gen_data(a: GenDataArgs) -> CliResult {
    let kernels: Vec<KernelKind> = parse_list(&a.kernels, "kernel")?;
    let threads: Vec<usize> = parse_list(&a.threads_grid, "thread count")?;
    let grid = match &a.sizes {
        None => Grid::new(&kernels, a.size_steps, &threads, a.reps, a.seed)?,
        Some(list) => {
            let sizes: Vec<usize> = parse_list(list, "size")?;
            let mut cells = Vec::new();
            for &k in &kernels {
                for &size in &sizes {
                    let spec = KernelSpec::new(k, size)?;
                    cells.extend(threads.iter().map(|&t| (spec, t)));
                }
            }
            Grid::from_cells(cells, a.reps, a.seed)?
        }
    };
    let clock = make_clock(a.fake_clock.as_deref())?;
    let data = generate_training_data(&grid, clock.as_ref())?;

    fs::create_dir_all(&a.out)
        .with_context(|| format!("cannot create {}", a.out.display()))
        .map_err(Failure::internal)?;
    for (name, set) in [
        ("policy", &data.policy),
        ("chunk", &data.chunk),
        ("prefetch", &data.prefetch),
    ] {
        write_output(&a.out.join(format!("{name}.csv")), &set.to_csv_string())?;
        outln!("{name}.csv: {} rows ({})", set.len(), label_summary(set));
    }
    write_output(&a.out.join("measurements.csv"), &measurements_csv(&data))?;
    for cell in &data.aborted {
        eprintln!("warning: aborted {cell}");
    }
    for w in &data.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn read_dataset(dir: &Path, name: &str, classes: &[&str]) -> CliResult<Dataset> {
    let data = Dataset::read_csv(&dir.join(format!("{name}.csv")), classes)?;
    if data.feature_names() != MODEL_FEATURES {
        return Err(Failure::input(anyhow!(
            "{name}.csv: expected feature columns {}, found {}",
            MODEL_FEATURES.join(","),
            data.feature_names().join(",")
        )));
    }
    Ok(data)
}

fn held_out_line(
    name: &str,
    trained_on: usize,
    converged: bool,
    test: Option<(f64, usize)>,
) -> String {
    let fit = if converged {
        "converged"
    } else {
        "not converged"
    };
    match test {
        Some((acc, n)) => format!(
            "{name:<9} trained on {trained_on} samples ({fit}); held-out accuracy {acc:.4} ({n} samples)"
        ),
        None => format!("{name:<9} trained on {trained_on} samples ({fit}); no held-out data"),
    }
}

fn cmd_train(a: TrainArgs) -> CliResult {
    if !(a.split > 0.0 && a.split <= 1.0) {
        return Err(Failure::input(anyhow!(
            "--split must lie in (0, 1], got {}",
            a.split
        )));
    }
    let policy = read_dataset(&a.data_dir, "policy", &POLICY_CLASSES)?;
    let chunk = read_dataset(&a.data_dir, "chunk", &CHUNK_CLASSES)?;
    let prefetch = read_dataset(&a.data_dir, "prefetch", &PREFETCH_CLASSES)?;

    let (policy_train, policy_test) = policy.split(a.split, a.seed);
    let (chunk_train, chunk_test) = chunk.split(a.split, a.seed);
    let (prefetch_train, prefetch_test) = prefetch.split(a.split, a.seed);

    let normalizer = fit_normalizer(&policy_train);
    let cfg = TrainConfig::default();
    let p = fit_binary_irls(&policy_train, normalizer.clone(), &cfg)?;
    let c = fit_multinomial_padded(&chunk_train, normalizer.clone(), &cfg, "chunk model")?;
    let f = fit_multinomial_padded(&prefetch_train, normalizer, &cfg, "prefetch model")?;

    outln!(
        "{}",
        held_out_line(
            "policy",
            policy_train.len(),
            p.converged,
            policy_test.as_ref().map(|t| (p.model.accuracy(t), t.len()))
        )
    );
    outln!(
        "{}",
        held_out_line(
            "chunk",
            chunk_train.len(),
            c.converged,
            chunk_test.as_ref().map(|t| (c.model.accuracy(t), t.len()))
        )
    );
    outln!(
        "{}",
        held_out_line(
            "prefetch",
            prefetch_train.len(),
            f.converged,
            prefetch_test
                .as_ref()
                .map(|t| (f.model.accuracy(t), t.len()))
        )
    );

    let bundle = WeightsBundle::new(p.model, c.model, f.model)?;
    save_weights(&bundle, &a.out).map_err(Failure::internal)?;
    outln!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ClassProbability {
    class: String,
    probability: f64,
}

#[derive(Serialize)]
struct PolicyOutput {
    decision: &'static str,
    probability_par: f64,
}

#[derive(Serialize)]
struct ChunkOutput {
    class: String,
    size: usize,
    probabilities: Vec<ClassProbability>,
}

#[derive(Serialize)]
struct PrefetchOutput {
    class: String,
    lines: usize,
    probabilities: Vec<ClassProbability>,
}

#[derive(Serialize)]
struct PredictOutput {
    feature_vector: FeatureVector,
    policy: PolicyOutput,
    chunk: ChunkOutput,
    prefetch: PrefetchOutput,
}

fn probabilities(names: &[String], p: &[f64]) -> Vec<ClassProbability> {
    names
        .iter()
        .zip(p)
        .map(|(c, &probability)| ClassProbability {
            class: c.clone(),
            probability,
        })
        .collect()
}

fn format_probabilities(p: &[ClassProbability]) -> String {
    p.iter()
        .map(|c| format!("{}={:.4}", c.class, c.probability))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_predict(a: PredictArgs) -> CliResult {
    let bundle = load_weights(&a.weights)?;
    let ast = load_spec(&a.spec)?;
    let iterations = resolve_iterations(&ast, a.iterations)?;
    let fv = make_feature_vector(
        &analyze_statement(&ast),
        &DynamicFeatures::new(a.threads, iterations),
    );

    let decision = seq_par(&bundle.policy_model, &fv);
    let chunk_p = ClassModel::predict_class(&bundle.chunk_model, &fv);
    let prefetch_p = ClassModel::predict_class(&bundle.prefetch_model, &fv);
    let out = PredictOutput {
        feature_vector: fv,
        policy: PolicyOutput {
            decision: match decision {
                Decision::Sequential => POLICY_CLASSES[0],
                Decision::Parallel => POLICY_CLASSES[1],
            },
            probability_par: bundle.policy_model.predict_policy(&fv).probability,
        },
        chunk: ChunkOutput {
            class: CHUNK_CLASSES[chunk_p.class].to_string(),
            size: chunk_size_determination(&bundle.chunk_model, &fv),
            probabilities: probabilities(&bundle.chunk_model.class_names, &chunk_p.probabilities),
        },
        prefetch: PrefetchOutput {
            class: PREFETCH_CLASSES[prefetch_p.class].to_string(),
            lines: prefetching_distance_determination(&bundle.prefetch_model, &fv),
            probabilities: probabilities(
                &bundle.prefetch_model.class_names,
                &prefetch_p.probabilities,
            ),
        },
    };
    if a.json {
        return print_json(&out);
    }
    outln!("feature vector {}", format_vector(&fv));
    outln!(
        "policy    {} (p(par) = {:.4})",
        out.policy.decision,
        out.policy.probability_par
    );
    outln!(
        "chunk     {} of {iterations} iterations -> {} per chunk [{}]",
        out.chunk.class,
        out.chunk.size,
        format_probabilities(&out.chunk.probabilities)
    );
    outln!(
        "prefetch  {} cache lines [{}]",
        out.prefetch.lines,
        format_probabilities(&out.prefetch.probabilities)
    );
    Ok(())
}

fn default_bench_size(kind: KernelKind) -> usize {
    match kind {
        KernelKind::Stream => 1_000_000,
        KernelKind::Stencil => 128,
        KernelKind::Matmul => 128,
    }
}

fn cmd_bench(a: BenchArgs) -> CliResult {
    let kinds: Vec<KernelKind> = if a.kernel == "all" {
        KernelKind::ALL.to_vec()
    } else {
        vec![a.kernel.parse()?]
    };
    let dimensions = if a.dimension == "all" {
        Dimension::ALL.to_vec()
    } else {
        vec![a
            .dimension
            .parse::<Dimension>()
            .map_err(|e| Failure::input(anyhow!(e)))?]
    };
    let kernels = kinds
        .iter()
        .map(|&k| KernelSpec::new(k, a.size.unwrap_or_else(|| default_bench_size(k))))
        .collect::<Result<Vec<_>, _>>()?;
    let threads = match a.threads {
        Some(t) => t as usize,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let bundle = load_weights(&a.weights)?;
    let clock = make_clock(a.fake_clock.as_deref())?;
    let cfg = EvalConfig {
        kernels,
        threads,
        dimensions,
        reps: a.reps,
        seed: a.seed,
    };
    let report = evaluate(&bundle, &cfg, clock.as_ref())?;
    emit(&report.to_table())?;
    outln!("\nadaptive / best fixed");
    for (kernel, dim, regret) in report.regrets() {
        outln!("  {kernel:<8} {:<9} {regret:.3}", dim.name());
    }
    if let Some(path) = &a.out {
        write_output(path, &report.to_csv())?;
    }
    Ok(())
}
