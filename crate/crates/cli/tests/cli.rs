use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use smartexec::learning::{save_weights, WeightsBundle};

fn loops() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/loops")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smartexec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn zero_bundle(dir: &Path) -> PathBuf {
    let p = dir.join("zero.dat");
    save_weights(&WeightsBundle::zeros(), &p).unwrap();
    p
}

/// Parse, print and parse again; both parses must agree.
fn json_round_trip(text: &str) -> Value {
    let v: Value = serde_json::from_str(text).unwrap();
    let again: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(v, again);
    v
}

#[test]
fn analyze_stream_prints_vector() {
    let spec = loops().join("stream.loop");
    let o = run(&[
        "analyze",
        path_str(&spec),
        "--threads",
        "16",
        "--iterations",
        "50000000",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("feature vector [1, 16, 50000000, 8, 8, 0, 0]"));
}

#[test]
fn analyze_json_round_trips() {
    let spec = loops().join("stencil.loop");
    let o = run(&[
        "analyze",
        path_str(&spec),
        "--threads",
        "8",
        "--iterations",
        "45",
        "--json",
    ]);
    assert_eq!(code(&o), 0);
    let v = json_round_trip(&stdout(&o));
    let fv: Vec<f64> = serde_json::from_value(v["feature_vector"].clone()).unwrap();
    assert_eq!(fv, vec![1.0, 8.0, 45.0, 3502.0, 2500.0, 301.0, 1.0]);
    assert_eq!(v["static_features"]["comparison_ops"], 301);
    assert_eq!(v["static_features"]["deepest_loop_level"], 1);
}

#[test]
fn analyze_empty_loop_has_zero_statics() {
    let spec = loops().join("empty.loop");
    let o = run(&[
        "analyze",
        path_str(&spec),
        "--threads",
        "1",
        "--iterations",
        "1",
        "--json",
    ]);
    assert_eq!(code(&o), 0);
    let v = json_round_trip(&stdout(&o));
    for (name, value) in v["static_features"].as_object().unwrap() {
        assert_eq!(value, 0, "{name}");
    }
}

#[test]
fn analyze_malformed_spec_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.loop");
    fs::write(
        &bad,
        "loop N {\n    fassign a = 1.0;\n    iassign b = * 2;\n}\n",
    )
    .unwrap();
    let o = run(&["analyze", path_str(&bad), "--iterations", "4"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let spec = loops().join("stream.loop");
    assert_eq!(
        code(&run(&[
            "analyze",
            path_str(&spec),
            "--threads",
            "0",
            "--iterations",
            "5"
        ])),
        2
    );
    assert_eq!(code(&run(&["analyze", path_str(&spec)])), 2);
    assert_eq!(
        code(&run(&["analyze", "/nonexistent.loop", "--iterations", "5"])),
        2
    );
}

#[test]
fn predict_with_zero_bundle_uses_tie_rules() {
    let dir = tempfile::tempdir().unwrap();
    let w = zero_bundle(dir.path());
    let spec = loops().join("stencil.loop");
    let o = run(&[
        "predict",
        path_str(&spec),
        "--weights",
        path_str(&w),
        "--threads",
        "4",
        "--iterations",
        "45",
        "--json",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json_round_trip(&stdout(&o));
    assert_eq!(v["policy"]["decision"], "seq");
    assert_eq!(v["policy"]["probability_par"], 0.5);
    assert_eq!(v["chunk"]["class"], "0.001");
    assert_eq!(v["chunk"]["size"], 1);
    assert_eq!(v["prefetch"]["lines"], 1);
    assert_eq!(v["prefetch"]["probabilities"].as_array().unwrap().len(), 5);

    let text = run(&[
        "predict",
        path_str(&spec),
        "--weights",
        path_str(&w),
        "--iterations",
        "45",
    ]);
    assert!(stdout(&text).contains("policy    seq"));
}

#[test]
fn predict_missing_weights_exits_2() {
    let spec = loops().join("stream.loop");
    let o = run(&[
        "predict",
        path_str(&spec),
        "--weights",
        "/nonexistent/w.dat",
        "--iterations",
        "9",
    ]);
    assert_eq!(code(&o), 2);
}

const LEVEL_CLASSES: [&str; 4] = ["1", "5", "10", "100"];

/// Three datasets over the model features with learnable labels.
fn write_synthetic(dir: &Path, seed: u64, n: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let header = "threads,iterations,total_ops,float_ops,comparison_ops,loop_level,label\n";
    let (mut policy, mut chunk, mut prefetch) =
        (header.to_string(), header.to_string(), header.to_string());
    let mut rows = 0;
    while rows < n {
        let threads = [1.0, 2.0, 4.0, 8.0][rng.gen_range(0..4)];
        let li: f64 = rng.gen_range(2.0..7.0);
        let lo: f64 = rng.gen_range(1.0..5.0);
        let level = rng.gen_range(0..4);
        let score = li + 0.5 * lo - 5.5;
        let bucket = [3.5, 5.0, 6.0].iter().filter(|&&c| li > c).count();
        let near_cut = [3.5, 5.0, 6.0].iter().any(|&c| (li - c).abs() < 0.15);
        if score.abs() < 0.5 || near_cut {
            continue;
        }
        let ops = 10f64.powf(lo).round();
        let row = format!(
            "{threads},{},{ops},{},{},{level}",
            10f64.powf(li).round(),
            (ops / 2.0).round(),
            (ops / 10.0).round()
        );
        let _ = writeln!(policy, "{row},{}", if score > 0.0 { "par" } else { "seq" });
        let _ = writeln!(chunk, "{row},{}", ["0.50", "0.10", "0.01", "0.001"][bucket]);
        let _ = writeln!(prefetch, "{row},{}", LEVEL_CLASSES[level]);
        rows += 1;
    }
    fs::write(dir.join("policy.csv"), policy).unwrap();
    fs::write(dir.join("chunk.csv"), chunk).unwrap();
    fs::write(dir.join("prefetch.csv"), prefetch).unwrap();
}

fn accuracy(out: &str, model: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with(model)).unwrap();
    let tail = line.split("held-out accuracy ").nth(1).unwrap();
    tail.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn train_reports_held_out_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), 3, 500);
    let w = dir.path().join("w.dat");
    let o = run(&[
        "train",
        path_str(dir.path()),
        "--out",
        path_str(&w),
        "--split",
        "0.8",
        "--seed",
        "7",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(accuracy(&out, "policy") >= 0.98, "{out}");
    assert!(accuracy(&out, "chunk") >= 0.95, "{out}");
    assert!(accuracy(&out, "prefetch") >= 0.95, "{out}");
    assert!(out.contains("(100 samples)"));

    let spec = loops().join("stencil.loop");
    let p = run(&[
        "predict",
        path_str(&spec),
        "--weights",
        path_str(&w),
        "--threads",
        "8",
        "--iterations",
        "45",
        "--json",
    ]);
    assert_eq!(code(&p), 0);
    let v = json_round_trip(&stdout(&p));
    let size = v["chunk"]["size"].as_u64().unwrap();
    assert!([1, 5, 23].contains(&size), "{size}");
}

#[test]
fn train_full_split_has_no_held_out() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), 4, 120);
    let w = dir.path().join("w.dat");
    let o = run(&[
        "train",
        path_str(dir.path()),
        "--out",
        path_str(&w),
        "--split",
        "1.0",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("no held-out").count(), 3);
    assert!(w.exists());
}

#[test]
fn train_single_class_exits_2_naming_model() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), 5, 60);
    let chunk = fs::read_to_string(dir.path().join("chunk.csv")).unwrap();
    let single: String = chunk
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                format!("{l}\n")
            } else {
                format!("{},0.10\n", l.rsplit_once(',').unwrap().0)
            }
        })
        .collect();
    fs::write(dir.path().join("chunk.csv"), single).unwrap();
    let o = run(&[
        "train",
        path_str(dir.path()),
        "--out",
        path_str(&dir.path().join("w.dat")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("chunk model"), "{}", stderr(&o));
}

#[test]
fn train_bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.dat");
    assert_eq!(
        code(&run(&[
            "train",
            path_str(dir.path()),
            "--out",
            path_str(&w)
        ])),
        2
    );
    write_synthetic(dir.path(), 6, 40);
    assert_eq!(
        code(&run(&[
            "train",
            path_str(dir.path()),
            "--out",
            path_str(&w),
            "--split",
            "1.5"
        ])),
        2
    );
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path(), 8, 60);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let w = blocker.join("w.dat");
    let o = run(&["train", path_str(dir.path()), "--out", path_str(&w)]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn gen_data_rejects_empty_or_unknown_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    assert_eq!(
        code(&run(&[
            "gen-data",
            "--out",
            path_str(&out),
            "--kernels",
            ""
        ])),
        2
    );
    assert_eq!(
        code(&run(&[
            "gen-data",
            "--out",
            path_str(&out),
            "--kernels",
            "fft"
        ])),
        2
    );
    assert_eq!(
        code(&run(&["gen-data", "--out", path_str(&out), "--reps", "2"])),
        2
    );
}

const TABLE: &str = "\
# zero bundle picks seq, 0.001 and 1
* * * policy seq 0.4
* * * policy par 0.2
* * * chunk 0.001 0.3
* * * chunk * 0.6
* * * prefetch 10 0.25
* * * prefetch * 0.5
";

const EXPECTED_REPORT: &str = "\
kernel,dimension,config,median_s,speedup_vs_adaptive
stream,policy,seq,4e-1,1.000000
stream,policy,par,2e-1,0.500000
stream,policy,adaptive(seq),4e-1,1.000000
stream,chunk,0.001,3e-1,1.000000
stream,chunk,0.01,6e-1,2.000000
stream,chunk,0.10,6e-1,2.000000
stream,chunk,0.50,6e-1,2.000000
stream,chunk,adaptive(0.001),3e-1,1.000000
stream,prefetch,1,5e-1,1.000000
stream,prefetch,5,5e-1,1.000000
stream,prefetch,10,2.5e-1,0.500000
stream,prefetch,100,5e-1,1.000000
stream,prefetch,500,5e-1,1.000000
stream,prefetch,adaptive(1),5e-1,1.000000
";

#[test]
fn bench_fake_clock_report_matches_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let w = zero_bundle(dir.path());
    let table = dir.path().join("t.tbl");
    fs::write(&table, TABLE).unwrap();
    let csv = dir.path().join("report.csv");
    let o = run(&[
        "bench",
        "stream",
        "--weights",
        path_str(&w),
        "--threads",
        "8",
        "--fake-clock",
        path_str(&table),
        "--size",
        "2000",
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&csv).unwrap(), EXPECTED_REPORT);
    assert!(stdout(&o).contains("adaptive(0.001)"));
}

#[test]
fn bench_dimension_filter() {
    let dir = tempfile::tempdir().unwrap();
    let w = zero_bundle(dir.path());
    let table = dir.path().join("t.tbl");
    fs::write(&table, TABLE).unwrap();
    let csv = dir.path().join("report.csv");
    let o = run(&[
        "bench",
        "matmul",
        "--weights",
        path_str(&w),
        "--threads",
        "2",
        "--fake-clock",
        path_str(&table),
        "--size",
        "12",
        "--dimension",
        "chunk",
        "--out",
        path_str(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.starts_with("matmul,chunk,")));
}

#[test]
fn bench_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let w = zero_bundle(dir.path());
    let o = run(&["bench", "fft", "--weights", path_str(&w)]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    for k in ["stream", "stencil", "matmul"] {
        assert!(err.contains(k), "{err}");
    }
    assert_eq!(
        code(&run(&[
            "bench",
            "stream",
            "--weights",
            path_str(&w),
            "--dimension",
            "threads"
        ])),
        2
    );
    let table = dir.path().join("t.tbl");
    fs::write(&table, "* * * policy * 1\n").unwrap();
    let o = run(&[
        "bench",
        "stream",
        "--weights",
        path_str(&w),
        "--fake-clock",
        path_str(&table),
        "--size",
        "100",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}
