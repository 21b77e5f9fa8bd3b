//! Reference loops: the per-iteration feature rows of the artificial matrix
//! multiply test loops and of the Stream and Stencil benchmarks, plus the
//! reference decisions for the test loops.

use std::fmt::Write as _;

/// One artificial test loop: its features and the decisions reported for it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestLoop {
    pub test: u8,
    pub name: &'static str,
    pub iterations: u64,
    pub total_ops: u64,
    pub float_ops: u64,
    pub comparison_ops: u64,
    pub loop_level: u64,
    /// `"seq"` or `"par"`.
    pub policy: &'static str,
    /// Threads of a parallel decision.
    pub threads: Option<u64>,
    /// Chunk size as a percentage of the iterations.
    pub chunk_percent: f64,
    /// Prefetch distance in cache lines.
    pub prefetch_lines: u64,
}

const fn row(
    test: u8,
    name: &'static str,
    counts: [u64; 5],
    policy: &'static str,
    chunk_percent: f64,
    prefetch_lines: u64,
) -> TestLoop {
    TestLoop {
        test,
        name,
        iterations: counts[0],
        total_ops: counts[1],
        float_ops: counts[2],
        comparison_ops: counts[3],
        loop_level: counts[4],
        policy,
        threads: if policy.len() == 3 && policy.as_bytes()[0] == b'p' {
            Some(8)
        } else {
            None
        },
        chunk_percent,
        prefetch_lines,
    }
}

pub const TEST_LOOPS: [TestLoop; 20] = [
    row(1, "l1", [10000, 400100, 200000, 101010, 2], "par", 0.1, 5),
    row(1, "l2", [20000, 450026, 250000, 150503, 2], "par", 0.1, 5),
    row(1, "l3", [20000, 502040, 250000, 103051, 2], "par", 0.1, 1),
    row(1, "l4", [500, 550402, 200000, 150102, 1], "par", 10.0, 5),
    row(2, "l1", [150000, 350106, 101010, 500, 2], "par", 0.1, 10),
    row(
        2,
        "l2",
        [100, 10050016, 5000000, 2505013, 3],
        "seq",
        10.0,
        1,
    ),
    row(
        2,
        "l3",
        [100, 25000000, 3010204, 1500204, 3],
        "seq",
        10.0,
        1,
    ),
    row(2, "l4", [50000, 4000450, 200000, 100150, 1], "par", 1.0, 5),
    row(3, "l1", [500, 4504030, 250000, 150300, 2], "par", 1.0, 10),
    row(3, "l2", [400, 3502020, 200000, 100405, 1], "par", 1.0, 10),
    row(3, "l3", [2000, 250033, 150000, 103040, 3], "seq", 10.0, 5),
    row(3, "l4", [2500, 350400, 150000, 100600, 3], "seq", 10.0, 5),
    row(4, "l1", [20000, 204002, 100000, 10320, 2], "par", 0.1, 1),
    row(4, "l2", [30000, 400000, 150102, 10000, 2], "par", 0.1, 1),
    row(4, "l3", [300, 550000, 44000, 20030, 3], "seq", 10.0, 5),
    row(4, "l4", [400, 450000, 50400, 10602, 3], "seq", 10.0, 10),
    row(5, "l1", [200, 4502001, 150000, 101004, 3], "par", 1.0, 1),
    row(5, "l2", [700, 400020, 300000, 150006, 3], "par", 1.0, 5),
    row(5, "l3", [300, 302020, 20000, 14005, 2], "par", 1.0, 5),
    row(5, "l4", [100, 50400, 20000, 10110, 2], "seq", 10.0, 10),
];

/// Benchmark feature rows: (name, iterations, total, float, comparison, level).
pub const BENCHMARK_LOOPS: [(&str, u64, u64, u64, u64, u64); 2] = [
    ("stream", 50_000_000, 8, 8, 0, 0),
    ("stencil", 45, 3502, 2500, 301, 1),
];

/// A loop description whose analysis yields exactly the given per-iteration
/// counts and nesting depth.
///
/// Built from four one-statement blocks, each repeated by an inner loop:
/// a float assignment (1 op, float), an integer comparison in a condition
/// (1 op, comparison), a float comparison (1 op, float and comparison) and an
/// integer assignment (1 op). A chain of single-trip loops sets the depth.
/// With `level = 0` the blocks are written out instead, so counts must stay
/// small.
pub fn synthesize_loop_spec(total: u64, float: u64, comparison: u64, level: u64) -> String {
    assert!(float <= total && comparison <= total, "counts exceed total");
    let both = (float + comparison).saturating_sub(total);
    let blocks = [
        (float - both, "fassign f = 1.0;"),
        (comparison - both, "if (i < j) { }"),
        (both, "if (1.0 < i) { }"),
        (total - (float + comparison - both), "iassign q = 1;"),
    ];
    let mut out = String::from("loop N {\n");
    for (count, stmt) in blocks {
        if count == 0 {
            continue;
        }
        if level == 0 {
            assert!(count <= 10_000, "flat loop would be too long");
            for _ in 0..count {
                let _ = writeln!(out, "    {stmt}");
            }
        } else {
            let _ = writeln!(out, "    loop {count} {{ {stmt} }}");
        }
    }
    if level > 0 {
        let _ = writeln!(
            out,
            "    {}{}",
            "loop 1 { ".repeat(level as usize),
            "}".repeat(level as usize)
        );
    }
    out.push_str("}\n");
    out
}
