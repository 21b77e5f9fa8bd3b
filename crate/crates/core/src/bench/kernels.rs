use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BenchError;
use crate::executor::{
    ChunkParameter, ContainerRef, DispatchReport, ExecutionPolicy, Executor, LoopContext,
};
use crate::loop_ir::{analyze_statement, parse_loop_spec, StaticFeatures};

/// Loop description of the fused Stream loop.
pub const STREAM_LOOP: &str = include_str!("../../loops/stream.loop");

/// Scale factor of the Stream scale and triad steps.
pub const STREAM_SCALAR: f64 = 3.0;

/// Jacobi sweeps per stencil run.
pub const STENCIL_SWEEPS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    Stream,
    Stencil,
    Matmul,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::Stream, KernelKind::Stencil, KernelKind::Matmul];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Stream => "stream",
            KernelKind::Stencil => "stencil",
            KernelKind::Matmul => "matmul",
        }
    }

    /// What `size` means for this kernel.
    pub fn size_meaning(self) -> &'static str {
        match self {
            KernelKind::Stream => "array length",
            KernelKind::Stencil => "grid height (square grid unless a width is given, 10 sweeps)",
            KernelKind::Matmul => "matrix side (square matrices)",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BenchError::UnknownKernel(s.to_string()))
    }
}

/// One kernel at one problem size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Array length, stencil grid height, or matrix side.
    pub size: usize,
    /// Stencil grid width; equals `size` for the other kernels.
    pub width: usize,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, size: usize) -> Result<Self, BenchError> {
        let min = match kind {
            KernelKind::Stream | KernelKind::Matmul => 1,
            KernelKind::Stencil => 3,
        };
        if size < min {
            return Err(BenchError::InvalidSize {
                kernel: kind.name(),
                size,
                min,
            });
        }
        Ok(KernelSpec {
            kind,
            size,
            width: size,
        })
    }

    /// A `width x height` stencil grid.
    pub fn stencil(width: usize, height: usize) -> Result<Self, BenchError> {
        if width < 3 || height < 3 {
            return Err(BenchError::InvalidGrid { width, height });
        }
        Ok(KernelSpec {
            kind: KernelKind::Stencil,
            size: height,
            width,
        })
    }

    /// Iterations of the parallel loop.
    pub fn iterations(&self) -> usize {
        match self.kind {
            KernelKind::Stream | KernelKind::Matmul => self.size,
            KernelKind::Stencil => self.size - 2,
        }
    }

    pub fn element_bytes(&self) -> usize {
        std::mem::size_of::<f64>()
    }

    /// Loop description of one iteration of the parallel loop.
    pub fn loop_spec(&self) -> String {
        match self.kind {
            KernelKind::Stream => STREAM_LOOP.to_string(),
            KernelKind::Stencil => stencil_loop_spec(self.width - 2),
            KernelKind::Matmul => matmul_loop_spec(self.size, self.size),
        }
    }

    pub fn static_features(&self) -> StaticFeatures {
        let ast = parse_loop_spec(&self.loop_spec()).expect("generated loop spec parses");
        analyze_statement(&ast)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.width != self.size {
            write!(f, "{}({}x{})", self.kind, self.width, self.size)
        } else {
            write!(f, "{}({})", self.kind, self.size)
        }
    }
}

/// Loop description of one interior row of a stencil grid with `cols`
/// interior columns.
pub fn stencil_loop_spec(cols: usize) -> String {
    format!(
        "\
# 2D heat-distribution stencil: one outer iteration updates one interior row
# of a {w}-column grid ({cols} interior cells) from the rows above and below.
loop N {{
    iassign top = i == 0;
    loop {cols} {{
        iassign j = k + 1;
        fassign c = cur[j];
        fassign w = cur[j - 1];
        fassign e = cur[j + 1];
        fassign n = up[j];
        fassign s = down[j];
        fassign t = (c + w + e + n + s) / 5.0;
        fassign d = t - c;
        fassign res = res + d * d;
        fassign nxt = t;
        fassign heat = heat + t;
        fassign energy = energy + t * t;
        iassign west = j == 1;
        iassign east = j == {cols};
        if (west + east > 0) {{
            fassign flux = flux + d * h;
        }}
    }}
}}
",
        w = cols + 2
    )
}

/// Loop description of one row of `C = A * B` with `cols` columns and inner
/// dimension `inner`.
pub fn matmul_loop_spec(cols: usize, inner: usize) -> String {
    format!(
        "\
# matrix multiply: one outer iteration computes one row of C = A * B
loop N {{
    loop {cols} {{
        fassign acc = 0.0;
        loop {inner} {{
            fassign acc = acc + a[k] * b[k];
        }}
        fassign c = acc;
    }}
}}
"
    )
}

/// FNV-1a over the bit patterns of `values`.
pub fn checksum(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Raw pointer for disjoint parallel writes.
#[derive(Clone, Copy)]
struct SyncPtr(*mut f64);

// SAFETY: every loop below writes each element from exactly one iteration.
unsafe impl Send for SyncPtr {}
unsafe impl Sync for SyncPtr {}

impl SyncPtr {
    /// # Safety
    /// `i` in bounds, and no other thread accesses element `i` concurrently.
    #[inline(always)]
    unsafe fn get(self, i: usize) -> f64 {
        *self.0.add(i)
    }

    /// # Safety
    /// As for [`SyncPtr::get`].
    #[inline(always)]
    unsafe fn set(self, i: usize, v: f64) {
        *self.0.add(i) = v;
    }
}

/// Fused Stream loop: `c = a; b = k*c; c = a + b; a = b + k*c` per index.
#[allow(clippy::too_many_arguments)]
pub fn kernel_stream(
    exec: &Executor,
    policy: ExecutionPolicy<'_>,
    chunk: ChunkParameter<'_>,
    ctx: LoopContext<'_>,
    a: &mut [f64],
    b: &mut [f64],
    c: &mut [f64],
    k: f64,
) -> Result<DispatchReport, BenchError> {
    let n = a.len();
    assert!(
        b.len() == n && c.len() == n,
        "stream arrays differ in length"
    );
    let (pa, pb, pc) = (
        SyncPtr(a.as_mut_ptr()),
        SyncPtr(b.as_mut_ptr()),
        SyncPtr(c.as_mut_ptr()),
    );
    let ctx = ctx
        .with_container(ContainerRef::from_raw(pa.0, n))
        .with_container(ContainerRef::from_raw(pb.0, n))
        .with_container(ContainerRef::from_raw(pc.0, n));
    let report = exec.for_each_range(
        policy,
        chunk,
        n,
        |i| unsafe {
            pc.set(i, pa.get(i));
            pb.set(i, k * pc.get(i));
            pc.set(i, pa.get(i) + pb.get(i));
            pa.set(i, pb.get(i) + k * pc.get(i));
        },
        &ctx,
    )?;
    Ok(report)
}

/// Runs `sweeps` Jacobi sweeps on a row-major `width x height` grid; the
/// boundary stays fixed. Each sweep is one parallel loop over interior rows.
/// `grid` holds the result; `scratch` must start as a copy of `grid`.
#[allow(clippy::too_many_arguments)]
pub fn kernel_stencil2d(
    exec: &Executor,
    policy: ExecutionPolicy<'_>,
    chunk: ChunkParameter<'_>,
    ctx: LoopContext<'_>,
    grid: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
    width: usize,
    height: usize,
    sweeps: usize,
) -> Result<Vec<DispatchReport>, BenchError> {
    if width < 3 || height < 3 {
        return Err(BenchError::InvalidGrid { width, height });
    }
    assert!(
        grid.len() == width * height && scratch.len() == grid.len(),
        "grid size mismatch"
    );
    let mut reports = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        let old: &[f64] = grid;
        let new = SyncPtr(scratch.as_mut_ptr());
        let ctx = ctx.clone().with_container(ContainerRef::from_slice(old));
        reports.push(exec.for_each_range(
            policy,
            chunk,
            height - 2,
            |r| {
                let y = r + 1;
                for x in 1..width - 1 {
                    let at = y * width + x;
                    let v =
                        (old[at] + old[at - 1] + old[at + 1] + old[at - width] + old[at + width])
                            / 5.0;
                    // SAFETY: row y of `scratch` is written only by iteration r.
                    unsafe { new.set(at, v) };
                }
            },
            &ctx,
        )?);
        std::mem::swap(grid, scratch);
    }
    Ok(reports)
}

/// `c = a * b` for row-major `m x k` and `k x p` matrices; one parallel
/// iteration per row of `c`.
#[allow(clippy::too_many_arguments)]
pub fn kernel_matmul(
    exec: &Executor,
    policy: ExecutionPolicy<'_>,
    chunk: ChunkParameter<'_>,
    ctx: LoopContext<'_>,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
    (m, k, p): (usize, usize, usize),
) -> Result<DispatchReport, BenchError> {
    assert!(
        a.len() == m * k && b.len() == k * p && c.len() == m * p,
        "matrix size mismatch"
    );
    let out = SyncPtr(c.as_mut_ptr());
    let ctx = ctx
        .with_container(ContainerRef::from_slice(a))
        .with_container(ContainerRef::from_raw(out.0, m * p));
    let report = exec.for_each_range(
        policy,
        chunk,
        m,
        |i| {
            let row = &a[i * k..(i + 1) * k];
            for j in 0..p {
                let mut acc = 0.0;
                for (q, av) in row.iter().enumerate() {
                    acc += av * b[q * p + j];
                }
                // SAFETY: row i of `c` is written only by iteration i.
                unsafe { out.set(i * p + j, acc) };
            }
        },
        &ctx,
    )?;
    Ok(report)
}

/// A kernel instance with seeded inputs that can be reset and rerun.
pub struct Workload {
    spec: KernelSpec,
    features: StaticFeatures,
    initial: Vec<Vec<f64>>,
    state: Vec<Vec<f64>>,
}

impl Workload {
    pub fn new(spec: KernelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random =
            |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(0.0..1.0)).collect() };
        let n = spec.size;
        let initial = match spec.kind {
            KernelKind::Stream => vec![random(n), random(n), random(n)],
            KernelKind::Stencil => {
                let g = random(n * spec.width);
                vec![g.clone(), g]
            }
            KernelKind::Matmul => vec![random(n * n), random(n * n), vec![0.0; n * n]],
        };
        Workload {
            spec,
            features: spec.static_features(),
            state: initial.clone(),
            initial,
        }
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn static_features(&self) -> StaticFeatures {
        self.features
    }

    /// Restores the seeded inputs.
    pub fn reset(&mut self) {
        for (s, i) in self.state.iter_mut().zip(&self.initial) {
            s.copy_from_slice(i);
        }
    }

    /// Runs the kernel once on the current state. Returns the report of the
    /// last dispatch.
    pub fn run(
        &mut self,
        exec: &Executor,
        policy: ExecutionPolicy<'_>,
        chunk: ChunkParameter<'_>,
        threads: usize,
    ) -> Result<DispatchReport, BenchError> {
        let ctx = LoopContext::new(self.features, threads);
        let n = self.spec.size;
        match self.spec.kind {
            KernelKind::Stream => {
                let [a, b, c] = &mut self.state[..] else {
                    unreachable!()
                };
                kernel_stream(exec, policy, chunk, ctx, a, b, c, STREAM_SCALAR)
            }
            KernelKind::Stencil => {
                let (g, s) = self.state.split_at_mut(1);
                let w = self.spec.width;
                let reports = kernel_stencil2d(
                    exec,
                    policy,
                    chunk,
                    ctx,
                    &mut g[0],
                    &mut s[0],
                    w,
                    n,
                    STENCIL_SWEEPS,
                )?;
                Ok(reports.into_iter().last().expect("at least one sweep"))
            }
            KernelKind::Matmul => {
                let [a, b, c] = &mut self.state[..] else {
                    unreachable!()
                };
                kernel_matmul(exec, policy, chunk, ctx, a, b, c, (n, n, n))
            }
        }
    }

    /// Checksum of the kernel's output arrays.
    pub fn checksum(&self) -> u64 {
        match self.spec.kind {
            KernelKind::Stream => {
                let all: Vec<f64> = self.state.concat();
                checksum(&all)
            }
            KernelKind::Stencil => checksum(&self.state[0]),
            KernelKind::Matmul => checksum(&self.state[2]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq() -> (ExecutionPolicy<'static>, ChunkParameter<'static>) {
        (ExecutionPolicy::Seq, ChunkParameter::DefaultChunk)
    }

    #[test]
    fn stream_hand_trace() {
        let (p, c) = seq();
        let (mut a, mut b, mut cc) = (vec![1.0], vec![0.0], vec![0.0]);
        let ctx = LoopContext::new(StaticFeatures::default(), 1);
        kernel_stream(Executor::global(), p, c, ctx, &mut a, &mut b, &mut cc, 2.0).unwrap();
        assert_eq!((a[0], b[0], cc[0]), (8.0, 2.0, 3.0));
    }

    #[test]
    fn stream_zero_stays_zero() {
        let (p, c) = seq();
        let (mut a, mut b, mut cc) = (vec![0.0; 16], vec![0.0; 16], vec![0.0; 16]);
        let ctx = LoopContext::new(StaticFeatures::default(), 1);
        kernel_stream(Executor::global(), p, c, ctx, &mut a, &mut b, &mut cc, 7.5).unwrap();
        assert!(a.iter().chain(&b).chain(&cc).all(|&v| v == 0.0));
    }

    #[test]
    fn stencil_center() {
        let (p, c) = seq();
        let mut g = vec![0.0; 9];
        g[4] = 5.0;
        let mut s = g.clone();
        let ctx = LoopContext::new(StaticFeatures::default(), 1);
        kernel_stencil2d(Executor::global(), p, c, ctx, &mut g, &mut s, 3, 3, 1).unwrap();
        assert_eq!(g[4], 1.0);
        assert_eq!(g.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn stencil_uniform_fixed_point() {
        let (p, c) = seq();
        let mut g = vec![2.5; 36];
        let mut s = g.clone();
        let ctx = LoopContext::new(StaticFeatures::default(), 1);
        kernel_stencil2d(Executor::global(), p, c, ctx, &mut g, &mut s, 6, 6, 7).unwrap();
        assert!(g.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn stencil_rejects_small_grid() {
        let (p, c) = seq();
        let mut g = vec![0.0; 6];
        let mut s = g.clone();
        let ctx = LoopContext::new(StaticFeatures::default(), 1);
        let e = kernel_stencil2d(Executor::global(), p, c, ctx, &mut g, &mut s, 2, 3, 1);
        assert!(matches!(e, Err(BenchError::InvalidGrid { .. })));
    }

    #[test]
    fn matmul_small() {
        let (p, c) = seq();
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut out = [0.0; 4];
        let ctx = LoopContext::new(StaticFeatures::default(), 1);
        kernel_matmul(Executor::global(), p, c, ctx, &a, &b, &mut out, (2, 2, 2)).unwrap();
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);

        let id = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let m: Vec<f64> = (0..9).map(|v| v as f64 * 0.5 - 1.0).collect();
        let mut out = [0.0; 9];
        let ctx = LoopContext::new(StaticFeatures::default(), 1);
        kernel_matmul(Executor::global(), p, c, ctx, &id, &m, &mut out, (3, 3, 3)).unwrap();
        assert_eq!(out.to_vec(), m);
    }

    #[test]
    fn generated_stencil_spec_matches_shipped_file() {
        assert_eq!(
            stencil_loop_spec(100),
            include_str!("../../loops/stencil.loop")
        );
        let spec = KernelSpec::stencil(102, 47).unwrap();
        assert_eq!(spec.iterations(), 45);
        let f = spec.static_features();
        assert_eq!(
            (
                f.total_ops,
                f.float_ops,
                f.comparison_ops,
                f.deepest_loop_level
            ),
            (3502, 2500, 301, 1)
        );
    }

    #[test]
    fn matmul_spec_counts() {
        let f = KernelSpec::new(KernelKind::Matmul, 10)
            .unwrap()
            .static_features();
        // per column: acc init, 10 x (mul, add, assign), store
        assert_eq!(
            (
                f.total_ops,
                f.float_ops,
                f.comparison_ops,
                f.deepest_loop_level
            ),
            (320, 320, 0, 2)
        );
    }

    #[test]
    fn workload_rerun_is_reproducible() {
        for kind in KernelKind::ALL {
            let mut w = Workload::new(KernelSpec::new(kind, 9).unwrap(), 1);
            w.run(
                Executor::global(),
                ExecutionPolicy::Seq,
                ChunkParameter::DefaultChunk,
                1,
            )
            .unwrap();
            let first = w.checksum();
            w.reset();
            w.run(
                Executor::global(),
                ExecutionPolicy::Par { threads: 3 },
                ChunkParameter::StaticChunk { size: 2 },
                3,
            )
            .unwrap();
            assert_eq!(w.checksum(), first, "{kind}");
        }
    }

    #[test]
    fn kernel_names_round_trip() {
        for k in KernelKind::ALL {
            assert_eq!(k.name().parse::<KernelKind>().unwrap(), k);
        }
        assert!(matches!(
            "fft".parse::<KernelKind>(),
            Err(BenchError::UnknownKernel(_))
        ));
    }
}
