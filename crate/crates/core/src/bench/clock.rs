use std::fmt;
use std::path::Path;
use std::time::Instant;

use super::BenchError;

/// Identifies one timed configuration.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RunKey {
    pub kernel: String,
    pub size: usize,
    pub threads: usize,
    /// `policy`, `chunk` or `prefetch`.
    pub dimension: String,
    /// Candidate label; adaptive runs use the label the model picked.
    pub config: String,
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.kernel, self.size, self.threads, self.dimension, self.config
        )
    }
}

/// Source of run times. `run` must be executed exactly once per call.
pub trait Clock {
    fn time(&self, key: &RunKey, run: &mut dyn FnMut()) -> Result<f64, BenchError>;
}

/// Wall-clock seconds from the monotonic clock.
#[derive(Clone, Copy, Debug, Default)]
pub struct RealClock;

impl Clock for RealClock {
    fn time(&self, _key: &RunKey, run: &mut dyn FnMut()) -> Result<f64, BenchError> {
        let start = Instant::now();
        run();
        Ok(start.elapsed().as_secs_f64().max(1e-9))
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Rule {
    fields: [Option<String>; 5],
    seconds: f64,
}

/// Table-driven clock: runs the kernel, then reports the time of the first
/// matching rule.
///
/// One rule per line, `kernel size threads dimension config seconds`, where
/// any of the first five fields may be `*`. Blank lines and `#` comments are
/// ignored. A key with no matching rule is an error.
#[derive(Clone, Debug, PartialEq)]
pub struct FakeClock {
    rules: Vec<Rule>,
}

impl FakeClock {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| BenchError::FakeClock {
                line: i + 1,
                message,
            };
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 6 {
                return Err(err(format!("expected 6 fields, found {}", parts.len())));
            }
            for (idx, name) in [(1, "size"), (2, "threads")] {
                if parts[idx] != "*" && parts[idx].parse::<usize>().is_err() {
                    return Err(err(format!("{name} must be an integer or `*`")));
                }
            }
            let seconds: f64 = parts[5]
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite() && *s > 0.0)
                .ok_or_else(|| err(format!("`{}` is not a positive time", parts[5])))?;
            let fields = std::array::from_fn(|k| match parts[k] {
                "*" => None,
                s => Some(s.to_string()),
            });
            rules.push(Rule { fields, seconds });
        }
        Ok(FakeClock { rules })
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn lookup(&self, key: &RunKey) -> Option<f64> {
        let values = [
            key.kernel.clone(),
            key.size.to_string(),
            key.threads.to_string(),
            key.dimension.clone(),
            key.config.clone(),
        ];
        self.rules
            .iter()
            .find(|r| {
                r.fields
                    .iter()
                    .zip(&values)
                    .all(|(f, v)| f.as_ref().is_none_or(|f| f == v))
            })
            .map(|r| r.seconds)
    }
}

impl Clock for FakeClock {
    fn time(&self, key: &RunKey, run: &mut dyn FnMut()) -> Result<f64, BenchError> {
        run();
        self.lookup(key)
            .ok_or_else(|| BenchError::FakeClockMiss(key.to_string()))
    }
}

/// Median of `samples`; the mean of the two middle values for even counts.
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "median of no samples");
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    }
}
