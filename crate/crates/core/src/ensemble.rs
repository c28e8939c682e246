//! Path ensembles: reproducible per-path RNG streams, batching, and parallel
//! execution with an order-independent merge.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to stream
//! `i`. Paths are split into contiguous batches; each batch is simulated
//! sequentially by one worker and batches are merged in index order, so
//! results are bit-identical for every thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sde::StepConfig;

pub const DEFAULT_BATCHES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub batches: usize,
    /// Worker threads; 0 means the available parallelism.
    pub threads: usize,
    pub step: StepConfig,
}

impl EnsembleConfig {
    pub fn new(paths: usize, step: StepConfig) -> Self {
        EnsembleConfig {
            paths,
            batches: DEFAULT_BATCHES,
            threads: 0,
            step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches < 2 {
            return Err(Error::InvalidArgument("need at least two batches".into()));
        }
        if self.paths < self.batches {
            return Err(Error::InvalidArgument(format!(
                "{} paths cannot fill {} batches",
                self.paths, self.batches
            )));
        }
        Ok(())
    }

    /// Path index range of batch `b`.
    pub fn batch_range(&self, b: usize) -> std::ops::Range<usize> {
        let base = self.paths / self.batches;
        let extra = self.paths % self.batches;
        let start = b * base + b.min(extra);
        let len = base + usize::from(b < extra);
        start..start + len
    }
}

pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs `per_path` over every path, accumulating into one `A` per batch.
/// Returns the batch accumulators in batch order.
pub fn run_batches<A, M, P>(cfg: &EnsembleConfig, make: M, per_path: P) -> Result<Vec<A>>
where
    A: Send,
    M: Fn() -> A + Sync,
    P: Fn(usize, &mut ChaCha8Rng, &mut A) -> Result<()> + Sync,
{
    cfg.validate()?;
    let work = |b: usize| -> Result<A> {
        let mut acc = make();
        for i in cfg.batch_range(b) {
            let mut rng = path_rng(cfg.step.seed, i);
            per_path(i, &mut rng, &mut acc)?;
        }
        Ok(acc)
    };
    let threads = if cfg.threads == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        cfg.threads
    };
    if threads <= 1 {
        return (0..cfg.batches).map(work).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| (0..cfg.batches).into_par_iter().map(work).collect())
}

/// Per-batch sums of a fixed-length vector observable.
#[derive(Clone, Debug)]
pub struct VectorSums {
    pub sum: Vec<f64>,
    pub count: usize,
}

impl VectorSums {
    pub fn new(len: usize) -> Self {
        VectorSums {
            sum: vec![0.0; len],
            count: 0,
        }
    }

    #[inline]
    pub fn add(&mut self, v: &[f64]) {
        for (s, x) in self.sum.iter_mut().zip(v) {
            *s += x;
        }
        self.count += 1;
    }
}

/// Mean and batch-means standard error from per-batch sums.
pub fn batch_means(batches: &[VectorSums]) -> (Vec<f64>, Vec<f64>, usize) {
    let len = batches.first().map(|b| b.sum.len()).unwrap_or(0);
    let total: usize = batches.iter().map(|b| b.count).sum();
    let mut mean = vec![0.0; len];
    for b in batches {
        for (m, s) in mean.iter_mut().zip(&b.sum) {
            *m += s;
        }
    }
    for m in &mut mean {
        *m /= total as f64;
    }
    let k = batches.iter().filter(|b| b.count > 0).count();
    let mut se = vec![0.0; len];
    if k >= 2 {
        for b in batches.iter().filter(|b| b.count > 0) {
            for i in 0..len {
                let d = b.sum[i] / b.count as f64 - mean[i];
                se[i] += b.count as f64 * d * d;
            }
        }
        for s in &mut se {
            *s = (*s / ((k - 1) as f64 * total as f64)).sqrt();
        }
    }
    (mean, se, total)
}

/// Monte Carlo result with a batch-means standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// `(rows, cols)`: `(1, 1)` scalar, `(N, 1)` vector, `(N, N)` matrix.
    pub shape: (usize, usize),
    /// Row-major values.
    pub value: Vec<f64>,
    pub se: Vec<f64>,
    pub n: usize,
    pub fingerprint: String,
}

impl Estimate {
    pub fn from_batches(shape: (usize, usize), batches: &[VectorSums], fingerprint: String) -> Self {
        let (value, se, n) = batch_means(batches);
        assert_eq!(value.len(), shape.0 * shape.1);
        Estimate {
            shape,
            value,
            se,
            n,
            fingerprint,
        }
    }

    pub fn scalar(value: f64, se: f64, n: usize, fingerprint: String) -> Self {
        Estimate {
            shape: (1, 1),
            value: vec![value],
            se: vec![se],
            n,
            fingerprint,
        }
    }

    pub fn mean(&self) -> f64 {
        self.value[0]
    }

    pub fn stderr(&self) -> f64 {
        self.se[0]
    }

    pub fn is_valid(&self) -> bool {
        self.value.iter().all(|v| v.is_finite()) && self.se.iter().all(|s| *s >= 0.0 && s.is_finite())
    }
}

/// Stable SHA-256 fingerprint of a serializable input description.
pub fn fingerprint<T: Serialize>(inputs: &T) -> String {
    // serde_json maps are ordered, so the canonical form is deterministic
    let value = serde_json::to_value(inputs).expect("inputs serialize to JSON");
    let text = serde_json::to_string(&value).expect("JSON value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn batches_partition_paths() {
        let cfg = EnsembleConfig {
            paths: 103,
            batches: 10,
            threads: 1,
            step: StepConfig::default(),
        };
        let mut next = 0;
        for b in 0..10 {
            let r = cfg.batch_range(b);
            assert_eq!(r.start, next);
            next = r.end;
        }
        assert_eq!(next, 103);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut cfg = EnsembleConfig::new(1000, StepConfig::default());
        let run = |cfg: &EnsembleConfig| {
            let b = run_batches(cfg, || VectorSums::new(1), |_, rng, acc| {
                acc.add(&[rng.random::<f64>()]);
                Ok(())
            })
            .unwrap();
            batch_means(&b)
        };
        cfg.threads = 1;
        let a = run(&cfg);
        cfg.threads = 3;
        let b = run(&cfg);
        assert_eq!(a.0[0].to_bits(), b.0[0].to_bits());
        assert_eq!(a.1[0].to_bits(), b.1[0].to_bits());
    }

    #[test]
    fn batch_means_of_constant_have_zero_error() {
        let b: Vec<VectorSums> = (0..4)
            .map(|_| {
                let mut v = VectorSums::new(1);
                v.add(&[2.0]);
                v.add(&[2.0]);
                v
            })
            .collect();
        let (m, se, n) = batch_means(&b);
        assert_eq!((m[0], se[0], n), (2.0, 0.0, 8));
    }

    #[test]
    fn fingerprint_is_stable() {
        let cfg = EnsembleConfig::new(10, StepConfig::default());
        assert_eq!(fingerprint(&cfg), fingerprint(&cfg.clone()));
        let mut other = cfg;
        other.paths = 11;
        assert_ne!(fingerprint(&cfg), fingerprint(&other));
    }

    #[test]
    fn too_few_paths_is_an_error() {
        let cfg = EnsembleConfig::new(5, StepConfig::default());
        assert!(run_batches(&cfg, || 0u32, |_, _, _| Ok(())).is_err());
    }
}
