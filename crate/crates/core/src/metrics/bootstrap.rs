use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MetricError, MetricValue};

/// Redraws allowed when a resample leaves the metric undefined.
pub const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Evaluate iterations on the rayon pool. Results do not depend on it.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { iterations: 200, seed: 0, parallel: true }
    }
}

/// Percentile bootstrap over `records`.
///
/// Iteration `i` draws from its own ChaCha stream `(seed, i)`, so serial and
/// parallel runs see identical resamples. The interval is widened when
/// needed so that it always contains the mean of the iterates.
pub fn bootstrap_ci<T, F>(
    name: &str,
    records: &[T],
    metric: F,
    config: BootstrapConfig,
) -> Result<MetricValue, MetricError>
where
    T: Sync,
    F: Fn(&[&T]) -> Result<f64, MetricError> + Sync,
{
    let n = records.len();
    if n < 2 {
        return Err(MetricError::TooFewRecords(n));
    }
    if config.iterations == 0 {
        return Err(MetricError::Undefined("bootstrap with zero iterations"));
    }
    let all: Vec<&T> = records.iter().collect();
    let estimate = metric(&all)?;

    let iteration = |i: usize| -> Result<f64, MetricError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64);
        let mut sample: Vec<&T> = Vec::with_capacity(n);
        for _ in 0..=MAX_REDRAWS {
            sample.clear();
            sample.extend((0..n).map(|_| &records[rng.random_range(0..n)]));
            match metric(&sample) {
                Err(MetricError::Undefined(_)) => continue,
                other => return other,
            }
        }
        Err(MetricError::BootstrapExhausted { metric: name.to_string(), iteration: i })
    };
    let values: Vec<f64> = if config.parallel {
        (0..config.iterations).into_par_iter().map(iteration).collect::<Result<_, _>>()?
    } else {
        (0..config.iterations).map(iteration).collect::<Result<_, _>>()?
    };

    let mean = stable_mean(values.iter().copied());
    let mut sorted = values;
    sorted.sort_by(f64::total_cmp);
    let ci_low = percentile(&sorted, 0.025).min(mean);
    let ci_high = percentile(&sorted, 0.975).max(mean);
    Ok(MetricValue {
        name: name.to_string(),
        mean,
        ci_low,
        ci_high,
        n,
        iterations: config.iterations,
        estimate,
    })
}

/// Mean about the first value, so constant data gives that value exactly.
/// Empty input gives NaN.
pub fn stable_mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = xs.into_iter();
    let Some(base) = it.next() else { return f64::NAN };
    let (sum, n) = it.fold((0.0, 1usize), |(s, n), x| (s + (x - base), n + 1));
    base + sum / n as f64
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
