//! Inference latency measurement.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassModel;
use crate::error::{Error, Result};
use crate::snr::Summary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub dim: usize,
    pub classes: usize,
    pub queries: usize,
    pub repetitions: usize,
    pub warmup: usize,
    /// Median over repetitions of batch time divided by query count.
    pub median_per_query_s: f64,
    pub mean_per_query_s: f64,
    pub variance_per_query_s2: f64,
    pub median_batch_s: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times sequential inference over `queries`, `repetitions` times after
/// `warmup` untimed passes.
pub fn time_inference<H: AsRef<[f64]>>(
    model: &ClassModel,
    queries: &[H],
    repetitions: usize,
    warmup: usize,
) -> Result<BenchStats> {
    if queries.is_empty() {
        return Err(Error::EmptyInput("benchmark queries"));
    }
    if repetitions == 0 {
        return Err(Error::invalid("repetitions", "must be at least 1"));
    }
    let run = || -> Result<()> {
        for q in queries {
            black_box(model.infer(black_box(q.as_ref()))?);
        }
        Ok(())
    };
    for _ in 0..warmup {
        run()?;
    }
    let mut batch = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        run()?;
        batch.push(start.elapsed().as_secs_f64());
    }
    let per_query: Vec<f64> = batch.iter().map(|t| t / queries.len() as f64).collect();
    let summary = Summary::of(&per_query);
    let mut pq = per_query.clone();
    Ok(BenchStats {
        dim: model.dim(),
        classes: model.class_count(),
        queries: queries.len(),
        repetitions,
        warmup,
        median_per_query_s: median(&mut pq),
        mean_per_query_s: summary.mean,
        variance_per_query_s2: summary.std * summary.std,
        median_batch_s: median(&mut batch),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
