//! Signal-to-noise analysis of privatized inference.
//!
//! During inference the score `C̃_s · H_q` splits into a signal term
//! `C_s · H_q ≈ N μ_c` and a noise term `η · H_q`. For bipolar queries
//! (`Δg = √D`) the noise term has standard deviation `D σ_dp`, so the
//! predicted SNR is `√T N μ_c ε / (D √(2 ln(1.25/δ)))`. Decibels are
//! `20 log10` of the linear ratio.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassModel;
use crate::dp::{self, PrivacyParams};
use crate::error::{Error, Result};
use crate::hdc::{cosine_similarity, dot};
use crate::rng::{self, Domain};

/// Empirical SNRs above this are reported as this value.
pub const SNR_DB_CAP: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub mu_c: f64,
    pub sigma_c: f64,
    /// Samples that belong to a class with at least two members.
    pub sample_count: usize,
    pub pair_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrInputs {
    pub n: usize,
    pub dim: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub passes: u32,
    pub mu_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub predicted_snr_linear: f64,
    pub predicted_snr_db: f64,
    pub empirical_snr_db: Option<f64>,
    pub inputs: SnrInputs,
}

pub fn to_db(linear: f64) -> f64 {
    20.0 * linear.log10()
}

/// Mean and population standard deviation of `H_a · H_b` over all
/// same-class pairs `a < b`, pooled across classes.
pub fn estimate_class_stats<H>(samples: &[(H, usize)]) -> Result<ClassStats>
where
    H: AsRef<[f64]> + Sync,
{
    let classes = samples.iter().map(|(_, l)| l + 1).max().unwrap_or(0);
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); classes];
    for (h, l) in samples {
        members[*l].push(h.as_ref());
    }
    let groups: Vec<&Vec<&[f64]>> = members.iter().filter(|m| m.len() >= 2).collect();
    if groups.is_empty() {
        return Err(Error::EmptyInput("no class with two or more samples"));
    }
    let (sum, sum_sq, pairs) = groups
        .par_iter()
        .flat_map_iter(|m| (0..m.len()).flat_map(move |a| (a + 1..m.len()).map(move |b| dot(m[a], m[b]))))
        .fold(|| (0.0, 0.0, 0usize), |(s, q, n), x| (s + x, q + x * x, n + 1))
        .reduce(|| (0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let mean = sum / pairs as f64;
    let var = (sum_sq / pairs as f64 - mean * mean).max(0.0);
    Ok(ClassStats {
        mu_c: mean,
        sigma_c: var.sqrt(),
        sample_count: groups.iter().map(|m| m.len()).sum(),
        pair_count: pairs,
    })
}

/// Closed-form SNR after `passes` noisy retraining passes.
pub fn predict_snr(n: usize, mu_c: f64, dim: usize, epsilon: f64, delta: f64, passes: u32) -> Result<SnrReport> {
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    if dim == 0 {
        return Err(Error::invalid("dim", "must be positive"));
    }
    if passes == 0 {
        return Err(Error::invalid("passes", "must be positive"));
    }
    if !mu_c.is_finite() || mu_c <= 0.0 {
        return Err(Error::SignalBelowChance(mu_c));
    }
    let unit = dp::calibrate_noise(1.0, delta)?;
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    let linear = f64::from(passes).sqrt() * n as f64 * mu_c * epsilon / (dim as f64 * unit);
    Ok(SnrReport {
        predicted_snr_linear: linear,
        predicted_snr_db: to_db(linear),
        empirical_snr_db: None,
        inputs: SnrInputs {
            n,
            dim,
            epsilon,
            delta,
            passes,
            mu_c,
        },
    })
}

/// Standard deviation of `η · H_q` with `η ~ N(0, (Δg σ_dp)²)` per
/// component, pooled over `trials` independent draws and all queries.
pub fn noise_similarity_std<H>(params: &PrivacyParams, queries: &[H], trials: usize, seed: u64) -> Result<f64>
where
    H: AsRef<[f64]> + Sync,
{
    let dim = match queries.first() {
        Some(q) => q.as_ref().len(),
        None => return Err(Error::EmptyInput("queries")),
    };
    if trials < 2 {
        return Err(Error::invalid("trials", "need at least 2"));
    }
    let std = params.noise_std();
    let (sum, sum_sq, n) = (0..trials)
        .into_par_iter()
        .map(|t| {
            let eta = dp::gaussian_vector(dim, seed, t as u64, std);
            let mut acc = (0.0, 0.0, 0usize);
            for q in queries {
                let v = dot(&eta, q.as_ref());
                acc = (acc.0 + v, acc.1 + v * v, acc.2 + 1);
            }
            acc
        })
        .reduce(|| (0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let mean = sum / n as f64;
    let var = (sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0);
    Ok(var.max(0.0).sqrt())
}

/// Simulated SNR in dB: mean same-class signal `C_s · H_q` over the noise
/// similarity spread. Saturates at [`SNR_DB_CAP`].
pub fn measure_empirical_snr<H>(
    model_clean: &ClassModel,
    params: &PrivacyParams,
    queries: &[(H, usize)],
    trials: usize,
) -> Result<f64>
where
    H: AsRef<[f64]> + Sync,
{
    if trials < 100 {
        return Err(Error::invalid("trials", format!("need at least 100, got {trials}")));
    }
    if queries.is_empty() {
        return Err(Error::EmptyInput("queries"));
    }
    let mut signal = 0.0;
    for (h, label) in queries {
        let h = h.as_ref();
        if h.len() != model_clean.dim() {
            return Err(Error::DimensionMismatch {
                expected: model_clean.dim(),
                actual: h.len(),
            });
        }
        let class = model_clean.classes().get(*label).ok_or(Error::LabelOutOfRange {
            label: *label,
            classes: model_clean.class_count(),
        })?;
        signal += dot(&class.components, h);
    }
    signal /= queries.len() as f64;

    let hs: Vec<&[f64]> = queries.iter().map(|(h, _)| h.as_ref()).collect();
    let noise = noise_similarity_std(
        params,
        &hs,
        trials,
        rng::child_seed(params.noise_seed, Domain::Trials, 0),
    )?;
    if noise == 0.0 {
        return Err(Error::ZeroNoise);
    }
    if signal <= 0.0 {
        return Err(Error::SignalBelowChance(signal));
    }
    Ok(to_db(signal / noise).min(SNR_DB_CAP))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

pub const HISTOGRAM_BINS: usize = 40;

/// Counts of cosine similarities in `HISTOGRAM_BINS` equal bins over `[-1, 1]`.
pub fn similarity_histogram(values: &[f64]) -> Vec<u64> {
    let mut bins = vec![0u64; HISTOGRAM_BINS];
    for &v in values {
        let pos = ((v.clamp(-1.0, 1.0) + 1.0) / 2.0 * HISTOGRAM_BINS as f64) as usize;
        bins[pos.min(HISTOGRAM_BINS - 1)] += 1;
    }
    bins
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationRow {
    pub epsilon: f64,
    pub sigma_dp: f64,
    pub stored: Summary,
    pub random: Summary,
    pub stored_histogram: Vec<u64>,
    pub random_histogram: Vec<u64>,
}

/// For every `ε`, privatizes a copy of `model` and compares the cosine
/// similarity of stored (training) samples to their noisy class hypervector
/// against that of encoded random features drawn uniformly from `[0, 1]^J`.
pub fn memorization_probe<H>(
    model: &ClassModel,
    stored: &[(H, usize)],
    epsilon_grid: &[f64],
    delta: f64,
    seed: u64,
) -> Result<Vec<MemorizationRow>>
where
    H: AsRef<[f64]> + Sync,
{
    if stored.is_empty() {
        return Err(Error::EmptyInput("stored samples"));
    }
    if epsilon_grid.is_empty() {
        return Err(Error::EmptyInput("epsilon grid"));
    }
    let basis = model.basis().generate()?;
    let mut rng = rng::stream(seed, Domain::Probe, 0);
    let random: Vec<_> = (0..stored.len())
        .map(|_| {
            let f: Vec<f64> = (0..basis.features()).map(|_| rng.random::<f64>()).collect();
            basis.encode(&f)
        })
        .collect::<Result<_>>()?;

    epsilon_grid
        .iter()
        .enumerate()
        .map(|(k, &epsilon)| {
            let params = PrivacyParams::new(
                epsilon,
                delta,
                model.sensitivity(),
                rng::child_seed(seed, Domain::Probe, k as u64),
            )?;
            let noisy = dp::privatize(model, &params)?;
            let sims = |vectors: &mut dyn Iterator<Item = (&[f64], usize)>| -> Result<Vec<f64>> {
                vectors
                    .map(|(h, label)| cosine_similarity(h, &noisy.classes()[label].components))
                    .collect()
            };
            let stored_sims = sims(&mut stored.iter().map(|(h, l)| (h.as_ref(), *l)))?;
            let random_sims = sims(&mut random.iter().zip(stored).map(|(r, (_, l))| (&r[..], *l)))?;
            Ok(MemorizationRow {
                epsilon,
                sigma_dp: params.sigma_dp,
                stored: Summary::of(&stored_sims),
                random: Summary::of(&random_sims),
                stored_histogram: similarity_histogram(&stored_sims),
                random_histogram: similarity_histogram(&random_sims),
            })
        })
        .collect()
}
