//! Inference-time defense: zero hypervector dimensions by their variance
//! over a calibration corpus.

use serde::{Deserialize, Serialize};

use crate::attack::{decode_grouped, reconstruction_metrics};
use crate::classifier::ClassModel;
use crate::error::{Error, Result};
use crate::hdc::{EncodedHypervector, RandomBasis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRanking {
    pub variances: Vec<f64>,
    /// Dimensions sorted by ascending variance, ties by index.
    pub order: Vec<usize>,
    pub corpus_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropMode {
    Low,
    High,
}

impl std::fmt::Display for DropMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DropMode::Low => "low",
            DropMode::High => "high",
        })
    }
}

impl std::str::FromStr for DropMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(DropMode::Low),
            "high" => Ok(DropMode::High),
            other => Err(Error::invalid(
                "mode",
                format!("expected `low` or `high`, got `{other}`"),
            )),
        }
    }
}

/// Per-dimension sample variance (two-pass) over the corpus.
pub fn rank_dimension_variance<H: AsRef<[f64]>>(queries: &[H]) -> Result<VarianceRanking> {
    if queries.len() < 2 {
        return Err(Error::invalid("queries", "need at least 2 to estimate variance"));
    }
    let dim = queries[0].as_ref().len();
    let mut mean = vec![0.0; dim];
    for q in queries {
        let q = q.as_ref();
        if q.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: q.len(),
            });
        }
        mean.iter_mut().zip(q).for_each(|(m, x)| *m += x);
    }
    let n = queries.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut variances = vec![0.0; dim];
    for q in queries {
        for ((v, x), m) in variances.iter_mut().zip(q.as_ref()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    variances.iter_mut().for_each(|v| *v /= n - 1.0);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| variances[a].total_cmp(&variances[b]));
    Ok(VarianceRanking {
        variances,
        order,
        corpus_size: queries.len(),
    })
}

fn drop_count(fraction: f64, dim: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(
            "fraction",
            format!("must lie in [0, 1), got {fraction}"),
        ));
    }
    Ok((fraction * dim as f64).floor() as usize)
}

/// Zeroes the `floor(fraction·D)` lowest- or highest-variance dimensions.
pub fn drop_dimensions(
    query: &[f64],
    ranking: &VarianceRanking,
    fraction: f64,
    mode: DropMode,
) -> Result<EncodedHypervector> {
    if query.len() != ranking.order.len() {
        return Err(Error::DimensionMismatch {
            expected: ranking.order.len(),
            actual: query.len(),
        });
    }
    let count = drop_count(fraction, query.len())?;
    let mut out = query.to_vec();
    let dims: Box<dyn Iterator<Item = &usize>> = match mode {
        DropMode::Low => Box::new(ranking.order.iter().take(count)),
        DropMode::High => Box::new(ranking.order.iter().rev().take(count)),
    };
    for &i in dims {
        out[i] = 0.0;
    }
    EncodedHypervector::new(out)
}

pub fn drop_low_variance(query: &[f64], ranking: &VarianceRanking, fraction: f64) -> Result<EncodedHypervector> {
    drop_dimensions(query, ranking, fraction, DropMode::Low)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub fraction: f64,
    pub mode: DropMode,
    pub accuracy: f64,
    /// Mean attacker NMSE over the queries.
    pub nmse: f64,
}

/// Masked-query accuracy and attacker NMSE for every (fraction, mode).
/// The attacker runs the grouped decoder with `groups` groups.
#[allow(clippy::too_many_arguments)]
pub fn privacy_utility_curve<H: AsRef<[f64]>>(
    model: &ClassModel,
    queries: &[(H, usize)],
    truth_features: &[Vec<f64>],
    basis: &RandomBasis,
    ranking: &VarianceRanking,
    fractions: &[f64],
    modes: &[DropMode],
    groups: usize,
) -> Result<Vec<CurveRow>> {
    if fractions.is_empty() || modes.is_empty() {
        return Err(Error::EmptyInput("fraction grid"));
    }
    if queries.is_empty() {
        return Err(Error::EmptyInput("queries"));
    }
    if queries.len() != truth_features.len() {
        return Err(Error::DimensionMismatch {
            expected: queries.len(),
            actual: truth_features.len(),
        });
    }
    let mut rows = Vec::with_capacity(fractions.len() * modes.len());
    for &fraction in fractions {
        for &mode in modes {
            let mut correct = 0usize;
            let mut nmse = 0.0;
            for ((q, label), truth) in queries.iter().zip(truth_features) {
                let masked = drop_dimensions(q.as_ref(), ranking, fraction, mode)?;
                if model.infer(&masked)?.label == *label {
                    correct += 1;
                }
                let decoded = decode_grouped(&masked, basis, groups)?;
                nmse += reconstruction_metrics(truth, &decoded.reconstructed, None)?.nmse;
            }
            let n = queries.len() as f64;
            rows.push(CurveRow {
                fraction,
                mode,
                accuracy: correct as f64 / n,
                nmse: nmse / n,
            });
        }
    }
    Ok(rows)
}
