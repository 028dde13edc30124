//! Model inversion: recover feature vectors from (noisy) hypervectors.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdc::{check_finite, RandomBasis};

/// Groups whose J×J block has a larger condition number are skipped.
pub const MAX_CONDITION: f64 = 1e8;
/// PSNR reported for an exact reconstruction.
pub const PSNR_CAP_DB: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub reconstructed: Vec<f64>,
    pub groups_used: usize,
    pub nmse: Option<f64>,
    pub psnr_db: Option<f64>,
    pub noise_sigma_used: f64,
}

impl AttackResult {
    /// Fills in the reconstruction metrics against the true features.
    pub fn scored(mut self, truth: &[f64], image_shape: Option<(u32, u32)>) -> Result<Self> {
        let m = reconstruction_metrics(truth, &self.reconstructed, image_shape)?;
        self.nmse = Some(m.nmse);
        self.psnr_db = Some(m.psnr_db);
        Ok(self)
    }

    pub fn with_noise_sigma(mut self, sigma: f64) -> Self {
        self.noise_sigma_used = sigma;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMetrics {
    pub nmse: f64,
    pub psnr_db: f64,
}

/// Difference of two class hypervectors. When the models differ by one
/// bundled sample this is that sample's hypervector plus both noise draws.
pub fn class_diff_attack(c1: &[f64], c2: &[f64]) -> Result<Vec<f64>> {
    if c1.len() != c2.len() {
        return Err(Error::DimensionMismatch {
            expected: c1.len(),
            actual: c2.len(),
        });
    }
    Ok(c1.iter().zip(c2).map(|(a, b)| a - b).collect())
}

/// Encoding arguments recovered from `h`: `arccos(clamp(h_i)) - u_i`.
fn recovered_arguments(h: &[f64], basis: &RandomBasis) -> Result<Vec<f64>> {
    if h.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            actual: h.len(),
        });
    }
    check_finite(h)?;
    Ok(h.iter()
        .zip(basis.phases())
        .map(|(&x, &u)| x.clamp(-1.0, 1.0).acos() - u)
        .collect())
}

/// Correlation decoder: `f_j = Σ_i B_ij v_i / (D σ_b²)`.
///
/// Approximate; the cross terms between basis columns leave an error that
/// shrinks like `√(J/D)`.
pub fn decode_linear(h: &[f64], basis: &RandomBasis) -> Result<Vec<f64>> {
    let v = recovered_arguments(h, basis)?;
    let j = basis.features();
    let mut f = vec![0.0; j];
    for (i, vi) in v.iter().enumerate() {
        for (fj, b) in f.iter_mut().zip(basis.row(i)) {
            *fj += b * vi;
        }
    }
    let scale = basis.dim() as f64 * basis.sigma_b() * basis.sigma_b();
    f.iter_mut().for_each(|x| *x /= scale);
    Ok(f)
}

/// How per-group solutions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupWeighting {
    /// Plain mean of the group solutions.
    #[default]
    Uniform,
    /// Each group weighted by `1 / tr((AᵀA)⁻¹)`, the inverse of its noise
    /// gain. Near-singular blocks otherwise dominate the mean: the inverse
    /// of a square Gaussian matrix has a heavy (Cauchy-like) tail, so the
    /// plain mean does not shrink like `1/√K`.
    InverseVariance,
}

/// Splits the first `K·J` dimensions into `K` blocks of `J` rows, solves
/// each block exactly and averages the well-conditioned solutions.
pub fn decode_grouped(h: &[f64], basis: &RandomBasis, groups: usize) -> Result<AttackResult> {
    decode_grouped_with(h, basis, groups, GroupWeighting::Uniform)
}

pub fn decode_grouped_with(
    h: &[f64],
    basis: &RandomBasis,
    groups: usize,
    weighting: GroupWeighting,
) -> Result<AttackResult> {
    let j = basis.features();
    if groups == 0 {
        return Err(Error::invalid("groups", "must be at least 1"));
    }
    if groups * j > basis.dim() {
        return Err(Error::invalid(
            "groups",
            format!("{groups} groups of {j} rows exceed dimension {}", basis.dim()),
        ));
    }
    let v = recovered_arguments(h, basis)?;
    let solutions: Vec<Option<(f64, Vec<f64>)>> = (0..groups)
        .into_par_iter()
        .map(|g| {
            let rows = g * j..(g + 1) * j;
            let a = DMatrix::from_row_slice(j, j, &basis.rows()[rows.start * j..rows.end * j]);
            let sv = a.singular_values();
            let (max, min) = (sv.max(), sv.min());
            if min.is_nan() || min <= 0.0 || max / min > MAX_CONDITION {
                return None;
            }
            let weight = match weighting {
                GroupWeighting::Uniform => 1.0,
                GroupWeighting::InverseVariance => 1.0 / sv.iter().map(|s| 1.0 / (s * s)).sum::<f64>(),
            };
            let rhs = DVector::from_column_slice(&v[rows]);
            a.lu().solve(&rhs).map(|x| (weight, x.as_slice().to_vec()))
        })
        .collect();
    let mut sum = vec![0.0; j];
    let mut total = 0.0;
    let mut used = 0;
    for (w, s) in solutions.into_iter().flatten() {
        used += 1;
        total += w;
        sum.iter_mut().zip(&s).for_each(|(acc, x)| *acc += w * x);
    }
    if used == 0 {
        return Err(Error::AllGroupsIllConditioned);
    }
    Ok(AttackResult {
        reconstructed: sum.into_iter().map(|x| x / total).collect(),
        groups_used: used,
        nmse: None,
        psnr_db: None,
        noise_sigma_used: 0.0,
    })
}

/// NMSE and PSNR with a peak value of 1. An exact match reports
/// [`PSNR_CAP_DB`].
pub fn reconstruction_metrics(
    truth: &[f64],
    estimate: &[f64],
    image_shape: Option<(u32, u32)>,
) -> Result<ReconstructionMetrics> {
    if truth.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: estimate.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("truth"));
    }
    if let Some((h, w)) = image_shape {
        if (h as usize) * (w as usize) != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: (h as usize) * (w as usize),
                actual: truth.len(),
            });
        }
    }
    let err: f64 = truth.iter().zip(estimate).map(|(t, e)| (t - e) * (t - e)).sum();
    let energy: f64 = truth.iter().map(|t| t * t).sum();
    if energy == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    let mse = err / truth.len() as f64;
    let psnr_db = if mse > 0.0 {
        (20.0 * (1.0 / mse.sqrt()).log10()).min(PSNR_CAP_DB)
    } else {
        PSNR_CAP_DB
    };
    Ok(ReconstructionMetrics {
        nmse: err / energy,
        psnr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdc::{BasisDescriptor, PhaseMode};

    fn zero_phase_basis(j: usize, d: usize, sigma_b: f64, seed: u64) -> RandomBasis {
        BasisDescriptor::new(j, d, sigma_b, seed)
            .unwrap()
            .with_phase_mode(PhaseMode::Zero)
            .generate()
            .unwrap()
    }

    #[test]
    fn diff_of_noiseless_models_is_the_sample() {
        let h = [0.3, -0.2, 0.9];
        let c2 = [1.0, 2.0, -1.0];
        let c1: Vec<f64> = c2.iter().zip(&h).map(|(a, b)| a + b).collect();
        let d = class_diff_attack(&c1, &c2).unwrap();
        for (a, b) in d.iter().zip(&h) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(class_diff_attack(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn all_ones_decodes_to_zero() {
        let basis = zero_phase_basis(3, 50, 0.1, 1);
        let f = decode_linear(&vec![1.0; 50], &basis).unwrap();
        assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn clamping_avoids_nan() {
        let basis = zero_phase_basis(2, 10, 0.1, 1);
        let mut h = vec![0.5; 10];
        h[0] = 1.0 + 1e-15;
        h[1] = -1.0 - 1e-15;
        assert!(decode_linear(&h, &basis).unwrap().iter().all(|x| x.is_finite()));
        assert!(decode_grouped(&h, &basis, 5)
            .unwrap()
            .reconstructed
            .iter()
            .all(|x| x.is_finite()));
    }

    #[test]
    fn grouped_decode_is_exact_in_principal_branch() {
        let basis = BasisDescriptor::new(4, 400, 0.1, 9)
            .unwrap()
            .with_phase_mode(PhaseMode::Centered)
            .generate()
            .unwrap();
        let f = [0.2, 0.9, 0.5, 0.1];
        let h = basis.encode(&f).unwrap();
        let r = decode_grouped(&h, &basis, 100).unwrap();
        assert_eq!(r.groups_used, 100);
        for (a, b) in r.reconstructed.iter().zip(&f) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(decode_grouped(&h, &basis, 101).is_err());
        assert!(decode_grouped(&h, &basis, 0).is_err());
    }

    #[test]
    fn metrics_by_hand() {
        let truth = [0.0, 0.5, 1.0, 0.5];
        let est = [0.1, 0.5, 0.8, 0.5];
        let m = reconstruction_metrics(&truth, &est, Some((2, 2))).unwrap();
        // squared error 0.01 + 0.04 = 0.05; energy 1.5; mse 0.0125
        assert!((m.nmse - 0.05 / 1.5).abs() < 1e-12);
        assert!((m.psnr_db - 20.0 * (1.0 / 0.0125f64.sqrt()).log10()).abs() < 1e-12);
        let exact = reconstruction_metrics(&truth, &truth, None).unwrap();
        assert_eq!((exact.nmse, exact.psnr_db), (0.0, PSNR_CAP_DB));
        assert_eq!(reconstruction_metrics(&truth, &[0.0; 4], None).unwrap().nmse, 1.0);
        assert!(reconstruction_metrics(&[0.0; 2], &[1.0; 2], None).is_err());
        assert!(reconstruction_metrics(&truth, &est, Some((3, 2))).is_err());
    }
}
