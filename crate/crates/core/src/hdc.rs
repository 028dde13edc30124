//! Random-basis generation, cosine encoding, and similarity primitives.
//!
//! A sample `F` of length `J` is mapped to a hypervector of length `D` with
//! `h_i = cos(F · B_i + u_i)`, where the rows `B_i` are i.i.d. `N(0, σ_b²)`
//! and the phases `u_i` are i.i.d. uniform on `[0, 2π)`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::ops::Deref;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

const PHASE_BLOCK: usize = 1024;

/// A raw input sample, optionally labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Option<usize>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("feature vector"));
        }
        check_finite(&values)?;
        Ok(Self { values, label: None })
    }

    pub fn labeled(values: Vec<f64>, label: usize) -> Result<Self> {
        let mut f = Self::new(values)?;
        f.label = Some(label);
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How the per-dimension phase offsets are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMode {
    /// `u_i ~ U[0, 2π)`, the standard encoder.
    #[default]
    Uniform,
    /// `u_i = 0`.
    Zero,
    /// `u_i = π/2`; keeps small arguments inside the principal branch of arccos.
    Centered,
}

/// Everything needed to regenerate a basis. This is what gets persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub seed: u64,
    pub phase_seed: u64,
    pub dim: usize,
    pub features: usize,
    pub sigma_b: f64,
    #[serde(default)]
    pub phase_mode: PhaseMode,
}

impl BasisDescriptor {
    pub fn new(features: usize, dim: usize, sigma_b: f64, seed: u64) -> Result<Self> {
        if features == 0 {
            return Err(Error::invalid("features", "must be at least 1"));
        }
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if !sigma_b.is_finite() || sigma_b <= 0.0 {
            return Err(Error::invalid(
                "sigma_b",
                format!("must be positive and finite, got {sigma_b}"),
            ));
        }
        Ok(Self {
            seed,
            phase_seed: rng::child_seed(seed, Domain::BasisPhases, 0),
            dim,
            features,
            sigma_b,
            phase_mode: PhaseMode::Uniform,
        })
    }

    pub fn with_phase_mode(mut self, mode: PhaseMode) -> Self {
        self.phase_mode = mode;
        self
    }

    pub fn generate(&self) -> Result<RandomBasis> {
        // re-validate: descriptors can arrive from deserialized files
        Self::new(self.features, self.dim, self.sigma_b, self.seed)?;
        let (dim, features, sigma_b) = (self.dim, self.features, self.sigma_b);

        let mut rows = vec![0.0; dim * features];
        rows.par_chunks_mut(features).enumerate().for_each(|(i, row)| {
            let mut rng = rng::stream(self.seed, Domain::BasisRows, i as u64);
            for x in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x = z * sigma_b;
            }
        });

        let mut phases = vec![0.0; dim];
        match self.phase_mode {
            PhaseMode::Uniform => {
                phases
                    .par_chunks_mut(PHASE_BLOCK)
                    .enumerate()
                    .for_each(|(block, chunk)| {
                        let mut rng = rng::stream(self.phase_seed, Domain::BasisPhases, block as u64);
                        for u in chunk.iter_mut() {
                            let p = rng.random::<f64>() * TAU;
                            *u = if p >= TAU { 0.0 } else { p };
                        }
                    });
            }
            PhaseMode::Zero => {}
            PhaseMode::Centered => phases.fill(FRAC_PI_2),
        }

        Ok(RandomBasis {
            descriptor: self.clone(),
            rows,
            phases,
        })
    }
}

/// `D` projection rows of length `J` plus `D` phase offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomBasis {
    descriptor: BasisDescriptor,
    rows: Vec<f64>,
    phases: Vec<f64>,
}

/// Generates the standard (uniform-phase) basis.
pub fn generate_basis(features: usize, dim: usize, sigma_b: f64, seed: u64) -> Result<RandomBasis> {
    BasisDescriptor::new(features, dim, sigma_b, seed)?.generate()
}

impl RandomBasis {
    pub fn descriptor(&self) -> &BasisDescriptor {
        &self.descriptor
    }

    pub fn dim(&self) -> usize {
        self.descriptor.dim
    }

    pub fn features(&self) -> usize {
        self.descriptor.features
    }

    pub fn sigma_b(&self) -> f64 {
        self.descriptor.sigma_b
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let j = self.features();
        &self.rows[i * j..(i + 1) * j]
    }

    /// Row-major `D × J` matrix.
    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// The argument `F · B_i + u_i` of every cosine.
    pub fn arguments(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.features() {
            return Err(Error::DimensionMismatch {
                expected: self.features(),
                actual: features.len(),
            });
        }
        check_finite(features)?;
        Ok((0..self.dim())
            .map(|i| dot(features, self.row(i)) + self.phases[i])
            .collect())
    }

    pub fn encode(&self, features: &[f64]) -> Result<EncodedHypervector> {
        let mut args = self.arguments(features)?;
        for a in args.iter_mut() {
            *a = a.cos();
        }
        Ok(EncodedHypervector(args))
    }

    pub fn encode_batch<F>(&self, batch: &[F]) -> Result<Vec<EncodedHypervector>>
    where
        F: AsRef<[f64]> + Sync,
    {
        batch.par_iter().map(|f| self.encode(f.as_ref())).collect()
    }
}

/// Convenience wrapper over [`RandomBasis::encode`].
pub fn encode(features: &FeatureVector, basis: &RandomBasis) -> Result<EncodedHypervector> {
    basis.encode(&features.values)
}

/// Encoded sample, every component in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EncodedHypervector(Vec<f64>);

impl EncodedHypervector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        for (index, &c) in components.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinite { index });
            }
            if !(-1.0..=1.0).contains(&c) {
                return Err(Error::invalid(
                    "components",
                    format!("component {index} = {c} outside [-1, 1]"),
                ));
            }
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for EncodedHypervector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for EncodedHypervector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Bipolar hypervector, every component exactly `±1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuantizedHypervector(Vec<f64>);

impl QuantizedHypervector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl Deref for QuantizedHypervector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for QuantizedHypervector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<QuantizedHypervector> for EncodedHypervector {
    fn from(q: QuantizedHypervector) -> Self {
        EncodedHypervector(q.0)
    }
}

/// Component-wise sign with `sign(0) = +1`.
pub fn quantize(h: &[f64]) -> QuantizedHypervector {
    QuantizedHypervector(h.iter().map(|&x| if x < 0.0 { -1.0 } else { 1.0 }).collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Length-checked dot product: the inference fast path.
pub fn checked_dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(dot(a, b))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    let d = checked_dot(a, b)?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(d / (na * nb))
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn basis_shape_and_spread() {
        let b = generate_basis(2, 4, 0.22, 7).unwrap();
        assert_eq!(b.rows().len(), 8);
        assert_eq!(b.phases().len(), 4);
        assert!(b.phases().iter().all(|&u| (0.0..TAU).contains(&u)));

        let big = generate_basis(2, 20_000, 0.22, 7).unwrap();
        let n = big.rows().len() as f64;
        let mean = big.rows().iter().sum::<f64>() / n;
        let sd = (big.rows().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 0.22).abs() < 0.005, "sd = {sd}");
    }

    #[test]
    fn basis_is_bit_reproducible() {
        let a = generate_basis(3, 100, 0.5, 99).unwrap();
        let b = generate_basis(3, 100, 0.5, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_basis(3, 100, 0.5, 100).unwrap();
        assert_ne!(a.rows(), c.rows());
    }

    #[test]
    fn basis_prefix_is_stable_across_dimensions() {
        // element (i, j) depends only on (seed, i, j)
        let small = generate_basis(4, 10, 1.0, 5).unwrap();
        let large = generate_basis(4, 3000, 1.0, 5).unwrap();
        assert_eq!(small.rows(), &large.rows()[..40]);
        assert_eq!(small.phases(), &large.phases()[..10]);
    }

    #[test]
    fn unit_sigma_row_std() {
        let b = generate_basis(10, 10_000, 1.0, 1).unwrap();
        let n = b.rows().len() as f64;
        let mean = b.rows().iter().sum::<f64>() / n;
        let sd = (b.rows().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.97..=1.03).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn rejects_bad_basis_parameters() {
        assert!(generate_basis(0, 4, 1.0, 0).is_err());
        assert!(generate_basis(2, 0, 1.0, 0).is_err());
        assert!(generate_basis(2, 4, 0.0, 0).is_err());
        assert!(generate_basis(2, 4, -1.0, 0).is_err());
        assert!(generate_basis(2, 4, f64::NAN, 0).is_err());
        assert!(generate_basis(2, 4, f64::INFINITY, 0).is_err());
    }

    #[test]
    fn zero_features_zero_phase_encode_to_ones() {
        let b = BasisDescriptor::new(3, 16, 1.0, 4)
            .unwrap()
            .with_phase_mode(PhaseMode::Zero)
            .generate()
            .unwrap();
        let h = b.encode(&[0.0; 3]).unwrap();
        assert!(h.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn cos_of_half_pi() {
        let b = BasisDescriptor::new(1, 1, 1.0, 0)
            .unwrap()
            .with_phase_mode(PhaseMode::Zero)
            .generate()
            .unwrap();
        let x = PI / 2.0 / b.row(0)[0];
        let h = b.encode(&[x]).unwrap();
        assert!(h[0].abs() < 1e-15);
    }

    #[test]
    fn encode_rejects_bad_features() {
        let b = generate_basis(3, 8, 1.0, 0).unwrap();
        assert!(matches!(
            b.encode(&[0.0; 2]),
            Err(Error::DimensionMismatch { expected: 3, actual: 2 })
        ));
        assert!(matches!(
            b.encode(&[0.0, f64::NAN, 0.0]),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn cosine_basics() {
        let v = [0.3, -2.0, 5.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::UndefinedSimilarity)
        ));
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn quantize_rules() {
        assert_eq!(&*quantize(&[0.5, -0.3]), &[1.0, -1.0]);
        assert!(quantize(&[0.0; 5]).iter().all(|&x| x == 1.0));
        let q = quantize(&vec![-0.25; 100]);
        assert_eq!(norm(&q), 10.0);
    }

    #[test]
    fn encoded_range_is_validated() {
        assert!(EncodedHypervector::new(vec![1.0, -1.0, 0.2]).is_ok());
        assert!(EncodedHypervector::new(vec![1.0 + 1e-12]).is_err());
        assert!(EncodedHypervector::new(vec![f64::NAN]).is_err());
    }
}
