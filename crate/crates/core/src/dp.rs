//! Gaussian mechanism on class hypervectors.
//!
//! Noise `N(0, Δg² σ_dp²)` is added to every component of every class
//! hypervector, with `σ_dp = √(2 ln(1.25/δ)) / ε` and `Δg` the largest
//! encoded-sample norm in the training batch.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassModel;
use crate::error::{Error, Result};
use crate::hdc::norm;
use crate::rng::{self, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma_dp: f64,
    pub sensitivity: f64,
    pub passes: u32,
    pub noise_seed: u64,
}

impl PrivacyParams {
    /// Calibrated parameters for a single noise pass.
    pub fn new(epsilon: f64, delta: f64, sensitivity: f64, noise_seed: u64) -> Result<Self> {
        let sigma_dp = calibrate_noise(epsilon, delta)?;
        if !sensitivity.is_finite() || sensitivity < 0.0 {
            return Err(Error::invalid(
                "sensitivity",
                format!("must be finite and non-negative, got {sensitivity}"),
            ));
        }
        Ok(Self {
            epsilon,
            delta,
            sigma_dp,
            sensitivity,
            passes: 1,
            noise_seed,
        })
    }

    /// Parameters for a prescribed noise multiplier; `ε` is the budget that
    /// multiplier buys at `δ`.
    pub fn from_noise_multiplier(sigma_dp: f64, delta: f64, sensitivity: f64, noise_seed: u64) -> Result<Self> {
        if !sigma_dp.is_finite() || sigma_dp <= 0.0 {
            return Err(Error::invalid("sigma_dp", format!("must be positive, got {sigma_dp}")));
        }
        let epsilon = calibrate_noise(1.0, delta)? / sigma_dp;
        let mut p = Self::new(epsilon, delta, sensitivity, noise_seed)?;
        p.sigma_dp = sigma_dp;
        Ok(p)
    }

    pub fn with_passes(mut self, passes: u32) -> Self {
        self.passes = passes;
        self
    }

    /// Per-component noise standard deviation of one pass.
    pub fn noise_std(&self) -> f64 {
        self.sensitivity * self.sigma_dp
    }

    /// `δ < 1/N` for the dataset the model is trained on.
    pub fn satisfies_precondition(&self, dataset_size: usize) -> bool {
        check_dp_precondition(self.delta, dataset_size)
    }
}

/// `Δg = max_n ‖H_n‖`.
pub fn compute_sensitivity<'a, I>(samples: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut max: Option<f64> = None;
    for h in samples {
        let n = norm(h);
        max = Some(max.map_or(n, |m| m.max(n)));
    }
    max.ok_or(Error::EmptyInput("sensitivity samples"))
}

/// `σ_dp = √(2 ln(1.25/δ)) / ε`, the boundary of the Gaussian-mechanism bound.
pub fn calibrate_noise(epsilon: f64, delta: f64) -> Result<f64> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

pub fn check_dp_precondition(delta: f64, dataset_size: usize) -> bool {
    dataset_size >= 1 && delta < 1.0 / dataset_size as f64
}

/// Fills `out` with `N(0, std²)` draws from stream `index` of `seed`.
pub fn fill_gaussian(out: &mut [f64], seed: u64, index: u64, std: f64) {
    let mut rng = rng::stream(seed, Domain::PrivacyNoise, index);
    for x in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x = z * std;
    }
}

pub fn gaussian_vector(len: usize, seed: u64, index: u64, std: f64) -> Vec<f64> {
    let mut v = vec![0.0; len];
    fill_gaussian(&mut v, seed, index, std);
    v
}

fn pass_seed(noise_seed: u64, pass: u32) -> u64 {
    rng::child_seed(noise_seed, Domain::PrivacyNoise, u64::from(pass))
}

fn add_noise(model: &mut ClassModel, params: &PrivacyParams, pass: u32) {
    let seed = pass_seed(params.noise_seed, pass);
    let std = params.noise_std();
    let dim = model.dim();
    let noise: Vec<Vec<f64>> = (0..model.class_count())
        .into_par_iter()
        .map(|s| gaussian_vector(dim, seed, s as u64, std))
        .collect();
    for (s, eta) in noise.into_iter().enumerate() {
        for (c, e) in model.class_mut(s).iter_mut().zip(eta) {
            *c += e;
        }
    }
    model.refresh_norms();
}

fn check_private_inputs(model: &ClassModel, params: &PrivacyParams) -> Result<()> {
    if model.is_privatized() {
        return Err(Error::AlreadyPrivatized);
    }
    if params.sensitivity.is_nan() || params.sensitivity <= 0.0 {
        return Err(Error::ZeroSensitivity(params.sensitivity));
    }
    calibrate_noise(params.epsilon, params.delta)?;
    if !(params.sigma_dp.is_finite() && params.sigma_dp > 0.0) {
        return Err(Error::invalid(
            "sigma_dp",
            format!("must be positive, got {}", params.sigma_dp),
        ));
    }
    Ok(())
}

/// `C̃_s = C_s + N(0, Δg² σ_dp²)` for every class; deterministic given the noise seed.
pub fn privatize(model: &ClassModel, params: &PrivacyParams) -> Result<ClassModel> {
    check_private_inputs(model, params)?;
    let mut out = model.clone();
    add_noise(&mut out, params, 0);
    out.mark_private(params.clone().with_passes(1), 0);
    Ok(out)
}

/// `passes` retraining epochs with fresh noise after each one, so the noise
/// accumulated on every component has standard deviation `√T · Δg · σ_dp`.
/// Passes after the first retrain against the already-noised model.
pub fn retrain_private<H>(
    model: &ClassModel,
    samples: &[(H, usize)],
    passes: u32,
    params: &PrivacyParams,
) -> Result<ClassModel>
where
    H: AsRef<[f64]>,
{
    if passes == 0 {
        return Err(Error::invalid("passes", "must be at least 1"));
    }
    check_private_inputs(model, params)?;
    let mut out = model.clone();
    for pass in 0..passes {
        out.retrain_pass(samples)?;
        add_noise(&mut out, params, pass);
    }
    out.mark_private(params.clone().with_passes(passes), passes);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train, ClassHypervector};
    use crate::hdc::{quantize, BasisDescriptor};

    fn two_class(dim: usize) -> ClassModel {
        let mut a = vec![0.0; dim];
        a[0] = 1.0;
        let mut b = vec![0.0; dim];
        b[1 % dim] = 1.0;
        ClassModel::from_parts(
            vec![
                ClassHypervector {
                    class_id: 0,
                    bundled_count: 1,
                    components: a,
                },
                ClassHypervector {
                    class_id: 1,
                    bundled_count: 1,
                    components: b,
                },
            ],
            BasisDescriptor::new(1, dim, 1.0, 0).unwrap(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn sensitivity_of_bipolar_vectors() {
        let qs: Vec<_> = (0..5)
            .map(|i| quantize(&vec![if i % 2 == 0 { 1.0 } else { -1.0 }; 100]))
            .collect();
        assert_eq!(compute_sensitivity(qs.iter().map(|q| &q[..])).unwrap(), 10.0);
        assert_eq!(compute_sensitivity([&[0.0, 0.0][..]]).unwrap(), 0.0);
        assert!(compute_sensitivity(std::iter::empty::<&[f64]>()).is_err());
    }

    #[test]
    fn calibration_values_and_domain() {
        let s1 = calibrate_noise(1.0, 1e-4).unwrap();
        assert!((s1 - 4.3436).abs() < 1e-4, "{s1}");
        let s2 = calibrate_noise(2.0, 1e-4).unwrap();
        assert!((s1 / s2 - 2.0).abs() < 1e-15);
        assert!(calibrate_noise(1.0, 1.25).is_err());
        assert!(calibrate_noise(0.0, 1e-4).is_err());
        assert!(calibrate_noise(-1.0, 1e-4).is_err());
        assert!(calibrate_noise(1.0, 0.0).is_err());
        assert!(calibrate_noise(1.0, 1.0).is_err());
    }

    #[test]
    fn calibration_is_monotone() {
        let eps = [0.1, 0.5, 1.0, 2.0, 10.0];
        for w in eps.windows(2) {
            assert!(calibrate_noise(w[0], 1e-5).unwrap() > calibrate_noise(w[1], 1e-5).unwrap());
        }
        let deltas = [1e-2, 1e-4, 1e-6, 1e-9];
        for w in deltas.windows(2) {
            assert!(calibrate_noise(1.0, w[0]).unwrap() < calibrate_noise(1.0, w[1]).unwrap());
        }
    }

    #[test]
    fn precondition() {
        assert!(check_dp_precondition(1e-4, 5000));
        assert!(!check_dp_precondition(1e-4, 10_000));
        assert!(check_dp_precondition(0.5, 1));
    }

    #[test]
    fn privatize_errors() {
        let m = two_class(8);
        let zero = PrivacyParams::new(1.0, 1e-4, 0.0, 1).unwrap();
        assert!(matches!(privatize(&m, &zero), Err(Error::ZeroSensitivity(_))));
        let p = PrivacyParams::new(1.0, 1e-4, 1.0, 1).unwrap();
        let once = privatize(&m, &p).unwrap();
        assert!(once.is_privatized());
        assert!(matches!(privatize(&once, &p), Err(Error::AlreadyPrivatized)));
        assert!(matches!(
            once.retrain_epoch(&[(vec![0.0; 8], 0)]),
            Err(Error::AlreadyPrivatized)
        ));
        assert!(retrain_private(&m, &[(vec![0.0; 8], 0)], 0, &p).is_err());
    }

    #[test]
    fn privatize_is_deterministic_and_vanishes_at_large_epsilon() {
        let m = two_class(64);
        let p = PrivacyParams::new(1.0, 1e-4, 1.0, 9).unwrap();
        assert_eq!(privatize(&m, &p).unwrap(), privatize(&m, &p).unwrap());

        let tiny = PrivacyParams::new(1e6, 1e-4, 1.0, 9).unwrap();
        let noisy = privatize(&m, &tiny).unwrap();
        for s in 0..2 {
            let c = &m.classes()[s].components;
            let diff: f64 = noisy.classes()[s]
                .components
                .iter()
                .zip(c)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(diff / norm(c) < 1e-3);
        }
    }

    #[test]
    fn single_pass_private_retrain_matches_composition() {
        let basis = BasisDescriptor::new(1, 4, 1.0, 0).unwrap();
        let samples = vec![
            (vec![1.0, 0.0, 0.0, 0.0], 0),
            (vec![0.0, 1.0, 0.0, 0.0], 1),
            (vec![0.9, 0.2, 0.0, 0.0], 1),
        ];
        let m = train(&samples, 2, &basis).unwrap();
        let p = PrivacyParams::new(2.0, 1e-3, m.sensitivity(), 17).unwrap();
        let (retrained, _) = m.retrain_epoch(&samples).unwrap();
        let composed = privatize(&retrained, &p).unwrap();
        let direct = retrain_private(&m, &samples, 1, &p).unwrap();
        assert_eq!(composed.classes(), direct.classes());
        assert_eq!(direct.retrain_passes(), 1);
        assert_eq!(direct.privacy().unwrap().passes, 1);
    }

    #[test]
    fn noise_multiplier_constructor_round_trips_epsilon() {
        let p = PrivacyParams::from_noise_multiplier(4.0, 1e-4, 1.0, 0).unwrap();
        assert!((calibrate_noise(p.epsilon, p.delta).unwrap() - 4.0).abs() < 1e-12);
    }
}
