//! Bundling classifier: class hypervectors are element-wise sums of the
//! encoded samples of each class, and a query is assigned to the class with
//! the highest `C_s · H / ‖C_s‖`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{self, PrivacyParams};
use crate::error::{Error, Result};
use crate::hdc::{dot, norm, BasisDescriptor};
use crate::io::write_atomic;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHypervector {
    pub class_id: usize,
    pub bundled_count: usize,
    pub components: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    classes: Vec<ClassHypervector>,
    basis: BasisDescriptor,
    sensitivity: f64,
    privatized: bool,
    privacy: Option<PrivacyParams>,
    retrain_passes: u32,
    // ‖C_s‖, refreshed whenever a class hypervector changes
    norms: Vec<f64>,
}

/// Bundles labeled hypervectors into one class hypervector per class.
///
/// The sensitivity is the largest sample norm in the batch.
pub fn train<H>(samples: &[(H, usize)], classes: usize, basis: &BasisDescriptor) -> Result<ClassModel>
where
    H: AsRef<[f64]>,
{
    if classes < 2 {
        return Err(Error::invalid("classes", format!("need at least 2, got {classes}")));
    }
    let dim = basis.dim;
    let mut sums = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0usize; classes];
    for (h, label) in samples {
        let h = h.as_ref();
        if *label >= classes {
            return Err(Error::LabelOutOfRange { label: *label, classes });
        }
        if h.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: h.len(),
            });
        }
        for (acc, x) in sums[*label].iter_mut().zip(h) {
            *acc += x;
        }
        counts[*label] += 1;
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class });
    }
    let sensitivity = dp::compute_sensitivity(samples.iter().map(|(h, _)| h.as_ref()))?;
    let classes = sums
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(class_id, (components, bundled_count))| ClassHypervector {
            class_id,
            bundled_count,
            components,
        })
        .collect();
    ClassModel::from_parts(classes, basis.clone(), sensitivity)
}

impl ClassModel {
    /// Builds a clean model from explicit class hypervectors.
    pub fn from_parts(classes: Vec<ClassHypervector>, basis: BasisDescriptor, sensitivity: f64) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::invalid(
                "classes",
                format!("need at least 2, got {}", classes.len()),
            ));
        }
        for (s, c) in classes.iter().enumerate() {
            if c.class_id != s {
                return Err(Error::invalid(
                    "class_id",
                    format!("class at position {s} has id {}", c.class_id),
                ));
            }
            if c.components.len() != basis.dim {
                return Err(Error::DimensionMismatch {
                    expected: basis.dim,
                    actual: c.components.len(),
                });
            }
            crate::hdc::check_finite(&c.components)?;
        }
        let norms = classes.iter().map(|c| norm(&c.components)).collect();
        Ok(Self {
            classes,
            basis,
            sensitivity,
            privatized: false,
            privacy: None,
            retrain_passes: 0,
            norms,
        })
    }

    pub fn classes(&self) -> &[ClassHypervector] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn basis(&self) -> &BasisDescriptor {
        &self.basis
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn is_privatized(&self) -> bool {
        self.privatized
    }

    pub fn privacy(&self) -> Option<&PrivacyParams> {
        self.privacy.as_ref()
    }

    pub fn retrain_passes(&self) -> u32 {
        self.retrain_passes
    }

    pub fn class_norms(&self) -> &[f64] {
        &self.norms
    }

    pub(crate) fn class_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.classes[s].components
    }

    pub(crate) fn refresh_norm(&mut self, s: usize) {
        self.norms[s] = norm(&self.classes[s].components);
    }

    pub(crate) fn refresh_norms(&mut self) {
        for s in 0..self.classes.len() {
            self.refresh_norm(s);
        }
    }

    pub(crate) fn mark_private(&mut self, params: PrivacyParams, passes: u32) {
        self.privatized = true;
        self.privacy = Some(params);
        self.retrain_passes = passes;
    }

    /// Scores are `C_s · H / ‖C_s‖`; the query norm is the same for every
    /// class and is left out. Equal scores resolve to the smaller index.
    pub fn infer(&self, query: &[f64]) -> Result<Prediction> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: query.len(),
            });
        }
        if self.norms.contains(&0.0) {
            return Err(Error::UndefinedSimilarity);
        }
        let scores: Vec<f64> = self
            .classes
            .iter()
            .zip(&self.norms)
            .map(|(c, n)| dot(&c.components, query) / n)
            .collect();
        let mut label = 0;
        for (s, &score) in scores.iter().enumerate().skip(1) {
            if score > scores[label] {
                label = s;
            }
        }
        Ok(Prediction { label, scores })
    }

    /// Fraction of samples whose predicted label matches.
    pub fn evaluate<H>(&self, samples: &[(H, usize)]) -> Result<f64>
    where
        H: AsRef<[f64]> + Sync,
    {
        if samples.is_empty() {
            return Err(Error::EmptyInput("evaluation samples"));
        }
        let correct = samples
            .par_iter()
            .map(|(h, label)| self.infer(h.as_ref()).map(|p| usize::from(p.label == *label)))
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        Ok(correct as f64 / samples.len() as f64)
    }

    /// One error-driven pass over `samples` in order: for every sample of
    /// class `s` predicted as `s'`, `C_s += H` and `C_s' -= H`.
    pub fn retrain_epoch<H>(&self, samples: &[(H, usize)]) -> Result<(ClassModel, usize)>
    where
        H: AsRef<[f64]>,
    {
        if self.privatized {
            return Err(Error::AlreadyPrivatized);
        }
        let mut next = self.clone();
        let mispredictions = next.retrain_pass(samples)?;
        Ok((next, mispredictions))
    }

    pub(crate) fn retrain_pass<H>(&mut self, samples: &[(H, usize)]) -> Result<usize>
    where
        H: AsRef<[f64]>,
    {
        let mut mispredictions = 0;
        for (h, label) in samples {
            let h = h.as_ref();
            if *label >= self.class_count() {
                return Err(Error::LabelOutOfRange {
                    label: *label,
                    classes: self.class_count(),
                });
            }
            let predicted = self.infer(h)?.label;
            if predicted != *label {
                mispredictions += 1;
                for (c, x) in self.classes[*label].components.iter_mut().zip(h) {
                    *c += x;
                }
                for (c, x) in self.classes[predicted].components.iter_mut().zip(h) {
                    *c -= x;
                }
                self.refresh_norm(*label);
                self.refresh_norm(predicted);
            }
        }
        Ok(mispredictions)
    }

    pub fn to_file(&self) -> ModelFile {
        let privacy = self.privacy.clone();
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            dim: self.dim(),
            features: self.basis.features,
            class_count: self.class_count(),
            sigma_b: self.basis.sigma_b,
            basis: self.basis.clone(),
            sensitivity: self.sensitivity,
            privatized: self.privatized,
            epsilon: privacy.as_ref().map(|p| p.epsilon),
            delta: privacy.as_ref().map(|p| p.delta),
            retrain_passes: self.retrain_passes,
            privacy,
            classes: self.classes.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {} (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        if file.dim != file.basis.dim || file.features != file.basis.features || file.sigma_b != file.basis.sigma_b {
            return Err(Error::Format("header disagrees with basis descriptor".into()));
        }
        if file.class_count != file.classes.len() {
            return Err(Error::Format(format!(
                "class_count {} but {} class hypervectors",
                file.class_count,
                file.classes.len()
            )));
        }
        if file.privatized != file.privacy.is_some() {
            return Err(Error::Format("privatized flag and privacy block disagree".into()));
        }
        let mut model = ClassModel::from_parts(file.classes, file.basis, file.sensitivity)?;
        model.privatized = file.privatized;
        model.privacy = file.privacy;
        model.retrain_passes = file.retrain_passes;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// On-disk model layout. The basis is stored as its descriptor and
/// regenerated on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub dim: usize,
    pub features: usize,
    pub class_count: usize,
    pub sigma_b: f64,
    pub basis: BasisDescriptor,
    pub sensitivity: f64,
    pub privatized: bool,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub retrain_passes: u32,
    pub privacy: Option<PrivacyParams>,
    pub classes: Vec<ClassHypervector>,
}
