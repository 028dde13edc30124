//! Datasets: synthetic Gaussian clusters, CSV and image ingestion,
//! min-max normalization and stratified splits.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdc::{EncodedHypervector, FeatureVector, RandomBasis};
use crate::io::write_atomic;
use crate::rng::{self, Domain};

/// Clusters with centers on a regular simplex, all pairwise distances `delta_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub feature_dim: usize,
    pub delta_c: f64,
    pub sigma_sample: f64,
    pub per_class: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalization {
    /// Maps each value to `[0, 1]` using the fitted bounds. Constant
    /// dimensions map to 0; values outside the fitted range are clamped.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    ((x - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<FeatureVector>,
    pub feature_dim: usize,
    pub class_count: usize,
    pub normalization: Option<Normalization>,
    pub class_names: Vec<String>,
    pub image_shape: Option<(u32, u32)>,
}

impl Dataset {
    pub fn new(samples: Vec<FeatureVector>, class_count: usize) -> Result<Self> {
        let feature_dim = samples.first().map(|s| s.len()).ok_or(Error::EmptyInput("dataset"))?;
        for s in &samples {
            if s.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    actual: s.len(),
                });
            }
            crate::hdc::check_finite(&s.values)?;
            match s.label {
                Some(l) if l < class_count => {}
                Some(l) => {
                    return Err(Error::LabelOutOfRange {
                        label: l,
                        classes: class_count,
                    })
                }
                None => return Err(Error::invalid("label", "every dataset sample must be labeled")),
            }
        }
        Ok(Self {
            samples,
            feature_dim,
            class_count,
            normalization: None,
            class_names: (0..class_count).map(|c| c.to_string()).collect(),
            image_shape: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label(&self, i: usize) -> usize {
        self.samples[i].label.expect("dataset samples are labeled")
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for i in 0..self.len() {
            counts[self.label(i)] += 1;
        }
        counts
    }

    pub fn fit_normalization(&self) -> Normalization {
        let mut min = vec![f64::INFINITY; self.feature_dim];
        let mut max = vec![f64::NEG_INFINITY; self.feature_dim];
        for s in &self.samples {
            for (j, &x) in s.values.iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        Normalization { min, max }
    }

    pub fn normalized_with(&self, norm: &Normalization) -> Dataset {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.values = norm.apply(&s.values);
        }
        out.normalization = Some(norm.clone());
        out
    }

    /// Fits bounds on this dataset and applies them.
    pub fn normalized(&self) -> Dataset {
        self.normalized_with(&self.fit_normalization())
    }

    pub fn encode(&self, basis: &RandomBasis) -> Result<Vec<(EncodedHypervector, usize)>> {
        let values: Vec<&[f64]> = self.samples.iter().map(|s| &s.values[..]).collect();
        let hvs = basis.encode_batch(&values)?;
        Ok(hvs.into_iter().zip(self.labels()).collect())
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            feature_dim: self.feature_dim,
            class_count: self.class_count,
            normalization: self.normalization.clone(),
            class_names: self.class_names.clone(),
            image_shape: self.image_shape,
        }
    }

    pub fn manifest(&self, source: &str, seed: Option<u64>) -> DatasetManifest {
        DatasetManifest {
            source: source.to_string(),
            feature_dim: self.feature_dim,
            class_count: self.class_count,
            sample_count: self.len(),
            class_names: self.class_names.clone(),
            normalization: self.normalization.clone(),
            image_shape: self.image_shape,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: String,
    pub feature_dim: usize,
    pub class_count: usize,
    pub sample_count: usize,
    pub class_names: Vec<String>,
    pub normalization: Option<Normalization>,
    pub image_shape: Option<(u32, u32)>,
    pub seed: Option<u64>,
}

/// Vertices of a regular simplex with `classes` vertices in `feature_dim`
/// dimensions, every pairwise distance equal to `delta_c`.
pub fn simplex_centers(classes: usize, feature_dim: usize, delta_c: f64) -> Result<Vec<Vec<f64>>> {
    if classes < 2 {
        return Err(Error::invalid("classes", "need at least 2"));
    }
    if classes > feature_dim + 1 {
        return Err(Error::Infeasible(format!(
            "{classes} equidistant centers need at least {} feature dimensions, got {feature_dim}",
            classes - 1
        )));
    }
    if !delta_c.is_finite() || delta_c <= 0.0 {
        return Err(Error::invalid("delta_c", format!("must be positive, got {delta_c}")));
    }
    // Centered standard basis vectors e_k - 1/S are pairwise √2 apart and span
    // an (S-1)-dimensional subspace; express them in an orthonormal basis of it.
    let s = classes;
    let centered: Vec<Vec<f64>> = (0..s)
        .map(|k| {
            (0..s)
                .map(|i| if i == k { 1.0 } else { 0.0 } - 1.0 / s as f64)
                .collect()
        })
        .collect();
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(s - 1);
    for v in centered.iter().take(s - 1) {
        let mut u = v.clone();
        for q in &ortho {
            let p: f64 = u.iter().zip(q).map(|(a, b)| a * b).sum();
            for (x, y) in u.iter_mut().zip(q) {
                *x -= p * y;
            }
        }
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        ortho.push(u.into_iter().map(|x| x / n).collect());
    }
    let scale = delta_c / 2f64.sqrt();
    Ok(centered
        .iter()
        .map(|c| {
            let mut p = vec![0.0; feature_dim];
            for (k, q) in ortho.iter().enumerate() {
                p[k] = scale * c.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
            }
            p
        })
        .collect())
}

/// Draws `per_class` samples `N(center, σ_sample² I)` per class. Features are
/// left unnormalized.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.feature_dim == 0 {
        return Err(Error::invalid("feature_dim", "must be at least 1"));
    }
    if spec.per_class == 0 {
        return Err(Error::invalid("per_class", "must be at least 1"));
    }
    if !spec.sigma_sample.is_finite() || spec.sigma_sample < 0.0 {
        return Err(Error::invalid(
            "sigma_sample",
            format!("must be non-negative, got {}", spec.sigma_sample),
        ));
    }
    let centers = simplex_centers(spec.classes, spec.feature_dim, spec.delta_c)?;
    let mut samples = Vec::with_capacity(spec.classes * spec.per_class);
    for (label, center) in centers.iter().enumerate() {
        let mut rng = rng::stream(spec.seed, Domain::Samples, label as u64);
        for _ in 0..spec.per_class {
            let values = center
                .iter()
                .map(|&c| {
                    let z: f64 = rng.sample(StandardNormal);
                    c + spec.sigma_sample * z
                })
                .collect();
            samples.push(FeatureVector {
                values,
                label: Some(label),
            });
        }
    }
    Dataset::new(samples, spec.classes)
}

/// Stratified split. Each class is shuffled with its own seeded stream and
/// cut by rounded fractions; every split receives at least one sample of
/// every class.
pub fn split(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) {
        return Err(Error::invalid("fractions", "all three fractions must be positive"));
    }
    if ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "fractions",
            format!("must sum to 1, got {}", ft + fv + fs),
        ));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count];
    for i in 0..dataset.len() {
        by_class[dataset.label(i)].push(i);
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (class, mut idx) in by_class.into_iter().enumerate() {
        let n = idx.len();
        if n < 3 {
            return Err(Error::invalid(
                "dataset",
                format!("class {class} has {n} samples, fewer than the 3 splits"),
            ));
        }
        let mut rng = rng::stream(seed, Domain::Split, class as u64);
        idx.shuffle(&mut rng);
        let n_train = ((ft * n as f64).round() as usize).clamp(1, n - 2);
        let n_val = ((fv * n as f64).round() as usize).clamp(1, n - n_train - 1);
        train.extend_from_slice(&idx[..n_train]);
        val.extend_from_slice(&idx[n_train..n_train + n_val]);
        test.extend_from_slice(&idx[n_train + n_val..]);
    }
    Ok((dataset.subset(&train), dataset.subset(&val), dataset.subset(&test)))
}

fn parse_error(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Reads `label,f0,...,f{J-1}` rows.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_error(path, 1, e.to_string()))?,
        None => return Err(parse_error(path, 1, "missing header")),
    };
    let expected_header = header.len() >= 2
        && &header[0] == "label"
        && header.iter().skip(1).enumerate().all(|(j, h)| h == format!("f{j}"));
    if !expected_header {
        return Err(parse_error(path, 1, "missing header `label,f0,...`"));
    }
    let features = header.len() - 1;
    let mut samples = Vec::new();
    let mut classes = 0;
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != features + 1 {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", features + 1, record.len()),
            ));
        }
        let label: usize = record[0].parse().map_err(|_| {
            parse_error(
                path,
                line,
                format!("label `{}` is not a non-negative integer", &record[0]),
            )
        })?;
        let values = record
            .iter()
            .skip(1)
            .map(|cell| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_error(path, line, format!("`{cell}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        classes = classes.max(label + 1);
        samples.push(FeatureVector {
            values,
            label: Some(label),
        });
    }
    if samples.is_empty() {
        return Err(parse_error(path, 2, "no data rows"));
    }
    Dataset::new(samples, classes)
}

/// Writes the dataset in the `load_csv` layout with round-trip float formatting.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::from("label");
    for j in 0..dataset.feature_dim {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for s in &dataset.samples {
        out.push_str(&s.label.unwrap_or(0).to_string());
        for v in &s.values {
            out.push(',');
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Loads `<root>/<class>/<image>` grayscale images, scaled to `[0, 1]` by
/// `/255` and flattened row-major. Classes are numbered in lexicographic
/// order of their directory names.
pub fn load_images(root: &Path) -> Result<Dataset> {
    let mut class_dirs: Vec<PathBuf> = read_dir_sorted(root)?.into_iter().filter(|p| p.is_dir()).collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::EmptyInput("image directory has no class subdirectories"));
    }
    let mut samples = Vec::new();
    let mut shape: Option<(u32, u32)> = None;
    let mut names = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        names.push(
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        for file in read_dir_sorted(dir)?.into_iter().filter(|p| p.is_file()) {
            let img = image::open(&file).map_err(|e| Error::Image {
                path: file.clone(),
                reason: e.to_string(),
            })?;
            let gray = img.to_luma8();
            let dims = gray.dimensions();
            match shape {
                None => shape = Some(dims),
                Some(s) if s != dims => {
                    return Err(Error::Image {
                        path: file.clone(),
                        reason: format!("size {}x{} differs from {}x{}", dims.0, dims.1, s.0, s.1),
                    })
                }
                _ => {}
            }
            let values = gray.as_raw().iter().map(|&p| f64::from(p) / 255.0).collect();
            samples.push(FeatureVector {
                values,
                label: Some(label),
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("no images found"));
    }
    let mut ds = Dataset::new(samples, class_dirs.len())?;
    ds.class_names = names;
    // `dimensions()` is (width, height); keep (height, width)
    ds.image_shape = shape.map(|(w, h)| (h, w));
    Ok(ds)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    paths.sort();
    Ok(paths)
}

/// Writes `values` (in `[0, 1]`) as an 8-bit grayscale PNG of `height × width`.
pub fn save_grayscale_png(values: &[f64], shape: (u32, u32), path: &Path) -> Result<()> {
    let (h, w) = shape;
    if values.len() != (h * w) as usize {
        return Err(Error::DimensionMismatch {
            expected: (h * w) as usize,
            actual: values.len(),
        });
    }
    let pixels: Vec<u8> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(w, h, pixels).expect("buffer matches shape");
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    write_atomic(path, &bytes)
}
