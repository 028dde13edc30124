use std::path::{Path, PathBuf};

use dphd::attack::{class_diff_attack, decode_grouped};
use dphd::bench::{time_inference, BenchStats};
use dphd::classifier::{train as train_model, ClassHypervector, ClassModel};
use dphd::data::{self, Dataset, SyntheticSpec};
use dphd::dp::{self, check_dp_precondition, privatize, retrain_private, PrivacyParams};
use dphd::hdc::{quantize, BasisDescriptor, EncodedHypervector, QuantizedHypervector, RandomBasis};
use dphd::query_privacy::{privacy_utility_curve, rank_dimension_variance, DropMode};
use dphd::rng::{self, Domain};
use dphd::snr::{estimate_class_stats, measure_empirical_snr, memorization_probe, predict_snr, SnrReport};
use dphd::tuner::{tune_sigma_b, TuneConfig};
use serde::Serialize;

use crate::config::{Config, DataSource, ModeChoice, SplitName};
use crate::error::CliError;
use crate::manifest::Recorder;
use crate::report::{num, opt_num, CsvTable, Report};

type Labeled = Vec<(EncodedHypervector, usize)>;

struct Splits {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

impl Splits {
    fn get(&self, name: SplitName) -> &Dataset {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

fn out_path(config: &Config, rec: &mut Recorder, name: &str) -> PathBuf {
    let path = config.run.out_dir.join(name);
    rec.output(&path);
    path
}

fn synthetic_spec(config: &Config) -> SyntheticSpec {
    let s = &config.data.synthetic;
    SyntheticSpec {
        classes: s.classes,
        feature_dim: s.feature_dim,
        delta_c: s.delta_c,
        sigma_sample: s.sigma_sample,
        per_class: s.per_class,
        seed: config.run.seed,
    }
}

fn load_dataset(config: &Config, rec: &mut Recorder) -> Result<Dataset, CliError> {
    let path = || {
        config
            .data
            .path
            .clone()
            .ok_or_else(|| CliError::Config("data.path is required for this data.source".into()))
    };
    Ok(match config.data.source {
        DataSource::Synthetic => data::gen_synthetic(&synthetic_spec(config))?,
        DataSource::Csv => {
            let p = path()?;
            rec.input(&p)?;
            data::load_csv(&p)?
        }
        DataSource::Images => {
            let p = path()?;
            rec.input(&p)?;
            data::load_images(&p)?
        }
    })
}

/// Loads, splits and (optionally) normalizes with bounds fit on the training split.
fn prepare(config: &Config, rec: &mut Recorder) -> Result<Splits, CliError> {
    let dataset = load_dataset(config, rec)?;
    let [a, b, c] = config.data.split;
    let (train, val, test) = data::split(&dataset, (a, b, c), config.run.seed)?;
    rec.phase("load");
    if !config.data.normalize {
        return Ok(Splits { train, val, test });
    }
    let bounds = train.fit_normalization();
    Ok(Splits {
        train: train.normalized_with(&bounds),
        val: val.normalized_with(&bounds),
        test: test.normalized_with(&bounds),
    })
}

fn descriptor(config: &Config, features: usize) -> Result<BasisDescriptor, CliError> {
    Ok(
        BasisDescriptor::new(features, config.encoder.dim, config.encoder.sigma_b, config.run.seed)?
            .with_phase_mode(config.encoder.phase_mode),
    )
}

fn privacy_params(config: &Config, sensitivity: f64) -> Result<PrivacyParams, CliError> {
    let epsilon = config
        .privacy
        .epsilon
        .ok_or_else(|| CliError::Config("missing --epsilon (privacy.epsilon) for a privatized model".into()))?;
    Ok(PrivacyParams::new(
        epsilon,
        config.privacy.delta,
        sensitivity,
        config.privacy.noise_seed,
    )?)
}

fn quantized(samples: &Labeled) -> Vec<(QuantizedHypervector, usize)> {
    samples.iter().map(|(h, l)| (quantize(h), *l)).collect()
}

fn groups_for(configured: usize, basis: &RandomBasis) -> usize {
    if configured == 0 {
        basis.dim() / basis.features()
    } else {
        configured
    }
}

fn json_number(v: f64) -> String {
    serde_json::to_string(&v).expect("finite number")
}

pub fn gen_data(config: &Config) -> Result<(), CliError> {
    let mut rec = Recorder::new("gen-data", config);
    if config.data.source != DataSource::Synthetic {
        return Err(CliError::Config("gen-data requires data.source = \"synthetic\"".into()));
    }
    let dataset = data::gen_synthetic(&synthetic_spec(config))?;
    rec.phase("generate");
    let csv_path = out_path(config, &mut rec, "data.csv");
    data::save_csv(&dataset, &csv_path)?;
    let manifest_path = out_path(config, &mut rec, "data.manifest.json");
    Report::new("dataset_manifest", dataset.manifest("synthetic", Some(config.run.seed))).write(&manifest_path)?;
    rec.phase("write");
    rec.finish(&config.run.out_dir)?;
    println!(
        "generated {} samples ({} classes, {} features) -> {}",
        dataset.len(),
        dataset.class_count,
        dataset.feature_dim,
        csv_path.display()
    );
    Ok(())
}

pub fn tune(config: &Config) -> Result<(), CliError> {
    let mut rec = Recorder::new("tune", config);
    let splits = prepare(config, &mut rec)?;
    let t = &config.tune;
    let tune_config = TuneConfig {
        sigma_b_grid: t.sigma_b_grid.clone(),
        epsilon_grid: t.epsilon_grid.clone(),
        delta: config.privacy.delta,
        dim: t.dim,
        threshold: t.threshold,
        seeds: t.seeds,
        seed: config.run.seed,
        phase_mode: config.encoder.phase_mode,
    };
    let result = tune_sigma_b(&splits.train, &splits.val, &tune_config)?;
    rec.phase("tune");
    let mut table = CsvTable::new(&["sigma_b", "epsilon", "mean_accuracy", "std_accuracy"]);
    for c in &result.cells {
        table.push(vec![
            num(c.sigma_b),
            num(c.epsilon),
            num(c.mean_accuracy),
            num(c.std_accuracy),
        ]);
    }
    table.write(&out_path(config, &mut rec, "tune_grid.csv"))?;
    let mut per_eps = CsvTable::new(&["epsilon", "sigma_b", "mean_accuracy"]);
    for b in &result.per_epsilon {
        per_eps.push(vec![num(b.epsilon), num(b.sigma_b), num(b.mean_accuracy)]);
    }
    per_eps.write(&out_path(config, &mut rec, "tune_per_epsilon.csv"))?;
    Report::new("tune", &result).write(&out_path(config, &mut rec, "tune_summary.json"))?;
    rec.finish(&config.run.out_dir)?;
    println!(
        "sigma_b* = {} at epsilon = {} (accuracy {:.4}{})",
        result.sigma_b_star,
        result.epsilon_at_star,
        result.accuracy_at_star,
        if result.threshold_met { "" } else { ", threshold unmet" }
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    train_accuracy: f64,
    train_samples: usize,
    class_counts: Vec<usize>,
    sensitivity: f64,
    privatized: bool,
    epsilon: Option<f64>,
    delta: Option<f64>,
    sigma_dp: Option<f64>,
    passes: u32,
    dp_precondition_met: Option<bool>,
    clean_retrain_mispredictions: Vec<usize>,
}

pub fn train(config: &Config) -> Result<(), CliError> {
    let mut rec = Recorder::new("train", config);
    if config.privacy.enabled {
        // fail on a missing budget before doing any work
        privacy_params(config, 1.0)?;
    }
    let splits = prepare(config, &mut rec)?;
    let desc = descriptor(config, splits.train.feature_dim)?;
    let basis = desc.generate()?;
    let samples = splits.train.encode(&basis)?;
    rec.phase("encode");
    let mut model = train_model(&samples, splits.train.class_count, &desc)?;
    let mut misses = Vec::new();
    let mut params = None;
    if config.privacy.enabled {
        let p = privacy_params(config, model.sensitivity())?;
        model = if config.train.retrain_epochs > 0 {
            retrain_private(&model, &samples, config.privacy.passes, &p)?
        } else {
            privatize(&model, &p)?
        };
        params = Some(p);
    } else {
        for _ in 0..config.train.retrain_epochs {
            let (next, miss) = model.retrain_epoch(&samples)?;
            model = next;
            misses.push(miss);
        }
    }
    rec.phase("train");
    let accuracy = model.evaluate(&samples)?;
    let precondition = params.as_ref().map(|p| check_dp_precondition(p.delta, samples.len()));
    if precondition == Some(false) {
        eprintln!(
            "warning: delta = {} is not below 1/N for N = {} training samples",
            config.privacy.delta,
            samples.len()
        );
    }
    let model_path = out_path(config, &mut rec, "model.json");
    model.save(&model_path)?;
    let report = TrainReport {
        train_accuracy: accuracy,
        train_samples: samples.len(),
        class_counts: splits.train.class_counts(),
        sensitivity: model.sensitivity(),
        privatized: model.is_privatized(),
        epsilon: params.as_ref().map(|p| p.epsilon),
        delta: params.as_ref().map(|p| p.delta),
        sigma_dp: params.as_ref().map(|p| p.sigma_dp),
        passes: model.retrain_passes(),
        dp_precondition_met: precondition,
        clean_retrain_mispredictions: misses,
    };
    Report::new("train", &report).write(&out_path(config, &mut rec, "train_report.json"))?;
    rec.finish(&config.run.out_dir)?;
    println!(
        "trained {} classes on {} samples; train accuracy {}; model -> {}",
        model.class_count(),
        samples.len(),
        json_number(accuracy),
        model_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    accuracy: f64,
    split: &'static str,
    samples: usize,
    privatized: bool,
}

pub fn eval(config: &Config, model_path: Option<PathBuf>) -> Result<(), CliError> {
    let mut rec = Recorder::new("eval", config);
    let model_path = model_path.unwrap_or_else(|| config.run.out_dir.join("model.json"));
    rec.input(&model_path)?;
    let model = ClassModel::load(&model_path)?;
    let splits = prepare(config, &mut rec)?;
    let basis = model.basis().generate()?;
    if basis.features() != splits.test.feature_dim {
        return Err(CliError::Data(format!(
            "model expects {} features, data has {}",
            basis.features(),
            splits.test.feature_dim
        )));
    }
    let queries = splits.test.encode(&basis)?;
    let accuracy = model.evaluate(&queries)?;
    rec.phase("evaluate");
    let report = EvalReport {
        accuracy,
        split: "test",
        samples: queries.len(),
        privatized: model.is_privatized(),
    };
    Report::new("eval", &report).write(&out_path(config, &mut rec, "eval_report.json"))?;
    rec.finish(&config.run.out_dir)?;
    println!("accuracy: {}", json_number(accuracy));
    Ok(())
}

#[derive(Serialize)]
struct SnrSummary {
    mu_c: f64,
    sigma_c: f64,
    per_class_samples: usize,
    rows: Vec<SnrReport>,
}

pub fn snr(config: &Config) -> Result<(), CliError> {
    let mut rec = Recorder::new("snr", config);
    let splits = prepare(config, &mut rec)?;
    let desc = descriptor(config, splits.train.feature_dim)?;
    let basis = desc.generate()?;
    let train_q = quantized(&splits.train.encode(&basis)?);
    let test_q = quantized(&splits.test.encode(&basis)?);
    rec.phase("encode");
    let stats = estimate_class_stats(&train_q)?;
    let model = train_model(&train_q, splits.train.class_count, &desc)?;
    let per_class = train_q.len() / splits.train.class_count;
    let mut rows = Vec::new();
    let mut table = CsvTable::new(&["epsilon", "predicted_db", "empirical_db"]);
    for (k, &epsilon) in config.snr.epsilon_grid.iter().enumerate() {
        let mut report = predict_snr(
            per_class,
            stats.mu_c,
            basis.dim(),
            epsilon,
            config.privacy.delta,
            config.privacy.passes,
        )?;
        let noise_seed = rng::child_seed(config.privacy.noise_seed, Domain::Trials, k as u64);
        let params = PrivacyParams::new(epsilon, config.privacy.delta, model.sensitivity(), noise_seed)?;
        report.empirical_snr_db = Some(measure_empirical_snr(&model, &params, &test_q, config.snr.trials)?);
        table.push(vec![
            num(epsilon),
            num(report.predicted_snr_db),
            opt_num(report.empirical_snr_db),
        ]);
        rows.push(report);
    }
    rec.phase("snr");
    let stored = splits.train.encode(&basis)?;
    let clean = train_model(&stored, splits.train.class_count, &desc)?;
    let probe = memorization_probe(
        &clean,
        &stored,
        &config.snr.probe_epsilons,
        config.privacy.delta,
        config.privacy.noise_seed,
    )?;
    let mut probe_table = CsvTable::new(&["epsilon", "stored_mean", "stored_std", "random_mean", "random_std"]);
    for r in &probe {
        probe_table.push(vec![
            num(r.epsilon),
            num(r.stored.mean),
            num(r.stored.std),
            num(r.random.mean),
            num(r.random.std),
        ]);
    }
    rec.phase("probe");
    table.write(&out_path(config, &mut rec, "snr.csv"))?;
    probe_table.write(&out_path(config, &mut rec, "memorization.csv"))?;
    Report::new("memorization", &probe).write(&out_path(config, &mut rec, "memorization.json"))?;
    let summary = SnrSummary {
        mu_c: stats.mu_c,
        sigma_c: stats.sigma_c,
        per_class_samples: per_class,
        rows,
    };
    Report::new("snr", &summary).write(&out_path(config, &mut rec, "snr_report.json"))?;
    rec.finish(&config.run.out_dir)?;
    for r in &summary.rows {
        println!(
            "epsilon {}: predicted {:.2} dB, empirical {:.2} dB",
            r.inputs.epsilon,
            r.predicted_snr_db,
            r.empirical_snr_db.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn read_hypervectors(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 2)))?;
        rows.push(row);
    }
    Ok(rows)
}

fn vectors_table(prefix: &str, rows: &[Vec<f64>]) -> CsvTable {
    let width = rows.first().map_or(0, Vec::len);
    let header: Vec<String> = (0..width).map(|j| format!("{prefix}{j}")).collect();
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(&refs);
    for r in rows {
        t.push(r.iter().map(|&v| num(v)).collect());
    }
    t
}

#[derive(Serialize)]
struct AttackReport {
    target_index: usize,
    target_label: usize,
    groups_used: usize,
    nmse: Option<f64>,
    psnr_db: Option<f64>,
    noise_sigma_used: f64,
    privatized: bool,
}

pub fn attack(config: &Config, model: Option<PathBuf>, hypervectors: Option<PathBuf>) -> Result<(), CliError> {
    let mut rec = Recorder::new("attack", config);
    if let Some(hv_path) = hypervectors {
        let model_path = model.expect("clap enforces --model");
        rec.input(&model_path)?;
        rec.input(&hv_path)?;
        let model = ClassModel::load(&model_path)?;
        let basis = model.basis().generate()?;
        let groups = groups_for(config.attack.groups, &basis);
        let decoded = read_hypervectors(&hv_path)?
            .iter()
            .map(|h| Ok(decode_grouped(h, &basis, groups)?.reconstructed))
            .collect::<Result<Vec<_>, CliError>>()?;
        rec.phase("decode");
        vectors_table("f", &decoded).write(&out_path(config, &mut rec, "reconstructed.csv"))?;
        rec.finish(&config.run.out_dir)?;
        println!("decoded {} hypervectors with {groups} groups", decoded.len());
        return Ok(());
    }

    // Two releases that differ by one training sample; the attacker
    // subtracts the class hypervectors and decodes the difference.
    let splits = prepare(config, &mut rec)?;
    let target = config.attack.target;
    if target >= splits.train.len() {
        return Err(CliError::Config(format!(
            "attack.target = {target} is outside the training split of {}",
            splits.train.len()
        )));
    }
    let desc = descriptor(config, splits.train.feature_dim)?;
    let basis = desc.generate()?;
    let with = splits.train.encode(&basis)?;
    let without: Labeled = with
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, s)| s.clone())
        .collect();
    let label = with[target].1;
    let mut model_with = train_model(&with, splits.train.class_count, &desc)?;
    let mut model_without = train_model(&without, splits.train.class_count, &desc)?;
    let mut noise_sigma = 0.0;
    if config.privacy.enabled {
        let p = privacy_params(config, model_with.sensitivity())?;
        let q = PrivacyParams {
            noise_seed: rng::child_seed(p.noise_seed, Domain::PrivacyNoise, u64::MAX),
            ..p.clone()
        };
        noise_sigma = std::f64::consts::SQRT_2 * p.noise_std();
        model_with = privatize(&model_with, &p)?;
        model_without = privatize(&model_without, &q)?;
    }
    let diff = class_diff_attack(
        &model_with.classes()[label].components,
        &model_without.classes()[label].components,
    )?;
    let truth = &splits.train.samples[target].values;
    let result = decode_grouped(&diff, &basis, groups_for(config.attack.groups, &basis))?
        .with_noise_sigma(noise_sigma)
        .scored(truth, splits.train.image_shape)?;
    rec.phase("attack");
    vectors_table("f", &[result.reconstructed.clone(), truth.clone()]).write(&out_path(
        config,
        &mut rec,
        "reconstructed.csv",
    ))?;
    vectors_table("h", &[diff]).write(&out_path(config, &mut rec, "diff_hypervector.csv"))?;
    if let Some(shape) = splits.train.image_shape {
        data::save_grayscale_png(
            &result.reconstructed,
            shape,
            &out_path(config, &mut rec, "reconstructed.png"),
        )?;
        data::save_grayscale_png(truth, shape, &out_path(config, &mut rec, "target.png"))?;
    }
    let report = AttackReport {
        target_index: target,
        target_label: label,
        groups_used: result.groups_used,
        nmse: result.nmse,
        psnr_db: result.psnr_db,
        noise_sigma_used: noise_sigma,
        privatized: model_with.is_privatized(),
    };
    Report::new("attack", &report).write(&out_path(config, &mut rec, "attack_report.json"))?;
    rec.finish(&config.run.out_dir)?;
    println!(
        "reconstructed sample {target} (class {label}) from {} groups: nmse {}, psnr {} dB",
        result.groups_used,
        opt_num(result.nmse),
        opt_num(result.psnr_db)
    );
    Ok(())
}

pub fn drop_dims(config: &Config) -> Result<(), CliError> {
    let mut rec = Recorder::new("drop-dims", config);
    let splits = prepare(config, &mut rec)?;
    let desc = descriptor(config, splits.train.feature_dim)?;
    let basis = desc.generate()?;
    let samples = splits.train.encode(&basis)?;
    let mut model = train_model(&samples, splits.train.class_count, &desc)?;
    if config.privacy.enabled {
        model = privatize(&model, &privacy_params(config, model.sensitivity())?)?;
    }
    let calibration = splits.get(config.drop_dims.calibration_split).encode(&basis)?;
    let hvs: Vec<&[f64]> = calibration.iter().map(|(h, _)| &h[..]).collect();
    let ranking = rank_dimension_variance(&hvs)?;
    let queries = splits.test.encode(&basis)?;
    let truth: Vec<Vec<f64>> = splits.test.samples.iter().map(|s| s.values.clone()).collect();
    rec.phase("prepare");
    let modes: &[DropMode] = match config.drop_dims.mode {
        ModeChoice::Low => &[DropMode::Low],
        ModeChoice::High => &[DropMode::High],
        ModeChoice::Both => &[DropMode::Low, DropMode::High],
    };
    let rows = privacy_utility_curve(
        &model,
        &queries,
        &truth,
        &basis,
        &ranking,
        &config.drop_dims.fractions,
        modes,
        groups_for(config.drop_dims.groups, &basis),
    )?;
    rec.phase("curve");
    let mut table = CsvTable::new(&["fraction", "mode", "accuracy", "nmse"]);
    for r in &rows {
        table.push(vec![num(r.fraction), r.mode.to_string(), num(r.accuracy), num(r.nmse)]);
    }
    table.write(&out_path(config, &mut rec, "drop_dims.csv"))?;
    rec.finish(&config.run.out_dir)?;
    for r in &rows {
        println!(
            "fraction {} ({}): accuracy {:.4}, nmse {:.4}",
            r.fraction, r.mode, r.accuracy, r.nmse
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    runs: Vec<BenchStats>,
    /// Per-query time ratio between the largest and smallest dimension.
    dim_time_ratio: Option<f64>,
    dim_ratio: Option<f64>,
    /// Batch time ratio for the full query set against half of it.
    query_time_ratio: f64,
}

fn random_model(classes: usize, dim: usize, seed: u64) -> Result<ClassModel, CliError> {
    let hvs = (0..classes)
        .map(|s| ClassHypervector {
            class_id: s,
            bundled_count: 1,
            components: dp::gaussian_vector(dim, seed, s as u64, 1.0),
        })
        .collect();
    Ok(ClassModel::from_parts(
        hvs,
        BasisDescriptor::new(1, dim, 1.0, seed)?,
        1.0,
    )?)
}

pub fn bench(config: &Config) -> Result<(), CliError> {
    let mut rec = Recorder::new("bench", config);
    let b = &config.bench;
    if b.dims.is_empty() {
        return Err(CliError::Config("bench.dims must not be empty".into()));
    }
    let mut runs = Vec::new();
    let mut last_queries = Vec::new();
    let mut last_model = None;
    for &dim in &b.dims {
        let model = random_model(b.classes, dim, config.run.seed)?;
        let queries: Vec<Vec<f64>> = (0..b.queries)
            .map(|q| dp::gaussian_vector(dim, rng::child_seed(config.run.seed, Domain::Trials, 1), q as u64, 1.0))
            .collect();
        runs.push(time_inference(&model, &queries, b.repetitions, b.warmup)?);
        last_queries = queries;
        last_model = Some(model);
    }
    let model = last_model.expect("dims is non-empty");
    let half = time_inference(
        &model,
        &last_queries[..last_queries.len().div_ceil(2)],
        b.repetitions,
        b.warmup,
    )?;
    rec.phase("bench");
    let (first, last) = (&runs[0], &runs[runs.len() - 1]);
    let report = BenchReport {
        dim_time_ratio: (runs.len() > 1).then(|| last.median_per_query_s / first.median_per_query_s),
        dim_ratio: (runs.len() > 1).then(|| last.dim as f64 / first.dim as f64),
        query_time_ratio: last.median_batch_s / half.median_batch_s,
        runs,
    };
    Report::new("bench", &report).write(&out_path(config, &mut rec, "bench.json"))?;
    rec.finish(&config.run.out_dir)?;
    for r in &report.runs {
        println!(
            "D = {}: {:.3} us per query (median of {}), variance {:.3e} s^2",
            r.dim,
            r.median_per_query_s * 1e6,
            r.repetitions,
            r.variance_per_query_s2
        );
    }
    if let (Some(t), Some(d)) = (report.dim_time_ratio, report.dim_ratio) {
        println!("time ratio {t:.2} for dimension ratio {d:.0}");
    }
    println!("full/half query batch time ratio {:.2}", report.query_time_ratio);
    Ok(())
}
