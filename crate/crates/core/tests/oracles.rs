//! Library results checked against independent reference computations.

use dphd::attack::{class_diff_attack, decode_linear};
use dphd::data::{gen_synthetic, split, SyntheticSpec};
use dphd::dp::{compute_sensitivity, privatize, retrain_private, PrivacyParams};
use dphd::hdc::{cosine_similarity, quantize, BasisDescriptor, EncodedHypervector, PhaseMode};
use dphd::query_privacy::rank_dimension_variance;
use dphd::snr::{estimate_class_stats, memorization_probe};
use dphd::{train, ClassHypervector, ClassModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random::<f64>() * 2.0 - 1.0).collect()
}

/// Error-free transformation `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Error-free product `a·b = p + e`.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Dot product in double-double arithmetic.
fn dot_dd(a: &[f64], b: &[f64]) -> f64 {
    let (mut hi, mut lo) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (p, pe) = two_prod(*x, *y);
        let (s, se) = two_sum(hi, p);
        hi = s;
        lo += se + pe;
    }
    hi + lo
}

#[test]
fn encoding_matches_scalar_loop() {
    let (j, d) = (8, 500);
    let basis = BasisDescriptor::new(j, d, 0.4, 5).unwrap().generate().unwrap();
    let mut r = rng(1);
    for _ in 0..20 {
        let f = random_vec(&mut r, j);
        let h = basis.encode(&f).unwrap();
        for i in 0..d {
            let want = (dot_dd(basis.row(i), &f) + basis.phases()[i]).cos();
            assert!((h[i] - want).abs() <= 1e-12 * want.abs().max(1.0), "component {i}");
        }
    }
}

#[test]
fn cosine_matches_extended_precision() {
    let mut r = rng(2);
    for _ in 0..10 {
        let a = random_vec(&mut r, 1000);
        let b = random_vec(&mut r, 1000);
        let want = dot_dd(&a, &b) / (dot_dd(&a, &a).sqrt() * dot_dd(&b, &b).sqrt());
        assert!((cosine_similarity(&a, &b).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn bundling_matches_accumulate_by_label() {
    let mut r = rng(3);
    let dim = 64;
    let samples: Vec<(Vec<f64>, usize)> = (0..30).map(|i| (random_vec(&mut r, dim), i % 3)).collect();
    let model = train(&samples, 3, &BasisDescriptor::new(1, dim, 1.0, 0).unwrap()).unwrap();
    for s in 0..3 {
        let mut want = vec![0.0; dim];
        let mut count = 0;
        for (h, l) in &samples {
            if *l == s {
                count += 1;
                for (w, x) in want.iter_mut().zip(h) {
                    *w += x;
                }
            }
        }
        let class = &model.classes()[s];
        assert_eq!(class.bundled_count, count);
        for (a, b) in class.components.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn sensitivity_is_the_largest_norm() {
    let mut r = rng(4);
    let basis = BasisDescriptor::new(5, 300, 0.3, 2).unwrap().generate().unwrap();
    let encoded: Vec<EncodedHypervector> = (0..50).map(|_| basis.encode(&random_vec(&mut r, 5)).unwrap()).collect();
    let mut want: f64 = 0.0;
    for h in &encoded {
        want = want.max(dot_dd(h, h).sqrt());
    }
    let got = compute_sensitivity(encoded.iter().map(|h| &h[..])).unwrap();
    assert!((got - want).abs() < 1e-12 * want);
    for h in &encoded {
        assert!(h.norm() <= got);
    }
}

#[test]
fn class_stats_match_all_pairs() {
    let spec = SyntheticSpec {
        classes: 3,
        feature_dim: 4,
        delta_c: 3.0,
        sigma_sample: 1.0,
        per_class: 15,
        seed: 6,
    };
    let ds = gen_synthetic(&spec).unwrap();
    let basis = BasisDescriptor::new(4, 256, 0.3, 1).unwrap().generate().unwrap();
    let q: Vec<_> = ds
        .encode(&basis)
        .unwrap()
        .iter()
        .map(|(h, l)| (quantize(h), *l))
        .collect();
    let mut sims = Vec::new();
    for a in 0..q.len() {
        for b in a + 1..q.len() {
            if q[a].1 == q[b].1 {
                sims.push(dot_dd(&q[a].0, &q[b].0));
            }
        }
    }
    let mean = sims.iter().sum::<f64>() / sims.len() as f64;
    let std = (sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / sims.len() as f64).sqrt();
    let stats = estimate_class_stats(&q).unwrap();
    assert_eq!(stats.pair_count, sims.len());
    assert!((stats.mu_c - mean).abs() < 1e-9);
    assert!((stats.sigma_c - std).abs() < 1e-9);
}

#[test]
fn dimension_variance_matches_two_pass() {
    let mut r = rng(7);
    let corpus: Vec<Vec<f64>> = (0..40).map(|_| random_vec(&mut r, 50)).collect();
    let ranking = rank_dimension_variance(&corpus).unwrap();
    for i in 0..50 {
        let col: Vec<f64> = corpus.iter().map(|q| q[i]).collect();
        let mean = col.iter().sum::<f64>() / 40.0;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 39.0;
        assert!((ranking.variances[i] - var).abs() < 1e-12);
    }
    assert!(ranking
        .order
        .windows(2)
        .all(|w| ranking.variances[w[0]] <= ranking.variances[w[1]]));
}

#[test]
fn training_accuracy_agrees_with_nearest_mean() {
    let spec = SyntheticSpec {
        classes: 3,
        feature_dim: 3,
        delta_c: 5.0,
        sigma_sample: 0.5,
        per_class: 100,
        seed: 8,
    };
    let ds = gen_synthetic(&spec).unwrap();
    let desc = BasisDescriptor::new(3, 10_000, 0.23, 3).unwrap();
    let encoded = ds.encode(&desc.generate().unwrap()).unwrap();
    let model = train(&encoded, 3, &desc).unwrap();
    let mut means = vec![vec![0.0; 3]; 3];
    for s in &ds.samples {
        let l = s.label.unwrap();
        for (m, x) in means[l].iter_mut().zip(&s.values) {
            *m += x / 100.0;
        }
    }
    let nearest = |f: &[f64]| {
        (0..3)
            .min_by(|&a, &b| {
                let da: f64 = f.iter().zip(&means[a]).map(|(x, m)| (x - m).powi(2)).sum();
                let db: f64 = f.iter().zip(&means[b]).map(|(x, m)| (x - m).powi(2)).sum();
                da.total_cmp(&db)
            })
            .unwrap()
    };
    let agree = ds
        .samples
        .iter()
        .zip(&encoded)
        .filter(|(s, (h, _))| model.infer(h).unwrap().label == nearest(&s.values))
        .count();
    assert!(model.evaluate(&encoded).unwrap() >= 0.99);
    assert!(agree as f64 / ds.len() as f64 >= 0.99);
}

#[test]
fn evaluate_matches_manual_count() {
    let mut r = rng(9);
    let dim = 32;
    let classes: Vec<ClassHypervector> = (0..3)
        .map(|s| ClassHypervector {
            class_id: s,
            bundled_count: 1,
            components: random_vec(&mut r, dim),
        })
        .collect();
    let model = ClassModel::from_parts(classes.clone(), BasisDescriptor::new(1, dim, 1.0, 0).unwrap(), 1.0).unwrap();
    let samples: Vec<(Vec<f64>, usize)> = (0..20).map(|i| (random_vec(&mut r, dim), i % 3)).collect();
    let mut correct = 0;
    for (h, l) in &samples {
        let scores: Vec<f64> = classes
            .iter()
            .map(|c| dot_dd(&c.components, h) / dot_dd(&c.components, &c.components).sqrt())
            .collect();
        let best = (0..3).fold(0, |b, s| if scores[s] > scores[b] { s } else { b });
        correct += usize::from(best == *l);
    }
    assert_eq!(model.evaluate(&samples).unwrap(), correct as f64 / 20.0);
}

#[test]
fn retraining_mispredictions_settle() {
    let mut settled = 0;
    for seed in 0..20 {
        let spec = SyntheticSpec {
            classes: 3,
            feature_dim: 4,
            delta_c: 5.0,
            sigma_sample: 0.8,
            per_class: 40,
            seed,
        };
        let ds = gen_synthetic(&spec).unwrap();
        let desc = BasisDescriptor::new(4, 1000, 0.3, seed).unwrap();
        let encoded = ds.encode(&desc.generate().unwrap()).unwrap();
        let mut model = train(&encoded, 3, &desc).unwrap();
        let mut counts = Vec::new();
        for _ in 0..10 {
            let (next, errors) = model.retrain_epoch(&encoded).unwrap();
            counts.push(errors);
            model = next;
        }
        settled += usize::from(counts[1..].windows(2).all(|w| w[1] <= w[0]));
    }
    assert!(settled >= 18, "{settled} of 20 seeds non-increasing");
}

#[test]
fn split_preserves_class_proportions() {
    let spec = SyntheticSpec {
        classes: 3,
        feature_dim: 2,
        delta_c: 1.0,
        sigma_sample: 1.0,
        per_class: 37,
        seed: 10,
    };
    let ds = gen_synthetic(&spec).unwrap();
    let fractions = (0.6, 0.25, 0.15);
    let (a, b, c) = split(&ds, fractions, 4).unwrap();
    for (part, f) in [(&a, fractions.0), (&b, fractions.1), (&c, fractions.2)] {
        for count in part.class_counts() {
            assert!((count as f64 - f * 37.0).abs() <= 1.0, "{count} vs {}", f * 37.0);
        }
    }
    let again = split(&ds, fractions, 4).unwrap();
    assert_eq!(a.samples, again.0.samples);
}

fn zero_model(dim: usize) -> ClassModel {
    let classes = (0..2)
        .map(|s| ClassHypervector {
            class_id: s,
            bundled_count: 0,
            components: vec![0.0; dim],
        })
        .collect();
    ClassModel::from_parts(classes, BasisDescriptor::new(1, dim, 1.0, 0).unwrap(), 1.0).unwrap()
}

fn component_std(m: &ClassModel) -> f64 {
    let all: Vec<f64> = m.classes().iter().flat_map(|c| c.components.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64).sqrt()
}

#[test]
fn four_passes_double_the_noise_std() {
    let params = PrivacyParams::new(1.0, 1e-4, 1.0, 3).unwrap();
    let none: Vec<(Vec<f64>, usize)> = Vec::new();
    let one = component_std(&retrain_private(&zero_model(50_000), &none, 1, &params).unwrap());
    let four = component_std(&retrain_private(&zero_model(50_000), &none, 4, &params).unwrap());
    assert!((four / one / 2.0 - 1.0).abs() < 0.05);
}

#[test]
fn class_difference_residual_matches_noise_level() {
    let mut r = rng(11);
    let dim = 20_000;
    let desc = BasisDescriptor::new(4, dim, 0.3, 5).unwrap();
    let basis = desc.generate().unwrap();
    let mut samples: Vec<(EncodedHypervector, usize)> = (0..20)
        .map(|i| (basis.encode(&random_vec(&mut r, 4)).unwrap(), i % 2))
        .collect();
    let without = train(&samples, 2, &desc).unwrap();
    let target = basis.encode(&random_vec(&mut r, 4)).unwrap();
    samples.push((target.clone(), 0));
    let with = train(&samples, 2, &desc).unwrap();
    let dg = with.sensitivity();
    let noisy_with = privatize(&with, &PrivacyParams::new(2.0, 1e-4, dg, 1).unwrap()).unwrap();
    let noisy_without = privatize(&without, &PrivacyParams::new(2.0, 1e-4, dg, 2).unwrap()).unwrap();
    let diff = class_diff_attack(
        &noisy_with.classes()[0].components,
        &noisy_without.classes()[0].components,
    )
    .unwrap();
    let residual: Vec<f64> = diff.iter().zip(target.iter()).map(|(d, h)| d - h).collect();
    let mean = residual.iter().sum::<f64>() / dim as f64;
    let std = (residual.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (dim - 1) as f64).sqrt();
    let want = std::f64::consts::SQRT_2 * dg * noisy_with.privacy().unwrap().sigma_dp;
    assert!((std / want - 1.0).abs() < 0.05, "{std} vs {want}");
}

#[test]
fn correlation_decoder_is_approximate() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let basis = BasisDescriptor::new(4, 100_000, 0.05, seed)
            .unwrap()
            .with_phase_mode(PhaseMode::Centered)
            .generate()
            .unwrap();
        let f: Vec<f64> = random_vec(&mut rng(seed), 4).iter().map(|x| x.abs()).collect();
        let est = decode_linear(&basis.encode(&f).unwrap(), &basis).unwrap();
        let err = est.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    // cross terms leave an O(√(J/D)) error; nonzero, but small at D = 10⁵
    assert!(worst > 0.0 && worst < 0.05, "{worst}");
}

#[test]
fn memorization_probe_trends() {
    let spec = SyntheticSpec {
        classes: 2,
        feature_dim: 4,
        delta_c: 3.0,
        sigma_sample: 0.5,
        per_class: 20,
        seed: 12,
    };
    let ds = gen_synthetic(&spec).unwrap().normalized();
    let desc = BasisDescriptor::new(4, 2000, 6.0, 4).unwrap();
    let stored = ds.encode(&desc.generate().unwrap()).unwrap();
    let model = train(&stored, 2, &desc).unwrap();
    let grid = [0.1, 1.0, 10.0];
    let mut means = [0.0; 3];
    for seed in 0..10 {
        let rows = memorization_probe(&model, &stored, &grid, 1e-4, seed).unwrap();
        for (m, row) in means.iter_mut().zip(&rows) {
            *m += row.stored.mean / 10.0;
        }
        let tight = &rows[0];
        let pooled = ((tight.stored.std.powi(2) + tight.random.std.powi(2)) / 2.0).sqrt();
        assert!((tight.stored.mean - tight.random.mean).abs() <= pooled);
    }
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
    let loose = &memorization_probe(&model, &stored, &[1e6], 1e-4, 0).unwrap()[0];
    assert!(loose.stored.mean > loose.random.mean + 3.0 * loose.random.std);
}
