use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reconformer::data::{gen_phantom, PhantomSpec, Sample};
use reconformer::kspace::{band_split, fft2c, forward_model, ifft2c, make_cartesian_mask, zero_fill, ComplexImage};
use reconformer::net::{ModelConfig, ReconFormer};
use reconformer::train::{
    ablation_run, ablation_variants, band_mse_decomposition, evaluate, evaluate_images, kspace_band_report, psnr, ssim,
    train_samples, unroll_sweep, AblationToggles, Psnr, TrainConfig,
};
use reconformer::{Error, Real};

fn sample<T: Real>(id: usize, size: usize, seed: u64) -> Sample<T> {
    let gt = gen_phantom(&PhantomSpec::new(size, size, seed)).unwrap().cast::<T>();
    let mask = make_cartesian_mask(size, 4.0, 0.125, seed).unwrap();
    let kspace = forward_model(&gt, &mask, 0.0, 0).unwrap();
    Sample { id, seed, ground_truth: gt, kspace, mask }
}

fn tiny_config(steps: usize, unroll: usize) -> TrainConfig {
    TrainConfig {
        model: ModelConfig { height: 16, width: 16, channels: 8, unroll, ..ModelConfig::default() },
        steps,
        batch_size: 2,
        ..TrainConfig::default()
    }
}

fn rand_image(h: usize, w: usize, seed: u64) -> ComplexImage<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexImage::from_fn(h, w, |_, _| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Direct sliding-window SSIM with sample statistics.
fn ssim_oracle(a: &[f64], b: &[f64], h: usize, w: usize, l: f64) -> f64 {
    let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
    let n = 49.0;
    let mut total = 0.0;
    let mut count = 0.0;
    for y0 in 0..=h - 7 {
        for x0 in 0..=w - 7 {
            let px = |v: &[f64], dy: usize, dx: usize| v[(y0 + dy) * w + x0 + dx];
            let (mut ma, mut mb) = (0.0, 0.0);
            for dy in 0..7 {
                for dx in 0..7 {
                    ma += px(a, dy, dx);
                    mb += px(b, dy, dx);
                }
            }
            ma /= n;
            mb /= n;
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for dy in 0..7 {
                for dx in 0..7 {
                    let (da, db) = (px(a, dy, dx) - ma, px(b, dy, dx) - mb);
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            va /= n - 1.0;
            vb /= n - 1.0;
            cov /= n - 1.0;
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1.0;
        }
    }
    total / count
}

#[test]
fn psnr_closed_forms() {
    let gt = vec![0.5; 64];
    let recon: Vec<f64> = gt.iter().map(|v| v + 0.1).collect();
    let Psnr::Finite(db) = psnr(&recon, &gt, 1.0).unwrap() else { panic!("expected finite") };
    assert!((db - 20.0).abs() < 1e-10);
    assert_eq!(psnr(&gt, &gt, 1.0).unwrap(), Psnr::Identical);
    assert_eq!(Psnr::Identical.to_string(), "identical");
    assert!(matches!(psnr(&gt, &recon, 0.0), Err(Error::Domain { .. })));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
    let b: Vec<f64> = (0..100).map(|_| rng.gen::<f64>()).collect();
    let mse = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 100.0;
    let expected = 10.0 * (1.7f64.powi(2) / mse).log10();
    assert!((psnr(&a, &b, 1.7).unwrap().value().unwrap() - expected).abs() < 1e-10);
    assert_eq!(psnr(&a, &b, 1.7).unwrap(), psnr(&b, &a, 1.7).unwrap());
}

#[test]
fn ssim_matches_sliding_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a: Vec<f64> = (0..81).map(|_| rng.gen::<f64>()).collect();
    let b: Vec<f64> = a.iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
    let got = ssim(&a, &b, 9, 9, 1.0).unwrap();
    assert!((got - ssim_oracle(&a, &b, 9, 9, 1.0)).abs() <= 1e-8);
    assert!((ssim(&a, &a, 9, 9, 1.0).unwrap() - 1.0).abs() < 1e-12);
    assert!((-1.0..=1.0).contains(&got));
    assert!(matches!(ssim(&a[..36], &b[..36], 6, 6, 1.0), Err(Error::Domain { .. })));
}

#[test]
fn ssim_of_noisy_constant_is_low() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = vec![0.5; 32 * 32];
    let noisy: Vec<f64> = gt.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
    let s = ssim(&noisy, &gt, 32, 32, 1.0).unwrap();
    assert!(s < 0.5, "ssim {s}");
}

#[test]
fn band_report_constructions() {
    let gt = rand_image(16, 16, 1);
    let report = kspace_band_report(&[gt.clone()], &[gt.clone()], 1.0 / 3.0).unwrap();
    assert!(report.rows[0].low.is_identical() && report.rows[0].high.is_identical());

    let (lo, _) = band_split(&fft2c(&gt).unwrap(), 1.0 / 3.0).unwrap();
    let low_only = ifft2c(&lo).unwrap();
    let report = kspace_band_report(&[low_only], &[gt], 1.0 / 3.0).unwrap();
    // equal up to FFT round-off
    let low = report.rows[0].low;
    assert!(low.is_identical() || low.value().unwrap() > 250.0, "low band {low}");
    let high = report.rows[0].high.value().expect("finite high-band psnr");
    assert!(high.is_finite() && high < 20.0, "high band {high}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn band_mse_adds_up(seed in any::<u64>(), h in 4usize..20, w in 4usize..20, lf in 0.05f64..0.95) {
        let a = rand_image(h, w, seed);
        let b = rand_image(h, w, seed ^ 0x5555);
        let (lo, hi, total) = band_mse_decomposition(&a, &b, lf).unwrap();
        prop_assert!((lo + hi - total).abs() <= 1e-6 * total.max(1.0));
        prop_assert!(lo >= 0.0 && hi >= 0.0);
    }
}

#[test]
fn evaluation_of_ground_truth_and_aggregates() {
    let samples: Vec<Sample<f64>> = (0..3).map(|i| sample(i, 16, 40 + i as u64)).collect();
    let gts: Vec<_> = samples.iter().map(|s| s.ground_truth.clone()).collect();
    let zf: Vec<_> = samples.iter().map(|s| zero_fill(&s.kspace, &s.mask).unwrap()).collect();
    let ids = [2, 0, 1];
    let report = evaluate_images(&ids, &gts, &zf, &gts).unwrap();
    assert_eq!(report.rows.iter().map(|r| r.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    for r in &report.rows {
        assert!(r.psnr.is_identical());
        assert!((r.ssim - 1.0).abs() < 1e-12);
        assert!(r.zf_psnr.value().unwrap().is_finite());
        assert!((-1.0..=1.0).contains(&r.zf_ssim));
    }
    assert_eq!(report.psnr().identical, 3);
    assert!(report.summary_text().contains("psnr = identical"));

    let zf_db: Vec<f64> = report.rows.iter().map(|r| r.zf_psnr.value().unwrap()).collect();
    let mean = zf_db.iter().sum::<f64>() / 3.0;
    let std = (zf_db.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    let s = report.zf_psnr();
    assert!((s.mean.unwrap() - mean).abs() <= 1e-12);
    assert!((s.std.unwrap() - std).abs() <= 1e-12);
    assert_eq!(report.to_csv().lines().count(), 4);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let samples: Vec<Sample<f32>> = (0..2).map(|i| sample(i, 16, i as u64)).collect();
    let cfg = TrainConfig { lr: 0.0, ..tiny_config(3, 1) };
    let out = train_samples(&cfg, &samples).unwrap();
    let init = ReconFormer::<f32>::new(cfg.model.clone()).unwrap().init_params(cfg.seed).unwrap();
    for (name, p) in init.iter() {
        assert_eq!(out.params.get(name).unwrap().data(), p.value.data(), "{name}");
    }
    assert_eq!(out.log.len(), 3);
    assert!(out.log.iter().all(|r| r.loss.is_finite() && r.loss > 0.0));
}

#[test]
fn training_is_deterministic() {
    let samples: Vec<Sample<f32>> = (0..3).map(|i| sample(i, 16, 7 + i as u64)).collect();
    let cfg = tiny_config(4, 2);
    let a = train_samples(&cfg, &samples).unwrap();
    let b = train_samples(&cfg, &samples).unwrap();
    let key = |o: &reconformer::train::TrainOutcome<f32>| o.log.iter().map(|r| (r.step, r.loss.to_bits())).collect::<Vec<_>>();
    assert_eq!(key(&a), key(&b));
    for (name, p) in a.params.iter() {
        assert_eq!(b.params.get(name).unwrap().data(), p.value.data());
    }
    assert!(a.log_csv().starts_with("step,loss,seconds\n"));
}

#[test]
fn geometry_mismatch_is_rejected() {
    let samples = vec![sample::<f32>(0, 32, 0)];
    assert!(matches!(train_samples(&tiny_config(1, 1), &samples), Err(Error::Shape { .. })));
}

#[test]
fn single_sample_overfit() {
    let samples = vec![sample::<f32>(0, 64, 21)];
    let mut cfg = TrainConfig { steps: 200, batch_size: 1, ..TrainConfig::default() };
    cfg.model.unroll = 2;
    let out = train_samples(&cfg, &samples).unwrap();
    let first = out.log[0].loss;
    let last = out.log.last().unwrap().loss;
    assert!(last < 0.25 * first, "loss {first} -> {last}");
}

#[test]
fn ablation_rows_are_cumulative() {
    let base = ModelConfig::default();
    let rows = ablation_variants(&base, AblationToggles::default());
    let labels: Vec<&str> = rows.iter().map(|(l, _)| l.as_str()).collect();
    assert_eq!(labels, ["ru1", "ru1+ru2", "ru1+ru2+ru3", "ru1+ru2+ru3+rm", "ru1+ru2+ru3+rm+rptl"]);
    assert_eq!(rows.last().unwrap().1, base);
    assert_eq!(rows[0].1.attention, "mhsa");
    assert!(!rows[0].1.use_rm && rows[0].1.active_units() == vec![1]);

    let count = |m: &ModelConfig| ReconFormer::<f32>::new(m.clone()).unwrap().param_specs().iter().map(|s| s.numel()).sum::<usize>();
    assert!(count(&rows[0].1) < count(&base));

    let partial = ablation_variants(&base, AblationToggles { ru3: false, rptl: false, ..AblationToggles::default() });
    assert_eq!(partial.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>(), ["ru1", "ru1+ru2", "ru1+ru2+rm"]);
}

#[test]
fn small_studies_run() {
    let samples: Vec<Sample<f32>> = (0..2).map(|i| sample(i, 16, 30 + i as u64)).collect();
    let cfg = tiny_config(2, 1);
    let rows = unroll_sweep(&cfg, &[1], &samples).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].psnr.is_finite() && rows[0].seconds > 0.0);

    let report = ablation_run(&cfg, AblationToggles { ru3: false, rm: false, ..AblationToggles::default() }, &[0, 1], &samples).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows.iter().all(|r| r.psnr.len() == 2 && r.median_psnr().is_finite()));
    assert!(report.rows[0].params < report.rows[2].params);

    let model = ReconFormer::<f32>::new(cfg.model.clone()).unwrap();
    let params = model.init_params(0).unwrap();
    let eval = evaluate(&model, &params, &samples, 1).unwrap();
    assert_eq!(eval.rows.len(), 2);
    assert!(eval.config.iter().any(|(k, v)| k == "eval_unroll" && v == "1"));
}
