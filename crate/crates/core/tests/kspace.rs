use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reconformer::kspace::{
    band_split, center_block_width, data_consistency, fft2c, ifft2c, make_cartesian_mask, zero_fill, ComplexImage, KSpace,
};

fn rand_image(h: usize, w: usize, seed: u64) -> ComplexImage<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexImage::from_fn(h, w, |_, _| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn fft_is_unitary(h in 1usize..24, w in 1usize..24, seed in any::<u64>()) {
        let img = rand_image(h, w, seed);
        let k = fft2c(&img).unwrap();
        prop_assert!(max_diff(ifft2c(&k).unwrap().data(), img.data()) <= 1e-12);
        let e = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        prop_assert!((e(k.data()) - e(img.data())).abs() <= 1e-10 * e(img.data()));
    }

    #[test]
    fn dc_keeps_measurements_and_is_idempotent(h in 8usize..24, w in 8usize..24, af in 2.0f64..6.0, seed in any::<u64>()) {
        let img = rand_image(h, w, seed);
        let x = KSpace::new(h, w, rand_image(h, w, seed ^ 1).into_data()).unwrap();
        let mask = make_cartesian_mask(w, af, 1.0 / w as f64 + 1e-9, seed).unwrap();
        let once = data_consistency(&img, &x, &mask).unwrap();
        let k = fft2c(&once).unwrap();
        for y in 0..h {
            for c in (0..w).filter(|&c| mask.is_sampled(c)) {
                let j = 2 * (y * w + c);
                prop_assert!((k.data()[j] - x.data()[j]).abs() <= 1e-12);
                prop_assert!((k.data()[j + 1] - x.data()[j + 1]).abs() <= 1e-12);
            }
        }
        let twice = data_consistency(&once, &x, &mask).unwrap();
        prop_assert!(max_diff(once.data(), twice.data()) <= 1e-12);
        // measured data run through DC from the zero-filled image is a fixed point
        let zf = zero_fill(&x, &mask).unwrap();
        prop_assert!(max_diff(data_consistency(&zf, &x, &mask).unwrap().data(), zf.data()) <= 1e-12);
    }

    #[test]
    fn bands_partition_the_spectrum(h in 1usize..20, w in 1usize..20, lf in 0.01f64..=1.0, seed in any::<u64>()) {
        let k = fft2c(&rand_image(h, w, seed)).unwrap();
        let (lo, hi) = band_split(&k, lf).unwrap();
        let sum: Vec<f64> = lo.data().iter().zip(hi.data()).map(|(a, b)| a + b).collect();
        prop_assert_eq!(&sum[..], k.data());
        prop_assert!(lo.data().iter().zip(hi.data()).all(|(a, b)| *a == 0.0 || *b == 0.0));
    }

    #[test]
    fn masks_keep_the_centre_block(w in 8usize..128, af in 1.5f64..8.0, seed in any::<u64>()) {
        let cf = 0.08f64.max(1.0 / w as f64);
        prop_assume!(af * cf < 1.0);
        let mask = make_cartesian_mask(w, af, cf, seed).unwrap();
        let block = center_block_width(w, cf);
        let pad = (w - block + 1) / 2;
        prop_assert!((pad..pad + block).all(|c| mask.is_sampled(c)));
        prop_assert_eq!(make_cartesian_mask(w, af, cf, seed).unwrap(), mask);
    }
}

#[test]
fn mask_rejects_unreachable_acceleration() {
    assert!(make_cartesian_mask(64, 8.0, 0.25, 0).is_err());
    assert!(make_cartesian_mask(64, 8.0, 1.0, 0).is_ok());
}
