//! Fast invariant suite run by `reconformer selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{window_merge, window_partition, AttentionRegistry, CorrelationState, RsaConfig};
use crate::autodiff::{finite_diff_gradcheck, gradcheck_params, Graph, ParamStore};
use crate::data::{decode_records, encode_records, gen_phantom, PhantomSpec, Sample, TensorRecord};
use crate::error::Result;
use crate::kspace::{data_consistency, fft2c, forward_model, ifft2c, make_cartesian_mask, ComplexImage, KSpace};
use crate::net::{ModelConfig, ReconFormer};
use crate::tensor::Tensor;
use crate::train::{band_mse_decomposition, train_samples, TrainConfig};

/// Outcome of one invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match run() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

fn rand_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ComplexImage<f64> {
    ComplexImage::from_fn(h, w, |_, _| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor<f64>> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn naive_dft(img: &ComplexImage<f64>) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let d = img.data();
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let mut out = vec![0.0; 2 * h * w];
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let t = -2.0
                        * std::f64::consts::PI
                        * ((u as f64 - cy) * (y as f64 - cy) / h as f64 + (v as f64 - cx) * (x as f64 - cx) / w as f64);
                    let (a, b) = (d[2 * (y * w + x)], d[2 * (y * w + x) + 1]);
                    re += a * t.cos() - b * t.sin();
                    im += a * t.sin() + b * t.cos();
                }
            }
            out[2 * (u * w + v)] = re * norm;
            out[2 * (u * w + v) + 1] = im * norm;
        }
    }
    out
}

fn fft_check() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for n in [4, 8] {
        let img = rand_image(n, n, &mut rng);
        let k = fft2c(&img)?;
        worst = worst.max(max_diff(k.data(), &naive_dft(&img)));
        worst = worst.max(max_diff(ifft2c(&k)?.data(), img.data()));
        let e = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        worst = worst.max((e(k.data()) - e(img.data())).abs() / e(img.data()));
    }
    Ok((worst <= 1e-10, format!("max deviation {worst:.2e}")))
}

fn dc_check() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let img = rand_image(16, 16, &mut rng);
        let mask = make_cartesian_mask(16, 4.0, 0.125, i)?;
        let x = KSpace::new(16, 16, rand_image(16, 16, &mut rng).into_data())?;
        let once = data_consistency(&img, &x, &mask)?;
        let twice = data_consistency(&once, &x, &mask)?;
        let k = fft2c(&once)?;
        for y in 0..16 {
            for c in (0..16).filter(|&c| mask.is_sampled(c)) {
                let j = 2 * (y * 16 + c);
                worst = worst.max((k.data()[j] - x.data()[j]).abs()).max((k.data()[j + 1] - x.data()[j + 1]).abs());
            }
        }
        worst = worst.max(max_diff(once.data(), twice.data()));
    }
    Ok((worst <= 1e-10, format!("max deviation {worst:.2e}")))
}

fn window_check() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let feat = rand_tensor(&[2, 8, 12, 3], &mut rng)?;
    let mut exact = true;
    for shift in [0, 2] {
        let mut g = Graph::new();
        let x = g.constant(feat.clone());
        let grid = window_partition(&mut g, x, 4, shift)?;
        let back = window_merge(&mut g, &grid)?;
        exact &= g.data(back)? == feat.data();
    }
    Ok((exact, "shifts 0 and 2".to_string()))
}

fn attention_check() -> Result<(bool, String)> {
    let reg = AttentionRegistry::<f64>::default();
    let cfg = RsaConfig { embed_dim: 4, window_size: 4, scales: vec![1], heads_per_scale: 2, ..RsaConfig::default() };
    let rsa = reg.get("rsa")?;
    let mhsa = reg.get("mhsa")?;
    let mut store = ParamStore::from_specs(&rsa.param_specs(&cfg, "attn"), 5)?;
    let lambda = store.get_mut("attn.lambda").expect("rsa has lambda");
    lambda.data_mut().iter_mut().for_each(|v| *v = 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let feat = rand_tensor(&[1, 8, 8, 4], &mut rng)?;
    let run = |kernel: &dyn crate::attention::AttentionKernel<f64>| -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let params = store.bind_frozen(&mut g);
        let x = g.constant(feat.clone());
        let grid = window_partition(&mut g, x, 4, 0)?;
        let (out, _) = kernel.forward(&mut g, &cfg, &grid, &CorrelationState::zeros(), &params, "attn")?;
        Ok(g.data(out)?.to_vec())
    };
    let diff = max_diff(&run(rsa.as_ref())?, &run(mhsa.as_ref())?);
    let mut g = Graph::new();
    let s = g.constant(rand_tensor(&[3, 5, 7], &mut rng)?);
    let p = g.softmax(s)?;
    let rows = g.data(p)?.chunks(7).map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    Ok((diff <= 1e-10 && rows <= 1e-12, format!("rsa(λ=1, c=0) vs mhsa {diff:.2e}, softmax rows {rows:.2e}")))
}

fn gradient_check() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&[3, 4], &mut rng)?;
    let w = rand_tensor(&[4, 5], &mut rng)?;
    let weights = rand_tensor(&[3, 5], &mut rng)?;
    let ops = finite_diff_gradcheck(
        |g, x| {
            let wv = g.constant(w.clone());
            let m = g.matmul(x, wv)?;
            let a = g.gelu(m)?;
            let s = g.softmax(a)?;
            g.weighted_sum(s, &weights)
        },
        &x,
        1e-5,
    )?;
    let model = ReconFormer::<f64>::new(ModelConfig { height: 16, width: 16, channels: 8, unroll: 2, ..ModelConfig::default() })?;
    let mut store = model.init_params(7)?;
    let names: Vec<String> = store.names().map(String::from).collect();
    for n in &names {
        if n.ends_with("bias") || n.ends_with("beta") {
            if let Some(t) = store.get_mut(n) {
                t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
            }
        }
    }
    let img = gen_phantom(&PhantomSpec::new(16, 16, 8))?;
    let mask = make_cartesian_mask(16, 4.0, 0.125, 8)?;
    let ks = vec![forward_model(&img, &mask, 0.0, 0)?];
    let ms = vec![mask];
    let out_w = rand_tensor(&[1, 16, 16, 2], &mut rng)?;
    let coords: Vec<(String, usize)> = (0..10)
        .map(|_| {
            let n = names[rng.gen_range(0..names.len())].clone();
            let i = rng.gen_range(0..store.get(&n).map_or(1, |t| t.numel()));
            (n, i)
        })
        .collect();
    let net = gradcheck_params(
        &store,
        |g, p| {
            let out = model.forward(g, p, &ks, &ms, 2)?;
            g.weighted_sum(out.final_output(), &out_w)
        },
        &coords,
        1e-5,
    )?;
    let worst = ops.max_rel_error.max(net.max_rel_error);
    Ok((worst <= 1e-3, format!("ops {:.2e}, model {:.2e}", ops.max_rel_error, net.max_rel_error)))
}

fn record_check() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let records = vec![
        TensorRecord::from_tensor("a", &rand_tensor(&[2, 3], &mut rng)?)?,
        TensorRecord::from_tensor("b", &rand_tensor(&[4], &mut rng)?.cast::<f32>())?,
    ];
    let bytes = encode_records(&records);
    let back = decode_records(&bytes)?;
    Ok((back == records && encode_records(&back) == bytes, format!("{} bytes", bytes.len())))
}

fn determinism_check() -> Result<(bool, String)> {
    let samples: Vec<Sample<f32>> = (0..2u64)
        .map(|s| {
            let gt = gen_phantom(&PhantomSpec::new(16, 16, s))?.cast::<f32>();
            let mask = make_cartesian_mask(16, 4.0, 0.125, s)?;
            let kspace = forward_model(&gt, &mask, 0.0, s)?;
            Ok(Sample { id: s as usize, seed: s, ground_truth: gt, kspace, mask })
        })
        .collect::<Result<_>>()?;
    let cfg = TrainConfig {
        model: ModelConfig { height: 16, width: 16, channels: 8, unroll: 1, ..ModelConfig::default() },
        steps: 3,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let a = train_samples(&cfg, &samples)?;
    let b = train_samples(&cfg, &samples)?;
    let same = a.log.iter().zip(&b.log).all(|(x, y)| x.step == y.step && x.loss.to_bits() == y.loss.to_bits());
    Ok((same && a.log.len() == 3, format!("final loss {:.6}", a.log[2].loss)))
}

fn band_check() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let a = rand_image(12, 16, &mut rng);
        let b = rand_image(12, 16, &mut rng);
        let (lo, hi, total) = band_mse_decomposition(&a, &b, 1.0 / 3.0)?;
        worst = worst.max((lo + hi - total).abs());
    }
    Ok((worst <= 1e-6, format!("max gap {worst:.2e}")))
}

/// Runs every check; the suite passes when all of them pass.
pub fn run_all() -> Vec<Check> {
    vec![
        check("fft-oracle-roundtrip-parseval", fft_check),
        check("data-consistency", dc_check),
        check("window-roundtrip", window_check),
        check("attention-degeneracy", attention_check),
        check("finite-difference-gradients", gradient_check),
        check("record-roundtrip", record_check),
        check("training-determinism", determinism_check),
        check("band-decomposition", band_check),
    ]
}
