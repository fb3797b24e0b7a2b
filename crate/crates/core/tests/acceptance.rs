//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! The overfit training runs are shared: the full model at seed 0 and T=3
//! serves the overfit, ablation, unroll and band criteria.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reconformer::attention::{window_merge, window_partition, AttentionRegistry, CorrelationState, RsaConfig};
use reconformer::autodiff::{finite_diff_gradcheck, gradcheck_coords, gradcheck_params, ConvOptions, Graph, ParamStore};
use reconformer::data::{build_dataset, decode_records, encode_records, gen_phantom, load_dataset, load_record, save_record, DatasetSpec, PhantomSpec, Sample, TensorRecord};
use reconformer::kspace::{data_consistency, fft2c, forward_model, ifft2c, make_cartesian_mask, ComplexImage, KSpace};
use reconformer::net::{ModelConfig, ReconFormer};
use reconformer::train::{
    ablation_variants, band_mse_decomposition, evaluate, kspace_band_report, train_samples, AblationToggles, Psnr,
    TrainConfig,
};
use reconformer::{Real, Result, Tensor};

/// Optimizer steps per overfit run (batch 1, lr 2e-4).
const STEPS: usize = 600;

struct Verdict {
    id: &'static str,
    passed: bool,
    detail: String,
    seconds: f64,
}

fn report(v: &Verdict) {
    println!("{} {}: {} [{:.1} s]", v.id, if v.passed { "PASS" } else { "FAIL" }, v.detail, v.seconds);
    let _ = std::io::stdout().flush();
}

fn timed(id: &'static str, budget: f64, run: impl FnOnce() -> Result<(bool, String)>) -> Verdict {
    let start = Instant::now();
    let out = run();
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = match out {
        Ok((ok, d)) => (ok && seconds <= budget, if seconds > budget { format!("{d}; over the {budget:.0} s budget") } else { d }),
        Err(e) => (false, format!("error: {e}")),
    };
    let v = Verdict { id, passed, detail, seconds };
    report(&v);
    v
}

fn rand_image<T: Real>(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ComplexImage<T> {
    ComplexImage::from_fn(h, w, |_, _| (T::lit(rng.gen_range(-1.0..1.0)), T::lit(rng.gen_range(-1.0..1.0))))
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn energy<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.as_f64() * x.as_f64()).sum()
}

// ---- AC-1 ----------------------------------------------------------------

fn naive_dft(img: &ComplexImage<f64>) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let d = img.data();
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
            let n = ((h * w) as f64).sqrt();
            out[2 * (u * w + v)] = re / n;
            out[2 * (u * w + v) + 1] = im / n;
        }
    }
    out
}

fn ac1() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut oracle: f64 = 0.0;
    for n in [4, 8] {
        for _ in 0..5 {
            let img = rand_image::<f64>(n, n, &mut rng);
            oracle = oracle.max(max_diff(fft2c(&img)?.data(), &naive_dft(&img)));
        }
    }
    let (mut round, mut parseval): (f64, f64) = (0.0, 0.0);
    for (h, w) in [(64, 64), (32, 48), (16, 16)] {
        let img = rand_image::<f32>(h, w, &mut rng);
        let k = fft2c(&img)?;
        let back = ifft2c(&k)?;
        let diff = img.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs() as f64).fold(0.0, f64::max);
        round = round.max(diff);
        parseval = parseval.max((energy(k.data()) - energy(img.data())).abs() / energy(img.data()));
    }
    Ok((
        oracle <= 1e-10 && round <= 1e-5 && parseval <= 1e-5,
        format!("naive DFT {oracle:.1e} (f64), round trip {round:.1e} (f32), Parseval {parseval:.1e}"),
    ))
}

// ---- AC-2 ----------------------------------------------------------------

fn ac2() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut fidelity, mut idem): (f64, f64) = (0.0, 0.0);
    for i in 0..100u64 {
        let (h, w) = ([16, 32, 64][i as usize % 3], [16, 24, 64][i as usize % 3]);
        let img = rand_image::<f32>(h, w, &mut rng);
        let x = KSpace::new(h, w, rand_image::<f32>(h, w, &mut rng).into_data())?;
        let mask = make_cartesian_mask(w, [2.0, 4.0, 8.0][i as usize % 3], 0.08, i)?;
        let once = data_consistency(&img, &x, &mask)?;
        let k = fft2c(&once)?;
        let scale = x.data().iter().map(|v| v.abs() as f64).fold(0.0, f64::max);
        for y in 0..h {
            for c in (0..w).filter(|&c| mask.is_sampled(c)) {
                for p in 0..2 {
                    let j = 2 * (y * w + c) + p;
                    fidelity = fidelity.max((k.data()[j] - x.data()[j]).abs() as f64 / scale);
                }
            }
        }
        let twice = data_consistency(&once, &x, &mask)?;
        idem = idem.max(once.data().iter().zip(twice.data()).map(|(a, b)| (a - b).abs() as f64).fold(0.0, f64::max));
    }
    Ok((fidelity <= 1e-5 && idem <= 1e-6, format!("sampled-column error {fidelity:.1e} (rel), idempotence {idem:.1e}")))
}

// ---- AC-3 ----------------------------------------------------------------

/// Windowed multi-head scaled dot-product attention straight from the image.
fn direct_window_attention(feat: &Tensor<f64>, k: usize, store: &ParamStore<f64>, heads: usize) -> (Vec<f64>, Vec<f64>) {
    let (b, h, w, c) = (feat.shape()[0], feat.shape()[1], feat.shape()[2], feat.shape()[3]);
    let d = c / heads;
    let t = k * k;
    let p = |n: &str| store.get(&format!("attn.{n}")).unwrap().data().to_vec();
    let (pw, pb) = (p("proj.weight"), p("proj.bias"));
    let mut out = Vec::new();
    let mut row_sums = Vec::new();
    for bi in 0..b {
        for wy in 0..h / k {
            for wx in 0..w / k {
                let x: Vec<f64> = (0..t)
                    .flat_map(|tok| {
                        let (y, xx) = (wy * k + tok / k, wx * k + tok % k);
                        feat.data()[((bi * h + y) * w + xx) * c..][..c].to_vec()
                    })
                    .collect();
                let mut cat = vec![0.0; t * c];
                for hd in 0..heads {
                    let proj = |m: &[f64]| -> Vec<f64> {
                        (0..t * d).map(|i| (0..c).map(|e| x[(i / d) * c + e] * m[e * d + i % d]).sum()).collect()
                    };
                    let (q, kk, v) = (proj(&p(&format!("head{hd}.q"))), proj(&p(&format!("head{hd}.k"))), proj(&p(&format!("head{hd}.v"))));
                    for i in 0..t {
                        let s: Vec<f64> = (0..t).map(|j| (0..d).map(|e| q[i * d + e] * kk[j * d + e]).sum::<f64>() / (d as f64).sqrt()).collect();
                        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
                        let a: Vec<f64> = s.iter().map(|v| (v - m).exp() / z).collect();
                        row_sums.push(a.iter().sum());
                        for e in 0..d {
                            cat[i * c + hd * d + e] = (0..t).map(|j| a[j] * v[j * d + e]).sum();
                        }
                    }
                }
                for i in 0..t {
                    for j in 0..c {
                        out.push(pb[j] + (0..c).map(|e| cat[i * c + e] * pw[e * c + j]).sum::<f64>());
                    }
                }
            }
        }
    }
    (out, row_sums)
}

fn ac3() -> Result<(bool, String)> {
    let reg = AttentionRegistry::<f64>::default();
    let rsa = reg.get("rsa")?;
    let cfg = RsaConfig { embed_dim: 8, window_size: 4, scales: vec![1], heads_per_scale: 2, ..RsaConfig::default() };
    let mut store = ParamStore::from_specs(&rsa.param_specs(&cfg, "attn"), 3)?;
    store.get_mut("attn.lambda").unwrap().data_mut().iter_mut().for_each(|v| *v = 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // 4 x 5 = 20 windows
    let feat = rand_tensor(&[1, 16, 20, 8], &mut rng);
    let mut g = Graph::new();
    let params = store.bind_frozen(&mut g);
    let x = g.constant(feat.clone());
    let grid = window_partition(&mut g, x, 4, 0)?;
    let (out, _) = rsa.forward(&mut g, &cfg, &grid, &CorrelationState::zeros(), &params, "attn")?;
    let (oracle, rows) = direct_window_attention(&feat, 4, &store, 2);
    let diff = max_diff(g.data(out)?, &oracle);
    let mut g2 = Graph::new();
    let s = g2.constant(rand_tensor(&[20, 16, 16], &mut rng));
    let sm = g2.softmax(s)?;
    let sums = g2.data(sm)?.chunks(16).map(|r| (r.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    let oracle_rows = rows.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    Ok((diff <= 1e-6 && sums <= 1e-6 && oracle_rows <= 1e-6, format!("20 windows max deviation {diff:.1e}, softmax row sums within {sums:.1e}")))
}

// ---- AC-4 ----------------------------------------------------------------

type Case<'a> = (&'static str, Box<dyn Fn(&mut Graph<f64>, reconformer::autodiff::Var) -> Result<reconformer::autodiff::Var> + 'a>);

fn ac4() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&[3, 4], &mut rng);
    let r = rand_tensor(&[3, 4], &mut rng);
    let other = rand_tensor(&[3, 4], &mut rng);
    let w = rand_tensor(&[4, 4], &mut rng);
    let bias = rand_tensor(&[4], &mut rng);
    let mut worst: (f64, &str) = (0.0, "");
    let mut note = |name: &'static str, e: f64| {
        if e > worst.0 {
            worst = (e, name);
        }
    };
    let wsum = |g: &mut Graph<f64>, y, r: &Tensor<f64>| g.weighted_sum(y, r);
    let cases: Vec<Case> = vec![
        ("add", Box::new(|g, v| { let o = g.constant(other.clone()); let y = g.add(v, o)?; wsum(g, y, &r) })),
        ("mul", Box::new(|g, v| { let y = g.mul(v, v)?; wsum(g, y, &r) })),
        ("scale", Box::new(|g, v| { let y = g.scale(v, -1.3)?; wsum(g, y, &r) })),
        ("add_bias", Box::new(|g, v| { let b = g.constant(bias.clone()); let y = g.add_bias(v, b)?; let y = g.mul(y, y)?; wsum(g, y, &r) })),
        ("gelu", Box::new(|g, v| { let y = g.gelu(v)?; wsum(g, y, &r) })),
        ("matmul", Box::new(|g, v| { let m = g.constant(w.clone()); let y = g.matmul(v, m)?; let y = g.mul(y, y)?; wsum(g, y, &r) })),
        ("matmul_ex", Box::new(|g, v| { let y = g.matmul_ex(v, v, true)?; let y = g.softmax(y)?; let y = g.matmul(y, v)?; wsum(g, y, &r) })),
        ("linear", Box::new(|g, v| { let m = g.constant(w.clone()); let b = g.constant(bias.clone()); let y = g.linear(v, m, Some(b))?; let y = g.gelu(y)?; wsum(g, y, &r) })),
        ("layer_norm", Box::new(|g, v| { let gm = g.constant(bias.clone()); let b = g.constant(bias.clone()); let y = g.layer_norm(v, gm, b, 1e-5)?; wsum(g, y, &r) })),
        ("softmax", Box::new(|g, v| { let y = g.softmax(v)?; wsum(g, y, &r) })),
        ("concat", Box::new(|g, v| { let y = g.concat(&[v, v])?; let y = g.mul(y, y)?; g.sum(y) })),
        ("gather", Box::new(|g, v| { let y = g.gather(v, Arc::new(vec![2, 0, 1, 0]), 4, vec![4, 4])?; let y = g.mul(y, y)?; g.sum(y) })),
        ("reshape", Box::new(|g, v| { let y = g.reshape(v, vec![4, 3])?; let y = g.softmax(y)?; let y = g.reshape(y, vec![3, 4])?; wsum(g, y, &r) })),
        ("avg_pool_tokens", Box::new(|g, v| { let t = g.reshape(v, vec![3, 4, 1])?; let y = g.avg_pool_tokens(t, 2, 1)?; let y = g.mul(y, y)?; g.sum(y) })),
    ];
    for (name, f) in &cases {
        note(name, finite_diff_gradcheck(|g, v| f(g, v), &x, 1e-5)?.max_rel_error);
    }
    // kinks of relu and l1 are excluded from the sweep
    let smooth: Vec<usize> = (0..x.numel()).filter(|&i| x.data()[i].abs() > 1e-3 && (x.data()[i] - other.data()[i]).abs() > 1e-3).collect();
    note("relu", gradcheck_coords(|g, v| { let y = g.relu(v)?; wsum(g, y, &r) }, &x, 1e-5, &smooth)?.max_rel_error);
    note("l1_loss", gradcheck_coords(|g, v| { let o = g.constant(other.clone()); g.l1_loss(v, o) }, &x, 1e-5, &smooth)?.max_rel_error);

    let lam = Tensor::new(vec![2], vec![0.3, 0.8])?;
    let scores = rand_tensor(&[2, 4, 4], &mut rng);
    let prior = rand_tensor(&[2, 4, 4], &mut rng);
    let rw = rand_tensor(&[2, 4, 4], &mut rng);
    note("blend(lambda)", finite_diff_gradcheck(|g, l| { let s = g.constant(scores.clone()); let p = g.constant(prior.clone()); let y = g.blend(s, Some(p), l, 1, 0.5)?; let y = g.softmax(y)?; g.weighted_sum(y, &rw) }, &lam, 1e-6)?.max_rel_error);
    note("blend(prior)", finite_diff_gradcheck(|g, p| { let s = g.constant(scores.clone()); let l = g.constant(lam.clone()); let y = g.blend(s, Some(p), l, 0, 0.5)?; g.weighted_sum(y, &rw) }, &prior, 1e-6)?.max_rel_error);

    for (name, opts, xs) in [("conv2d", ConvOptions::same(1), 8), ("conv2d stride 2", ConvOptions::same(2), 8), ("conv2d transposed", ConvOptions::transposed(2), 4)] {
        let wt = rand_tensor(&[3, 3, 2, 3], &mut rng);
        let input = rand_tensor(&[1, xs, xs, if opts.transposed { 3 } else { 2 }], &mut rng);
        let out_shape = |g: &Graph<f64>, y| g.shape(y).to_vec();
        let weights = |shape: Vec<usize>| { let n = shape.iter().product(); Tensor::new(shape, (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect()).unwrap() };
        note(name, finite_diff_gradcheck(|g, v| { let k = g.constant(wt.clone()); let y = g.conv2d(v, k, None, opts)?; let s = out_shape(g, y); g.weighted_sum(y, &weights(s)) }, &input, 1e-5)?.max_rel_error);
        note(name, finite_diff_gradcheck(|g, k| { let v = g.constant(input.clone()); let y = g.conv2d(v, k, None, opts)?; let s = out_shape(g, y); g.weighted_sum(y, &weights(s)) }, &wt, 1e-5)?.max_rel_error);
    }

    let img = gen_phantom(&PhantomSpec::new(16, 16, 5))?;
    let mask = make_cartesian_mask(16, 4.0, 0.125, 5)?;
    let ks = vec![forward_model(&img, &mask, 0.0, 0)?];
    let ms = vec![mask];
    let dc_in = rand_tensor(&[1, 16, 16, 2], &mut rng);
    let dc_w = rand_tensor(&[1, 16, 16, 2], &mut rng);
    note("data_consistency", finite_diff_gradcheck(|g, v| { let y = g.data_consistency(v, &ks, &ms)?; g.weighted_sum(y, &dc_w) }, &dc_in, 1e-5)?.max_rel_error);

    let model = ReconFormer::<f64>::new(ModelConfig { height: 16, width: 16, channels: 8, unroll: 2, ..ModelConfig::default() })?;
    let mut store = model.init_params(4)?;
    let names: Vec<String> = store.names().map(String::from).collect();
    for n in &names {
        if n.ends_with("bias") || n.ends_with("beta") {
            store.get_mut(n).unwrap().data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    let coords: Vec<(String, usize)> = (0..50)
        .map(|_| {
            let n = names[rng.gen_range(0..names.len())].clone();
            let i = rng.gen_range(0..store.get(&n).unwrap().numel());
            (n, i)
        })
        .collect();
    let out_w = rand_tensor(&[1, 16, 16, 2], &mut rng);
    let net = gradcheck_params(&store, |g, p| { let out = model.forward(g, p, &ks, &ms, 2)?; g.weighted_sum(out.final_output(), &out_w) }, &coords, 1e-5)?;
    note("model T=2", net.max_rel_error);
    let (e, name) = worst;
    Ok((e <= 1e-3, format!("{} op checks + 50 model parameters, worst rel error {e:.1e} ({name}); model {:.1e}", cases.len() + 8, net.max_rel_error)))
}

// ---- AC-5 ----------------------------------------------------------------

fn tiny_samples(n: u64) -> Result<Vec<Sample<f32>>> {
    (0..n)
        .map(|s| {
            let gt = gen_phantom(&PhantomSpec::new(16, 16, s))?.cast::<f32>();
            let mask = make_cartesian_mask(16, 4.0, 0.125, s)?;
            let kspace = forward_model(&gt, &mask, 0.0, s)?;
            Ok(Sample { id: s as usize, seed: s, ground_truth: gt, kspace, mask })
        })
        .collect()
}

fn ac5() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut windows_ok = true;
    for _ in 0..20 {
        let k = [2, 4, 8][rng.gen_range(0..3)];
        let shape = [rng.gen_range(1..3), k * rng.gen_range(1..4), k * rng.gen_range(1..4), rng.gen_range(1..5)];
        let feat = rand_tensor(&shape, &mut rng);
        for shift in [0, k / 2] {
            let mut g = Graph::new();
            let x = g.constant(feat.clone());
            let grid = window_partition(&mut g, x, k, shift)?;
            let back = window_merge(&mut g, &grid)?;
            windows_ok &= g.data(back)?.iter().zip(feat.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        }
    }

    let dir = tempfile::tempdir().map_err(|e| reconformer::Error::Io { path: "tempdir".into(), source: e })?;
    let mut records_ok = true;
    for case in 0..100 {
        let rank = rng.gen_range(1..5);
        let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..6)).collect();
        let values = rand_tensor(&shape, &mut rng);
        let name = format!("fuzz_{case}_{}", rng.gen::<u32>());
        let rec = if rng.gen_bool(0.5) { TensorRecord::from_tensor(&name, &values)? } else { TensorRecord::from_tensor(&name, &values.cast::<f32>())? };
        let bytes = encode_records(std::slice::from_ref(&rec));
        let back = decode_records(&bytes)?;
        records_ok &= back.len() == 1 && back[0] == rec && encode_records(&back) == bytes;
        let path = dir.path().join(format!("{case}.rfk"));
        save_record(&path, &rec)?;
        records_ok &= load_record(&path, &name)? == rec;
    }

    let samples = tiny_samples(3)?;
    let cfg = TrainConfig {
        model: ModelConfig { height: 16, width: 16, channels: 8, unroll: 2, ..ModelConfig::default() },
        steps: 5,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let a = train_samples(&cfg, &samples)?;
    let b = train_samples(&cfg, &samples)?;
    let logs_ok = a.log.len() == 5 && a.log.iter().zip(&b.log).all(|(x, y)| x.step == y.step && x.loss.to_bits() == y.loss.to_bits());
    Ok((windows_ok && records_ok && logs_ok, format!("windows {windows_ok}, 100 fuzzed records {records_ok}, training logs {logs_ok}")))
}

// ---- AC-6..AC-9 -----------------------------------------------------------

struct Run {
    psnr: f64,
    zf_psnr: f64,
    seconds: f64,
    params: ParamStore<f32>,
    model: ModelConfig,
}

fn overfit(model: &ModelConfig, seed: u64, samples: &[Sample<f32>]) -> Result<Run> {
    let start = Instant::now();
    let cfg = TrainConfig { model: model.clone(), steps: STEPS, batch_size: 1, seed, ..TrainConfig::default() };
    let outcome = train_samples(&cfg, samples)?;
    let net = ReconFormer::<f32>::new(model.clone())?;
    let report = evaluate(&net, &outcome.params, samples, model.unroll)?;
    Ok(Run {
        psnr: report.psnr().mean.unwrap_or(f64::INFINITY),
        zf_psnr: report.zf_psnr().mean.unwrap_or(f64::INFINITY),
        seconds: start.elapsed().as_secs_f64(),
        params: outcome.params,
        model: model.clone(),
    })
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn main() {
    let total = Instant::now();
    let mut verdicts = vec![
        timed("AC-1", 5.0, ac1),
        timed("AC-2", 10.0, ac2),
        timed("AC-3", 10.0, ac3),
        timed("AC-4", 300.0, ac4),
        timed("AC-5", 120.0, ac5),
    ];

    let dir = tempfile::tempdir().expect("temp dir");
    let samples = build_dataset(&DatasetSpec::default(), dir.path())
        .and_then(|_| load_dataset::<f32>(dir.path()))
        .map(|d| d.samples);
    let samples = match samples {
        Ok(s) => s,
        Err(e) => {
            for id in ["AC-6", "AC-7", "AC-8", "AC-9"] {
                let v = Verdict { id, passed: false, detail: format!("dataset error: {e}"), seconds: 0.0 };
                report(&v);
                verdicts.push(v);
            }
            std::process::exit(1);
        }
    };
    let full = ModelConfig { unroll: 3, ..ModelConfig::default() };

    let mut base: Option<Run> = None;
    verdicts.push(timed("AC-6", 900.0, || {
        let run = overfit(&full, 0, &samples)?;
        let gain = run.psnr - run.zf_psnr;
        let detail = format!("{STEPS} steps: PSNR {:.2} dB vs zero-filled {:.2} dB, gain {gain:+.2} dB (need ≥ 3)", run.psnr, run.zf_psnr);
        base = Some(run);
        Ok((gain >= 3.0, detail))
    }));
    let base_seconds = base.as_ref().map_or(0.0, |r| r.seconds);

    let start = Instant::now();
    let ac7 = (|| -> Result<(bool, String)> {
        let b = base.as_ref().ok_or_else(|| reconformer::Error::Usage("overfit run missing".into()))?;
        let ru1 = ablation_variants(&full, AblationToggles::default())[0].1.clone();
        let mut full_psnr = vec![b.psnr];
        for seed in [1, 2] {
            full_psnr.push(overfit(&full, seed, &samples)?.psnr);
        }
        let mut ru1_psnr = Vec::new();
        for seed in [0, 1, 2] {
            ru1_psnr.push(overfit(&ru1, seed, &samples)?.psnr);
        }
        let (f, r) = (median(&full_psnr), median(&ru1_psnr));
        Ok((f >= r - 0.2, format!("median PSNR full {f:.2} dB {full_psnr:.2?} vs RU1-only {r:.2} dB {ru1_psnr:.2?}")))
    })();
    let seconds = start.elapsed().as_secs_f64() + base_seconds;
    let v = match ac7 {
        Ok((ok, d)) => Verdict { id: "AC-7", passed: ok && seconds <= 3600.0, detail: d, seconds },
        Err(e) => Verdict { id: "AC-7", passed: false, detail: format!("error: {e}"), seconds },
    };
    report(&v);
    verdicts.push(v);

    let start = Instant::now();
    let ac8 = (|| -> Result<(bool, String)> {
        let b = base.as_ref().ok_or_else(|| reconformer::Error::Usage("overfit run missing".into()))?;
        let one = overfit(&ModelConfig { unroll: 1, ..full.clone() }, 0, &samples)?;
        Ok((b.psnr >= one.psnr - 0.1, format!("PSNR T=3 {:.2} dB vs T=1 {:.2} dB", b.psnr, one.psnr)))
    })();
    let seconds = start.elapsed().as_secs_f64() + base_seconds;
    let v = match ac8 {
        Ok((ok, d)) => Verdict { id: "AC-8", passed: ok && seconds <= 1800.0, detail: d, seconds },
        Err(e) => Verdict { id: "AC-8", passed: false, detail: format!("error: {e}"), seconds },
    };
    report(&v);
    verdicts.push(v);

    verdicts.push(timed("AC-9", 60.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut gap: f64 = 0.0;
        for _ in 0..50 {
            let (h, w) = (rng.gen_range(4..40), rng.gen_range(4..40));
            let a = rand_image::<f64>(h, w, &mut rng);
            let b = rand_image::<f64>(h, w, &mut rng);
            let (lo, hi, t) = band_mse_decomposition(&a, &b, rng.gen_range(0.1..0.9))?;
            gap = gap.max((lo + hi - t).abs());
        }
        let b = base.as_ref().ok_or_else(|| reconformer::Error::Usage("overfit run missing".into()))?;
        let net = ReconFormer::<f32>::new(b.model.clone())?;
        let mut recons = Vec::new();
        for s in &samples {
            let r = net.reconstruct(&b.params, std::slice::from_ref(&s.kspace), std::slice::from_ref(&s.mask), b.model.unroll)?;
            recons.push(r[0].cast::<f64>());
        }
        let gts: Vec<ComplexImage<f64>> = samples.iter().map(|s| s.ground_truth.cast()).collect();
        let bands = kspace_band_report(&recons, &gts, 1.0 / 3.0)?;
        let finite = bands.rows.iter().all(|r| matches!((r.low, r.high), (Psnr::Finite(a), Psnr::Finite(b)) if a.is_finite() && b.is_finite()));
        Ok((
            gap <= 1e-6 && finite,
            format!(
                "decomposition gap {gap:.1e} over 50 pairs; trained model band PSNR low {:.2} dB, high {:.2} dB",
                bands.low().mean.unwrap_or(f64::NAN),
                bands.high().mean.unwrap_or(f64::NAN)
            ),
        ))
    }));

    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed in {:.0} s", verdicts.len(), total.elapsed().as_secs_f64());
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
