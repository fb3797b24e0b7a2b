use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reconformer::config::{Configurable, KeyValues};
use reconformer::data::{build_dataset, load_checkpoint, load_dataset, save_record, DatasetSpec, TensorRecord};
use reconformer::kspace::{zero_fill, ComplexImage};
use reconformer::net::ReconFormer;
use reconformer::train::{
    ablation_run, band_mse_decomposition, evaluate, kspace_band_report, train, unroll_sweep, AblationToggles, SweepRow,
    TrainConfig,
};
use reconformer::{Error, Tensor};

#[derive(Parser, Debug)]
#[command(name = "reconformer", version, about = "Recurrent pyramid transformer MRI reconstruction on synthetic phantoms")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting after the file is read; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed (training seed, or master seed for gen-data).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print progress lines.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic phantom dataset into the output directory.
    GenData(GenData),
    /// Train a model and write checkpoint.rfk and loss.csv.
    Train(DataArgs),
    /// Reconstruct one sample and write magnitude and error-map records.
    Recon(Recon),
    /// Evaluate a checkpoint against the dataset and the zero-filled baseline.
    Eval(DataArgs),
    /// Train the cumulative ablation variants over several seeds.
    Ablate(Ablate),
    /// Train and evaluate one fresh model per unroll length.
    SweepUnroll(Sweep),
    /// Per-band PSNR and MSE decomposition for a checkpoint.
    KspaceAnalysis(Bands),
    /// Run the built-in invariant suite.
    Selftest,
}

#[derive(Args, Debug)]
struct GenData {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    af: Option<f64>,
    #[arg(long)]
    cf: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Recon {
    #[command(flatten)]
    data: DataArgs,
    /// Sample id.
    #[arg(long, default_value_t = 0)]
    sample: usize,
}

#[derive(Args, Debug)]
struct Ablate {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long)]
    no_ru2: bool,
    #[arg(long)]
    no_ru3: bool,
    #[arg(long)]
    no_rm: bool,
    #[arg(long)]
    no_rptl: bool,
}

#[derive(Args, Debug)]
struct Sweep {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
    unrolls: Vec<usize>,
}

#[derive(Args, Debug)]
struct Bands {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "1/3")]
    low_fraction: String,
}

impl Command {
    /// Module and operation named in diagnostics.
    fn origin(&self) -> &'static str {
        match self {
            Command::GenData(_) => "phantom-data::build_dataset",
            Command::Train(_) => "train-eval::train",
            Command::Recon(_) => "reconformer-net::reconstruct",
            Command::Eval(_) => "train-eval::evaluate",
            Command::Ablate(_) => "train-eval::ablation_run",
            Command::SweepUnroll(_) => "train-eval::unroll_sweep",
            Command::KspaceAnalysis(_) => "train-eval::kspace_band_report",
            Command::Selftest => "cli::selftest",
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Train(_) => "train",
            Command::Recon(_) => "recon",
            Command::Eval(_) => "eval",
            Command::Ablate(_) => "ablate",
            Command::SweepUnroll(_) => "sweep-unroll",
            Command::KspaceAnalysis(_) => "kspace-analysis",
            Command::Selftest => "selftest",
        }
    }
}

type Run<T> = reconformer::Result<T>;

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}

fn write(path: &Path, text: &str) -> Run<()> {
    std::fs::write(path, text).map_err(|e| io(path, e))
}

fn settings(cli: &Cli) -> Run<KeyValues> {
    let mut kv = match &cli.config {
        Some(p) => KeyValues::from_file(p)?,
        None => KeyValues::default(),
    };
    for o in &cli.overrides {
        let (k, v) = KeyValues::parse_override(o)?;
        kv.push(k, v);
    }
    Ok(kv)
}

/// Writes the resolved configuration before any work; command-only flags are
/// echoed as comments so the file can be fed back through `--config`.
fn echo_config(out: &Path, command: &str, extra: &[(&str, String)], entries: &[(String, String)]) -> Run<()> {
    std::fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let mut text = format!("# command = {command}\n");
    for (k, v) in extra {
        text.push_str(&format!("# {k} = {v}\n"));
    }
    text.push_str(&KeyValues::render(entries));
    write(&out.join("effective_config.txt"), &text)
}

fn train_config(cli: &Cli, data: Option<&PathBuf>, checkpoint: Option<&PathBuf>) -> Run<TrainConfig> {
    let mut cfg = TrainConfig::default();
    cfg.apply(&settings(cli)?)?;
    if let Some(d) = data {
        cfg.dataset = d.clone();
    }
    if let Some(c) = checkpoint {
        cfg.checkpoint = Some(c.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.verbose && cfg.log_every == 0 {
        cfg.log_every = 10;
    }
    Ok(cfg)
}

fn require_checkpoint(cfg: &TrainConfig) -> Run<PathBuf> {
    cfg.checkpoint.clone().ok_or_else(|| Error::Usage("no checkpoint: pass --checkpoint or set checkpoint in the config".into()))
}

fn magnitude_tensor(img: &ComplexImage<f64>) -> Run<Tensor<f64>> {
    Tensor::new(vec![img.height(), img.width()], img.magnitude())
}

fn run(cli: &Cli) -> Run<()> {
    let out = &cli.out;
    match &cli.command {
        Command::GenData(a) => {
            let mut spec = DatasetSpec::default();
            spec.apply(&settings(cli)?)?;
            if let Some(v) = a.n {
                spec.samples = v;
            }
            if let Some(v) = a.h {
                spec.height = v;
            }
            if let Some(v) = a.w {
                spec.width = v;
            }
            if let Some(v) = a.af {
                spec.acceleration = v;
            }
            if let Some(v) = a.cf {
                spec.center_fraction = v;
            }
            if let Some(v) = a.sigma {
                spec.noise_sigma = v;
            }
            if let Some(v) = cli.seed {
                spec.master_seed = v;
            }
            echo_config(out, "gen-data", &[], &spec.entries())?;
            let manifest = build_dataset(&spec, out)?;
            println!("wrote {} samples to {}", manifest.samples.len(), out.display());
        }
        Command::Train(a) => {
            let mut cfg = train_config(cli, a.dataset.as_ref(), a.checkpoint.as_ref())?;
            cfg.checkpoint.get_or_insert_with(|| out.join("checkpoint.rfk"));
            cfg.log.get_or_insert_with(|| out.join("loss.csv"));
            cfg.validate()?;
            echo_config(out, "train", &[], &cfg.entries())?;
            let outcome = train(&cfg)?;
            let last = outcome.log.last().map_or(f64::NAN, |r| r.loss);
            println!("trained {} steps in {:.1}s, final loss {last:.6}", outcome.log.len(), outcome.seconds);
        }
        Command::Eval(a) => {
            let cfg = train_config(cli, a.dataset.as_ref(), a.checkpoint.as_ref())?;
            let ckpt = require_checkpoint(&cfg)?;
            echo_config(out, "eval", &[], &cfg.entries())?;
            let data = load_dataset::<f32>(&cfg.dataset)?;
            let model = ReconFormer::<f32>::new(cfg.model.clone())?;
            let params = load_checkpoint::<f32>(&ckpt)?.params;
            let report = evaluate(&model, &params, &data.samples, cfg.model.unroll)?;
            write(&out.join("metrics.csv"), &report.to_csv())?;
            let summary = report.summary_text();
            write(&out.join("summary.txt"), &summary)?;
            print!("{summary}");
        }
        Command::Recon(a) => {
            let cfg = train_config(cli, a.data.dataset.as_ref(), a.data.checkpoint.as_ref())?;
            let ckpt = require_checkpoint(&cfg)?;
            echo_config(out, "recon", &[("sample", a.sample.to_string())], &cfg.entries())?;
            let data = load_dataset::<f32>(&cfg.dataset)?;
            let s = data
                .samples
                .iter()
                .find(|s| s.id == a.sample)
                .ok_or_else(|| Error::Usage(format!("dataset has no sample {}", a.sample)))?;
            let model = ReconFormer::<f32>::new(cfg.model.clone())?;
            let params = load_checkpoint::<f32>(&ckpt)?.params;
            let recon = model
                .reconstruct(&params, std::slice::from_ref(&s.kspace), std::slice::from_ref(&s.mask), cfg.model.unroll)?
                .remove(0)
                .cast::<f64>();
            let gt = s.ground_truth.cast::<f64>();
            let zf = zero_fill(&s.kspace, &s.mask)?.cast::<f64>();
            let mut stats = String::from("image,mean_abs_error,max_abs_error,rmse\n");
            for (label, img) in [("recon", &recon), ("zero_filled", &zf)] {
                let mag = magnitude_tensor(img)?;
                let err: Vec<f64> = mag.data().iter().zip(gt.magnitude()).map(|(a, b)| (a - b).abs()).collect();
                let n = err.len() as f64;
                stats.push_str(&format!(
                    "{label},{:.6e},{:.6e},{:.6e}\n",
                    err.iter().sum::<f64>() / n,
                    err.iter().copied().fold(0.0, f64::max),
                    (err.iter().map(|e| e * e).sum::<f64>() / n).sqrt()
                ));
                save_record(&out.join(format!("{label}_magnitude.rfk")), &TensorRecord::from_tensor(format!("{label}_magnitude"), &mag)?)?;
                let err = Tensor::new(mag.shape().to_vec(), err)?;
                save_record(&out.join(format!("{label}_error.rfk")), &TensorRecord::from_tensor(format!("{label}_error"), &err)?)?;
            }
            save_record(&out.join("gt_magnitude.rfk"), &TensorRecord::from_tensor("gt_magnitude", &magnitude_tensor(&gt)?)?)?;
            write(&out.join("error_stats.csv"), &stats)?;
            print!("{stats}");
        }
        Command::Ablate(a) => {
            let cfg = train_config(cli, a.dataset.as_ref(), None)?;
            let toggles = AblationToggles { ru2: !a.no_ru2, ru3: !a.no_ru3, rm: !a.no_rm, rptl: !a.no_rptl };
            let seeds: Vec<String> = a.seeds.iter().map(u64::to_string).collect();
            echo_config(out, "ablate", &[("seeds", seeds.join(",")), ("toggles", format!("{toggles:?}"))], &cfg.entries())?;
            let data = load_dataset::<f32>(&cfg.dataset)?;
            let report = ablation_run(&cfg, toggles, &a.seeds, &data.samples)?;
            let csv = report.to_csv();
            write(&out.join("ablation.csv"), &csv)?;
            print!("{csv}");
        }
        Command::SweepUnroll(a) => {
            let cfg = train_config(cli, a.dataset.as_ref(), None)?;
            let ts: Vec<String> = a.unrolls.iter().map(usize::to_string).collect();
            echo_config(out, "sweep-unroll", &[("unrolls", ts.join(","))], &cfg.entries())?;
            let data = load_dataset::<f32>(&cfg.dataset)?;
            let rows = unroll_sweep(&cfg, &a.unrolls, &data.samples)?;
            let csv = SweepRow::csv(&rows);
            write(&out.join("sweep.csv"), &csv)?;
            print!("{csv}");
        }
        Command::KspaceAnalysis(a) => {
            let cfg = train_config(cli, a.data.dataset.as_ref(), a.data.checkpoint.as_ref())?;
            let ckpt = require_checkpoint(&cfg)?;
            let lf = reconformer::config::parse_ratio("low_fraction", &a.low_fraction)?;
            echo_config(out, "kspace-analysis", &[("low_fraction", lf.to_string())], &cfg.entries())?;
            let data = load_dataset::<f32>(&cfg.dataset)?;
            let model = ReconFormer::<f32>::new(cfg.model.clone())?;
            let params = load_checkpoint::<f32>(&ckpt)?.params;
            let mut recons = Vec::new();
            let mut gts = Vec::new();
            for s in &data.samples {
                let r = model.reconstruct(&params, std::slice::from_ref(&s.kspace), std::slice::from_ref(&s.mask), cfg.model.unroll)?;
                recons.push(r[0].cast::<f64>());
                gts.push(s.ground_truth.cast::<f64>());
            }
            let report = kspace_band_report(&recons, &gts, lf)?;
            let mut mse = String::from("index,low_mse,high_mse,total_mse\n");
            for (i, (r, g)) in recons.iter().zip(&gts).enumerate() {
                let (lo, hi, total) = band_mse_decomposition(r, g, lf)?;
                mse.push_str(&format!("{i},{lo:.6e},{hi:.6e},{total:.6e}\n"));
            }
            write(&out.join("bands.csv"), &report.to_csv())?;
            write(&out.join("band_mse.csv"), &mse)?;
            print!("{}", report.to_csv());
        }
        Command::Selftest => {
            echo_config(out, "selftest", &[], &[])?;
            let checks = reconformer::selftest::run_all();
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Error::Domain { op: "selftest", detail: format!("{failed} of {} checks failed", checks.len()) });
            }
            println!("all {} checks passed", checks.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("reconformer {} [{}]: {e}", cli.command.name(), cli.command.origin());
            match e {
                Error::Usage(_) | Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
