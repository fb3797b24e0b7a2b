use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reconformer"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

const TINY: [&str; 8] = ["--set", "height=16", "--set", "width=16", "--set", "channels=8", "--set", "unroll=1"];

fn tiny(args: &[&str]) -> Vec<String> {
    args.iter().chain(TINY.iter()).map(|s| s.to_string()).collect()
}

#[test]
fn gen_data_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["gen-data", "--n", "4", "--h", "64", "--w", "64", "--af", "4", "--seed", "7", "--out", d.to_str().unwrap()]);
    }
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    assert_eq!(fa.len(), 4 * 3 + 2);
    assert_eq!(fa, fb);
    let echo = std::fs::read_to_string(a.join("effective_config.txt")).unwrap();
    assert!(echo.contains("master_seed = 7") && echo.contains("samples = 4"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--no-such-flag"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["train", "--set", "no_such_key=1", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn domain_errors_exit_1_with_origin() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["gen-data", "--n", "1", "--h", "32", "--w", "32", "--out", data.to_str().unwrap()]);
    let args = tiny(&["train", "--dataset", data.to_str().unwrap(), "--out", tmp.path().join("run").to_str().unwrap()]);
    let out = bin().args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train-eval::train") && err.contains("shape error in train"), "{err}");
}

#[test]
fn train_eval_recon_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run_dir = tmp.path().join("run");
    ok(&["gen-data", "--n", "2", "--h", "16", "--w", "16", "--out", data.to_str().unwrap()]);
    let mut args = tiny(&["train", "--dataset", data.to_str().unwrap(), "--out", run_dir.to_str().unwrap(), "--seed", "3"]);
    args.extend(["--set".into(), "steps=3".into()]);
    let stdout = String::from_utf8(bin().args(&args).output().unwrap().stdout).unwrap();
    assert!(stdout.contains("trained 3 steps"), "{stdout}");
    let log = std::fs::read_to_string(run_dir.join("loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert!(run_dir.join("checkpoint.rfk").exists());
    let config = run_dir.join("effective_config.txt");
    let echo = std::fs::read_to_string(&config).unwrap();
    assert!(echo.contains("seed = 3") && echo.contains("steps = 3") && echo.contains("height = 16"));

    let eval_dir = tmp.path().join("eval");
    let summary = ok(&["eval", "--config", config.to_str().unwrap(), "--out", eval_dir.to_str().unwrap()]);
    assert!(summary.contains("zero_filled_psnr") && summary.contains("config.height = 16"));
    let metrics = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);

    let recon_dir = tmp.path().join("recon");
    ok(&["recon", "--config", config.to_str().unwrap(), "--sample", "1", "--out", recon_dir.to_str().unwrap()]);
    for f in ["recon_magnitude.rfk", "recon_error.rfk", "zero_filled_error.rfk", "gt_magnitude.rfk", "error_stats.csv"] {
        assert!(recon_dir.join(f).exists(), "{f}");
    }
    let bands_dir = tmp.path().join("bands");
    let bands = ok(&["kspace-analysis", "--config", config.to_str().unwrap(), "--out", bands_dir.to_str().unwrap()]);
    assert!(bands.starts_with("index,low_psnr,high_psnr"));
    assert!(bands_dir.join("band_mse.csv").exists());
    assert_eq!(run(&["recon", "--config", config.to_str().unwrap(), "--sample", "9", "--out", recon_dir.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn studies_run_from_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["gen-data", "--n", "1", "--h", "16", "--w", "16", "--out", data.to_str().unwrap()]);
    let mut sweep = tiny(&["sweep-unroll", "--dataset", data.to_str().unwrap(), "--unrolls", "1,2", "--out", tmp.path().join("s").to_str().unwrap()]);
    sweep.extend(["--set".into(), "steps=1".into()]);
    let out = bin().args(&sweep).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);

    let mut ablate = tiny(&["ablate", "--dataset", data.to_str().unwrap(), "--seeds", "0", "--no-ru3", "--out", tmp.path().join("a").to_str().unwrap()]);
    ablate.extend(["--set".into(), "steps=1".into()]);
    let out = bin().args(&ablate).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.contains("ru1+ru2+rm+rptl"), "{csv}");
}

#[test]
fn selftest_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["selftest", "--out", tmp.path().to_str().unwrap()]);
    assert!(out.contains("all 8 checks passed"), "{out}");
    assert!(!out.contains("FAIL"));
}
