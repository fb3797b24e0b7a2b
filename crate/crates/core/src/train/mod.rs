//! Training, image-quality metrics, evaluation and the comparative studies.

mod config;
mod eval;
mod metrics;
mod studies;
mod trainer;

pub use config::TrainConfig;
pub use eval::{
    band_mse_decomposition, evaluate, evaluate_images, kspace_band_report, BandReport, BandRow, MetricsReport,
    SampleMetrics, Summary,
};
pub use metrics::{magnitude, psnr, ssim, Psnr, SSIM_WINDOW};
pub use studies::{ablation_run, ablation_variants, unroll_sweep, AblationReport, AblationRow, AblationToggles, SweepRow};
pub use trainer::{train, train_samples, LossRecord, TrainOutcome};
