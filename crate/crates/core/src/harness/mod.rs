//! Experiment configs, model bundles, paired evaluation, statistics,
//! the verification suite and report export.

mod bundle;
mod config;
mod experiment;
mod export;
mod stats;
mod verify;

pub use bundle::{
    bundle_path, load_bundle, train_command, write_bundle, Bundle, BundleFile, BundleManifest, BUNDLE_FORMAT,
    MANIFEST_FILE,
};
pub use config::{is_signal_trial, signal_count, DetectorSpec, ExperimentConfig, TrainConfig};
pub use experiment::{
    run_experiment, BundleEcho, MetricsReport, PairedComparison, PointMetrics, RuntimeStats, SeedEcho,
    ThresholdRecord,
};
pub use export::{from_json, render, to_csv, to_json, to_svg, ReportFormat, CSV_HEADER};
pub use stats::{
    binomial_upper_tail_half, compute_ta_cdf, ks_no_worse, mcnemar, wilson_interval, CdfPoint, KsNoWorse, McNemar,
    RateEstimate, TaCdf, Z95,
};
pub use verify::{
    cazac_check, error_variance_check, lemma_check, mmse_inverse_check, random_psd, verify_command,
    verify_pair_file, whitening_check, whitening_exhaustive_check, CheckResult, LemmaPairFile, VerifyReport,
};

/// Version string embedded in every report: the crate version plus the
/// `git describe` output captured at build time, when available.
pub fn software_version() -> String {
    match option_env!("HYNE_GIT_DESCRIBE") {
        Some(g) if !g.is_empty() => format!("hyne-core {} ({g})", env!("CARGO_PKG_VERSION")),
        _ => format!("hyne-core {}", env!("CARGO_PKG_VERSION")),
    }
}
