//! `hyne`: command-line driver for the preamble detection simulator.
//!
//! Exit codes: 0 success, 1 violation or runtime failure, 2 configuration
//! or input error. `HYNE_WORKERS` sets the worker count.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use hyne_core::channel::ChannelScenario;
use hyne_core::exec::configure_workers;
use hyne_core::harness::{
    self, load_bundle, run_experiment, train_command, verify_command, verify_pair_file, DetectorSpec,
    ExperimentConfig, ReportFormat, TrainConfig,
};
use hyne_core::legacy::{calibrate_threshold, energy_statistic, matched_filter};
use hyne_core::pipeline::{calibrate_oracle, hyne_transform_stages, MmseOracle};
use hyne_core::rng::{derive_seed, label};
use hyne_core::sequences::{generate_root, preamble, shift_table, write_csv};
use hyne_core::{Error, Execution};

#[derive(Parser)]
#[command(name = "hyne", version, about = "PRACH preamble detection with neural blind combining")]
struct Cli {
    /// Run single-threaded regardless of HYNE_WORKERS.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sequence, estimator and certifier checks.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Check a single (A, B, sigma^2) JSON file instead of the suite.
        #[arg(long)]
        pair: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate a detector threshold on noise-only grids.
    Calibrate {
        /// legacy, mmse_oracle or hyne:<bundle id>
        #[arg(long)]
        detector: String,
        #[arg(long)]
        pfa: f64,
        #[arg(long)]
        trials: usize,
        /// Experiment config providing scenario, root and bundle directory.
        #[arg(long)]
        config: Option<PathBuf>,
        /// SNR used to build the oracle filter.
        #[arg(long, default_value_t = -10.0)]
        snr_db: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a denoiser on one root and write a bundle.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a paired experiment; writes report.json and report.csv.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write report.svg.
        #[arg(long)]
        svg: bool,
    },
    /// Write a (shifted) root sequence as CSV.
    ExportSequence {
        #[arg(long, default_value_t = 1)]
        root: usize,
        #[arg(long, default_value_t = 139)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        n_cs: usize,
        #[arg(long, default_value_t = 1)]
        num_shifts: usize,
        /// Cyclic shift index.
        #[arg(long, default_value_t = 0)]
        shift: usize,
        /// Delay in samples added to the shift offset.
        #[arg(long, default_value_t = 0)]
        delay: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a JSON report.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Svg => ReportFormat::Svg,
        }
    }
}

/// Failure that maps to exit code 1 without being an error.
#[derive(Debug)]
struct Violation(String);

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Violation {}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        configure_workers(None);
        Execution::Parallel
    };
    match cli.command {
        Command::Verify { seed, pair, out } => {
            if let Some(p) = pair {
                let rep = verify_pair_file(&p)?;
                emit(&json(&rep)?, out.as_deref())?;
                if !(rep.holds && rep.chain_holds()) {
                    bail!(Violation(format!("lemma violated: e_A={} e_B={}", rep.e_a, rep.e_b)));
                }
                return Ok(());
            }
            let rep = verify_command(seed, exec)?;
            emit(&json(&rep)?, out.as_deref())?;
            for c in &rep.checks {
                eprintln!(
                    "{:<24} {} metric={:e} tol={:e} ({:.2}s)",
                    c.name,
                    if c.passed { "ok  " } else { "FAIL" },
                    c.metric,
                    c.tolerance,
                    c.seconds
                );
            }
            if rep.violations() > 0 {
                bail!(Violation(format!("{} check(s) failed", rep.violations())));
            }
        }
        Command::Calibrate {
            detector,
            pfa,
            trials,
            config,
            snr_db,
            seed,
            out,
        } => {
            let spec: DetectorSpec = detector.parse()?;
            let (cfg, bundle_root) = match &config {
                Some(p) => {
                    let c = ExperimentConfig::load(p)?;
                    let b = c.bundle_root(p);
                    (c, b)
                }
                None => (ExperimentConfig::default(), PathBuf::from("bundles")),
            };
            let seed = seed.unwrap_or_else(|| derive_seed(cfg.master_seed, &[label::CALIBRATION]));
            let scenario = ChannelScenario::from_config(&cfg.scenario, &cfg.zc)?;
            let root = generate_root(&cfg.zc)?;
            let t0 = Instant::now();
            let th = match spec {
                DetectorSpec::Legacy => calibrate_threshold(
                    |g| Ok(energy_statistic(&matched_filter(g, &root)?)),
                    &scenario,
                    pfa,
                    trials,
                    seed,
                    exec,
                )?,
                DetectorSpec::MmseOracle => {
                    let oracle = MmseOracle::for_scenario(&scenario.at_snr_db(snr_db))?;
                    calibrate_oracle(&oracle, &root, &scenario, pfa, trials, seed, exec)?
                }
                DetectorSpec::Hyne(id) => {
                    let b = load_bundle(&bundle_root, &id)?;
                    b.stages.check(scenario.grid_shape())?;
                    calibrate_threshold(
                        |g| Ok(energy_statistic(&hyne_transform_stages(g, &root, &b.stages)?)),
                        &scenario,
                        pfa,
                        trials,
                        seed,
                        exec,
                    )?
                }
            };
            eprintln!("calibrated {detector} over {trials} trials in {:.2}s", t0.elapsed().as_secs_f64());
            emit(&json(&th)?, out.as_deref())?;
        }
        Command::Train { config } => {
            let cfg = TrainConfig::load(&config)?;
            let t0 = Instant::now();
            let manifest = train_command(&cfg, exec)?;
            eprintln!(
                "bundle {} written to {} in {:.1}s",
                manifest.id,
                harness::bundle_path(&cfg.bundle_dir, &manifest.id).display(),
                t0.elapsed().as_secs_f64()
            );
            emit(&json(&manifest)?, None)?;
        }
        Command::Evaluate { config, out, svg } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg, &cfg.bundle_root(&config), exec)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            std::fs::write(out.join("report.json"), harness::to_json(&report)?)?;
            std::fs::write(out.join("report.csv"), harness::to_csv(&report))?;
            if svg {
                std::fs::write(out.join("report.svg"), harness::to_svg(&report))?;
            }
            let rt = report.runtime;
            eprintln!(
                "{} trials; calibration {:.2}s, evaluation {:.2}s ({:.1} us/trial)",
                rt.trials,
                rt.calibration_seconds,
                rt.evaluation_seconds,
                1e6 * rt.evaluation_seconds / rt.trials.max(1) as f64
            );
        }
        Command::ExportSequence {
            root,
            length,
            n_cs,
            num_shifts,
            shift,
            delay,
            out,
        } => {
            let cfg = hyne_core::sequences::ZcConfig::new(root, length, n_cs, num_shifts)?;
            let seq = preamble(&generate_root(&cfg)?, &shift_table(&cfg)?, shift, delay)?;
            let mut buf = Vec::new();
            write_csv(&seq, &mut buf)?;
            emit(&String::from_utf8(buf)?, out.as_deref())?;
        }
        Command::Report { input, format, out } => {
            let text = std::fs::read_to_string(&input).map_err(|e| {
                Error::Config(format!("cannot read {}: {e}", input.display()))
            })?;
            let report = harness::from_json(&text)?;
            emit(&harness::render(&report, format.into())?, out.as_deref())?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Violation>().is_some() {
        return 1;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Input(_) | Error::Json(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hyne: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
