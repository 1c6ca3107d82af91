//! `evsynth`: site-side approximation, coordinator-side synthesis and the
//! simulation harness.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 non-estimable.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evsynth::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "evsynth",
    version,
    about = "Evidence synthesis from per-site Cox likelihood approximations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one site's likelihood approximation from its patient CSV.
    ///
    /// The CSV header must be `time,event,treatment,stratum`. The output is
    /// the exchange JSON, the only thing a site needs to share.
    Approximate(ApproximateArgs),
    /// Pool approximation payloads under a fixed-effect model.
    CombineFixed(CombineArgs),
    /// Pool approximation payloads under a Bayesian random-effects model.
    CombineRandom(CombineRandomArgs),
    /// Traditional meta-analysis over the normal payloads.
    Baseline(BaselineArgs),
    /// Run simulation scenarios and write metrics.csv (and reps.csv).
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct ApproximateArgs {
    /// Patient-level CSV.
    #[arg(long)]
    input: PathBuf,
    /// normal, skew-normal, custom or grid.
    #[arg(long)]
    family: evsynth::Family,
    /// Defaults to the input file stem.
    #[arg(long)]
    site_id: Option<String>,
    /// Output path; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Number of points in the fitting grid.
    #[arg(long, default_value_t = 100)]
    fit_steps: usize,
    /// Lower truncation of the fitting weights.
    #[arg(long, default_value_t = 1e-3)]
    weight_floor: f64,
}

#[derive(Args)]
struct CombineArgs {
    /// Approximation payload files.
    #[arg(required = true)]
    payloads: Vec<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CombineRandomArgs {
    #[command(flatten)]
    common: CombineArgs,
    /// Chain seed; falls back to EVSYNTH_SEED.
    #[arg(long, env = "EVSYNTH_SEED")]
    seed: u64,
    /// Use the 110k-step desk preset instead of the full 1.1M steps.
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long, default_value_t = 2.0)]
    mu_prior_sd: f64,
    #[arg(long, default_value_t = 0.5)]
    tau_prior_scale: f64,
    /// Also write the retained draws as CSV.
    #[arg(long)]
    samples: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    /// Inverse-variance fixed effect.
    Fixed,
    /// DerSimonian-Laird random effects.
    Dl,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: CombineArgs,
    #[arg(long, value_enum, default_value = "fixed")]
    method: BaselineMethod,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario grid JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; falls back to EVSYNTH_SEED.
    #[arg(long, env = "EVSYNTH_SEED")]
    seed: u64,
    /// Comma-separated method names, e.g. fixed-grid,traditional-fixed.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Worker threads for replicates.
    #[arg(long)]
    jobs: Option<usize>,
    /// Replicates per scenario.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    treated_fraction: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    hazard_ratio: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n_sites: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    max_n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    n_strata: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    #[arg(long)]
    baseline_hazard_min: Option<f64>,
    #[arg(long)]
    baseline_hazard_max: Option<f64>,
    #[arg(long)]
    follow_up_days: Option<f64>,
    /// Run random-effects chains at the full 1.1M steps instead of the
    /// 110k desk preset.
    #[arg(long)]
    full_mcmc: bool,
    /// Directory for metrics.csv and reps.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write the per-replicate estimates.
    #[arg(long)]
    write_reps: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 2,
        Error::NonEstimable(_) => 4,
        _ => 3,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidConfig(_) => "usage",
        Error::NonEstimable(_) => "non_estimable",
        Error::Parse { .. } | Error::Csv(_) => "parse",
        Error::Io(_) => "io",
        _ => "data",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Approximate(a) => commands::approximate(a),
        Command::CombineFixed(a) => commands::combine_fixed(a),
        Command::CombineRandom(a) => commands::combine_random(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({
                "error": error_kind(&e),
                "message": e.to_string(),
            });
            eprintln!("{body}");
            ExitCode::from(exit_code(&e))
        }
    }
}
