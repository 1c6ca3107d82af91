use super::{
    ApproximateArgs, BaselineArgs, BaselineMethod, CombineArgs, CombineRandomArgs, SimulateArgs,
};
use evsynth::baseline::{dersimonian_laird, inverse_variance_fixed, summaries_from};
use evsynth::exchange::{check_unique_sites, SitePayload, Versioned};
use evsynth::io::read_patient_file;
use evsynth::random::{random_effects_chain, McmcConfig, RePriors};
use evsynth::simulation::{
    metrics_csv, reps_csv, run_scenario, Method, ScenarioGrid, SimulationOptions,
};
use evsynth::{approx::approximate_site, Approximation, Error, FitConfig, Result};
use std::io::Write;
use std::path::Path;

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => {
            // A closed pipe (e.g. `| head`) is not an error for the caller.
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", text.trim_end()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub(crate) fn approximate(args: ApproximateArgs) -> Result<()> {
    let site_id = match args.site_id {
        Some(id) => id,
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "site".into()),
    };
    let data = read_patient_file(&args.input, &site_id)?;
    let config = FitConfig {
        fit_grid_steps: args.fit_steps,
        weight_floor: args.weight_floor,
        ..FitConfig::default()
    };
    config.validate()?;
    let approximation = approximate_site(&data, args.family, &config)?;
    emit(
        &SitePayload::new(site_id, approximation).to_json(),
        args.output.as_deref(),
    )
}

/// Reads payload files only; this side of the protocol never sees patient
/// data.
fn load_payloads(args: &CombineArgs) -> Result<Vec<Approximation>> {
    let payloads = args
        .payloads
        .iter()
        .map(|path| {
            SitePayload::from_json(&read_to_string(path)?).map_err(|e| match e {
                Error::Json(j) => Error::Parse {
                    path: path.display().to_string(),
                    line: j.line() as u64,
                    message: j.to_string(),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    check_unique_sites(&payloads)?;
    Ok(payloads.into_iter().map(|p| p.approximation).collect())
}

pub(crate) fn combine_fixed(args: CombineArgs) -> Result<()> {
    let approxs = load_payloads(&args)?;
    let estimate = evsynth::fixed_effect_estimate(&approxs)?;
    emit(&Versioned::new(estimate).to_json(), args.output.as_deref())
}

pub(crate) fn combine_random(args: CombineRandomArgs) -> Result<()> {
    let approxs = load_payloads(&args.common)?;
    let base = if args.desk {
        McmcConfig::desk(args.seed)
    } else {
        McmcConfig {
            seed: args.seed,
            ..McmcConfig::default()
        }
    };
    let config = McmcConfig {
        total_steps: args.total_steps.unwrap_or(base.total_steps),
        burn_in: args.burn_in.unwrap_or(base.burn_in),
        thin: args.thin.unwrap_or(base.thin),
        ..base
    };
    let priors = RePriors {
        mu_prior_sd: args.mu_prior_sd,
        tau_prior_scale: args.tau_prior_scale,
    };
    priors.validate()?;
    config.validate()?;
    let (summary, chain) = random_effects_chain(&approxs, &priors, &config)?;
    if let Some(path) = &args.samples {
        std::fs::write(path, chain.to_csv())?;
    }
    emit(
        &Versioned::new(summary).to_json(),
        args.common.output.as_deref(),
    )
}

pub(crate) fn baseline(args: BaselineArgs) -> Result<()> {
    let approxs = load_payloads(&args.common)?;
    let (summaries, dropped) = summaries_from(&approxs);
    if summaries.is_empty() {
        return Err(Error::NonEstimable("no normal payloads to pool".into()));
    }
    let mut estimate = match args.method {
        BaselineMethod::Fixed => inverse_variance_fixed(&summaries)?,
        BaselineMethod::Dl => dersimonian_laird(&summaries)?,
    };
    estimate.n_sites_dropped = dropped;
    emit(
        &Versioned::new(estimate).to_json(),
        args.common.output.as_deref(),
    )
}

pub(crate) fn simulate(args: SimulateArgs) -> Result<()> {
    let mut grid = match &args.config {
        Some(path) => serde_json::from_str(&read_to_string(path)?)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?,
        None => ScenarioGrid::default(),
    };
    macro_rules! override_field {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field.clone() { grid.$field = v; })*
        };
    }
    override_field!(
        treated_fraction,
        hazard_ratio,
        n_sites,
        max_n,
        n_strata,
        tau
    );
    override_field!(baseline_hazard_min, baseline_hazard_max, follow_up_days);
    if let Some(reps) = args.reps {
        grid.n_reps = reps;
    }
    let methods = match &args.methods {
        Some(names) => names
            .iter()
            .map(|n| n.trim().parse::<Method>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?,
        None => Method::all(),
    };
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    let mcmc = if args.full_mcmc {
        McmcConfig::default()
    } else {
        McmcConfig::desk(0)
    };
    let options = SimulationOptions {
        mcmc,
        jobs: args.jobs,
        ..SimulationOptions::default()
    };
    let scenarios = grid.expand(args.seed);
    if scenarios.is_empty() {
        return Err(Error::InvalidConfig("scenario grid is empty".into()));
    }
    let results = scenarios
        .iter()
        .map(|p| run_scenario(p, &methods, &options))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(args.out_dir.join("metrics.csv"), metrics_csv(&results))?;
    if args.write_reps {
        std::fs::write(args.out_dir.join("reps.csv"), reps_csv(&results))?;
    }
    Ok(())
}
