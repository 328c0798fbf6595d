//! `confsel`: stability-based confounder selection from the command line.

mod options;

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use confsel_core::matching::{read_strata_csv, write_strata_csv};
use confsel_core::pipeline::{select_confounders, write_trajectory_csv};
use confsel_core::randtest::{exact_pvalue, randomization_pvalue, DEFAULT_DRAWS, DEFAULT_ENUMERATION_CAP};
use confsel_core::simulate::{registry, run_study, scenario, write_study_outputs, Method, StudyConfig};
use confsel_core::{full_match, ingest_csv, order_covariates, ps_for_subset, run_pipeline, Dataset, OutcomeKind};

use options::{resolve_labels, PipelineFlags};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "CONFSEL_THREADS";

#[derive(Parser)]
#[command(
    name = "confsel",
    version,
    about = "Stability-based confounder selection with full-matching randomization tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Order covariates by forward double selection.
    Order(DataCommand),
    /// Per-orbit effect estimates, standardized differences and Cochran's Q.
    Trace(DataCommand),
    /// Select the most stable orbit.
    Select(DataCommand),
    /// Full matching on the propensity score of a covariate subset.
    Match(MatchCommand),
    /// Randomization test within given strata.
    Test(TestCommand),
    /// Run the whole analysis and write a JSON report.
    Pipeline(PipelineCommand),
    /// Run a simulation study.
    Simulate(SimulateCommand),
    /// List the simulation scenarios.
    Scenarios,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    treatment: String,
    #[arg(long)]
    outcome: String,
    /// `continuous` or `binary`.
    #[arg(long, default_value = "continuous")]
    outcome_kind: OutcomeKind,
}

#[derive(Args)]
struct DataCommand {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: PipelineFlags,
    /// Output file (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatchCommand {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: PipelineFlags,
    /// Comma-separated covariate labels; the stability-selected subset if omitted.
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestCommand {
    #[command(flatten)]
    data: DataArgs,
    /// Strata CSV (`unit_id,stratum_id`) as written by `match`.
    #[arg(long)]
    strata: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    /// Enumerate every assignment instead of sampling.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    enumeration_cap: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineCommand {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    flags: PipelineFlags,
    /// Report JSON (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trajectory_out: Option<PathBuf>,
    #[arg(long)]
    strata_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateCommand {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated subset of stability_pipeline, target_ps, empty_ps.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// `--seed` is the master seed and `--alpha` the rejection level.
    #[command(flatten)]
    flags: PipelineFlags,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&*e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value.parse().map_err(|_| format!("{THREADS_ENV}={value} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn load(args: &DataArgs) -> Result<Dataset, confsel_core::Error> {
    let (data, report) = ingest_csv(&args.data, &args.treatment, &args.outcome, args.outcome_kind)?;
    for m in &report.messages {
        log::info!("{m}");
    }
    Ok(data)
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Order(c) => {
            let data = load(&c.data)?;
            let config = c.flags.resolve(&data)?;
            let ordering = order_covariates(&data, &config.ordering())?;
            let mut w = csv::Writer::from_writer(output(c.out.as_deref())?);
            w.write_record(["orbit", "covariate", "pv_treatment", "pv_outcome", "conditional_effect"])?;
            for o in &ordering.per_orbit {
                w.write_record([
                    o.orbit.to_string(),
                    data.labels()[o.selected_covariate].clone(),
                    o.pv_treatment.to_string(),
                    o.pv_outcome.to_string(),
                    o.conditional_effect.to_string(),
                ])?;
            }
            w.flush()?;
        }
        Command::Trace(c) => {
            let data = load(&c.data)?;
            let config = c.flags.resolve(&data)?;
            let sel = select_confounders(&data, &config)?;
            write_trajectory_csv(&sel.trajectory(data.labels()), output(c.out.as_deref())?)?;
        }
        Command::Select(c) => {
            let data = load(&c.data)?;
            let config = c.flags.resolve(&data)?;
            let sel = select_confounders(&data, &config)?;
            let est = sel.selected_estimate();
            #[derive(Serialize)]
            struct Selected {
                selected_orbit: usize,
                selected_covariates: Vec<String>,
                window_width: usize,
                benchmark_orbit: usize,
                effect_estimate: f64,
                effect_std_error: f64,
                notes: Vec<String>,
            }
            let out = Selected {
                selected_orbit: sel.stability.selected_orbit,
                selected_covariates: sel.selected_subset().iter().map(|&k| data.labels()[k].clone()).collect(),
                window_width: sel.stability.window_width,
                benchmark_orbit: sel.stability.benchmark,
                effect_estimate: est.psi_hat,
                effect_std_error: est.std_error(),
                notes: sel.stability.notes.clone(),
            };
            write_json(&out, c.out.as_deref())?;
        }
        Command::Match(c) => {
            let data = load(&c.data)?;
            let config = c.flags.resolve(&data)?;
            let subset = match &c.subset {
                Some(labels) => resolve_labels(&data, labels)?,
                None => select_confounders(&data, &config)?.selected_subset(),
            };
            let ps = ps_for_subset(&data, &subset)?;
            let m = full_match(&ps.ps, data.treatment(), &config.matching)?;
            log::info!("{} strata, total distance {}", m.num_strata(), m.total_distance);
            write_strata_csv(&m, output(c.out.as_deref())?)?;
        }
        Command::Test(c) => {
            let data = load(&c.data)?;
            let m = read_strata_csv(File::open(&c.strata)?, Default::default())?;
            if let Err(e) = m.check_structure(data.treatment()) {
                log::warn!("strata are not a full matching ({e}); testing within them anyway");
            }
            let result = if c.exact {
                exact_pvalue(&m, data.treatment(), data.outcome(), c.enumeration_cap)?
            } else {
                randomization_pvalue(&m, data.treatment(), data.outcome(), c.draws, c.seed)?
            };
            write_json(&result, c.out.as_deref())?;
        }
        Command::Pipeline(c) => {
            let data = load(&c.data)?;
            let config = c.flags.resolve(&data)?;
            let report = run_pipeline(&data, &config)?;
            for line in report.summary_lines() {
                log::info!("{line}");
            }
            if let Some(p) = &c.trajectory_out {
                write_trajectory_csv(&report.trajectory, File::create(p)?)?;
            }
            if let (Some(p), Some(m)) = (&c.strata_out, &report.strata) {
                write_strata_csv(m, File::create(p)?)?;
            }
            write_json(&report, c.out.as_deref())?;
        }
        Command::Simulate(c) => {
            let sc = scenario(&c.scenario)?;
            let (seed, alpha) = c.flags.seed_and_alpha()?;
            let seed = seed.ok_or_else(|| {
                confsel_core::Error::InvalidInput("simulate needs --seed (or `seed` in --config)".into())
            })?;
            let mut config = StudyConfig::new(c.replicates, seed);
            if let Some(a) = alpha {
                config.alpha = a;
            }
            config.pipeline = c.flags.resolve_simulation(config.pipeline)?;
            if let Some(methods) = c.methods {
                config.methods = methods;
            }
            let out = run_study(&sc, &config)?;
            write_study_outputs(&out, &c.out_dir)?;
            for s in &out.summaries {
                eprintln!(
                    "{:<20} P(both)={:.3} size={:.2} type1={:.3} mean={:.3} ese={:.3}",
                    s.method.as_str(),
                    s.prob_both_confounders,
                    s.mean_selected,
                    s.rejection_rate,
                    s.mean_estimate,
                    s.ese
                );
            }
        }
        Command::Scenarios => {
            let mut w = output(None)?;
            for s in registry() {
                writeln!(w, "{}", s.name)?;
            }
        }
    }
    Ok(())
}
