use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use restoration::dependence::{BinSpec, CategoryThresholds};
use restoration::event::SeverityThresholds;
use restoration::pipeline::{self, AnalysisOptions, Bundle, IngestOptions};
use restoration::synth::{DispatchPolicy, SynthConfig};
use restoration::Error;

/// Power-outage restoration analytics.
#[derive(Parser)]
#[command(name = "restoration", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic outage event with a known dispatch policy.
    Synth(SynthArgs),
    /// Validate an outage CSV and group its rows into events.
    Ingest(IngestArgs),
    /// Rank, label and cluster the Stage-1 failures of every event.
    Analyze(EventsArgs),
    /// Recovery and failure scaling curves with category shares.
    Scaling(EventsArgs),
    /// Prioritization baseline and tipping points.
    Tipping(EventsArgs),
    /// Pending-repairs series and stage partitions.
    Evolve(EventsArgs),
    /// Customer interruption, downtime growth and device mix.
    Impact(EventsArgs),
    /// Summary and plot-data bundle from ingest and analyze outputs.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    n_failures: usize,
    #[arg(long, default_value_t = 0)]
    start: i64,
    /// Failures per hour.
    #[arg(long, default_value_t = 120.0)]
    arrival_rate: f64,
    /// Pareto tail index of failure size.
    #[arg(long, default_value_t = 1.1)]
    alpha: f64,
    /// Log-scale location of repair work in minutes.
    #[arg(long, default_value_t = 60f64.ln())]
    repair_mu: f64,
    #[arg(long, default_value_t = 0.6)]
    repair_sigma: f64,
    #[arg(long, default_value_t = 10)]
    crews: usize,
    /// Minutes after the event start before crews can be dispatched.
    #[arg(long, default_value_t = 60)]
    mobilization_delay: i64,
    /// size-priority, fifo or random.
    #[arg(long, default_value = "size-priority")]
    policy: DispatchPolicy,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    storm: bool,
    #[arg(long, default_value = "syn")]
    id_prefix: String,
}

#[derive(Args, Serialize)]
struct IngestArgs {
    csv: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Minutes without new failures or pending repairs that end an event.
    #[arg(long, default_value_t = restoration::ingest::DEFAULT_QUIET_GAP)]
    quiet_gap: i64,
    #[arg(long, default_value_t = restoration::event::DEFAULT_STEP)]
    step: i64,
    #[arg(long, default_value_t = SeverityThresholds::default().extreme_min_failures)]
    extreme_min_failures: usize,
    #[arg(long, default_value_t = SeverityThresholds::default().moderate_min_failures)]
    moderate_min_failures: usize,
}

#[derive(Args, Serialize)]
struct AnalysisArgs {
    #[arg(long, default_value_t = BinSpec::default().x_bins)]
    x_bins: usize,
    #[arg(long, default_value_t = BinSpec::default().y_bins)]
    y_bins: usize,
    #[arg(long, default_value_t = 0.05)]
    threshold_frac: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Shuffled replicates behind the cluster null reference (0 disables).
    #[arg(long, default_value_t = 39)]
    null_rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = CategoryThresholds::default().large_threshold)]
    large_threshold: u64,
    #[arg(long, default_value_t = CategoryThresholds::default().fast_quantile)]
    fast_quantile: f64,
    #[arg(long, default_value_t = CategoryThresholds::default().prolonged_quantile)]
    prolonged_quantile: f64,
    #[arg(long, default_value_t = restoration::triage::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = restoration::event::DEFAULT_STEP)]
    step: i64,
}

impl AnalysisArgs {
    fn options(&self) -> AnalysisOptions {
        AnalysisOptions {
            bins: BinSpec {
                x_bins: self.x_bins,
                y_bins: self.y_bins,
            },
            threshold_frac: self.threshold_frac,
            folds: self.folds,
            null_rounds: self.null_rounds,
            seed: self.seed,
            categories: CategoryThresholds {
                large_threshold: self.large_threshold,
                fast_quantile: self.fast_quantile,
                prolonged_quantile: self.prolonged_quantile,
            },
            epsilon: self.epsilon,
            step: self.step,
        }
    }
}

#[derive(Args, Serialize)]
struct EventsArgs {
    /// events.json written by `ingest`.
    events: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    analysis: AnalysisArgs,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// Directory holding ingest and analyze outputs (tipping optional).
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = restoration::event::DEFAULT_STEP)]
    step: i64,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::MissingArtifact { .. } | Error::MissingHeader { .. } => 2,
        _ => 1,
    }
}

fn finish<C: Serialize>(out: &Path, command: &str, inputs: &[&Path], config: &C, seeds: Vec<u64>, bundle: Bundle) -> restoration::Result<()> {
    for w in &bundle.warnings {
        eprintln!("warning: {w}");
    }
    pipeline::write_bundle(out, command, inputs, config, seeds, &bundle)?;
    Ok(())
}

fn run_events(name: &str, args: &EventsArgs) -> restoration::Result<()> {
    let opts = args.analysis.options();
    opts.validate()?;
    let events = pipeline::load_events(&args.events)?;
    let (prepared, skipped) = pipeline::prepare_events(events, &opts.categories);
    let mut bundle = match name {
        "analyze" => pipeline::analyze(&prepared, skipped, &opts)?,
        "scaling" => pipeline::scaling(&prepared)?,
        "tipping" => pipeline::tipping(&prepared, &opts)?,
        "evolve" => pipeline::evolve(&prepared, opts.step)?,
        "impact" => pipeline::impact(&prepared, opts.step)?,
        _ => unreachable!("unknown events command {name}"),
    };
    if prepared.is_empty() {
        bundle.warnings.push(format!("no analyzable events in {}", args.events.display()));
    }
    finish(&args.out, name, &[&args.events], &opts, vec![opts.seed], bundle)
}

fn run(cli: Cli) -> restoration::Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let config = SynthConfig {
                seed: a.seed,
                n_failures: a.n_failures,
                start: a.start,
                arrival_rate_per_hour: a.arrival_rate,
                size_alpha: a.alpha,
                repair_mu: a.repair_mu,
                repair_sigma: a.repair_sigma,
                crews: a.crews,
                mobilization_delay: a.mobilization_delay,
                policy: a.policy,
                storm_flag: a.storm,
                id_prefix: a.id_prefix.clone(),
                ..SynthConfig::default()
            };
            let bundle = pipeline::cmd_synth(&config)?;
            finish(&a.out, "synth", &[], &config, vec![config.seed], bundle)
        }
        Command::Ingest(a) => {
            let opts = IngestOptions {
                quiet_gap: a.quiet_gap,
                step: a.step,
                severity: SeverityThresholds {
                    extreme_min_failures: a.extreme_min_failures,
                    moderate_min_failures: a.moderate_min_failures,
                },
            };
            let bundle = pipeline::cmd_ingest(&a.csv, &opts)?;
            finish(&a.out, "ingest", &[&a.csv], &opts, vec![], bundle)
        }
        Command::Analyze(a) => run_events("analyze", &a),
        Command::Scaling(a) => run_events("scaling", &a),
        Command::Tipping(a) => run_events("tipping", &a),
        Command::Evolve(a) => run_events("evolve", &a),
        Command::Impact(a) => run_events("impact", &a),
        Command::Report(a) => {
            if a.step < 1 {
                return Err(Error::InvalidConfig(format!("step must be >= 1, got {}", a.step)));
            }
            let (bundle, inputs) = pipeline::report(&a.input, a.step)?;
            let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            finish(&a.out, "report", &inputs, &a, vec![], bundle)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(exit_code(&e))
        }
    }
}
