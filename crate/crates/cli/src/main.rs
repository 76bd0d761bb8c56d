//! `lddc`: instability analysis, achievable reference models and Loewner
//! controller identification from plant frequency-response data.

mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lddc_core::hardy::{AnalysisConfig, InstabilityReport};
use lddc_core::io::{read_frf_file, read_json_file, write_frf_file};
use lddc_core::lddc::loewner_fit;
use lddc_core::lddc::LoewnerOptions;
use lddc_core::models::{FrequencyResponseData, RationalModel};
use lddc_core::plants::{
    crystallizer_surrogate, generate_synthetic, hydro_surrogate, random_spec, SyntheticPlantSpec,
};
use lddc_core::refmodel::AchievableReference;
use log::{error, info, warn};
use serde::Serialize;

use commands::{IdentDiagnostics, LoopCheck, ReferenceSummary, SimulationSummary};
use config::{DesiredSpec, PipelineConfig, PlantSource, Scenario};
use error::CliError;
use output::Output;

#[derive(Parser)]
#[command(
    name = "lddc",
    version,
    about = "Data-driven controller design from frequency-response data"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a benchmark plant FRF CSV and its model JSON.
    Generate(GenerateArgs),
    /// Estimate RHP poles, RHP zeros and integrators of a plant FRF.
    Analyze(AnalyzeArgs),
    /// Build the achievable reference model for an analysis report.
    Makeref(MakerefArgs),
    /// Identify a controller from plant data and an achievable reference.
    Ident(IdentArgs),
    /// Simulate step and disturbance responses of a plant/controller loop.
    Simulate(SimulateArgs),
    /// Run every stage and write a single manifest.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PlantKind {
    Synthetic,
    Crystallizer,
    Hydro,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "synthetic")]
    plant: PlantKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest order of a synthetic plant.
    #[arg(long, default_value_t = 8)]
    max_order: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Plant FRF CSV.
    #[arg(long)]
    input: PathBuf,
    /// Analysis configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DesiredArgs {
    /// First-order desired model `1 / (tau s + 1)`.
    #[arg(long, allow_negative_numbers = true)]
    desired_tau: Option<f64>,
    /// Natural frequency of a second-order desired model.
    #[arg(long, allow_negative_numbers = true)]
    desired_w0: Option<f64>,
    /// Damping of the second-order desired model (default 1).
    #[arg(long, allow_negative_numbers = true)]
    desired_xi: Option<f64>,
    /// Desired model as a rational model JSON.
    #[arg(long)]
    desired_model: Option<PathBuf>,
}

impl DesiredArgs {
    fn spec(&self) -> Result<Option<DesiredSpec>, CliError> {
        DesiredSpec::from_flags(
            self.desired_tau,
            self.desired_w0,
            self.desired_xi,
            self.desired_model.clone(),
        )
    }
}

#[derive(Args)]
struct MakerefArgs {
    /// Analysis report JSON.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    desired: DesiredArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IdentArgs {
    /// Plant FRF CSV.
    #[arg(long)]
    input: PathBuf,
    /// Achievable reference JSON.
    #[arg(long)]
    reference: PathBuf,
    /// Reduced controller order.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Plant rational model JSON.
    #[arg(long)]
    plant: PathBuf,
    /// Controller rational model JSON.
    #[arg(long)]
    controller: PathBuf,
    /// Scenario JSON (horizon, dt, pulse).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Plant FRF CSV, overriding the configured plant.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Seed of the synthetic benchmark plant.
    #[arg(long)]
    seed: Option<u64>,
    /// Reduced controller order.
    #[arg(long)]
    order: Option<usize>,
    #[command(flatten)]
    desired: DesiredArgs,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    // usage errors exit with 1; 2 to 4 are reserved for pipeline failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Analyze(a) => {
            let data = read_frf_file(&a.input)?;
            let cfg = load_or_default::<AnalysisConfig>(a.config.as_deref())?;
            let mut out = Output::new(&a.out)?;
            commands::analyze(&data, &cfg, &mut out)?;
            out.finish()?;
            Ok(())
        }
        Command::Makeref(a) => {
            let report: InstabilityReport = read_json_file(&a.input)?;
            let desired = a
                .desired
                .spec()?
                .ok_or_else(|| CliError::Usage("a desired model is required".into()))?
                .build(1)?;
            let mut out = Output::new(&a.out)?;
            commands::makeref(&report, &desired, &mut out)?;
            out.finish()?;
            Ok(())
        }
        Command::Ident(a) => {
            if a.order == Some(0) {
                return Err(CliError::Usage("order must be >= 1".into()));
            }
            let data = read_frf_file(&a.input)?;
            let reference: AchievableReference = read_json_file(&a.reference)?;
            let mut out = Output::new(&a.out)?;
            commands::ident(&data, &reference, a.order, &mut out)?;
            out.finish()?;
            Ok(())
        }
        Command::Simulate(a) => {
            let plant: RationalModel = read_json_file(&a.plant)?;
            let controller: RationalModel = read_json_file(&a.controller)?;
            let scenario = load_or_default::<Scenario>(a.config.as_deref())?;
            let mut out = Output::new(&a.out)?;
            let summary = commands::simulate(&plant, &controller, &scenario, &mut out)?;
            out.json("simulation.json", &summary)?;
            out.finish()?;
            Ok(())
        }
        Command::Pipeline(a) => pipeline(a),
    }
}

fn load_or_default<T: serde::de::DeserializeOwned + Default>(
    path: Option<&Path>,
) -> Result<T, CliError> {
    Ok(match path {
        Some(p) => read_json_file(p)?,
        None => T::default(),
    })
}

/// Benchmark plant with its true model, when one exists.
fn benchmark_plant(
    source: &PlantSource,
    seed: u64,
) -> Result<
    (
        FrequencyResponseData,
        Option<RationalModel>,
        Option<SyntheticPlantSpec>,
    ),
    CliError,
> {
    Ok(match source {
        PlantSource::File { path } => (read_frf_file(path)?, None, None),
        PlantSource::Synthetic { max_order } => {
            let spec = random_spec(seed, *max_order);
            let (model, data) = generate_synthetic(&spec)?;
            (data, Some(model), Some(spec))
        }
        PlantSource::Crystallizer => {
            let (model, data) = crystallizer_surrogate()?;
            (data, Some(model), None)
        }
        PlantSource::Hydro => {
            let (model, data) = hydro_surrogate()?;
            (data, Some(model), None)
        }
    })
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let source = match a.plant {
        PlantKind::Synthetic => PlantSource::Synthetic {
            max_order: a.max_order,
        },
        PlantKind::Crystallizer => PlantSource::Crystallizer,
        PlantKind::Hydro => PlantSource::Hydro,
    };
    let (data, model, spec) = benchmark_plant(&source, a.seed)?;
    let mut out = Output::new(&a.out)?;
    write_frf_file(&a.out.join("plant.csv"), &data)?;
    out.files.push("plant.csv".into());
    if let Some(model) = model {
        out.json("plant_model.json", &model)?;
    }
    if let Some(spec) = spec {
        out.json("plant_spec.json", &spec)?;
    }
    out.finish()?;
    info!("wrote {} samples to {}", data.len(), a.out.display());
    Ok(())
}

/// Plant description in the manifest.
#[derive(Serialize)]
struct PlantSummary {
    label: String,
    samples: usize,
    omega_min: f64,
    omega_max: f64,
    /// `truth` for benchmark plants, `fitted` for measured data.
    model: &'static str,
    model_order: usize,
}

#[derive(Serialize)]
struct LoopChecks {
    full: LoopCheck,
    reduced: LoopCheck,
}

const MANIFEST_SCHEMA: u32 = 1;

#[derive(Serialize)]
struct Manifest {
    schema_version: u32,
    tool_version: &'static str,
    config: PipelineConfig,
    plant: PlantSummary,
    analysis: InstabilityReport,
    reference: ReferenceSummary,
    identification: IdentDiagnostics,
    closed_loop: LoopChecks,
    simulation: SimulationSummary,
    files: Vec<String>,
}

fn pipeline(a: PipelineArgs) -> Result<(), CliError> {
    let mut cfg = load_or_default::<PipelineConfig>(a.config.as_deref())?;
    if let Some(path) = a.input {
        cfg.plant = PlantSource::File { path };
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if a.order.is_some() {
        cfg.order = a.order;
    }
    if let Some(desired) = a.desired.spec()? {
        cfg.desired = desired;
    }
    cfg.validate()?;

    let (data, truth, spec) = benchmark_plant(&cfg.plant, cfg.seed)?;
    let mut out = Output::new(&a.out)?;
    write_frf_file(&a.out.join("plant.csv"), &data)?;
    out.files.push("plant.csv".into());
    if let Some(spec) = &spec {
        out.json("plant_spec.json", spec)?;
    }
    let (plant, model_kind) = match truth {
        Some(m) => (m, "truth"),
        None => (
            loewner_fit(&data, &LoewnerOptions::default())?.model,
            "fitted",
        ),
    };
    out.json("plant_model.json", &plant)?;

    let report = commands::analyze(&data, &cfg.analysis, &mut out)?;
    let relative_degree = DesiredSpec::relative_degree(&plant)?;
    let desired = cfg.desired.build(relative_degree)?;
    let reference = commands::makeref(&report, &desired, &mut out)?;
    let achieved_degree = DesiredSpec::relative_degree(&reference.achieved)?;
    if achieved_degree < relative_degree {
        warn!(
            "achievable model has relative degree {achieved_degree} but the plant has {relative_degree}; \
             the ideal controller is improper"
        );
    }
    let identified = commands::ident(&data, &reference, cfg.order, &mut out)?;
    let full = commands::check_loop(&plant, &data, &identified.full, &reference)?;
    let reduced = commands::check_loop(&plant, &data, &identified.reduced, &reference)?;
    let simulation = commands::simulate(&plant, &identified.reduced, &cfg.simulation, &mut out)?;

    let mut manifest = Manifest {
        schema_version: MANIFEST_SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION"),
        plant: PlantSummary {
            label: data.label().to_owned(),
            samples: data.len(),
            omega_min: data.omega_min(),
            omega_max: data.omega_max(),
            model: model_kind,
            model_order: plant.order(),
        },
        config: cfg,
        analysis: report,
        reference: ReferenceSummary::from(&reference),
        identification: identified.diagnostics,
        closed_loop: LoopChecks { full, reduced },
        simulation,
        files: Vec::new(),
    };
    let stable = manifest.closed_loop.full.internally_stable;
    let worst_pole = manifest.closed_loop.full.max_closed_loop_pole_re;
    manifest.files = out.finish()?;
    manifest.files.push("manifest.json".into());
    manifest.files.sort();
    lddc_core::io::write_json_file(&a.out.join("manifest.json"), &manifest)?;
    if !stable {
        return Err(CliError::Unstable(format!("with real part {worst_pole:e}")));
    }
    Ok(())
}
