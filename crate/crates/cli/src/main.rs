use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use qkdsim_core::channel::{pointing_loss, LinkState};
use qkdsim_core::orbit::PassWindow;
use qkdsim_core::scenario::example_scenario;
use qkdsim_core::simulate::{find_passes, link_samples, pass_environment};
use qkdsim_core::source::{
    pair_rate, polarizer_scan, qber_from_visibility, required_pump_power, scan_angles, FringeFit,
};
use qkdsim_core::telemetry::{self, write_json, write_link, write_pat, write_pcs, write_table, write_tags};
use qkdsim_core::{simulate_pass, Format, Scenario, SimError};

const EXIT_CONFIG: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_SIMULATION: u8 = 4;

#[derive(Parser)]
#[command(name = "qkdsim", version, about = "Satellite-to-ground entanglement key distribution pass simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
    Bin,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
            OutputFormat::Bin => Format::Binary,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file (TOML, or JSON with a .json extension).
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Pass index within the search window (overrides the scenario).
    #[arg(long = "pass")]
    pass_index: Option<usize>,
    /// Output directory (overrides the scenario).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Telemetry and time-tag format.
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// List passes over the site in the search window.
    Predict {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one pass end to end and write the report and telemetry.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Run this many seeds (seed, seed + 1, ...) and write ensemble.csv.
        #[arg(long)]
        ensemble: Option<u64>,
        /// Also export detection time tags from every photon slice.
        #[arg(long)]
        tags: bool,
    },
    /// Source characterisation: pair rate, polarizer scan and fitted visibility.
    SourceCheck {
        /// Scenario providing the source settings; defaults otherwise.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Pair rate to size the pump for, pairs/s.
        #[arg(long, default_value_t = 25e6)]
        target_rate: f64,
        /// Polarizer step, degrees.
        #[arg(long, default_value_t = 5.0)]
        step: f64,
        /// Integration per polarizer angle, seconds.
        #[arg(long, default_value_t = 1e-3)]
        integration: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the scan as scan.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Link loss terms over the selected pass, with the tracking loop running.
    LinkBudget {
        #[command(flatten)]
        common: Common,
    },
    /// Print a scenario listing every option with its default value.
    ExampleScenario,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot create {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_CONFIG,
            CliError::Output { .. } => EXIT_SIMULATION,
            CliError::Sim(e) if e.is_config() => EXIT_CONFIG,
            CliError::Sim(e) if e.is_input_data() => EXIT_INPUT,
            CliError::Sim(_) => EXIT_SIMULATION,
        }
    }
}

impl From<telemetry::TelemetryError> for CliError {
    fn from(e: telemetry::TelemetryError) -> Self {
        CliError::Sim(e.into())
    }
}

impl From<qkdsim_core::ScenarioError> for CliError {
    fn from(e: qkdsim_core::ScenarioError) -> Self {
        CliError::Sim(e.into())
    }
}

fn load(common: &Common) -> Result<Scenario, CliError> {
    let mut s = Scenario::load(&common.scenario)?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    if let Some(k) = common.pass_index {
        s.pass_index = k;
    }
    if let Some(out) = &common.out {
        s.output_dir = out.clone();
    }
    Ok(s)
}

fn out_dir(dir: &Path) -> Result<&Path, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(dir)
}

fn file(dir: &Path, stem: &str, format: Format) -> PathBuf {
    let ext = match format {
        Format::Binary => "csv",
        f => f.extension(),
    };
    dir.join(format!("{stem}.{ext}"))
}

fn predict(common: &Common) -> Result<(), CliError> {
    let s = load(common)?;
    let (_, passes) = find_passes(&s)?;
    if passes.is_empty() {
        println!("no passes above {:.1} deg in the search window", s.search.min_elevation);
    }
    println!("index  aos                          los                          max_el_deg  max_rate_deg_s");
    for (i, p) in passes.iter().enumerate() {
        println!(
            "{i:<6} {:<28} {:<28} {:>10.2}  {:>14.3}",
            p.aos.to_rfc3339(),
            p.los.to_rfc3339(),
            p.max_elevation,
            p.max_angular_rate
        );
    }
    if let Some(dir) = &common.out {
        let format = Format::from(common.format);
        write_table::<PassWindow>(&file(out_dir(dir)?, "passes", format), &passes, format)?;
    }
    Ok(())
}

fn simulate(common: &Common, ensemble: Option<u64>, tags: bool) -> Result<(), CliError> {
    let s = load(common)?;
    let format = Format::from(common.format);
    let dir = out_dir(&s.output_dir)?.to_path_buf();
    if let Some(n) = ensemble {
        if n == 0 {
            return Err(CliError::Usage("--ensemble needs at least one member".into()));
        }
        return run_ensemble(&s, n, &dir);
    }
    let outcome = simulate_pass(&s, tags)?;
    write_json(&dir.join("report.json"), &outcome.report)?;
    write_pat(&file(&dir, "pat", format), &outcome.env.pat, format)?;
    write_pcs(&file(&dir, "pcs", format), &outcome.env.pcs, format)?;
    write_link(&file(&dir, "link", format), &outcome.link_samples(s.simulation.link_step)?, format)?;
    if tags {
        let (mut ground, mut onboard) = (Vec::new(), Vec::new());
        for slice in &outcome.slices {
            if let Some((g, o)) = &slice.tags {
                ground.extend_from_slice(g);
                onboard.extend_from_slice(o);
            }
        }
        write_tags(&dir.join(format!("tags_ground.{}", format.extension())), &ground, format)?;
        write_tags(&dir.join(format!("tags_onboard.{}", format.extension())), &onboard, format)?;
    }
    let key = &outcome.report.key;
    println!(
        "sifted={} qber={} secret={}",
        key.sifted_bits,
        key.qber_estimate.map_or("n/a".into(), |q| format!("{q:.4}")),
        key.secret_bits
    );
    println!(
        "pass {}: max elevation {:.1} deg, downlink {:.1} s, extrapolated sifted {:.0} secret {:.0}",
        outcome.report.pass_index,
        outcome.report.max_elevation_deg,
        outcome.report.downlink_time_s,
        outcome.report.extrapolated_sifted_bits,
        outcome.report.extrapolated_secret_bits
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct EnsembleRow {
    seed: u64,
    sifted_bits: usize,
    qber: Option<f64>,
    secret_bits: u64,
}

fn run_ensemble(base: &Scenario, n: u64, dir: &Path) -> Result<(), CliError> {
    let rows: Vec<EnsembleRow> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut s = base.clone();
            s.seed = base.seed.wrapping_add(k);
            let out = simulate_pass(&s, false)?;
            Ok(EnsembleRow {
                seed: s.seed,
                sifted_bits: out.report.key.sifted_bits,
                qber: out.report.key.qber_estimate,
                secret_bits: out.report.key.secret_bits,
            })
        })
        .collect::<Result<_, SimError>>()?;
    write_table(&dir.join("ensemble.csv"), &rows, Format::Csv)?;
    let mean = |f: &dyn Fn(&EnsembleRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let qbers: Vec<f64> = rows.iter().filter_map(|r| r.qber).collect();
    println!(
        "ensemble of {n}: mean sifted={:.1} mean qber={} mean secret={:.1}",
        mean(&|r| r.sifted_bits as f64),
        if qbers.is_empty() {
            "n/a".into()
        } else {
            format!("{:.4}", qbers.iter().sum::<f64>() / qbers.len() as f64)
        },
        mean(&|r| r.secret_bits as f64)
    );
    Ok(())
}

fn source_check(
    scenario: Option<&Path>,
    target_rate: f64,
    step: f64,
    integration: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let source = match scenario {
        Some(p) => Scenario::load(p)?.source,
        None => Default::default(),
    };
    if !(step > 0.0 && step <= 22.5) {
        return Err(CliError::Usage("--step must lie in (0, 22.5] degrees".into()));
    }
    let sim = |e: qkdsim_core::source::SourceError| CliError::Sim(e.into());
    let points = polarizer_scan(&source, &scan_angles(step, 360.0), integration, Some(seed)).map_err(sim)?;
    let fit = FringeFit::fit(&points).map_err(sim)?;
    let (c_max, c_min) = fit.extrema();
    let v = fit.visibility().map_err(sim)?;
    println!("pair rate            {:.4e} pairs/s", pair_rate(&source));
    println!(
        "pump for {:.3e}/s    {:.4} mW",
        target_rate,
        required_pump_power(target_rate, source.brightness).map_err(sim)?
    );
    println!("fringe extrema       {c_max:.1} / {c_min:.1} counts");
    println!("fitted visibility    {v:.4}");
    println!("implied QBER         {:.4}", qber_from_visibility(v.clamp(0.0, 1.0)).map_err(sim)?);
    if let Some(dir) = out {
        write_table(&out_dir(dir)?.join("scan.csv"), &points, Format::Csv)?;
    }
    Ok(())
}

fn link_budget(common: &Common) -> Result<(), CliError> {
    let s = load(common)?;
    let format = Format::from(common.format);
    let (orbit, passes) = find_passes(&s)?;
    let pass = passes.get(s.pass_index).ok_or(SimError::NoSuchPass {
        index: s.pass_index,
        found: passes.len(),
    })?;
    let env = pass_environment(&s, &orbit, pass)?;
    let states = link_samples(&env, s.simulation.link_step)?;
    let dir = out_dir(&s.output_dir)?;
    write_link(&file(dir, "link", format), &states, format)?;
    let lit: Vec<&LinkState> = states.iter().filter(|l| l.total_transmittance > 0.0).collect();
    println!(
        "pass {}: {} of {} samples with the downlink on",
        s.pass_index,
        lit.len(),
        states.len()
    );
    if let (Some(best), Some(worst)) = (
        lit.iter().max_by(|a, b| a.total_transmittance.total_cmp(&b.total_transmittance)),
        lit.iter().min_by(|a, b| a.total_transmittance.total_cmp(&b.total_transmittance)),
    ) {
        for (label, l) in [("best ", best), ("worst", worst)] {
            println!(
                "{label} t={:7.1} s el={:5.1} deg range={:7.1} km  geo {:.2} dB  atm {:.2} dB  point {:.2} dB  optics {:.2} dB  total {:.2} dB",
                l.time,
                l.elevation_deg,
                l.range_km,
                l.geometric_loss_db,
                l.atmospheric_loss_db,
                l.pointing_loss_db,
                l.optics_loss_db,
                l.total_loss_db()
            );
        }
    }
    println!(
        "pointing loss on axis {:.2} dB",
        pointing_loss(0.0, &s.link).map_err(|e| CliError::Sim(e.into()))?
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Predict { common } => predict(&common),
        Command::Simulate { common, ensemble, tags } => simulate(&common, ensemble, tags),
        Command::SourceCheck {
            scenario,
            target_rate,
            step,
            integration,
            seed,
            out,
        } => source_check(scenario.as_deref(), target_rate, step, integration, seed, out.as_deref()),
        Command::LinkBudget { common } => link_budget(&common),
        Command::ExampleScenario => {
            print!("{}", example_scenario());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
