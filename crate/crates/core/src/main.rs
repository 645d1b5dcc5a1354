use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ttn_scatter::ed::{spectrum_all_sectors, write_spectrum};
use ttn_scatter::lattice::{build_tree_topology, Boundary, LatticeGeometry};
use ttn_scatter::runner::{self, collision_time, correlator_peak, load_series, arrival_estimates, ExperimentConfig, RunMode};
use ttn_scatter::tdvp::EvolutionConfig;
use ttn_scatter::validate::ed_validate;
use ttn_scatter::wavepacket::{measure_dispersion, write_dispersion, DispersionOptions};
use ttn_scatter::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Tree tensor network magnon scattering in the 2D transverse-field Ising model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set model.h=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(&self.config)
            .map_err(|e| Error::Config(format!("{}: {e}", self.config.display())))?;
        ExperimentConfig::from_toml_with_overrides(&text, &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build and dress the packets, writing `prepared.snap`.
    Prepare(ConfigArgs),
    /// Two-packet scattering run.
    Scatter(ConfigArgs),
    /// Scattering on the false vacuum with magnetization tracking.
    FalseVacuum(ConfigArgs),
    /// False vacuum runs over `scan.h_values`, bracketing the decay threshold.
    ScanThreshold(ConfigArgs),
    /// Dressed single-packet energies, written to `dispersion.tsv`.
    Dispersion(ConfigArgs),
    /// Compare against exact diagonalization on a small lattice.
    EdValidate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long, default_value_t = 2.0)]
        quench_time: f64,
        #[arg(long, default_value_t = 5.0)]
        drift_time: f64,
        /// Also export the lowest levels of every momentum sector.
        #[arg(long)]
        spectrum: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Continue an interrupted run from its last checkpoint.
    Resume {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn print<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?);
    Ok(())
}

#[derive(Serialize)]
struct ScatterReport {
    run: runner::RunSummary,
    collision_time: Option<f64>,
    c_a_peak_time: Option<f64>,
    c_a_arrival_estimate: Option<f64>,
    c_a_traversal_estimate: Option<f64>,
}

fn scatter_report(cfg: &ExperimentConfig, run: runner::RunSummary) -> Result<ScatterReport> {
    let series = load_series(&run.series)?;
    let tol = cfg.evolution.dt * cfg.evolution.measure_every as f64;
    let peak = correlator_peak(&series, "c_a", cfg.baseline_time(), tol).ok();
    let arrival = arrival_estimates(cfg).ok();
    Ok(ScatterReport {
        collision_time: collision_time(cfg).ok(),
        c_a_peak_time: peak.map(|p| p.peak_time),
        c_a_arrival_estimate: arrival.map(|a| a.0),
        c_a_traversal_estimate: arrival.map(|a| a.1),
        run,
    })
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Prepare(a) => print(&runner::prepare(&a.load()?)?),
        Command::Scatter(a) => {
            let cfg = a.load()?;
            let run = runner::run(&cfg, RunMode::Scatter, None)?;
            print(&scatter_report(&cfg, run)?)
        }
        Command::FalseVacuum(a) => {
            let cfg = a.load()?;
            let run = runner::run_false_vacuum(&cfg)?;
            let class = runner::classify_run(&cfg, &load_series(&run.series)?).ok();
            print(&(run, class))
        }
        Command::ScanThreshold(a) => print(&runner::threshold_scan(&a.load()?)?),
        Command::Dispersion(a) => {
            let cfg = a.load()?;
            let geom = cfg.geometry()?;
            let topo = std::sync::Arc::new(build_tree_topology(&geom)?);
            let e = &cfg.evolution;
            let (k_list, sigma) = match &cfg.dispersion {
                Some(d) => (d.k_over_pi.iter().map(|k| (k[0] * std::f64::consts::PI, k[1] * std::f64::consts::PI)).collect(), d.sigma),
                None => {
                    let l = geom.lx().min(geom.ly()) as i64;
                    ((0..=l / 2).map(|m| ttn_scatter::ising::lattice_momentum(&geom, (m, m))).collect::<Vec<_>>(), 2.0)
                }
            };
            let opts = DispersionOptions {
                g_target: cfg.model.g,
                tau: e.tau_prep,
                shape: e.ramp,
                sigma,
                chi: e.chi,
                seed: e.seed,
                evolution: EvolutionConfig { dt: e.dt, krylov_dim: e.krylov_dim, krylov_tol: e.krylov_tol, ..Default::default() },
            };
            let points = measure_dispersion(&topo, cfg.params()?, &k_list, &opts)?;
            fs::create_dir_all(&cfg.output.dir)?;
            let path = cfg.output.dir.join("dispersion.tsv");
            write_dispersion(BufWriter::new(File::create(&path)?), &points)?;
            print(&points)
        }
        Command::EdValidate { config, overrides, dt, quench_time, drift_time, spectrum, levels } => {
            let (geom, params, seed) = match config {
                Some(path) => {
                    let cfg = ConfigArgs { config: path, overrides }.load()?;
                    (cfg.geometry()?, cfg.params()?, cfg.evolution.seed)
                }
                None => (
                    LatticeGeometry::rectangular(3, 4, Boundary::Periodic)?,
                    ttn_scatter::ising::IsingParams::new(1.0, 1.0, 0.0)?,
                    1,
                ),
            };
            let report = ed_validate(&geom, params, dt, quench_time, drift_time, seed)?;
            if let Some(path) = spectrum {
                write_spectrum(BufWriter::new(File::create(path)?), &spectrum_all_sectors(params, &geom, levels)?)?;
            }
            print(&report)?;
            if !report.passed() {
                return Err(Error::Linalg("tree network disagrees with exact diagonalization".into()));
            }
            Ok(())
        }
        Command::Resume { dir } => print(&runner::resume(&dir, None)?),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
