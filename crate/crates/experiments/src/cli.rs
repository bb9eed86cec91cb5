use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nmqfi_core::spectral::{bound_state_threshold, find_bound_state, markov_rate};
use serde_json::json;

use crate::config::{parse_config, validate_config, Config, ConfigError, Overrides};
use crate::scenarios::{run_scenario, scenario_dir, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Fisher information of a two-mode Gaussian probe under non-Markovian dissipation.
///
/// Settings are taken from the built-in defaults, then the `--config` file,
/// then the flags below, each layer replacing the previous one.
#[derive(Debug, Parser)]
#[command(name = "nmqfi", version)]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Flags {
    /// TOML config file merged over the defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Coupling strength η.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    /// Ohmicity s.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub s: Option<f64>,
    /// Cutoff frequency; replaces every ω_c grid with this single value.
    #[arg(long = "omega-c", global = true, allow_negative_numbers = true)]
    pub omega_c: Option<f64>,
    /// Encoded coupling κ.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub kappa: Option<f64>,
    /// Mean photon number; replaces the n̄ grids as well.
    #[arg(long = "n-bar", global = true, allow_negative_numbers = true)]
    pub n_bar: Option<f64>,
    /// Final time; replaces every scenario horizon.
    #[arg(long = "t-max", global = true, allow_negative_numbers = true)]
    pub t_max: Option<f64>,
    /// Solver step.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Step-halving tolerance.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol: Option<f64>,
    /// Output root directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parameter sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the bound state (if any) as JSON.
    BoundState,
    /// Solve for u(t) and its κ-derivative.
    EvolveU,
    /// Fisher-information time series at a single parameter point.
    Qfi,
    /// Reproduce one figure panel set.
    Figure {
        #[arg(value_enum)]
        id: FigureId,
    },
    /// Summary over a grid of cutoff frequencies.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureId {
    #[value(name = "figure1a", alias = "1a")]
    Figure1a,
    #[value(name = "figure1b", alias = "1b")]
    Figure1b,
    #[value(name = "figure1cd", alias = "1cd")]
    Figure1cd,
    #[value(name = "figure2a", alias = "2a")]
    Figure2a,
    #[value(name = "figure2b", alias = "2b")]
    Figure2b,
    #[value(name = "custom")]
    Custom,
}

impl From<FigureId> for Scenario {
    fn from(id: FigureId) -> Self {
        match id {
            FigureId::Figure1a => Scenario::Figure1a,
            FigureId::Figure1b => Scenario::Figure1b,
            FigureId::Figure1cd => Scenario::Figure1cd,
            FigureId::Figure2a => Scenario::Figure2a,
            FigureId::Figure2b => Scenario::Figure2b,
            FigureId::Custom => Scenario::Custom,
        }
    }
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            eta: self.eta,
            s: self.s,
            omega_c: self.omega_c,
            kappa: self.kappa,
            n_bar: self.n_bar,
            t_max: self.t_max,
            h: self.h,
            tol: self.tol,
            out: self.out.clone(),
            jobs: self.jobs,
        }
    }

    /// Defaults, then the config file, then the flags.
    pub fn resolve(&self) -> Result<Config, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => validate_config(path)?,
            None => parse_config("")?,
        };
        self.overrides().apply(&mut cfg)?;
        Ok(cfg)
    }
}

/// Parses `args` and executes the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let cfg = match cli.flags.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let scenario = match cli.command {
        Command::BoundState => return bound_state(&cfg),
        Command::EvolveU => Scenario::EvolveU,
        Command::Qfi => Scenario::Custom,
        Command::Figure { id } => id.into(),
        Command::Sweep => Scenario::Sweep,
    };
    match run_scenario(&cfg, scenario) {
        Ok(m) => {
            let dir = scenario_dir(&cfg, scenario);
            println!(
                "{}: {} file(s) in {} ({:.1} s)",
                m.scenario,
                m.outputs.len(),
                dir.display(),
                m.wall_clock_seconds
            );
            let mut code = EXIT_OK;
            for p in m.points.iter().filter(|p| !p.converged) {
                eprintln!("{}: {}", p.label, p.error.as_deref().unwrap_or("failed"));
                code = EXIT_NUMERICAL;
            }
            code
        }
        Err(e) => {
            eprintln!("i/o error: {e}");
            EXIT_IO
        }
    }
}

fn bound_state(cfg: &Config) -> i32 {
    let p = cfg.spectral(cfg.params.omega_c).expect("config was validated");
    match find_bound_state(&p) {
        Ok(bs) => {
            let out = json!({
                "omega_c": p.omega_c(),
                "threshold_omega_c": bound_state_threshold(&p),
                "markov_rate": markov_rate(&p),
                "exists": bs.is_some(),
                "energy": bs.map(|b| b.energy),
                "residue": bs.map(|b| b.residue),
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("numerical error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            }
        }
    }
}
