//! Command-line surface over the thermoprobe library: probe evaluation,
//! spectrum and chain optimization, ratio sweeps, inverse design, and
//! estimation experiments. Commands that write files seal them with a
//! run manifest so results stay auditable and replayable.

mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thermoprobe::chain_opt::{self, ChainConstraint, ChainFamily, SignFamily};
use thermoprobe::optim::OptimizerConfig;
use thermoprobe::TemperatureRange;
use thermoprobe::{analytic, estimator, hamiltonian, io, phase_sweep, spectrum_opt, thermal};

use output::Emitter;

#[derive(Debug, thiserror::Error)]
pub(crate) enum CliError {
    #[error("{0}")]
    Msg(String),
    #[error("{0}")]
    Lib(#[from] thermoprobe::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// Design and validate equilibrium temperature probes.
#[derive(Parser)]
#[command(name = "thermoprobe", version, about, max_term_width = 100)]
struct Cli {
    /// Cap on worker threads (default: one per core). THERMOPROBE_THREADS
    /// is honored when the flag is absent; results are identical for any
    /// thread count.
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    /// Directory where output files are written.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Print the thermal sensitivity of a spectrum at one temperature.
    Qfi {
        /// Spectrum CSV (single `energy` column).
        #[arg(long, value_name = "FILE")]
        spectrum: PathBuf,
        /// Temperature.
        #[arg(long)]
        t: f64,
    },
    /// Print the range-averaged inverse sensitivity of a spectrum.
    G {
        /// Spectrum CSV (single `energy` column).
        #[arg(long, value_name = "FILE")]
        spectrum: PathBuf,
        /// Lower end of the temperature window.
        #[arg(long)]
        tmin: f64,
        /// Upper end of the temperature window.
        #[arg(long)]
        tmax: f64,
    },
    /// Print the dimensionless single-temperature gap for a level budget.
    LocalGap {
        /// Level budget N.
        #[arg(long)]
        n: usize,
        /// Also print the physical gap at this temperature.
        #[arg(long)]
        t: Option<f64>,
    },
    /// Optimize an N-level spectrum over a temperature window.
    OptimizeLevels {
        /// Level budget N.
        #[arg(long)]
        n: usize,
        /// Lower end of the temperature window.
        #[arg(long)]
        tmin: f64,
        /// Upper end of the temperature window.
        #[arg(long)]
        tmax: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Optimize across a grid of window ratios and locate structure
    /// transitions.
    Sweep {
        /// Level budget N.
        #[arg(long)]
        n: usize,
        /// Harmonic mean of every window on the grid.
        #[arg(long)]
        thm: f64,
        /// Window ratios, ascending, comma separated.
        #[arg(long, value_name = "LIST", value_delimiter = ',', num_args = 1.., required = true)]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Bisect one cluster-count transition inside a ratio bracket.
    CriticalRatio {
        /// Level budget N.
        #[arg(long)]
        n: usize,
        /// Harmonic mean of every window tested.
        #[arg(long)]
        thm: f64,
        /// Ratio bracket containing exactly one transition.
        #[arg(long, num_args = 2, value_name = "LO HI", required = true)]
        bracket: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve for multi-spin couplings realizing a target spectrum.
    DesignIsing {
        /// Target spectrum CSV with 2^n levels.
        #[arg(long, value_name = "FILE")]
        target: PathBuf,
    },
    /// Print the numerical rank of the n-spin design system.
    RankCheck {
        /// Spin count n.
        #[arg(long)]
        n: usize,
    },
    /// Optimize a spin-chain probe over a temperature window.
    OptimizeChain {
        /// Coupling family.
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Spin count n.
        #[arg(long)]
        n: usize,
        /// Lower end of the temperature window.
        #[arg(long)]
        tmin: f64,
        /// Upper end of the temperature window.
        #[arg(long)]
        tmax: f64,
        /// Coupling sign branch to search.
        #[arg(long, value_enum, default_value_t = SignArg::Both)]
        sign: SignArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Grow an optimized chain across sizes by replication and local
    /// refinement.
    Transfer {
        /// Coupling family.
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Size optimized globally first.
        #[arg(long)]
        from: usize,
        /// Largest size to reach.
        #[arg(long)]
        to: usize,
        /// Lower end of the temperature window.
        #[arg(long)]
        tmin: f64,
        /// Upper end of the temperature window.
        #[arg(long)]
        tmax: f64,
        /// Coupling sign branch to search.
        #[arg(long, value_enum, default_value_t = SignArg::Both)]
        sign: SignArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure sensitivity loss under random parameter perturbations.
    NoiseSweep {
        /// Chain parameters JSON (bare or an optimize-chain result).
        #[arg(long, value_name = "FILE")]
        params: PathBuf,
        /// Temperature at which sensitivity is evaluated.
        #[arg(long)]
        t: f64,
        /// Perturbation half-widths in energy units, comma separated.
        #[arg(long, value_name = "LIST", value_delimiter = ',', num_args = 1.., required = true)]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run repeated temperature-estimation experiments against the
    /// variance bound.
    Simulate {
        /// Spectrum CSV (single `energy` column).
        #[arg(long, value_name = "FILE")]
        spectrum: PathBuf,
        /// True temperature of the prepared probe.
        #[arg(long)]
        t: f64,
        /// Energy measurements per trial.
        #[arg(long)]
        m: usize,
        /// Number of independent trials.
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FamilyArg {
    /// Independent x/y/z couplings and per-site fields.
    Xyz,
    /// Isotropic couplings with per-site fields.
    Xxx,
    /// Isotropic couplings with one shared field.
    XxxHom,
}

impl From<FamilyArg> for ChainFamily {
    fn from(arg: FamilyArg) -> Self {
        match arg {
            FamilyArg::Xyz => ChainFamily::Xyz,
            FamilyArg::Xxx => ChainFamily::Xxx,
            FamilyArg::XxxHom => ChainFamily::XxxHomogeneous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SignArg {
    Ferro,
    Antiferro,
    /// Search both branches and keep the better one.
    Both,
}

impl SignArg {
    fn to_constraint(self) -> Option<SignFamily> {
        match self {
            SignArg::Ferro => Some(SignFamily::Ferromagnetic),
            SignArg::Antiferro => Some(SignFamily::Antiferromagnetic),
            SignArg::Both => None,
        }
    }
}

impl std::fmt::Display for SignArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SignArg::Ferro => "ferro",
            SignArg::Antiferro => "antiferro",
            SignArg::Both => "both",
        };
        f.write_str(name)
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            match err.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    print!("{err}");
                    std::process::exit(0);
                }
                _ => {
                    // Keep diagnostics to one line; clap's usage blurb is
                    // reachable through --help.
                    let text = err.to_string();
                    let line = text
                        .lines()
                        .find(|l| !l.trim().is_empty())
                        .unwrap_or("error: invalid arguments");
                    eprintln!("{line}");
                    std::process::exit(2);
                }
            }
        }
    };
    init_logger();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    let config = serde_json::to_value(&cli.command)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Qfi { spectrum, t } => {
            let s = io::read_spectrum_csv(&spectrum)?;
            println!("F_th = {}", thermal::thermal_qfi(&s, t)?);
        }
        Command::G {
            spectrum,
            tmin,
            tmax,
        } => {
            let s = io::read_spectrum_csv(&spectrum)?;
            let range = TemperatureRange::new(tmin, tmax)?;
            let g = thermal::g_measure(&s, &range, &spectrum_opt::objective_quadrature())?;
            println!("G = {g}");
        }
        Command::LocalGap { n, t } => {
            let x = analytic::local_optimal_gap(n)?;
            println!("x = {x}");
            if let Some(t) = t {
                if !(t.is_finite() && t > 0.0) {
                    return Err(CliError::Msg(format!(
                        "temperature must be positive, got {t}"
                    )));
                }
                println!("epsilon = {}", x * t);
            }
        }
        Command::OptimizeLevels { n, tmin, tmax, seed } => {
            let range = TemperatureRange::new(tmin, tmax)?;
            let result = spectrum_opt::optimize_levels(n, &range, &seeded(seed))?;
            let mut em = Emitter::new(out, "optimize-levels")?;
            em.json("optimize-levels.json", &result)?;
            em.csv(
                "optimize-levels-spectrum.csv",
                &io::spectrum_to_csv(&result.spectrum),
            )?;
            em.finish(config, Some(seed))?;
        }
        Command::Sweep {
            n,
            thm,
            ratios,
            seed,
        } => {
            let diagram = phase_sweep::sweep(n, thm, &ratios, &seeded(seed))?;
            let mut em = Emitter::new(out, "sweep")?;
            em.json("sweep.json", &diagram)?;
            em.csv("sweep.csv", &diagram.to_csv())?;
            em.finish(config, Some(seed))?;
        }
        Command::CriticalRatio {
            n,
            thm,
            bracket,
            seed,
        } => {
            let tau =
                phase_sweep::find_critical_ratio(n, thm, 1, (bracket[0], bracket[1]), &seeded(seed))?;
            let mut em = Emitter::new(out, "critical-ratio")?;
            em.json("critical-ratio.json", &tau)?;
            em.finish(config, Some(seed))?;
        }
        Command::DesignIsing { target } => {
            let spectrum = io::read_spectrum_csv(&target)?;
            let len = spectrum.len();
            if len < 2 || !len.is_power_of_two() {
                return Err(CliError::Msg(format!(
                    "target must have 2^n levels for n >= 1, got {len}"
                )));
            }
            let n = len.trailing_zeros() as usize;
            let design = hamiltonian::design_couplings(n, &spectrum)?;
            let mut em = Emitter::new(out, "design-ising")?;
            em.json("design-ising.json", &design)?;
            em.finish(config, None)?;
        }
        Command::RankCheck { n } => {
            println!("rank = {}", hamiltonian::rank_check(n)?);
        }
        Command::OptimizeChain {
            family,
            n,
            tmin,
            tmax,
            sign,
            seed,
        } => {
            let range = TemperatureRange::new(tmin, tmax)?;
            let constraint = ChainConstraint::new(family.into(), sign.to_constraint());
            let result = chain_opt::optimize_chain(n, &range, &constraint, &seeded(seed))?;
            let mut em = Emitter::new(out, "optimize-chain")?;
            em.json("optimize-chain.json", &result)?;
            em.csv(
                "optimize-chain-spectrum.csv",
                &io::spectrum_to_csv(&result.spectrum),
            )?;
            em.finish(config, Some(seed))?;
        }
        Command::Transfer {
            family,
            from,
            to,
            tmin,
            tmax,
            sign,
            seed,
        } => {
            let range = TemperatureRange::new(tmin, tmax)?;
            let constraint = ChainConstraint::new(family.into(), sign.to_constraint());
            let ladder = chain_opt::transfer_optimize(from, to, &range, &constraint, &seeded(seed))?;
            if let Some(reason) = &ladder.halted {
                log::warn!("ladder halted early: {reason}");
            }
            let mut em = Emitter::new(out, "transfer")?;
            em.json("transfer.json", &ladder)?;
            em.csv("transfer.csv", &ladder.to_csv())?;
            em.finish(config, Some(seed))?;
        }
        Command::NoiseSweep {
            params,
            t,
            levels,
            trials,
            seed,
        } => {
            let chain = io::read_chain_params(&params)?;
            let result = chain_opt::noise_robustness(&chain, t, &levels, trials, seed)?;
            let mut em = Emitter::new(out, "noise-sweep")?;
            em.json("noise-sweep.json", &result)?;
            em.csv("noise-sweep.csv", &result.to_csv())?;
            em.finish(config, Some(seed))?;
        }
        Command::Simulate {
            spectrum,
            t,
            m,
            trials,
            seed,
        } => {
            let s = io::read_spectrum_csv(&spectrum)?;
            let run = estimator::crb_saturation_check(&s, t, m, trials, seed)?;
            println!(
                "variance/CRB = {} (95% CI [{}, {}])",
                run.ratio, run.ratio_ci.0, run.ratio_ci.1
            );
            let mut em = Emitter::new(out, "simulate")?;
            em.json("simulate.json", &run)?;
            em.finish(config, Some(seed))?;
        }
    }
    Ok(())
}

fn seeded(seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        seed,
        ..OptimizerConfig::default()
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let requested = match flag {
        Some(k) => Some(k),
        None => match std::env::var("THERMOPROBE_THREADS") {
            Ok(text) => Some(text.trim().parse::<usize>().map_err(|_| {
                CliError::Msg(format!(
                    "THERMOPROBE_THREADS must be a positive integer, got '{text}'"
                ))
            })?),
            Err(_) => None,
        },
    };
    let Some(k) = requested else {
        return Ok(());
    };
    if k == 0 {
        return Err(CliError::Msg("thread count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| CliError::Msg(format!("thread pool setup failed: {e}")))
}

struct StderrLogger;

static LOGGER: StderrLogger = StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata<'_>) -> bool {
        metadata.level() <= log::Level::Warn
    }

    fn log(&self, record: &log::Record<'_>) {
        if self.enabled(record.metadata()) {
            eprintln!("{}: {}", record.level().as_str().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

fn init_logger() {
    let _ = log::set_logger(&LOGGER).map(|()| log::set_max_level(log::LevelFilter::Warn));
}
