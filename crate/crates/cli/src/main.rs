//! Command-line toolkit: each subcommand runs one pipeline stage and writes
//! deterministic files, so every intermediate (game, trajectory, report) can
//! be inspected, diffed, and fed to external plotting.

use clap::{Parser, Subcommand, ValueEnum};
use polymatrix::analysis::{poincare_section, AnalysisReport};
use polymatrix::dynamics::{integrate, DynamicsError, IntegratorConfig, Method};
use polymatrix::equilibrium::{compute_nash, EquilibriumError};
use polymatrix::game::StrategyProfile;
use polymatrix::io::{
    read_game, read_system, read_trajectory, write_game, write_report, write_section, write_system,
    write_trajectory, Meta,
};
use polymatrix::presets::{build_butterfly, build_chain, build_generalized_rps_reduced};
use polymatrix::reduction::{build_generalized_rps_system, reduce_to_polymatrix};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const TOOL: &str = "polymatrix";
const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit codes: 0 success, 2 validation failure, 3 solver/numerical failure,
/// 4 I/O or parse failure.
enum CliError {
    Validation(String),
    Solver(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Solver(m) | CliError::Io(m) => m,
        }
    }
}

impl From<polymatrix::io::IoError> for CliError {
    fn from(e: polymatrix::io::IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<EquilibriumError> for CliError {
    fn from(e: EquilibriumError) -> Self {
        match e {
            EquilibriumError::NotRescaledZeroSum { .. } | EquilibriumError::Game(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::BoundaryEscape { .. } | DynamicsError::NonFinite { .. } => {
                CliError::Solver(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<polymatrix::analysis::AnalysisError> for CliError {
    fn from(e: polymatrix::analysis::AnalysisError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = TOOL, version, about = "Replicator dynamics, equilibria, and conservation diagnostics for polymatrix games")]
struct Cli {
    /// Output directory (created if missing)
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed recorded in output headers for reproducibility
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Rk4X,
    Rk4Z,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Rk4X => Method::Rk4X,
            MethodArg::Rk4Z => Method::Rk4Z,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetName {
    /// Two-player reduced generalized RPS game
    RpsReduced,
    /// The time-evolving generalized RPS system
    RpsSystem,
    /// Alternating population/environment chain
    Chain,
    /// Ring of butterfly clusters
    Butterfly,
}

#[derive(Subcommand)]
enum Command {
    /// Check a game file's invariants and its rescaled-zero-sum property
    Validate { game: PathBuf },
    /// Compute a Nash equilibrium by linear programming
    Nash { game: PathBuf },
    /// Reduce a time-evolving system file to a game file
    Reduce { system: PathBuf },
    /// Integrate replicator dynamics and write trajectory.csv
    Simulate {
        game: PathBuf,
        /// Initial profile, flattened player-major (comma separated)
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 1)]
        record_every: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Rk4X)]
        method: MethodArg,
    },
    /// Write phi.csv, kl.csv, timeavg.csv, regret.csv, recurrence.json for a
    /// trajectory (the conservation reference profile is the LP equilibrium)
    Analyze {
        game: PathBuf,
        trajectory: PathBuf,
        /// Sup-norm radius for the recurrence scan
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Time before which returns are not counted
        #[arg(long, default_value_t = 10.0)]
        transient: f64,
    },
    /// Detect hyperplane crossings and write section.csv
    Section {
        trajectory: PathBuf,
        /// Hyperplane normal over flattened coordinates (comma separated)
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        normal: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
    },
    /// Emit a serialized preset game (game.json) or system (system.json)
    Preset {
        #[arg(value_enum)]
        name: PresetName,
        /// Action count; for butterfly this is the cluster count instead
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Coupling weight(s); chain takes a comma-separated list
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.8])]
        mu: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn meta(cli: &Cli, command: &str, parameters: String) -> Meta {
    Meta {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        command: command.to_string(),
        parameters,
        seed: cli.seed,
    }
}

fn comment(m: &Meta) -> String {
    format!("{} v{} | command: {} | {} | seed={}", m.tool, m.version, m.command, m.parameters, m.seed)
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn join_reals(vals: &[f64]) -> String {
    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Serialize)]
struct ValidateOutput {
    meta: Meta,
    violations: Vec<String>,
    rescaled_zero_sum: Option<bool>,
    residual: Option<f64>,
}

#[derive(Serialize)]
struct NashOutput {
    meta: Meta,
    profile: Vec<Vec<f64>>,
    values: Vec<f64>,
    objective: f64,
    interior: bool,
    interiority_margin: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output structs serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    ensure_out(&cli.out)?;
    match &cli.command {
        Command::Validate { game } => {
            let g = read_game(game)?;
            let violations: Vec<String> = g.validate().iter().map(|v| v.to_string()).collect();
            let check = if violations.is_empty() {
                Some(g.verify_rescaled_zero_sum().map_err(|e| CliError::Validation(e.to_string()))?)
            } else {
                None
            };
            let out = ValidateOutput {
                meta: meta(cli, "validate", format!("game={}", game.display())),
                violations: violations.clone(),
                rescaled_zero_sum: check.map(|c| c.rescaled_zero_sum),
                residual: check.map(|c| c.residual),
            };
            write_json(&cli.out.join("validate.json"), &out)?;
            for v in &violations {
                println!("violation: {v}");
            }
            match check {
                Some(c) if c.rescaled_zero_sum => {
                    println!("rescaled zero-sum: yes (residual {:.3e})", c.residual);
                    Ok(())
                }
                Some(c) => Err(CliError::Validation(format!(
                    "game is not rescaled zero-sum (residual {:.3e})",
                    c.residual
                ))),
                None => Err(CliError::Validation(format!("{} invariant violation(s)", violations.len()))),
            }
        }
        Command::Nash { game } => {
            let g = read_game(game)?;
            let r = compute_nash(&g)?;
            let out = NashOutput {
                meta: meta(cli, "nash", format!("game={}", game.display())),
                profile: r.profile.players().to_vec(),
                values: r.values.clone(),
                objective: r.objective,
                interior: r.interior,
                interiority_margin: r.interiority_margin,
            };
            write_json(&cli.out.join("nash.json"), &out)?;
            println!(
                "objective {:.3e}, interior: {}, margin {:.3e}",
                r.objective, r.interior, r.interiority_margin
            );
            Ok(())
        }
        Command::Reduce { system } => {
            let sys = read_system(system)?;
            let reduced = reduce_to_polymatrix(&sys).map_err(|e| CliError::Validation(e.to_string()))?;
            let m = meta(
                cli,
                "reduce",
                format!(
                    "system={} eta_from_preset={} rescaled_zero_sum={} residual={:.3e}",
                    system.display(),
                    reduced.eta_from_preset,
                    reduced.zero_sum.rescaled_zero_sum,
                    reduced.zero_sum.residual
                ),
            );
            write_game(&cli.out.join("game.json"), &reduced.game, Some(m))?;
            if !reduced.zero_sum.rescaled_zero_sum {
                eprintln!(
                    "warning: reduced game with eta = 1 is not rescaled zero-sum (residual {:.3e}); supply eta in the game file before running nash",
                    reduced.zero_sum.residual
                );
            }
            println!(
                "reduced {} populations + {} environments to a {}-player game",
                sys.num_populations(),
                sys.num_environments(),
                reduced.game.num_players()
            );
            Ok(())
        }
        Command::Simulate { game, x0, horizon, step, record_every, method } => {
            let g = read_game(game)?;
            let profile = StrategyProfile::from_flat(g.action_counts(), x0)
                .map_err(|e| CliError::Validation(format!("--x0: {e}")))?;
            let cfg = IntegratorConfig {
                method: (*method).into(),
                step: *step,
                horizon: *horizon,
                record_every: *record_every,
            };
            let traj = integrate(&g, &profile, &cfg)?;
            let m = meta(
                cli,
                "simulate",
                format!(
                    "game={} method={} step={} horizon={} record_every={} x0={}",
                    game.display(),
                    cfg.method.tag(),
                    step,
                    horizon,
                    record_every,
                    join_reals(x0)
                ),
            );
            write_trajectory(&cli.out.join("trajectory.csv"), &traj, &comment(&m))?;
            println!("recorded {} samples over t in [0, {}]", traj.len(), traj.times().last().unwrap());
            Ok(())
        }
        Command::Analyze { game, trajectory, epsilon, transient } => {
            let g = read_game(game)?;
            let traj = read_trajectory(trajectory)?;
            let nash = compute_nash(&g)?;
            let mut report = AnalysisReport::compute(&g, &traj, &nash.profile, *epsilon, *transient)?;
            report.notes.push("conservation reference profile computed by the equilibrium LP".to_string());
            let m = meta(
                cli,
                "analyze",
                format!(
                    "game={} trajectory={} epsilon={} transient={}",
                    game.display(),
                    trajectory.display(),
                    epsilon,
                    transient
                ),
            );
            write_report(&cli.out, &report, &comment(&m), Some(m.clone()))?;
            match report.recurrence.first_return_time {
                Some(t) => println!("first return within epsilon={epsilon} at t={t}"),
                None => println!(
                    "no return within epsilon={epsilon} by t={}; min distance {:.4}",
                    traj.times().last().unwrap(),
                    report.recurrence.min_distance_after_transient
                ),
            }
            Ok(())
        }
        Command::Section { trajectory, normal, offset } => {
            let traj = read_trajectory(trajectory)?;
            let crossings = poincare_section(&traj, normal, *offset)?;
            let m = meta(
                cli,
                "section",
                format!(
                    "trajectory={} normal={} offset={}",
                    trajectory.display(),
                    join_reals(normal),
                    offset
                ),
            );
            write_section(&cli.out.join("section.csv"), traj.layout(), &crossings, &comment(&m))?;
            println!("{} crossings", crossings.len());
            Ok(())
        }
        Command::Preset { name, n, mu } => {
            let validation = |e: String| CliError::Validation(e);
            match name {
                PresetName::RpsReduced => {
                    let mu0 = single_mu(mu)?;
                    let g = build_generalized_rps_reduced(*n, mu0).map_err(|e| validation(e.to_string()))?;
                    let m = meta(cli, "preset", format!("name=rps-reduced n={n} mu={mu0}"));
                    write_game(&cli.out.join("game.json"), &g, Some(m))?;
                }
                PresetName::RpsSystem => {
                    let mu0 = single_mu(mu)?;
                    let sys = build_generalized_rps_system(*n, mu0).map_err(|e| validation(e.to_string()))?;
                    let m = meta(cli, "preset", format!("name=rps-system n={n} mu={mu0}"));
                    write_system(&cli.out.join("system.json"), &sys, Some(m))?;
                }
                PresetName::Chain => {
                    let g = build_chain(mu, *n).map_err(|e| validation(e.to_string()))?;
                    let m = meta(cli, "preset", format!("name=chain n={n} mu={}", join_reals(mu)));
                    write_game(&cli.out.join("game.json"), &g, Some(m))?;
                }
                PresetName::Butterfly => {
                    let g = build_butterfly(*n).map_err(|e| validation(e.to_string()))?;
                    let m = meta(cli, "preset", format!("name=butterfly clusters={n}"));
                    write_game(&cli.out.join("game.json"), &g, Some(m))?;
                }
            }
            Ok(())
        }
    }
}

fn single_mu(mu: &[f64]) -> Result<f64, CliError> {
    match mu {
        [v] => Ok(*v),
        _ => Err(CliError::Validation(format!("this preset takes exactly one --mu value, got {}", mu.len()))),
    }
}
