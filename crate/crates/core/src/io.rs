//! On-disk formats.
//!
//! Games and systems are JSON documents with row-major matrices; since JSON
//! has no comment syntax, provenance goes in an optional `meta` object that
//! parsers ignore. Trajectories and analysis series are CSV with a leading
//! `#` comment line and reals printed to 17 significant digits so parsing
//! them back is bit-faithful.

use crate::analysis::{AnalysisReport, RecurrenceStats, SectionCrossing};
use crate::dynamics::Trajectory;
use crate::game::{EdgeGame, PlayerId, PolymatrixGame, SelfLoop};
use crate::matrix::Matrix;
use crate::reduction::{Coupling, TimeEvolvingSystem};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("{path}: line {line}: {msg}")]
    ParseLine { path: String, line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File { path: path.display().to_string(), source }
}

/// Provenance block recorded in every JSON output: tool version, the command
/// that produced the file, its parameters, and the seed in effect.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: String,
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// game files

#[derive(Serialize, Deserialize)]
pub struct GameFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
    pub players: Vec<PlayerSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub self_loops: Vec<SelfLoopSpec>,
    pub eta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct PlayerSpec {
    pub actions: usize,
}

#[derive(Serialize, Deserialize)]
pub struct EdgeSpec {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "A_ij")]
    pub a_ij: Vec<Vec<f64>>,
    #[serde(rename = "A_ji")]
    pub a_ji: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
pub struct SelfLoopSpec {
    pub i: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
}

pub fn game_to_file(game: &PolymatrixGame, meta: Option<Meta>) -> GameFile {
    GameFile {
        meta,
        players: game.action_counts().iter().map(|&actions| PlayerSpec { actions }).collect(),
        edges: game
            .edges()
            .iter()
            .map(|e| EdgeSpec { i: e.i.0, j: e.j.0, a_ij: e.a_ij.to_rows(), a_ji: e.a_ji.to_rows() })
            .collect(),
        self_loops: game
            .self_loops()
            .iter()
            .map(|l| SelfLoopSpec { i: l.i.0, a: l.a_ii.to_rows() })
            .collect(),
        eta: game.eta().to_vec(),
    }
}

pub fn file_to_game(file: &GameFile) -> Result<PolymatrixGame, IoError> {
    let matrix = |rows: &Vec<Vec<f64>>, what: &str| {
        Matrix::from_rows(rows.clone()).map_err(|e| IoError::Invalid(format!("{what}: {e}")))
    };
    let edges = file
        .edges
        .iter()
        .map(|e| {
            Ok(EdgeGame {
                i: PlayerId(e.i),
                j: PlayerId(e.j),
                a_ij: matrix(&e.a_ij, &format!("edge ({}, {}) field A_ij", e.i, e.j))?,
                a_ji: matrix(&e.a_ji, &format!("edge ({}, {}) field A_ji", e.i, e.j))?,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let self_loops = file
        .self_loops
        .iter()
        .map(|l| Ok(SelfLoop { i: PlayerId(l.i), a_ii: matrix(&l.a, &format!("self_loop {} field A", l.i))? }))
        .collect::<Result<Vec<_>, IoError>>()?;
    PolymatrixGame::new(
        file.players.iter().map(|p| p.actions).collect(),
        edges,
        self_loops,
        file.eta.clone(),
    )
    .map_err(|e| IoError::Invalid(e.to_string()))
}

pub fn read_game(path: &Path) -> Result<PolymatrixGame, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let file: GameFile = serde_json::from_str(&text)
        .map_err(|e| IoError::Parse { path: path.display().to_string(), msg: e.to_string() })?;
    file_to_game(&file)
}

pub fn write_game(path: &Path, game: &PolymatrixGame, meta: Option<Meta>) -> Result<(), IoError> {
    let file = game_to_file(game, meta);
    let mut text = serde_json::to_string_pretty(&file).expect("game files serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| file_err(path, e))
}

// ---------------------------------------------------------------------------
// system files

#[derive(Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
    pub n: usize,
    pub populations: Vec<PopulationSpec>,
    pub environments: usize,
    #[serde(default)]
    pub couplings: Vec<CouplingSpec>,
}

#[derive(Serialize, Deserialize)]
pub struct PopulationSpec {
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
pub struct CouplingSpec {
    pub pop: usize,
    pub env: usize,
    #[serde(rename = "A_pop_env")]
    pub a_pop_env: Vec<Vec<f64>>,
    #[serde(rename = "A_env_pop")]
    pub a_env_pop: Vec<Vec<f64>>,
}

pub fn system_to_file(system: &TimeEvolvingSystem, meta: Option<Meta>) -> SystemFile {
    SystemFile {
        meta,
        n: system.action_count(),
        populations: system.populations().iter().map(|p| PopulationSpec { p: p.to_rows() }).collect(),
        environments: system.num_environments(),
        couplings: system
            .couplings()
            .iter()
            .map(|c| CouplingSpec {
                pop: c.population,
                env: c.environment,
                a_pop_env: c.a_pop_env.to_rows(),
                a_env_pop: c.a_env_pop.to_rows(),
            })
            .collect(),
    }
}

pub fn file_to_system(file: &SystemFile) -> Result<TimeEvolvingSystem, IoError> {
    let matrix = |rows: &Vec<Vec<f64>>, what: &str| {
        Matrix::from_rows(rows.clone()).map_err(|e| IoError::Invalid(format!("{what}: {e}")))
    };
    let populations = file
        .populations
        .iter()
        .enumerate()
        .map(|(i, p)| matrix(&p.p, &format!("population {i} field P")))
        .collect::<Result<Vec<_>, _>>()?;
    let couplings = file
        .couplings
        .iter()
        .map(|c| {
            Ok(Coupling {
                population: c.pop,
                environment: c.env,
                a_pop_env: matrix(&c.a_pop_env, &format!("coupling ({}, {}) field A_pop_env", c.pop, c.env))?,
                a_env_pop: matrix(&c.a_env_pop, &format!("coupling ({}, {}) field A_env_pop", c.pop, c.env))?,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    TimeEvolvingSystem::new(file.n, populations, file.environments, couplings)
        .map_err(|e| IoError::Invalid(e.to_string()))
}

pub fn read_system(path: &Path) -> Result<TimeEvolvingSystem, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let file: SystemFile = serde_json::from_str(&text)
        .map_err(|e| IoError::Parse { path: path.display().to_string(), msg: e.to_string() })?;
    file_to_system(&file)
}

pub fn write_system(path: &Path, system: &TimeEvolvingSystem, meta: Option<Meta>) -> Result<(), IoError> {
    let file = system_to_file(system, meta);
    let mut text = serde_json::to_string_pretty(&file).expect("system files serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| file_err(path, e))
}

// ---------------------------------------------------------------------------
// CSV

/// 17 significant digits: enough to reproduce any f64 exactly on re-parse.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn column_names(layout: &[usize]) -> Vec<String> {
    let mut names = Vec::new();
    for (p, &n) in layout.iter().enumerate() {
        for a in 0..n {
            names.push(format!("x_{p}_{a}"));
        }
    }
    names
}

/// Writes `t,x_0_0,x_0_1,...` rows (player-major, action-minor) preceded by
/// a `#` comment line.
pub fn write_trajectory(path: &Path, traj: &Trajectory, comment: &str) -> Result<(), IoError> {
    let mut out = String::new();
    writeln!(out, "# {comment}").unwrap();
    writeln!(out, "t,{}", column_names(traj.layout()).join(",")).unwrap();
    for k in 0..traj.len() {
        out.push_str(&fmt_real(traj.time(k)));
        for v in traj.sample(k) {
            out.push(',');
            out.push_str(&fmt_real(*v));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| file_err(path, e))
}

/// Reads a trajectory CSV produced by [`write_trajectory`], recovering the
/// player layout from the header.
pub fn read_trajectory(path: &Path) -> Result<Trajectory, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let p = path.display().to_string();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));

    let (hline, header) = lines
        .next()
        .ok_or_else(|| IoError::Parse { path: p.clone(), msg: "no header line".into() })?;
    let mut fields = header.split(',');
    if fields.next().map(str::trim) != Some("t") {
        return Err(IoError::ParseLine { path: p, line: hline + 1, msg: "header must start with field `t`".into() });
    }
    let mut layout: Vec<usize> = Vec::new();
    for f in fields {
        let parts: Vec<&str> = f.trim().split('_').collect();
        let bad = || IoError::ParseLine {
            path: p.clone(),
            line: hline + 1,
            msg: format!("field `{f}` is not of the form x_<player>_<action>"),
        };
        if parts.len() != 3 || parts[0] != "x" {
            return Err(bad());
        }
        let player: usize = parts[1].parse().map_err(|_| bad())?;
        let action: usize = parts[2].parse().map_err(|_| bad())?;
        if player == layout.len() && action == 0 {
            layout.push(1);
        } else if player + 1 == layout.len() && action == layout[player] {
            layout[player] += 1;
        } else {
            return Err(bad());
        }
    }
    let dim: usize = layout.iter().sum();

    let mut times = Vec::new();
    let mut data = Vec::new();
    for (lno, line) in lines {
        let mut vals = Vec::with_capacity(dim + 1);
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| IoError::ParseLine {
                path: p.clone(),
                line: lno + 1,
                msg: format!("field `{tok}` is not a real number"),
            })?;
            vals.push(v);
        }
        if vals.len() != dim + 1 {
            return Err(IoError::ParseLine {
                path: p.clone(),
                line: lno + 1,
                msg: format!("expected {} fields, got {}", dim + 1, vals.len()),
            });
        }
        times.push(vals[0]);
        data.extend_from_slice(&vals[1..]);
    }
    let step = if times.len() >= 2 { times[1] - times[0] } else { 0.0 };
    Trajectory::from_samples(layout, times, data, step, "file".to_string())
        .map_err(|e| IoError::Invalid(e.to_string()))
}

fn write_csv(path: &Path, comment: &str, header: &str, rows: impl Iterator<Item = String>) -> Result<(), IoError> {
    let mut out = String::new();
    writeln!(out, "# {comment}").unwrap();
    writeln!(out, "{header}").unwrap();
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| file_err(path, e))
}

/// Writes `section.csv`: crossing time, direction, and interpolated state.
pub fn write_section(path: &Path, layout: &[usize], crossings: &[SectionCrossing], comment: &str) -> Result<(), IoError> {
    let header = format!("t,direction,{}", column_names(layout).join(","));
    write_csv(
        path,
        comment,
        &header,
        crossings.iter().map(|c| {
            let mut row = format!("{},{}", fmt_real(c.t), c.direction);
            for v in c.state.flatten() {
                row.push(',');
                row.push_str(&fmt_real(v));
            }
            row
        }),
    )
}

#[derive(Serialize, Deserialize)]
struct RecurrenceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Meta>,
    epsilon: f64,
    transient: f64,
    first_return_time: Option<f64>,
    min_distance_after_transient: f64,
}

pub fn write_recurrence(path: &Path, stats: &RecurrenceStats, meta: Option<Meta>) -> Result<(), IoError> {
    let file = RecurrenceFile {
        meta,
        epsilon: stats.epsilon,
        transient: stats.transient,
        first_return_time: stats.first_return_time,
        min_distance_after_transient: stats.min_distance_after_transient,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("recurrence stats serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| file_err(path, e))
}

/// Writes the full report into `dir`: `phi.csv`, `kl.csv`, `timeavg.csv`,
/// `regret.csv`, and `recurrence.json`.
pub fn write_report(dir: &Path, report: &AnalysisReport, comment: &str, meta: Option<Meta>) -> Result<(), IoError> {
    write_csv(
        &dir.join("phi.csv"),
        comment,
        "t,phi",
        report.phi_series.iter().map(|(t, v)| format!("{},{}", fmt_real(*t), fmt_real(*v))),
    )?;

    let n_players = report.kl_components.first().map_or(0, |c| c.len());
    let kl_header = {
        let mut h = String::from("t,total");
        for p in 0..n_players {
            write!(h, ",kl_{p}").unwrap();
        }
        h
    };
    write_csv(
        &dir.join("kl.csv"),
        comment,
        &kl_header,
        report.kl_series.iter().zip(&report.kl_components).map(|((t, total), comps)| {
            let mut row = format!("{},{}", fmt_real(*t), fmt_real(*total));
            for c in comps {
                row.push(',');
                row.push_str(&fmt_real(*c));
            }
            row
        }),
    )?;

    let avg = &report.avg_strategies;
    let timeavg_header = {
        let mut h = String::from("t");
        for name in column_names(avg.layout()) {
            write!(h, ",avg_{name}").unwrap();
        }
        for p in 0..report.avg_utilities.per_player.len() {
            write!(h, ",avg_u_{p}").unwrap();
        }
        h
    };
    write_csv(
        &dir.join("timeavg.csv"),
        comment,
        &timeavg_header,
        (0..avg.len()).map(|k| {
            let mut row = fmt_real(avg.time(k));
            for v in avg.sample(k) {
                row.push(',');
                row.push_str(&fmt_real(*v));
            }
            for series in &report.avg_utilities.per_player {
                row.push(',');
                row.push_str(&fmt_real(series[k]));
            }
            row
        }),
    )?;

    let regret_header = {
        let mut h = String::from("t");
        for p in 0..report.regret_series.len() {
            write!(h, ",reg_{p}").unwrap();
        }
        h
    };
    let n_rows = report.regret_series.first().map_or(0, |s| s.len());
    write_csv(
        &dir.join("regret.csv"),
        comment,
        &regret_header,
        (0..n_rows).map(|k| {
            let mut row = fmt_real(report.regret_series[0][k].0);
            for series in &report.regret_series {
                row.push(',');
                row.push_str(&fmt_real(series[k].1));
            }
            row
        }),
    )?;

    write_recurrence(&dir.join("recurrence.json"), &report.recurrence, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegratorConfig, Method};
    use crate::game::StrategyProfile;
    use crate::presets::{build_butterfly, build_chain, build_generalized_rps_reduced};
    use crate::reduction::build_generalized_rps_system;

    fn tempdir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("polymatrix-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn game_round_trip_preserves_matrices() {
        let dir = tempdir();
        for (name, game) in [
            ("rps", build_generalized_rps_reduced(3, 0.8).unwrap()),
            ("chain", build_chain(&[0.1, 0.5, 0.8, 0.5], 3).unwrap()),
            ("bfly", build_butterfly(2).unwrap()),
        ] {
            let path = dir.join(format!("{name}.json"));
            write_game(&path, &game, None).unwrap();
            let back = read_game(&path).unwrap();
            assert_eq!(back.action_counts(), game.action_counts());
            assert_eq!(back.eta(), game.eta());
            for (a, b) in back.edges().iter().zip(game.edges()) {
                assert_eq!(a.a_ij.to_rows(), b.a_ij.to_rows());
                assert_eq!(a.a_ji.to_rows(), b.a_ji.to_rows());
            }
            for (a, b) in back.self_loops().iter().zip(game.self_loops()) {
                assert_eq!(a.a_ii.to_rows(), b.a_ii.to_rows());
            }
        }
    }

    #[test]
    fn system_round_trip() {
        let dir = tempdir();
        let sys = build_generalized_rps_system(3, 0.8).unwrap();
        let path = dir.join("system.json");
        write_system(&path, &sys, None).unwrap();
        let back = read_system(&path).unwrap();
        assert_eq!(back.action_count(), 3);
        assert_eq!(back.couplings()[0].a_pop_env.to_rows(), sys.couplings()[0].a_pop_env.to_rows());
        assert_eq!(back.populations()[0].to_rows(), sys.populations()[0].to_rows());
    }

    #[test]
    fn parse_error_names_field_and_line() {
        let dir = tempdir();
        let path = dir.join("broken.json");
        std::fs::write(&path, "{\n  \"players\": [{\"actions\": 3}]\n}\n").unwrap();
        let err = read_game(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("eta"), "message should name the missing field: {msg}");
        assert!(msg.contains("broken.json"));
    }

    #[test]
    fn trajectory_round_trip_is_bit_faithful() {
        let dir = tempdir();
        let g = build_generalized_rps_reduced(3, 0.8).unwrap();
        let x0 = StrategyProfile::new(vec![vec![0.5, 0.25, 0.25], vec![0.5, 0.25, 0.25]]).unwrap();
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.01, horizon: 2.0, record_every: 10 };
        let traj = integrate(&g, &x0, &cfg).unwrap();
        let path = dir.join("traj.csv");
        write_trajectory(&path, &traj, "test").unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.layout(), traj.layout());
        assert_eq!(back.len(), traj.len());
        for k in 0..traj.len() {
            assert_eq!(back.time(k).to_bits(), traj.time(k).to_bits());
            for (a, b) in back.sample(k).iter().zip(traj.sample(k)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn trajectory_rejects_malformed_rows() {
        let dir = tempdir();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "# c\nt,x_0_0,x_0_1\n0.0,0.5,0.5\n1.0,0.5\n").unwrap();
        let err = read_trajectory(&path).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }
}
