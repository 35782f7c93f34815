//! Time-evolving population/environment systems and their reduction to
//! static polymatrix games.
//!
//! A system couples populations (simplex states with an antisymmetric base
//! game against themselves) to environments (simplex states with no
//! self-play). Environments coevolve only with populations and vice versa.
//! The reduction turns each node into a game player: populations keep their
//! base matrix as a self-loop and play their coupling matrix against each
//! environment; environments play their own coupling matrix back. Replicator
//! dynamics on the reduced game reproduce the raw coupled flow exactly.

use crate::dynamics::{rk4_on_simplices, DynamicsError, Trajectory};
use crate::game::{EdgeGame, GameError, PlayerId, PolymatrixGame, SelfLoop, StrategyProfile, ZeroSumCheck, ANTISYMMETRY_TOL, SIMPLEX_SUM_TOL};
use crate::matrix::Matrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("population base matrix {index} is {rows}x{cols}, expected {n}x{n}")]
    PopulationShape { index: usize, n: usize, rows: usize, cols: usize },
    #[error("population base matrix {index} is not antisymmetric (residual {residual:.3e})")]
    PopulationNotAntisymmetric { index: usize, residual: f64 },
    #[error("coupling {index} references population {pop}, but there are {n_pop} populations")]
    PopulationOutOfRange { index: usize, pop: usize, n_pop: usize },
    #[error("coupling {index} references environment {env}, but there are {n_env} environments")]
    EnvironmentOutOfRange { index: usize, env: usize, n_env: usize },
    #[error("couplings {first} and {second} both link population {pop} and environment {env}")]
    DuplicateCoupling { first: usize, second: usize, pop: usize, env: usize },
    #[error("coupling {index} matrix {which} is {rows}x{cols}, expected {n}x{n}")]
    CouplingShape { index: usize, which: &'static str, n: usize, rows: usize, cols: usize },
    #[error("matrix in {place} has a non-finite entry")]
    NonFinite { place: String },
    #[error("action count must be at least 1")]
    ZeroActions,
    #[error("state has {got_pop} population and {got_env} environment vectors, system has {n_pop} and {n_env}")]
    StateShape { n_pop: usize, n_env: usize, got_pop: usize, got_env: usize },
    #[error("state vector for {node} is not a simplex point: {reason}")]
    NotOnSimplex { node: String, reason: String },
    #[error("generalized RPS system needs n >= 3, got {0}")]
    TooFewActions(usize),
    #[error("coupling weight mu must be positive and finite, got {0}")]
    BadMu(f64),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// One population-environment link, with both oriented payoff matrices
/// stored explicitly so field evaluation needs no sign conventions.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub population: usize,
    pub environment: usize,
    /// Payoff matrix of the population against the environment.
    pub a_pop_env: Matrix,
    /// Payoff matrix of the environment against the population.
    pub a_env_pop: Matrix,
}

/// A coupled population/environment flow. All nodes share one action count.
#[derive(Clone, Debug)]
pub struct TimeEvolvingSystem {
    action_count: usize,
    populations: Vec<Matrix>,
    n_environments: usize,
    couplings: Vec<Coupling>,
}

impl TimeEvolvingSystem {
    /// Builds a system, rejecting shape defects, non-antisymmetric base
    /// matrices, and anything that is not a population-to-environment link.
    /// (Couplings name one population and one environment by construction,
    /// so population-population links are unrepresentable; out-of-range
    /// indices are the remaining way to break bipartiteness and are
    /// rejected here.)
    pub fn new(
        action_count: usize,
        populations: Vec<Matrix>,
        n_environments: usize,
        couplings: Vec<Coupling>,
    ) -> Result<Self, ReductionError> {
        let n = action_count;
        if n == 0 {
            return Err(ReductionError::ZeroActions);
        }
        for (idx, p) in populations.iter().enumerate() {
            if p.rows() != n || p.cols() != n {
                return Err(ReductionError::PopulationShape { index: idx, n, rows: p.rows(), cols: p.cols() });
            }
            if !p.is_finite() {
                return Err(ReductionError::NonFinite { place: format!("population {idx}") });
            }
            let residual = p.antisymmetry_residual();
            if residual > ANTISYMMETRY_TOL {
                return Err(ReductionError::PopulationNotAntisymmetric { index: idx, residual });
            }
        }
        let mut seen = std::collections::HashMap::new();
        for (idx, c) in couplings.iter().enumerate() {
            if c.population >= populations.len() {
                return Err(ReductionError::PopulationOutOfRange {
                    index: idx,
                    pop: c.population,
                    n_pop: populations.len(),
                });
            }
            if c.environment >= n_environments {
                return Err(ReductionError::EnvironmentOutOfRange { index: idx, env: c.environment, n_env: n_environments });
            }
            if let Some(&first) = seen.get(&(c.population, c.environment)) {
                return Err(ReductionError::DuplicateCoupling {
                    first,
                    second: idx,
                    pop: c.population,
                    env: c.environment,
                });
            }
            seen.insert((c.population, c.environment), idx);
            for (which, m) in [("A_pop_env", &c.a_pop_env), ("A_env_pop", &c.a_env_pop)] {
                if m.rows() != n || m.cols() != n {
                    return Err(ReductionError::CouplingShape { index: idx, which, n, rows: m.rows(), cols: m.cols() });
                }
                if !m.is_finite() {
                    return Err(ReductionError::NonFinite { place: format!("coupling {idx} {which}") });
                }
            }
        }
        Ok(TimeEvolvingSystem { action_count: n, populations, n_environments, couplings })
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn num_populations(&self) -> usize {
        self.populations.len()
    }

    pub fn num_environments(&self) -> usize {
        self.n_environments
    }

    pub fn populations(&self) -> &[Matrix] {
        &self.populations
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn num_nodes(&self) -> usize {
        self.populations.len() + self.n_environments
    }
}

/// Simplex state of every node: population vectors then environment vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub populations: Vec<Vec<f64>>,
    pub environments: Vec<Vec<f64>>,
}

impl SystemState {
    pub fn new(populations: Vec<Vec<f64>>, environments: Vec<Vec<f64>>) -> Result<Self, ReductionError> {
        for (name, group) in [("population", &populations), ("environment", &environments)] {
            for (idx, v) in group.iter().enumerate() {
                if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                    return Err(ReductionError::NotOnSimplex {
                        node: format!("{name} {idx}"),
                        reason: "negative or non-finite entry".into(),
                    });
                }
                let s: f64 = v.iter().sum();
                if (s - 1.0).abs() > SIMPLEX_SUM_TOL {
                    return Err(ReductionError::NotOnSimplex {
                        node: format!("{name} {idx}"),
                        reason: format!("entries sum to {s}"),
                    });
                }
            }
        }
        Ok(SystemState { populations, environments })
    }

    pub fn uniform(system: &TimeEvolvingSystem) -> Self {
        let n = system.action_count();
        let u = vec![1.0 / n as f64; n];
        SystemState {
            populations: vec![u.clone(); system.num_populations()],
            environments: vec![u; system.num_environments()],
        }
    }

    fn check_shape(&self, system: &TimeEvolvingSystem) -> Result<(), ReductionError> {
        let ok = self.populations.len() == system.num_populations()
            && self.environments.len() == system.num_environments()
            && self.populations.iter().chain(&self.environments).all(|v| v.len() == system.action_count());
        if ok {
            Ok(())
        } else {
            Err(ReductionError::StateShape {
                n_pop: system.num_populations(),
                n_env: system.num_environments(),
                got_pop: self.populations.len(),
                got_env: self.environments.len(),
            })
        }
    }
}

/// Time derivative of a [`SystemState`]; each component sums to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemDerivative {
    pub populations: Vec<Vec<f64>>,
    pub environments: Vec<Vec<f64>>,
}

/// Evaluates the coupled population/environment field.
///
/// Environment k: `wdot_{k,i} = w_{k,i} sum_l sum_j w_{k,j} ((A^{k,l} y_l)_i
/// - (A^{k,l} y_l)_j)` over coupled populations l. Population l:
/// `ydot_{l,i} = y_{l,i} ((P_l(w) y_l)_i - y_l' P_l(w) y_l)` where `P_l(w)`
/// adds, for each coupled environment k, the matrix of pairwise differences
/// of `A^{l,k} w_k`.
pub fn raw_field(system: &TimeEvolvingSystem, s: &SystemState) -> Result<SystemDerivative, ReductionError> {
    s.check_shape(system)?;
    let n = system.action_count();

    // per-population drive q_l = P_l y_l + sum_k [(A^{l,k} w_k)_i S_y - c' y]
    let mut pop_drive: Vec<Vec<f64>> = system
        .populations
        .iter()
        .zip(&s.populations)
        .map(|(p, y)| p.matvec(y))
        .collect();
    // per-environment drive g_k = sum_l A^{k,l} y_l
    let mut env_drive: Vec<Vec<f64>> = vec![vec![0.0; n]; system.num_environments()];

    for c in &system.couplings {
        let y = &s.populations[c.population];
        let w = &s.environments[c.environment];
        let cy: f64 = y.iter().sum();
        let cvec = c.a_pop_env.matvec(w);
        let cdoty: f64 = cvec.iter().zip(y).map(|(a, b)| a * b).sum();
        let q = &mut pop_drive[c.population];
        for i in 0..n {
            // (W^{l,k} y)_i with W_{ij} = c_i - c_j
            q[i] += cvec[i] * cy - cdoty;
        }
        c.a_env_pop.matvec_acc(y, &mut env_drive[c.environment]);
    }

    let populations = s
        .populations
        .iter()
        .zip(&pop_drive)
        .map(|(y, q)| {
            let avg: f64 = y.iter().zip(q).map(|(a, b)| a * b).sum();
            y.iter().zip(q).map(|(yi, qi)| yi * (qi - avg)).collect()
        })
        .collect();
    let environments = s
        .environments
        .iter()
        .zip(&env_drive)
        .map(|(w, g)| {
            let sw: f64 = w.iter().sum();
            let avg: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
            w.iter().zip(g).map(|(wi, gi)| wi * (gi * sw - avg)).collect()
        })
        .collect();
    Ok(SystemDerivative { populations, environments })
}

/// The time-evolving generalized RPS system: one population with the
/// circulant RPS base matrix, one environment, coupling `(mu I, -I)`.
pub fn build_generalized_rps_system(n: usize, mu: f64) -> Result<TimeEvolvingSystem, ReductionError> {
    if n < 3 {
        return Err(ReductionError::TooFewActions(n));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ReductionError::BadMu(mu));
    }
    TimeEvolvingSystem::new(
        n,
        vec![crate::presets::generalized_rps_matrix(n)],
        1,
        vec![Coupling {
            population: 0,
            environment: 0,
            a_pop_env: Matrix::scaled_identity(n, mu),
            a_env_pop: Matrix::scaled_identity(n, -1.0),
        }],
    )
}

/// A reduced system together with how its rescaling weights were obtained
/// and whether the game verified as rescaled zero-sum.
#[derive(Clone, Debug)]
pub struct ReducedGame {
    pub game: PolymatrixGame,
    /// True when eta came from a recognized preset structure rather than the
    /// all-ones fallback.
    pub eta_from_preset: bool,
    /// Result of the mandatory rescaled-zero-sum verification.
    pub zero_sum: ZeroSumCheck,
}

/// Reduces a system to a static polymatrix game: one player per node
/// (populations first), population base matrices as self-loops, and one edge
/// per coupling carrying both oriented matrices.
///
/// Rescaling weights cannot be inferred in general. The single
/// population/environment pattern with coupling `(mu I, -I)` is recognized
/// and given eta = (1, mu); anything else gets all-ones. Either way the
/// result is verified and the check surfaced in the return value.
pub fn reduce_to_polymatrix(system: &TimeEvolvingSystem) -> Result<ReducedGame, ReductionError> {
    let n = system.action_count();
    let n_pop = system.num_populations();
    let players = system.num_nodes();

    let self_loops = system
        .populations
        .iter()
        .enumerate()
        .map(|(l, p)| SelfLoop { i: PlayerId(l), a_ii: p.clone() })
        .collect();
    let edges = system
        .couplings
        .iter()
        .map(|c| EdgeGame {
            i: PlayerId(c.population),
            j: PlayerId(n_pop + c.environment),
            a_ij: c.a_pop_env.clone(),
            a_ji: c.a_env_pop.clone(),
        })
        .collect();

    let (eta, eta_from_preset) = match recognize_prop1_eta(system) {
        Some(mu) => (vec![1.0, mu], true),
        None => (vec![1.0; players], false),
    };

    let game = PolymatrixGame::new(vec![n; players], edges, self_loops, eta)?;
    let zero_sum = game.verify_rescaled_zero_sum()?;
    Ok(ReducedGame { game, eta_from_preset, zero_sum })
}

/// Matches the two-node reduced-RPS structure: coupling matrices exactly
/// `mu I` and `-I`.
fn recognize_prop1_eta(system: &TimeEvolvingSystem) -> Option<f64> {
    if system.num_populations() != 1 || system.num_environments() != 1 || system.couplings.len() != 1 {
        return None;
    }
    let c = &system.couplings[0];
    let n = system.action_count();
    let mu = c.a_pop_env.get(0, 0);
    if !(mu > 0.0 && mu.is_finite()) {
        return None;
    }
    for i in 0..n {
        for j in 0..n {
            let want_pop = if i == j { mu } else { 0.0 };
            let want_env = if i == j { -1.0 } else { 0.0 };
            if c.a_pop_env.get(i, j) != want_pop || c.a_env_pop.get(i, j) != want_env {
                return None;
            }
        }
    }
    Some(mu)
}

/// Order-preserving concatenation: populations first, then environments.
pub fn flatten_state(s: &SystemState) -> Result<StrategyProfile, ReductionError> {
    let strategies = s.populations.iter().chain(&s.environments).cloned().collect();
    Ok(StrategyProfile::new(strategies)?)
}

/// Inverse of [`flatten_state`] for states shaped like `system`.
pub fn lift_profile(x: &StrategyProfile, system: &TimeEvolvingSystem) -> Result<SystemState, ReductionError> {
    let n_pop = system.num_populations();
    if x.num_players() != system.num_nodes() {
        return Err(ReductionError::StateShape {
            n_pop,
            n_env: system.num_environments(),
            got_pop: x.num_players().min(n_pop),
            got_env: x.num_players().saturating_sub(n_pop),
        });
    }
    for p in 0..x.num_players() {
        if x.player(PlayerId(p)).len() != system.action_count() {
            return Err(ReductionError::NotOnSimplex {
                node: format!("node {p}"),
                reason: format!("has {} entries, expected {}", x.player(PlayerId(p)).len(), system.action_count()),
            });
        }
    }
    let players = x.players();
    SystemState::new(players[..n_pop].to_vec(), players[n_pop..].to_vec())
}

/// Fixed-step RK4 on the raw coupled field, recording flattened states on
/// the same schedule as [`crate::dynamics::integrate`].
pub fn integrate_raw(
    system: &TimeEvolvingSystem,
    s0: &SystemState,
    step: f64,
    horizon: f64,
    record_every: usize,
) -> Result<Trajectory, ReductionError> {
    s0.check_shape(system)?;
    for (idx, v) in s0.populations.iter().chain(&s0.environments).enumerate() {
        if v.iter().any(|x| *x <= 0.0) {
            return Err(ReductionError::NotOnSimplex {
                node: format!("node {idx}"),
                reason: "initial condition must be strictly interior".into(),
            });
        }
    }
    if !(step > 0.0 && step.is_finite() && horizon >= step) {
        return Err(DynamicsError::Config(format!("bad step/horizon pair ({step}, {horizon})")).into());
    }
    let n_steps = (horizon / step).round() as usize;
    let n = system.action_count();
    let layout = vec![n; system.num_nodes()];
    let x0 = flatten_state(s0)?.flatten();
    let n_pop = system.num_populations();

    let traj = rk4_on_simplices(&layout, &x0, step, n_steps, record_every.max(1), "rk4_raw", |x, out| {
        // field evaluation on the flattened layout; shapes are fixed here
        let populations: Vec<Vec<f64>> = (0..n_pop).map(|l| x[l * n..(l + 1) * n].to_vec()).collect();
        let environments: Vec<Vec<f64>> =
            (n_pop..system.num_nodes()).map(|k| x[k * n..(k + 1) * n].to_vec()).collect();
        let s = SystemState { populations, environments };
        let d = raw_field(system, &s).expect("shapes fixed by construction");
        for (node, v) in d.populations.iter().chain(&d.environments).enumerate() {
            out[node * n..(node + 1) * n].copy_from_slice(v);
        }
    })?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::replicator_field;
    use crate::presets::build_generalized_rps_reduced;

    /// Literal transcription of the displayed sums of the time-evolving
    /// generalized RPS dynamics, used as an oracle for `raw_field`.
    fn eq5_field(n: usize, mu: f64, y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = crate::presets::generalized_rps_matrix(n);
        // P(w) = P + mu W, W[i][j] = w_i - w_j
        let mut pw = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                pw[i][j] = p.get(i, j) + mu * (w[i] - w[j]);
            }
        }
        let py: Vec<f64> = (0..n).map(|i| (0..n).map(|j| pw[i][j] * y[j]).sum()).collect();
        let ypy: f64 = (0..n).map(|i| y[i] * py[i]).sum();
        let ydot: Vec<f64> = (0..n).map(|i| y[i] * (py[i] - ypy)).collect();
        let wdot: Vec<f64> = (0..n)
            .map(|i| w[i] * (0..n).map(|j| w[j] * (y[j] - y[i])).sum::<f64>())
            .collect();
        (ydot, wdot)
    }

    #[test]
    fn raw_field_zero_at_uniform() {
        let sys = build_generalized_rps_system(3, 0.8).unwrap();
        let d = raw_field(&sys, &SystemState::uniform(&sys)).unwrap();
        for v in d.populations.iter().chain(&d.environments).flatten() {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn raw_field_matches_literal_transcription() {
        let sys = build_generalized_rps_system(3, 0.8).unwrap();
        let s = SystemState::new(vec![vec![0.5, 0.2, 0.3]], vec![vec![0.1, 0.6, 0.3]]).unwrap();
        let d = raw_field(&sys, &s).unwrap();
        let (ydot, wdot) = eq5_field(3, 0.8, &s.populations[0], &s.environments[0]);
        for (a, b) in d.populations[0].iter().zip(&ydot) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for (a, b) in d.environments[0].iter().zip(&wdot) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn raw_field_components_sum_to_zero() {
        let sys = build_generalized_rps_system(4, 1.3).unwrap();
        let s = SystemState::new(
            vec![vec![0.4, 0.3, 0.2, 0.1]],
            vec![vec![0.25, 0.25, 0.3, 0.2]],
        )
        .unwrap();
        let d = raw_field(&sys, &s).unwrap();
        for v in d.populations.iter().chain(&d.environments) {
            let s: f64 = v.iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn raw_field_matches_reduced_replicator_field() {
        let sys = build_generalized_rps_system(3, 0.8).unwrap();
        let reduced = reduce_to_polymatrix(&sys).unwrap();
        assert!(reduced.eta_from_preset);
        assert!(reduced.zero_sum.rescaled_zero_sum);
        let s = SystemState::new(vec![vec![0.5, 0.25, 0.25]], vec![vec![1.0 / 3.0; 3]]).unwrap();
        let d = raw_field(&sys, &s).unwrap();
        let x = flatten_state(&s).unwrap();
        let f = replicator_field(&reduced.game, &x).unwrap();
        for (a, b) in d.populations[0].iter().zip(&f[0]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in d.environments[0].iter().zip(&f[1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reduction_reproduces_prop1_game() {
        let sys = build_generalized_rps_system(3, 0.8).unwrap();
        let reduced = reduce_to_polymatrix(&sys).unwrap();
        let reference = build_generalized_rps_reduced(3, 0.8).unwrap();
        assert_eq!(reduced.game.eta(), reference.eta());
        assert_eq!(reduced.game.edges()[0].a_ij.to_rows(), reference.edges()[0].a_ij.to_rows());
        assert_eq!(reduced.game.edges()[0].a_ji.to_rows(), reference.edges()[0].a_ji.to_rows());
        assert_eq!(
            reduced.game.self_loops()[0].a_ii.to_rows(),
            reference.self_loops()[0].a_ii.to_rows()
        );
    }

    #[test]
    fn reduction_falls_back_to_unit_eta() {
        // two populations on one environment is not the recognized pattern
        let p = crate::presets::generalized_rps_matrix(3);
        let sys = TimeEvolvingSystem::new(
            3,
            vec![p.clone(), p],
            1,
            vec![
                Coupling {
                    population: 0,
                    environment: 0,
                    a_pop_env: Matrix::identity(3),
                    a_env_pop: Matrix::scaled_identity(3, -1.0),
                },
                Coupling {
                    population: 1,
                    environment: 0,
                    a_pop_env: Matrix::identity(3),
                    a_env_pop: Matrix::scaled_identity(3, -1.0),
                },
            ],
        )
        .unwrap();
        let reduced = reduce_to_polymatrix(&sys).unwrap();
        assert!(!reduced.eta_from_preset);
        assert_eq!(reduced.game.eta(), &[1.0, 1.0, 1.0]);
        // pairwise (I, -I) couplings happen to be zero-sum with unit weights
        assert!(reduced.zero_sum.rescaled_zero_sum);
    }

    #[test]
    fn construction_rejects_symmetric_base_matrix() {
        let err = TimeEvolvingSystem::new(2, vec![Matrix::identity(2)], 0, vec![]).unwrap_err();
        assert!(matches!(err, ReductionError::PopulationNotAntisymmetric { .. }));
    }

    #[test]
    fn construction_rejects_out_of_range_coupling() {
        let err = TimeEvolvingSystem::new(
            3,
            vec![crate::presets::generalized_rps_matrix(3)],
            1,
            vec![Coupling {
                population: 0,
                environment: 1,
                a_pop_env: Matrix::identity(3),
                a_env_pop: Matrix::identity(3),
            }],
        )
        .unwrap_err();
        assert!(matches!(err, ReductionError::EnvironmentOutOfRange { .. }));
    }

    #[test]
    fn flatten_lift_round_trip() {
        let sys = build_generalized_rps_system(3, 0.5).unwrap();
        let s = SystemState::new(vec![vec![0.2, 0.3, 0.5]], vec![vec![0.6, 0.1, 0.3]]).unwrap();
        let x = flatten_state(&s).unwrap();
        assert_eq!(x.player(PlayerId(0)), &[0.2, 0.3, 0.5]);
        let back = lift_profile(&x, &sys).unwrap();
        assert_eq!(back, s);
    }
}
