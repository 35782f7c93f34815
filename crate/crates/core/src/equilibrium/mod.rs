//! Nash equilibrium computation for rescaled zero-sum polymatrix games.
//!
//! The equilibrium is the optimal solution of the linear program
//! `min sum_i eta_i v_i` subject to `v_i >= u_{i,alpha}(x)` for every player
//! and action, with `x` ranging over the product of simplices. For a
//! verified rescaled zero-sum game the optimum value is zero and any optimal
//! `x` is a Nash equilibrium, so the profile, the values `v_i`, and the
//! optimality gap are all checkable after the solve.

mod simplex;

pub use simplex::{solve_lp, LinearProgram, LpError, LpSolution, PIVOT_TOL};

use crate::game::{GameError, PlayerId, PolymatrixGame, StrategyProfile};
use thiserror::Error;

/// |objective| above this means the game was not actually rescaled zero-sum.
pub const OBJECTIVE_TOL: f64 = 1e-8;
/// Maximum deviation benefit accepted from a computed equilibrium.
pub const NASH_RESIDUAL_TOL: f64 = 1e-8;
/// Minimum-coordinate threshold for calling a profile interior.
pub const INTERIORITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error("game is not rescaled zero-sum (scan residual {residual:.3e}); the LP characterization does not apply")]
    NotRescaledZeroSum { residual: f64 },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("LP optimum {objective:.3e} is materially nonzero; the game cannot be rescaled zero-sum")]
    ObjectiveNonzero { objective: f64 },
    #[error("solver returned a profile with deviation benefit {residual:.3e}, above {NASH_RESIDUAL_TOL:.1e}")]
    ResidualTooLarge { residual: f64 },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// A computed equilibrium and its certificates.
#[derive(Clone, Debug)]
pub struct NashResult {
    pub profile: StrategyProfile,
    /// Per-player LP values `v_i` (each player's best pure-response payoff
    /// against the equilibrium).
    pub values: Vec<f64>,
    /// `sum_i eta_i v_i` at the optimum; zero up to solver tolerance.
    pub objective: f64,
    /// True when every strategy coordinate exceeds [`INTERIORITY_MARGIN`].
    pub interior: bool,
    /// Smallest strategy coordinate in the profile.
    pub interiority_margin: f64,
}

/// Result of checking a profile against unilateral pure deviations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NashCheck {
    /// `max_{i,alpha} u_{i,alpha}(x) - u_i(x)`; best deviations are pure, so
    /// this is the exact equilibrium gap.
    pub max_deviation_benefit: f64,
    /// True when the gap is at most the tolerance passed in.
    pub approximate_nash: bool,
}

/// Builds the equilibrium linear program for a verified rescaled zero-sum
/// game. Variables are all strategy coordinates (player-major, action-minor)
/// followed by one free value variable per player; `u_{i,alpha}` is linear
/// in the strategies, with self-loop terms included.
pub fn assemble_nash_lp(game: &PolymatrixGame) -> Result<LinearProgram, EquilibriumError> {
    let check = game.verify_rescaled_zero_sum()?;
    if !check.rescaled_zero_sum {
        return Err(EquilibriumError::NotRescaledZeroSum { residual: check.residual });
    }
    Ok(assemble_unchecked(game))
}

fn assemble_unchecked(game: &PolymatrixGame) -> LinearProgram {
    let n_players = game.num_players();
    let dim = game.dimension();
    let offsets = game.offsets();
    let n_vars = dim + n_players;

    let mut objective = vec![0.0; n_vars];
    objective[dim..].copy_from_slice(game.eta());

    let mut free = vec![false; n_vars];
    for f in &mut free[dim..] {
        *f = true;
    }

    // u_{i,alpha}(x) - v_i <= 0
    let mut rows: Vec<Vec<f64>> = (0..dim).map(|_| vec![0.0; n_vars]).collect();
    let mut put = |i: usize, m: &crate::matrix::Matrix, j: usize| {
        for alpha in 0..m.rows() {
            let row = &mut rows[offsets[i] + alpha];
            for beta in 0..m.cols() {
                row[offsets[j] + beta] += m.get(alpha, beta);
            }
        }
    };
    for e in game.edges() {
        put(e.i.0, &e.a_ij, e.j.0);
        put(e.j.0, &e.a_ji, e.i.0);
    }
    for l in game.self_loops() {
        put(l.i.0, &l.a_ii, l.i.0);
    }
    for p in 0..n_players {
        for alpha in offsets[p]..offsets[p + 1] {
            rows[alpha][dim + p] = -1.0;
        }
    }
    let ineq = rows.into_iter().map(|r| (r, 0.0)).collect();

    let eq = (0..n_players)
        .map(|p| {
            let mut row = vec![0.0; n_vars];
            for a in offsets[p]..offsets[p + 1] {
                row[a] = 1.0;
            }
            (row, 1.0)
        })
        .collect();

    LinearProgram { objective, ineq, eq, free }
}

/// Largest gain any player can get from a unilateral pure deviation at `x`,
/// together with whether it stays within `tol`.
pub fn verify_nash(game: &PolymatrixGame, x: &StrategyProfile, tol: f64) -> Result<NashCheck, GameError> {
    game.check_profile(x)?;
    let mut worst = f64::NEG_INFINITY;
    for p in 0..game.num_players() {
        let i = PlayerId(p);
        let a = game.action_utilities(x, i)?;
        let u = crate::game::dot(x.player(i), &a);
        for v in a {
            worst = worst.max(v - u);
        }
    }
    Ok(NashCheck { max_deviation_benefit: worst, approximate_nash: worst <= tol })
}

/// Computes a Nash equilibrium of a verified rescaled zero-sum game by
/// solving the assembled linear program with the deterministic simplex.
///
/// When the optimal face has more than one vertex the one returned is
/// pivot-order-determined; identical inputs always yield identical output.
pub fn compute_nash(game: &PolymatrixGame) -> Result<NashResult, EquilibriumError> {
    let check = game.verify_rescaled_zero_sum()?;
    if !check.rescaled_zero_sum {
        return Err(EquilibriumError::NotRescaledZeroSum { residual: check.residual });
    }
    let lp = assemble_unchecked(game);
    let sol = solve_lp(&lp)?;
    if sol.objective.abs() > OBJECTIVE_TOL {
        return Err(EquilibriumError::ObjectiveNonzero { objective: sol.objective });
    }

    let dim = game.dimension();
    let offsets = game.offsets();
    let mut strategies = Vec::with_capacity(game.num_players());
    for p in 0..game.num_players() {
        let mut s: Vec<f64> = sol.variables[offsets[p]..offsets[p + 1]].to_vec();
        let sum: f64 = s.iter().sum();
        for v in &mut s {
            *v /= sum;
        }
        strategies.push(s);
    }
    let profile = StrategyProfile::new(strategies)?;
    let nash = verify_nash(game, &profile, NASH_RESIDUAL_TOL)?;
    if !nash.approximate_nash {
        return Err(EquilibriumError::ResidualTooLarge { residual: nash.max_deviation_benefit });
    }
    let margin = profile.min_coordinate();
    Ok(NashResult {
        profile,
        values: sol.variables[dim..].to_vec(),
        objective: sol.objective,
        interior: margin > INTERIORITY_MARGIN,
        interiority_margin: margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{EdgeGame, SelfLoop};
    use crate::matrix::Matrix;
    use crate::presets::{build_chain, build_generalized_rps_reduced, generalized_rps_matrix};

    fn matching_pennies() -> PolymatrixGame {
        let a12 = Matrix::from_rows(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let a21 = a12.transpose().scale(-1.0);
        PolymatrixGame::new(
            vec![2, 2],
            vec![EdgeGame { i: PlayerId(0), j: PlayerId(1), a_ij: a12, a_ji: a21 }],
            vec![],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn lp_shape_for_reduced_rps() {
        let g = build_generalized_rps_reduced(3, 0.8).unwrap();
        let lp = assemble_nash_lp(&g).unwrap();
        assert_eq!(lp.num_variables(), 8); // 6 strategy + 2 value
        assert_eq!(lp.ineq.len(), 6);
        assert_eq!(lp.eq.len(), 2);
        assert_eq!(lp.free, vec![false, false, false, false, false, false, true, true]);
    }

    #[test]
    fn lp_shape_for_single_self_loop() {
        let g = PolymatrixGame::new(
            vec![4],
            vec![],
            vec![SelfLoop { i: PlayerId(0), a_ii: generalized_rps_matrix(4) }],
            vec![1.0],
        )
        .unwrap();
        let lp = assemble_nash_lp(&g).unwrap();
        assert_eq!(lp.num_variables(), 5);
        assert_eq!(lp.ineq.len(), 4);
        assert_eq!(lp.eq.len(), 1);
    }

    #[test]
    fn all_zero_game_solves_to_zero_objective() {
        let g = PolymatrixGame::new(
            vec![2, 3],
            vec![EdgeGame {
                i: PlayerId(0),
                j: PlayerId(1),
                a_ij: Matrix::zeros(2, 3),
                a_ji: Matrix::zeros(3, 2),
            }],
            vec![],
            vec![1.0, 2.0],
        )
        .unwrap();
        let r = compute_nash(&g).unwrap();
        assert!(r.objective.abs() <= OBJECTIVE_TOL);
        assert!(verify_nash(&g, &r.profile, 1e-12).unwrap().approximate_nash);
    }

    #[test]
    fn matching_pennies_equilibrium_matches_grid_oracle() {
        let g = matching_pennies();

        // grid oracle: smallest deviation benefit over a 0.01 grid
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for a in 0..=100 {
            for b in 0..=100 {
                let p = a as f64 / 100.0;
                let q = b as f64 / 100.0;
                let x = StrategyProfile::new(vec![vec![p, 1.0 - p], vec![q, 1.0 - q]]).unwrap();
                let gap = verify_nash(&g, &x, 0.0).unwrap().max_deviation_benefit;
                if gap < best.0 {
                    best = (gap, p, q);
                }
            }
        }
        assert!(best.0.abs() < 1e-12);
        assert_eq!((best.1, best.2), (0.5, 0.5));

        let r = compute_nash(&g).unwrap();
        for p in 0..2 {
            for v in r.profile.player(PlayerId(p)) {
                assert!((v - 0.5).abs() < 1e-9, "profile {:?}", r.profile);
            }
        }
        assert!(r.objective.abs() <= OBJECTIVE_TOL);
        assert!(r.interior);
    }

    #[test]
    fn reduced_rps_equilibrium_is_uniform() {
        for mu in [0.1, 0.5, 0.8] {
            let g = build_generalized_rps_reduced(3, mu).unwrap();
            let r = compute_nash(&g).unwrap();
            for p in 0..2 {
                for v in r.profile.player(PlayerId(p)) {
                    assert!((v - 1.0 / 3.0).abs() < 1e-9, "mu={mu}: {:?}", r.profile);
                }
            }
            assert!(r.interior);
            assert!(r.objective.abs() <= OBJECTIVE_TOL);
        }
    }

    #[test]
    fn chain_equilibrium_is_uniform() {
        let g = build_chain(&[0.1, 0.5, 0.8, 0.5], 3).unwrap();
        let r = compute_nash(&g).unwrap();
        for p in 0..5 {
            for v in r.profile.player(PlayerId(p)) {
                assert!((v - 1.0 / 3.0).abs() < 1e-9);
            }
        }
        assert!(r.interior);
        assert!(r.interiority_margin > 0.3);
    }

    #[test]
    fn verify_nash_uniform_reduced_rps() {
        let g = build_generalized_rps_reduced(3, 0.8).unwrap();
        let x = StrategyProfile::uniform(&g);
        let check = verify_nash(&g, &x, 1e-12).unwrap();
        assert!(check.max_deviation_benefit.abs() < 1e-12);
        assert!(check.approximate_nash);
    }

    #[test]
    fn verify_nash_pure_profile_on_rps_loop() {
        // deviating from rock to the beating action gains exactly 1
        let g = PolymatrixGame::new(
            vec![3],
            vec![],
            vec![SelfLoop { i: PlayerId(0), a_ii: generalized_rps_matrix(3) }],
            vec![1.0],
        )
        .unwrap();
        let x = StrategyProfile::new(vec![vec![1.0, 0.0, 0.0]]).unwrap();

        // oracle: enumerate the three pure deviations against P e_1
        let base = g.utility(&x, PlayerId(0)).unwrap();
        let mut best = f64::NEG_INFINITY;
        for a in 0..3 {
            let mut dev = vec![0.0; 3];
            dev[a] = 1.0;
            let y = StrategyProfile::new(vec![dev]).unwrap();
            // opponent profile is the same player, so deviation utility is
            // dev against the original x through the self-loop
            let util: f64 = g
                .action_utilities(&x, PlayerId(0))
                .unwrap()
                .iter()
                .zip(y.player(PlayerId(0)))
                .map(|(u, p)| u * p)
                .sum();
            best = best.max(util - base);
        }
        assert!((best - 1.0).abs() < 1e-15);

        let check = verify_nash(&g, &x, 1e-12).unwrap();
        assert!((check.max_deviation_benefit - 1.0).abs() < 1e-15);
        assert!(!check.approximate_nash);
    }

    #[test]
    fn compute_nash_rejects_unverified_game() {
        let base = build_generalized_rps_reduced(3, 0.5).unwrap();
        let g = PolymatrixGame::new(
            base.action_counts().to_vec(),
            base.edges().to_vec(),
            base.self_loops().to_vec(),
            vec![1.0, 1.0],
        )
        .unwrap();
        assert!(matches!(compute_nash(&g), Err(EquilibriumError::NotRescaledZeroSum { .. })));
    }

    #[test]
    fn eta_scaling_leaves_profile_unchanged() {
        let base = build_generalized_rps_reduced(3, 0.8).unwrap();
        let scaled = PolymatrixGame::new(
            base.action_counts().to_vec(),
            base.edges().to_vec(),
            base.self_loops().to_vec(),
            base.eta().iter().map(|e| e * 3.7).collect(),
        )
        .unwrap();
        let a = compute_nash(&base).unwrap();
        let b = compute_nash(&scaled).unwrap();
        assert!(a.profile.sup_distance(&b.profile) < 1e-12);
    }

    #[test]
    fn compute_nash_is_deterministic() {
        let g = build_chain(&[0.3, 0.9], 3).unwrap();
        let a = compute_nash(&g).unwrap();
        let b = compute_nash(&g).unwrap();
        for p in 0..3 {
            let (xa, xb) = (a.profile.player(PlayerId(p)), b.profile.player(PlayerId(p)));
            assert!(xa.iter().zip(xb).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn butterfly_equilibrium_verifies() {
        let g = crate::presets::build_butterfly(1).unwrap();
        let r = compute_nash(&g).unwrap();
        assert!(r.objective.abs() <= OBJECTIVE_TOL);
        let check = verify_nash(&g, &r.profile, NASH_RESIDUAL_TOL).unwrap();
        assert!(check.approximate_nash, "residual {}", check.max_deviation_benefit);
        assert!(r.interior, "margin {}", r.interiority_margin);
    }
}
