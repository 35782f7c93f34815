//! Trajectory diagnostics: the constant of motion, weighted KL conservation,
//! time averages, regret, recurrence statistics, and Poincare sections.
//!
//! With an interior Nash equilibrium `x*` of a rescaled zero-sum game, the
//! quantity `Phi = sum_i eta_i sum_a x*_{ia} ln x_{ia}` is invariant along
//! replicator orbits, as is the weighted KL sum `Psi = sum_i eta_i
//! KL(x*_i || x_i)`; the two differ by the constant `sum_i eta_i H(x*_i)`.
//! Any drift in these series measures integrator error, which is the point
//! of computing them numerically.

use crate::dynamics::Trajectory;
use crate::game::{dot, GameError, PlayerId, PolymatrixGame, StrategyProfile};
use thiserror::Error;

/// Interpolated states closer to the section plane than this count as lying
/// on it.
pub const SECTION_PLANE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("state has a coordinate {value} on the simplex boundary; the diagnostic needs interior states")]
    Boundary { value: f64 },
    #[error("need at least {need} samples, trajectory has {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("transient must be nonnegative, got {0}")]
    BadTransient(f64),
    #[error("trajectory horizon {horizon} does not reach past the transient {transient}")]
    HorizonTooShort { horizon: f64, transient: f64 },
    #[error("section normal must be a nonzero vector of length {expected}, got length {got}")]
    BadNormal { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

fn check_layout(game: &PolymatrixGame, traj: &Trajectory) -> Result<(), AnalysisError> {
    if traj.layout() != game.action_counts() {
        return Err(AnalysisError::Shape(format!(
            "trajectory layout {:?} does not match game action counts {:?}",
            traj.layout(),
            game.action_counts()
        )));
    }
    Ok(())
}

/// `Phi(x) = sum_i eta_i sum_a x*_{ia} ln x_{ia}`, the conserved quantity of
/// Lemma-style rescaled zero-sum conservation. Negative whenever `x` is
/// interior and `x*` is a probability profile.
pub fn constant_of_motion(
    game: &PolymatrixGame,
    x_star: &StrategyProfile,
    x: &StrategyProfile,
) -> Result<f64, AnalysisError> {
    game.check_profile(x_star)?;
    game.check_profile(x)?;
    let mut total = 0.0;
    for p in 0..game.num_players() {
        let i = PlayerId(p);
        let mut player_sum = 0.0;
        for (star, v) in x_star.player(i).iter().zip(x.player(i)) {
            if *v <= 0.0 {
                return Err(AnalysisError::Boundary { value: *v });
            }
            player_sum += star * v.ln();
        }
        total += game.eta()[p] * player_sum;
    }
    Ok(total)
}

/// Weighted KL divergence from `x*` to `x`, total and per player (each
/// component already carries its `eta_i` factor). Uses the convention
/// `0 ln(0/q) = 0` and requires `x` interior.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedKl {
    pub total: f64,
    pub per_player: Vec<f64>,
}

pub fn weighted_kl(
    game: &PolymatrixGame,
    x_star: &StrategyProfile,
    x: &StrategyProfile,
) -> Result<WeightedKl, AnalysisError> {
    game.check_profile(x_star)?;
    game.check_profile(x)?;
    let mut per_player = Vec::with_capacity(game.num_players());
    for p in 0..game.num_players() {
        let i = PlayerId(p);
        let mut kl = 0.0;
        for (star, v) in x_star.player(i).iter().zip(x.player(i)) {
            if *v <= 0.0 {
                return Err(AnalysisError::Boundary { value: *v });
            }
            if *star > 0.0 {
                kl += star * (star / v).ln();
            }
        }
        per_player.push(game.eta()[p] * kl);
    }
    Ok(WeightedKl { total: per_player.iter().sum(), per_player })
}

/// Running trapezoidal averages of the strategies at every recorded time.
/// The first entry is the state itself; the last is the full-horizon
/// average. Averages of simplex states are simplex states, so the result is
/// itself a trajectory.
pub fn time_average(traj: &Trajectory) -> Result<Trajectory, AnalysisError> {
    if traj.len() < 2 {
        return Err(AnalysisError::TooFewSamples { need: 2, got: traj.len() });
    }
    let dim = traj.dimension();
    let mut data = Vec::with_capacity(traj.len() * dim);
    data.extend_from_slice(traj.sample(0));
    let mut cum = vec![0.0; dim];
    for k in 1..traj.len() {
        let dt = traj.time(k) - traj.time(k - 1);
        let (prev, cur) = (traj.sample(k - 1), traj.sample(k));
        let t = traj.time(k);
        for d in 0..dim {
            cum[d] += 0.5 * (prev[d] + cur[d]) * dt;
            data.push(cum[d] / t);
        }
    }
    Ok(Trajectory::from_samples(
        traj.layout().to_vec(),
        traj.times().to_vec(),
        data,
        traj.step(),
        "time_average".to_string(),
    )
    .expect("running averages of simplex states stay on the simplex"))
}

/// Per-player utility series and their running trapezoidal averages.
#[derive(Clone, Debug)]
pub struct UtilitySeries {
    pub times: Vec<f64>,
    /// `per_player[i][k]` is the running average of `u_i` up to time `k`.
    pub per_player: Vec<Vec<f64>>,
}

pub fn time_average_utility(game: &PolymatrixGame, traj: &Trajectory) -> Result<UtilitySeries, AnalysisError> {
    check_layout(game, traj)?;
    if traj.len() < 2 {
        return Err(AnalysisError::TooFewSamples { need: 2, got: traj.len() });
    }
    let n_players = game.num_players();
    let offsets = game.offsets();
    let mut autil = vec![0.0; game.dimension()];
    // pointwise utilities first
    let mut raw = vec![vec![0.0; traj.len()]; n_players];
    for k in 0..traj.len() {
        let x = traj.sample(k);
        game.accumulate_action_utilities(x, &mut autil);
        for p in 0..n_players {
            let (o, e) = (offsets[p], offsets[p + 1]);
            raw[p][k] = dot(&x[o..e], &autil[o..e]);
        }
    }
    let mut per_player = vec![vec![0.0; traj.len()]; n_players];
    for p in 0..n_players {
        per_player[p][0] = raw[p][0];
        let mut cum = 0.0;
        for k in 1..traj.len() {
            let dt = traj.time(k) - traj.time(k - 1);
            cum += 0.5 * (raw[p][k - 1] + raw[p][k]) * dt;
            per_player[p][k] = cum / traj.time(k);
        }
    }
    Ok(UtilitySeries { times: traj.times().to_vec(), per_player })
}

/// Regret of player `i` along the trajectory: the best fixed action's
/// average advantage over the realized play,
/// `Reg_i(t) = max_a (1/t) int_0^t (u_{ia}(x(s)) - u_i(x(s))) ds`,
/// with trapezoidal quadrature on the recorded samples. Best deviations are
/// pure by linearity, so the max over the simplex reduces to actions. The
/// series starts at the first positive recorded time.
pub fn regret(game: &PolymatrixGame, traj: &Trajectory, i: PlayerId) -> Result<Vec<(f64, f64)>, AnalysisError> {
    check_layout(game, traj)?;
    if i.0 >= game.num_players() {
        return Err(GameError::PlayerOutOfRange(i, game.num_players()).into());
    }
    if traj.len() < 2 {
        return Err(AnalysisError::TooFewSamples { need: 2, got: traj.len() });
    }
    let (o, e) = (game.offsets()[i.0], game.offsets()[i.0 + 1]);
    let n = e - o;
    let mut autil = vec![0.0; game.dimension()];
    // gap_a(t_k) = u_{ia} - u_i at sample k
    let gaps: Vec<Vec<f64>> = (0..traj.len())
        .map(|k| {
            let x = traj.sample(k);
            game.accumulate_action_utilities(x, &mut autil);
            let u = dot(&x[o..e], &autil[o..e]);
            autil[o..e].iter().map(|a| a - u).collect()
        })
        .collect();
    let mut cum = vec![0.0; n];
    let mut series = Vec::with_capacity(traj.len() - 1);
    for k in 1..traj.len() {
        let dt = traj.time(k) - traj.time(k - 1);
        for a in 0..n {
            cum[a] += 0.5 * (gaps[k - 1][a] + gaps[k][a]) * dt;
        }
        let t = traj.time(k);
        let best = cum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        series.push((t, best / t));
    }
    Ok(series)
}

/// Return-time statistics of a trajectory relative to its start.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrenceStats {
    /// Sup-norm radius defining a return.
    pub epsilon: f64,
    /// Samples at or before this time are not counted as returns.
    pub transient: f64,
    /// First recorded time after the transient with distance below epsilon,
    /// if any; recurrence times can exceed any finite horizon, so absence is
    /// data rather than an error.
    pub first_return_time: Option<f64>,
    /// Smallest distance to the start seen after the transient.
    pub min_distance_after_transient: f64,
}

pub fn recurrence_stats(traj: &Trajectory, epsilon: f64, transient: f64) -> Result<RecurrenceStats, AnalysisError> {
    if !(epsilon > 0.0) {
        return Err(AnalysisError::BadEpsilon(epsilon));
    }
    if transient < 0.0 {
        return Err(AnalysisError::BadTransient(transient));
    }
    let horizon = *traj.times().last().unwrap_or(&0.0);
    if horizon <= transient {
        return Err(AnalysisError::HorizonTooShort { horizon, transient });
    }
    let start = traj.sample(0);
    let mut first_return_time = None;
    let mut min_distance = f64::INFINITY;
    for k in 1..traj.len() {
        let t = traj.time(k);
        if t <= transient {
            continue;
        }
        let mut d: f64 = 0.0;
        for (a, b) in traj.sample(k).iter().zip(start) {
            d = d.max((a - b).abs());
        }
        if d < min_distance {
            min_distance = d;
        }
        if first_return_time.is_none() && d < epsilon {
            first_return_time = Some(t);
        }
    }
    Ok(RecurrenceStats { epsilon, transient, first_return_time, min_distance_after_transient: min_distance })
}

/// One detected intersection of the trajectory with a hyperplane.
#[derive(Clone, Debug)]
pub struct SectionCrossing {
    /// Linearly interpolated crossing time.
    pub t: f64,
    /// Linearly interpolated state on the plane.
    pub state: StrategyProfile,
    /// +1 when the functional increases through the plane, -1 otherwise.
    pub direction: i8,
}

/// Detects sign changes of `<normal, flattened state> - offset` between
/// consecutive samples, interpolating linearly in time and state. A sample
/// lying on the plane (within [`SECTION_PLANE_TOL`]) counts as a crossing
/// only when its neighbors sit on opposite sides.
pub fn poincare_section(
    traj: &Trajectory,
    normal: &[f64],
    offset: f64,
) -> Result<Vec<SectionCrossing>, AnalysisError> {
    let dim = traj.dimension();
    if normal.len() != dim || normal.iter().all(|v| *v == 0.0) {
        return Err(AnalysisError::BadNormal { expected: dim, got: normal.len() });
    }
    let value = |k: usize| dot(traj.sample(k), normal) - offset;
    let sign = |v: f64| {
        if v.abs() <= SECTION_PLANE_TOL {
            0i8
        } else if v > 0.0 {
            1
        } else {
            -1
        }
    };
    let vals: Vec<f64> = (0..traj.len()).map(value).collect();
    let signs: Vec<i8> = vals.iter().map(|&v| sign(v)).collect();

    let mut out = Vec::new();
    for k in 0..traj.len() {
        // a sample exactly on the plane, with strictly opposite neighbors
        if signs[k] == 0 && k > 0 && k + 1 < traj.len() && signs[k - 1] * signs[k + 1] == -1 {
            out.push(SectionCrossing { t: traj.time(k), state: traj.profile(k), direction: signs[k + 1] });
        }
        // a strict sign change across a sample gap
        if k + 1 < traj.len() && signs[k] * signs[k + 1] == -1 {
            let f = vals[k] / (vals[k] - vals[k + 1]);
            let t = traj.time(k) + f * (traj.time(k + 1) - traj.time(k));
            let (a, b) = (traj.sample(k), traj.sample(k + 1));
            let flat: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + f * (y - x)).collect();
            let state = StrategyProfile::from_flat(traj.layout(), &flat)
                .expect("interpolants of simplex states stay on the simplex");
            out.push(SectionCrossing { t, state, direction: signs[k + 1] });
        }
    }
    Ok(out)
}

/// Every per-trajectory diagnostic bundled together, with the sample times
/// shared across all series.
#[derive(Clone, Debug)]
pub struct AnalysisReport {
    /// `(t, Phi(t))` at each recorded time.
    pub phi_series: Vec<(f64, f64)>,
    /// `(t, Psi(t))` totals at each recorded time.
    pub kl_series: Vec<(f64, f64)>,
    /// `kl_components[k][i]` is player i's weighted KL term at sample k.
    pub kl_components: Vec<Vec<f64>>,
    /// Running strategy averages, as a trajectory over the same times.
    pub avg_strategies: Trajectory,
    /// Running utility averages per player.
    pub avg_utilities: UtilitySeries,
    /// `regret_series[i]` is player i's `(t, Reg_i(t))` series.
    pub regret_series: Vec<Vec<(f64, f64)>>,
    pub recurrence: RecurrenceStats,
    pub notes: Vec<String>,
}

impl AnalysisReport {
    /// Computes the full report against a reference profile `x_star`
    /// (normally the LP equilibrium; a non-equilibrium reference is allowed
    /// and will simply show drift in the conservation series).
    pub fn compute(
        game: &PolymatrixGame,
        traj: &Trajectory,
        x_star: &StrategyProfile,
        epsilon: f64,
        transient: f64,
    ) -> Result<AnalysisReport, AnalysisError> {
        check_layout(game, traj)?;
        let mut phi_series = Vec::with_capacity(traj.len());
        let mut kl_series = Vec::with_capacity(traj.len());
        let mut kl_components = Vec::with_capacity(traj.len());
        for k in 0..traj.len() {
            let x = traj.profile(k);
            let t = traj.time(k);
            phi_series.push((t, constant_of_motion(game, x_star, &x)?));
            let kl = weighted_kl(game, x_star, &x)?;
            kl_series.push((t, kl.total));
            kl_components.push(kl.per_player);
        }
        let avg_strategies = time_average(traj)?;
        let avg_utilities = time_average_utility(game, traj)?;
        let regret_series = (0..game.num_players())
            .map(|p| regret(game, traj, PlayerId(p)))
            .collect::<Result<Vec<_>, _>>()?;
        let recurrence = recurrence_stats(traj, epsilon, transient)?;
        Ok(AnalysisReport {
            phi_series,
            kl_series,
            kl_components,
            avg_strategies,
            avg_utilities,
            regret_series,
            recurrence,
            notes: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegratorConfig, Method};
    use crate::presets::build_generalized_rps_reduced;

    fn rps() -> PolymatrixGame {
        build_generalized_rps_reduced(3, 0.8).unwrap()
    }

    fn profile(vals: &[&[f64]]) -> StrategyProfile {
        StrategyProfile::new(vals.iter().map(|v| v.to_vec()).collect()).unwrap()
    }

    #[test]
    fn phi_at_uniform_single_player() {
        let g = PolymatrixGame::new(
            vec![3],
            vec![],
            vec![crate::game::SelfLoop { i: PlayerId(0), a_ii: crate::presets::generalized_rps_matrix(3) }],
            vec![1.0],
        )
        .unwrap();
        let u = StrategyProfile::uniform(&g);
        let phi = constant_of_motion(&g, &u, &u).unwrap();
        assert!((phi + 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn phi_fig1_value() {
        // 1.8 * (1/3)(ln 0.5 + 2 ln 0.25), evaluated once by hand
        let g = rps();
        let x = profile(&[&[0.5, 0.25, 0.25], &[0.5, 0.25, 0.25]]);
        let x_star = StrategyProfile::uniform(&g);
        let phi = constant_of_motion(&g, &x_star, &x).unwrap();
        assert!((phi - (-2.0794415416798357)).abs() < 1e-12, "phi = {phi}");
    }

    #[test]
    fn phi_rejects_boundary() {
        let g = rps();
        let x = profile(&[&[1.0, 0.0, 0.0], &[0.5, 0.25, 0.25]]);
        let x_star = StrategyProfile::uniform(&g);
        assert!(matches!(constant_of_motion(&g, &x_star, &x), Err(AnalysisError::Boundary { .. })));
    }

    #[test]
    fn kl_zero_at_reference() {
        let g = rps();
        let x = profile(&[&[0.5, 0.2, 0.3], &[0.25, 0.5, 0.25]]);
        let kl = weighted_kl(&g, &x, &x).unwrap();
        assert!(kl.total.abs() < 1e-15);
        assert!(kl.per_player.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn kl_phi_entropy_identity() {
        // Psi + Phi + sum_i eta_i H(x*_i) = 0
        let g = rps();
        let x_star = profile(&[&[0.2, 0.5, 0.3], &[0.4, 0.4, 0.2]]);
        let x = profile(&[&[0.5, 0.25, 0.25], &[0.1, 0.6, 0.3]]);
        let phi = constant_of_motion(&g, &x_star, &x).unwrap();
        let kl = weighted_kl(&g, &x_star, &x).unwrap();
        let mut entropy_term = 0.0;
        for p in 0..2 {
            let h: f64 = -x_star.player(PlayerId(p)).iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>();
            entropy_term += g.eta()[p] * h;
        }
        assert!((kl.total + phi + entropy_term).abs() < 1e-12);
    }

    #[test]
    fn time_average_of_constant_trajectory() {
        let g = rps();
        let x0 = StrategyProfile::uniform(&g);
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.1, horizon: 10.0, record_every: 10 };
        let traj = integrate(&g, &x0, &cfg).unwrap();
        let avg = time_average(&traj).unwrap();
        for k in 0..avg.len() {
            assert!(x0.sup_distance(&avg.profile(k)) < 1e-10);
        }
    }

    #[test]
    fn time_average_utility_constant_at_nash() {
        let g = rps();
        let x0 = StrategyProfile::uniform(&g);
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.1, horizon: 10.0, record_every: 10 };
        let traj = integrate(&g, &x0, &cfg).unwrap();
        let series = time_average_utility(&g, &traj).unwrap();
        // Nash utilities of the reduced game are (mu/3, -1/3)
        let expect = [0.8 / 3.0, -1.0 / 3.0];
        for p in 0..2 {
            for v in &series.per_player[p] {
                assert!((v - expect[p]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn regret_zero_on_constant_nash_trajectory() {
        let g = rps();
        let x0 = StrategyProfile::uniform(&g);
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.1, horizon: 10.0, record_every: 1 };
        let traj = integrate(&g, &x0, &cfg).unwrap();
        for p in 0..2 {
            for (_, r) in regret(&g, &traj, PlayerId(p)).unwrap() {
                assert!(r.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn recurrence_constant_trajectory_returns_immediately() {
        let g = rps();
        let x0 = StrategyProfile::uniform(&g);
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.1, horizon: 20.0, record_every: 1 };
        let traj = integrate(&g, &x0, &cfg).unwrap();
        let stats = recurrence_stats(&traj, 0.01, 10.0).unwrap();
        // first sample past the transient
        assert!((stats.first_return_time.unwrap() - 10.1).abs() < 1e-9);
        assert!(stats.min_distance_after_transient < 1e-10);
    }

    #[test]
    fn recurrence_negative_control_never_returns() {
        // a monotone drift toward a vertex: valid simplex samples, no return
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let mut data = Vec::new();
        for k in 0..200 {
            let f = 0.4 * (1.0 - (-0.05 * k as f64).exp()); // grows from 0 toward 0.4
            data.extend_from_slice(&[0.5 + f, 0.5 - f]);
        }
        let traj = Trajectory::from_samples(vec![2], times, data, 0.1, "synthetic".into()).unwrap();
        let stats = recurrence_stats(&traj, 0.05, 1.0).unwrap();
        assert!(stats.first_return_time.is_none());
        assert!(stats.min_distance_after_transient > 0.05);
    }

    #[test]
    fn recurrence_rejects_bad_parameters() {
        let g = rps();
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.1, horizon: 5.0, record_every: 1 };
        let traj = integrate(&g, &StrategyProfile::uniform(&g), &cfg).unwrap();
        assert!(matches!(recurrence_stats(&traj, 0.0, 1.0), Err(AnalysisError::BadEpsilon(_))));
        assert!(matches!(recurrence_stats(&traj, 0.1, 10.0), Err(AnalysisError::HorizonTooShort { .. })));
    }

    #[test]
    fn section_of_one_sided_trajectory_is_empty() {
        let g = rps();
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.1, horizon: 5.0, record_every: 1 };
        let traj = integrate(&g, &StrategyProfile::uniform(&g), &cfg).unwrap();
        // plane x_0_0 = 0.9 is never reached from the uniform fixed point
        let mut normal = vec![0.0; 6];
        normal[0] = 1.0;
        let crossings = poincare_section(&traj, &normal, 0.9).unwrap();
        assert!(crossings.is_empty());
    }

    #[test]
    fn section_interpolates_straight_segment() {
        let traj = Trajectory::from_samples(
            vec![2],
            vec![0.0, 1.0],
            vec![0.3, 0.7, 0.7, 0.3],
            1.0,
            "synthetic".into(),
        )
        .unwrap();
        // functional x_0 - x_1 goes from -0.4 to +0.4; crossing at midpoint
        let crossings = poincare_section(&traj, &[1.0, -1.0], 0.0).unwrap();
        assert_eq!(crossings.len(), 1);
        let c = &crossings[0];
        assert!((c.t - 0.5).abs() < 1e-12);
        assert_eq!(c.direction, 1);
        assert!((c.state.player(PlayerId(0))[0] - 0.5).abs() < 1e-12);
        let v = dot(&c.state.flatten(), &[1.0, -1.0]);
        assert!(v.abs() <= 1e-9);
    }

    #[test]
    fn section_rejects_zero_normal() {
        let traj = Trajectory::from_samples(vec![2], vec![0.0, 1.0], vec![0.5, 0.5, 0.5, 0.5], 1.0, "s".into())
            .unwrap();
        assert!(matches!(poincare_section(&traj, &[0.0, 0.0], 0.0), Err(AnalysisError::BadNormal { .. })));
    }
}
