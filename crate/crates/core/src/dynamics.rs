//! Replicator dynamics and its log-ratio transform.
//!
//! The vector field is `xdot_{ia} = x_{ia} (u_{ia}(x) - u_i(x))` per player
//! and action. The transform `z_{ia} = ln(x_{ia}/x_{i1})` turns it into the
//! field `F_{ia}(z) = sum_j sum_b (A^{ij}_{ab} - A^{ij}_{1b}) softmax(z_j)_b`,
//! whose trace Jacobian vanishes for rescaled zero-sum games; a central
//! finite-difference probe of that trace is provided. Both coordinate systems
//! get a classical fixed-step fourth-order integrator.

use crate::game::{dot, GameError, PlayerId, PolymatrixGame, StrategyProfile};
use thiserror::Error;

/// Coordinates below this are treated as having left the simplex interior
/// during strategy-space integration.
pub const BOUNDARY_LIMIT: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid game: {0}")]
    InvalidGame(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("state is on the simplex boundary: x[{player}][{action}] = {value}")]
    Boundary { player: usize, action: usize, value: f64 },
    #[error("trajectory left the simplex interior at t = {time}: x[{player}][{action}] = {value:e}")]
    BoundaryEscape { time: f64, player: usize, action: usize, value: f64 },
    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },
    #[error("z state for player {player} must anchor its first coordinate at zero")]
    ZAnchor { player: usize },
    #[error("non-finite z entry for player {player}")]
    ZNonFinite { player: usize },
    #[error("bad integrator config: {0}")]
    Config(String),
    #[error("trajectory times must strictly increase from zero")]
    BadTimes,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Log-ratio coordinates, stored full length with the first coordinate of
/// each player pinned at exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ZState {
    components: Vec<Vec<f64>>,
}

impl ZState {
    pub fn new(components: Vec<Vec<f64>>) -> Result<Self, DynamicsError> {
        for (p, z) in components.iter().enumerate() {
            if z.is_empty() || z[0] != 0.0 {
                return Err(DynamicsError::ZAnchor { player: p });
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(DynamicsError::ZNonFinite { player: p });
            }
        }
        Ok(ZState { components })
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn player(&self, i: PlayerId) -> &[f64] {
        &self.components[i.0]
    }

    pub fn layout(&self) -> Vec<usize> {
        self.components.iter().map(|z| z.len()).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.components.iter().flatten().copied().collect()
    }

    pub fn from_flat(layout: &[usize], flat: &[f64]) -> Result<Self, DynamicsError> {
        let total: usize = layout.iter().sum();
        if flat.len() != total {
            return Err(DynamicsError::Shape(format!("expected {total} z entries, got {}", flat.len())));
        }
        let mut components = Vec::with_capacity(layout.len());
        let mut o = 0;
        for &n in layout {
            components.push(flat[o..o + n].to_vec());
            o += n;
        }
        ZState::new(components)
    }
}

/// Integration scheme: fourth-order Runge-Kutta in strategy space with a
/// per-step renormalization, or the same scheme on the transformed field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rk4X,
    Rk4Z,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Rk4X => "rk4_x",
            Method::Rk4Z => "rk4_z",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IntegratorConfig {
    pub method: Method,
    pub step: f64,
    pub horizon: f64,
    pub record_every: usize,
}

impl IntegratorConfig {
    fn check(&self) -> Result<usize, DynamicsError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(DynamicsError::Config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon >= self.step && self.horizon.is_finite()) {
            return Err(DynamicsError::Config(format!(
                "horizon {} must be at least one step {}",
                self.horizon, self.step
            )));
        }
        if self.record_every == 0 {
            return Err(DynamicsError::Config("record_every must be at least 1".into()));
        }
        Ok((self.horizon / self.step).round() as usize)
    }
}

/// A recorded orbit: strictly increasing sample times from zero and one
/// flattened simplex state per time. Immutable once produced.
#[derive(Clone, Debug)]
pub struct Trajectory {
    layout: Vec<usize>,
    times: Vec<f64>,
    data: Vec<f64>,
    step: f64,
    method: String,
}

impl Trajectory {
    pub fn from_samples(
        layout: Vec<usize>,
        times: Vec<f64>,
        data: Vec<f64>,
        step: f64,
        method: String,
    ) -> Result<Self, DynamicsError> {
        let dim: usize = layout.iter().sum();
        if times.is_empty() || data.len() != times.len() * dim {
            return Err(DynamicsError::Shape(format!(
                "{} samples of dimension {dim} need {} values, got {}",
                times.len(),
                times.len() * dim,
                data.len()
            )));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DynamicsError::BadTimes);
        }
        let traj = Trajectory { layout, times, data, step, method };
        for k in 0..traj.len() {
            StrategyProfile::from_flat(&traj.layout, traj.sample(k))?;
        }
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.layout.iter().sum()
    }

    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    /// Flattened state at sample `k` (player-major, action-minor).
    pub fn sample(&self, k: usize) -> &[f64] {
        let d = self.dimension();
        &self.data[k * d..(k + 1) * d]
    }

    pub fn profile(&self, k: usize) -> StrategyProfile {
        StrategyProfile::from_flat(&self.layout, self.sample(k))
            .expect("trajectory samples satisfy profile invariants by construction")
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    /// Smallest coordinate over the whole trajectory.
    pub fn min_coordinate(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The replicator vector field at `x`. Each player's component sums to zero:
/// the field is tangent to the simplex.
pub fn replicator_field(game: &PolymatrixGame, x: &StrategyProfile) -> Result<Vec<Vec<f64>>, DynamicsError> {
    game.check_profile(x)?;
    let flat = x.flatten();
    let mut out = vec![0.0; game.dimension()];
    replicator_field_flat(game, &flat, &mut out, &mut vec![0.0; game.dimension()]);
    let offsets = game.offsets();
    Ok((0..game.num_players()).map(|p| out[offsets[p]..offsets[p + 1]].to_vec()).collect())
}

fn replicator_field_flat(game: &PolymatrixGame, x: &[f64], out: &mut [f64], autil: &mut [f64]) {
    game.accumulate_action_utilities(x, autil);
    let offsets = game.offsets();
    for p in 0..game.num_players() {
        let (o, n) = (offsets[p], offsets[p + 1] - offsets[p]);
        let u = dot(&x[o..o + n], &autil[o..o + n]);
        for a in 0..n {
            out[o + a] = x[o + a] * (autil[o + a] - u);
        }
    }
}

/// `z_{ia} = ln(x_{ia} / x_{i1})`, defined on the simplex interior only.
pub fn to_z(x: &StrategyProfile) -> Result<ZState, DynamicsError> {
    let mut components = Vec::with_capacity(x.num_players());
    for (p, s) in x.players().iter().enumerate() {
        if let Some((a, &v)) = s.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(DynamicsError::Boundary { player: p, action: a, value: v });
        }
        let anchor = s[0].ln();
        let mut z: Vec<f64> = s.iter().map(|v| v.ln() - anchor).collect();
        z[0] = 0.0;
        components.push(z);
    }
    ZState::new(components)
}

/// Per-player softmax of `z`; the inverse of [`to_z`]. Guarded against
/// overflow by a max shift and explicitly renormalized, so the result
/// satisfies the simplex invariants for any finite input.
pub fn from_z(z: &ZState) -> StrategyProfile {
    let strategies = z.components().iter().map(|zi| softmax(zi)).collect();
    StrategyProfile::new(strategies).expect("softmax output lies on the simplex")
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = out.iter().sum();
    for v in &mut out {
        *v /= s;
    }
    out
}

/// The transformed field `F(z)`. The anchored coordinate `F_{i1}` is exactly
/// zero, so `z_{i1} = 0` is preserved for all time.
pub fn z_field(game: &PolymatrixGame, z: &ZState) -> Result<ZState, DynamicsError> {
    let layout = z.layout();
    if layout != game.action_counts() {
        return Err(DynamicsError::Shape(format!(
            "z layout {:?} does not match game action counts {:?}",
            layout,
            game.action_counts()
        )));
    }
    let flat = z.flatten();
    let mut out = vec![0.0; game.dimension()];
    let mut scratch = ZScratch::new(game);
    z_field_flat(game, &flat, &mut out, &mut scratch);
    ZState::from_flat(&layout, &out)
}

struct ZScratch {
    softmaxed: Vec<f64>,
    block: Vec<f64>,
}

impl ZScratch {
    fn new(game: &PolymatrixGame) -> Self {
        let max_n = game.action_counts().iter().copied().max().unwrap_or(1);
        ZScratch { softmaxed: vec![0.0; game.dimension()], block: vec![0.0; max_n] }
    }
}

fn z_field_flat(game: &PolymatrixGame, z: &[f64], out: &mut [f64], scratch: &mut ZScratch) {
    let offsets = game.offsets();
    for p in 0..game.num_players() {
        let (o, n) = (offsets[p], offsets[p + 1] - offsets[p]);
        let sm = softmax(&z[o..o + n]);
        scratch.softmaxed[o..o + n].copy_from_slice(&sm);
    }
    out.fill(0.0);
    // each payoff block contributes (A x_j) - (A x_j)_1 to its row player
    let add = |oi: usize, ni: usize, m: &crate::matrix::Matrix, oj: usize, nj: usize, scratch: &mut ZScratch, out: &mut [f64]| {
        let block = &mut scratch.block[..ni];
        block.fill(0.0);
        m.matvec_acc(&scratch.softmaxed[oj..oj + nj], block);
        let first = block[0];
        for a in 0..ni {
            out[oi + a] += block[a] - first;
        }
    };
    for e in game.edges() {
        let (oi, ni) = (offsets[e.i.0], game.actions(e.i));
        let (oj, nj) = (offsets[e.j.0], game.actions(e.j));
        add(oi, ni, &e.a_ij, oj, nj, scratch, out);
        add(oj, nj, &e.a_ji, oi, ni, scratch, out);
    }
    for l in game.self_loops() {
        let (oi, ni) = (offsets[l.i.0], game.actions(l.i));
        add(oi, ni, &l.a_ii, oi, ni, scratch, out);
    }
    // the anchored coordinates are identically zero; pin them against roundoff
    for p in 0..game.num_players() {
        out[offsets[p]] = 0.0;
    }
}

/// Integrates the replicator flow from a strictly interior initial profile.
///
/// `rk4_x` steps the strategy-space field and renormalizes each player's
/// block to unit sum after every step; the field is tangent to the simplex,
/// so the correction only removes roundoff. `rk4_z` steps the transformed
/// field and maps recorded samples back through the softmax. Samples are
/// recorded every `record_every` steps, always including t = 0 and the final
/// time.
pub fn integrate(
    game: &PolymatrixGame,
    x0: &StrategyProfile,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    let violations = game.validate();
    if !violations.is_empty() {
        let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(DynamicsError::InvalidGame(msg));
    }
    game.check_profile(x0)?;
    for (p, s) in x0.players().iter().enumerate() {
        if let Some((a, &v)) = s.iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(DynamicsError::Boundary { player: p, action: a, value: v });
        }
    }
    let n_steps = cfg.check()?;

    match cfg.method {
        Method::Rk4X => {
            let mut autil = vec![0.0; game.dimension()];
            rk4_on_simplices(
                game.action_counts(),
                &x0.flatten(),
                cfg.step,
                n_steps,
                cfg.record_every,
                Method::Rk4X.tag(),
                |x, out| replicator_field_flat(game, x, out, &mut autil),
            )
        }
        Method::Rk4Z => integrate_z(game, x0, cfg.step, n_steps, cfg.record_every),
    }
}

/// Shared fixed-step RK4 driver for fields tangent to a product of
/// simplices. Renormalizes each player's block after every step and rejects
/// states that leave the interior or stop being finite.
pub(crate) fn rk4_on_simplices<F>(
    layout: &[usize],
    x0: &[f64],
    step: f64,
    n_steps: usize,
    record_every: usize,
    method_tag: &str,
    mut field: F,
) -> Result<Trajectory, DynamicsError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let dim = x0.len();
    let offsets: Vec<usize> = layout
        .iter()
        .scan(0usize, |acc, &n| {
            let o = *acc;
            *acc += n;
            Some(o)
        })
        .collect();

    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];

    let mut times = Vec::new();
    let mut data = Vec::new();
    let record = |k: usize, x: &[f64], times: &mut Vec<f64>, data: &mut Vec<f64>| {
        times.push(k as f64 * step);
        data.extend_from_slice(x);
    };
    record(0, &x, &mut times, &mut data);

    for k in 1..=n_steps {
        field(&x, &mut k1);
        axpy(&x, step / 2.0, &k1, &mut tmp);
        field(&tmp, &mut k2);
        axpy(&x, step / 2.0, &k2, &mut tmp);
        field(&tmp, &mut k3);
        axpy(&x, step, &k3, &mut tmp);
        field(&tmp, &mut k4);
        for d in 0..dim {
            x[d] += step / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        // sum-division renormalization only; a vanishing coordinate is an
        // error, not a clamp, so conservation diagnostics see real drift
        let t = k as f64 * step;
        for (p, (&o, &n)) in offsets.iter().zip(layout).enumerate() {
            let s: f64 = x[o..o + n].iter().sum();
            if !s.is_finite() {
                return Err(DynamicsError::NonFinite { time: t });
            }
            for a in 0..n {
                x[o + a] /= s;
                let v = x[o + a];
                if !v.is_finite() {
                    return Err(DynamicsError::NonFinite { time: t });
                }
                if v < BOUNDARY_LIMIT {
                    return Err(DynamicsError::BoundaryEscape { time: t, player: p, action: a, value: v });
                }
            }
        }
        if k % record_every == 0 || k == n_steps {
            record(k, &x, &mut times, &mut data);
        }
    }
    Trajectory::from_samples(layout.to_vec(), times, data, step, method_tag.to_string())
}

fn axpy(x: &[f64], a: f64, y: &[f64], out: &mut [f64]) {
    for d in 0..x.len() {
        out[d] = x[d] + a * y[d];
    }
}

fn integrate_z(
    game: &PolymatrixGame,
    x0: &StrategyProfile,
    step: f64,
    n_steps: usize,
    record_every: usize,
) -> Result<Trajectory, DynamicsError> {
    let dim = game.dimension();
    let layout = game.action_counts().to_vec();
    let mut z = to_z(x0)?.flatten();
    let mut scratch = ZScratch::new(game);
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];

    let offsets = game.offsets().to_vec();
    let mut times = Vec::new();
    let mut data = Vec::new();
    let record = |k: usize, z: &[f64], times: &mut Vec<f64>, data: &mut Vec<f64>| {
        times.push(k as f64 * step);
        for p in 0..layout.len() {
            let (o, n) = (offsets[p], layout[p]);
            data.extend_from_slice(&softmax(&z[o..o + n]));
        }
    };
    record(0, &z, &mut times, &mut data);

    for k in 1..=n_steps {
        z_field_flat(game, &z, &mut k1, &mut scratch);
        axpy(&z, step / 2.0, &k1, &mut tmp);
        z_field_flat(game, &tmp, &mut k2, &mut scratch);
        axpy(&z, step / 2.0, &k2, &mut tmp);
        z_field_flat(game, &tmp, &mut k3, &mut scratch);
        axpy(&z, step, &k3, &mut tmp);
        z_field_flat(game, &tmp, &mut k4, &mut scratch);
        for d in 0..dim {
            z[d] += step / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { time: k as f64 * step });
        }
        if k % record_every == 0 || k == n_steps {
            record(k, &z, &mut times, &mut data);
        }
    }
    Trajectory::from_samples(layout, times, data, step, Method::Rk4Z.tag().to_string())
}

/// Central finite-difference estimate of the trace of the transformed
/// field's Jacobian, summed over the non-anchored coordinates. (`F_{i1}` is
/// identically zero, so the anchored diagonal entries are exactly zero and
/// skipped.) Vanishes for rescaled zero-sum games; a non-antisymmetric
/// self-loop makes it visibly nonzero.
pub fn divergence_estimate(game: &PolymatrixGame, z: &ZState, h_fd: f64) -> Result<f64, DynamicsError> {
    if !(h_fd > 0.0 && h_fd <= 1e-3) {
        return Err(DynamicsError::Config(format!("finite-difference step must lie in (0, 1e-3], got {h_fd}")));
    }
    if z.layout() != game.action_counts() {
        return Err(DynamicsError::Shape("z layout does not match game".into()));
    }
    let mut flat = z.flatten();
    let dim = flat.len();
    let mut scratch = ZScratch::new(game);
    let mut fp = vec![0.0; dim];
    let mut fm = vec![0.0; dim];
    let offsets = game.offsets();
    let mut trace = 0.0;
    for p in 0..game.num_players() {
        for a in 1..game.actions(PlayerId(p)) {
            let idx = offsets[p] + a;
            let orig = flat[idx];
            flat[idx] = orig + h_fd;
            z_field_flat(game, &flat, &mut fp, &mut scratch);
            flat[idx] = orig - h_fd;
            z_field_flat(game, &flat, &mut fm, &mut scratch);
            flat[idx] = orig;
            trace += (fp[idx] - fm[idx]) / (2.0 * h_fd);
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{PolymatrixGame, SelfLoop};
    use crate::matrix::Matrix;
    use crate::presets::{build_generalized_rps_reduced, generalized_rps_matrix};

    fn rps_game() -> PolymatrixGame {
        build_generalized_rps_reduced(3, 0.8).unwrap()
    }

    fn fig1_start() -> StrategyProfile {
        StrategyProfile::new(vec![vec![0.5, 0.25, 0.25], vec![0.5, 0.25, 0.25]]).unwrap()
    }

    #[test]
    fn field_vanishes_at_uniform_rps() {
        let g = PolymatrixGame::new(
            vec![3],
            vec![],
            vec![SelfLoop { i: PlayerId(0), a_ii: generalized_rps_matrix(3) }],
            vec![1.0],
        )
        .unwrap();
        let f = replicator_field(&g, &StrategyProfile::uniform(&g)).unwrap();
        for v in &f[0] {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn field_vanishes_at_vertices() {
        let g = rps_game();
        let x = StrategyProfile::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let f = replicator_field(&g, &x).unwrap();
        for player in &f {
            for v in player {
                assert!(v.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn to_z_formula_and_round_trip() {
        let x = StrategyProfile::new(vec![vec![0.5, 0.25, 0.25]]).unwrap();
        let z = to_z(&x).unwrap();
        let half = 0.5f64.ln();
        assert_eq!(z.player(PlayerId(0))[0], 0.0);
        assert!((z.player(PlayerId(0))[1] - half).abs() < 1e-15);
        assert!((z.player(PlayerId(0))[2] - half).abs() < 1e-15);
        let back = from_z(&z);
        assert!(x.sup_distance(&back) < 1e-15);
    }

    #[test]
    fn to_z_rejects_boundary() {
        let x = StrategyProfile::new(vec![vec![1.0, 0.0]]).unwrap();
        assert!(matches!(to_z(&x), Err(DynamicsError::Boundary { .. })));
    }

    #[test]
    fn from_z_handles_extreme_values() {
        let z = ZState::new(vec![vec![0.0, 700.0, -700.0]]).unwrap();
        let x = from_z(&z);
        assert!(x.player(PlayerId(0)).iter().all(|v| v.is_finite()));
        let s: f64 = x.player(PlayerId(0)).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_z_softmax_values() {
        let z = ZState::new(vec![vec![0.0, 2.0f64.ln(), 2.0f64.ln()]]).unwrap();
        let x = from_z(&z);
        let got = x.player(PlayerId(0));
        for (g, e) in got.iter().zip([0.2, 0.4, 0.4]) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn z_field_anchors_are_exactly_zero() {
        let g = rps_game();
        let z = ZState::new(vec![vec![0.0, 0.4, -1.3], vec![0.0, -0.2, 2.0]]).unwrap();
        let f = z_field(&g, &z).unwrap();
        assert_eq!(f.player(PlayerId(0))[0], 0.0);
        assert_eq!(f.player(PlayerId(1))[0], 0.0);
    }

    #[test]
    fn z_field_matches_log_derivative_of_replicator() {
        // chain rule: F_{ia}(to_z(x)) = xdot_{ia}/x_{ia} - xdot_{i1}/x_{i1}
        let g = rps_game();
        let x = StrategyProfile::new(vec![vec![0.5, 0.2, 0.3], vec![0.1, 0.6, 0.3]]).unwrap();
        let f = z_field(&g, &to_z(&x).unwrap()).unwrap();
        let xdot = replicator_field(&g, &x).unwrap();
        for p in 0..2 {
            let xi = x.player(PlayerId(p));
            let fi = f.player(PlayerId(p));
            for a in 0..3 {
                let expect = xdot[p][a] / xi[a] - xdot[p][0] / xi[0];
                assert!((fi[a] - expect).abs() < 1e-10, "player {p} action {a}");
            }
        }
    }

    #[test]
    fn z_field_zero_at_interior_nash() {
        let g = rps_game();
        let z = to_z(&StrategyProfile::uniform(&g)).unwrap();
        let f = z_field(&g, &z).unwrap();
        for p in 0..2 {
            for v in f.player(PlayerId(p)) {
                assert!(v.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn integrate_fixed_point_stays_put() {
        let g = rps_game();
        let x0 = StrategyProfile::uniform(&g);
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.01, horizon: 100.0, record_every: 100 };
        let traj = integrate(&g, &x0, &cfg).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..traj.len() {
            worst = worst.max(x0.sup_distance(&traj.profile(k)));
        }
        assert!(worst < 1e-10, "fixed point drifted by {worst}");
    }

    #[test]
    fn integrate_records_endpoints() {
        let g = rps_game();
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.01, horizon: 1.0, record_every: 7 };
        let traj = integrate(&g, &fig1_start(), &cfg).unwrap();
        assert_eq!(traj.time(0), 0.0);
        assert!((traj.times().last().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_rejects_boundary_start() {
        let g = rps_game();
        let x0 = StrategyProfile::new(vec![vec![1.0, 0.0, 0.0], vec![0.5, 0.25, 0.25]]).unwrap();
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.01, horizon: 1.0, record_every: 1 };
        assert!(matches!(integrate(&g, &x0, &cfg), Err(DynamicsError::Boundary { .. })));
    }

    #[test]
    fn integrate_stays_interior_over_long_horizon() {
        let g = rps_game();
        let cfg = IntegratorConfig { method: Method::Rk4X, step: 0.01, horizon: 1000.0, record_every: 10 };
        let traj = integrate(&g, &fig1_start(), &cfg).unwrap();
        assert!(traj.min_coordinate() > 0.01, "min coordinate {}", traj.min_coordinate());
    }

    #[test]
    fn methods_agree_on_short_horizon() {
        let g = rps_game();
        let x0 = fig1_start();
        let base = IntegratorConfig { method: Method::Rk4X, step: 0.01, horizon: 100.0, record_every: 10 };
        let tx = integrate(&g, &x0, &base).unwrap();
        let tz = integrate(&g, &x0, &IntegratorConfig { method: Method::Rk4Z, ..base }).unwrap();
        assert_eq!(tx.len(), tz.len());
        let mut worst: f64 = 0.0;
        for k in 0..tx.len() {
            for (a, b) in tx.sample(k).iter().zip(tz.sample(k)) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-6, "methods differ by {worst}");
    }

    #[test]
    fn step_halving_shows_fourth_order() {
        let g = rps_game();
        let x0 = fig1_start();
        let run = |h: f64, every: usize| {
            integrate(&g, &x0, &IntegratorConfig { method: Method::Rk4X, step: h, horizon: 50.0, record_every: every })
                .unwrap()
        };
        let t1 = run(0.02, 5);
        let t2 = run(0.01, 10);
        let t3 = run(0.005, 20);
        let sup = |a: &Trajectory, b: &Trajectory| {
            let mut worst: f64 = 0.0;
            for k in 0..a.len() {
                for (x, y) in a.sample(k).iter().zip(b.sample(k)) {
                    worst = worst.max((x - y).abs());
                }
            }
            worst
        };
        let d1 = sup(&t1, &t2);
        let d2 = sup(&t2, &t3);
        let ratio = d1 / d2;
        assert!((8.0..40.0).contains(&ratio), "halving ratio {ratio}, d1 {d1:.3e}, d2 {d2:.3e}");
    }

    #[test]
    fn divergence_vanishes_for_rescaled_zero_sum() {
        let g = rps_game();
        let z = ZState::new(vec![vec![0.0, 1.3, -0.7], vec![0.0, -1.9, 0.4]]).unwrap();
        let est = divergence_estimate(&g, &z, 1e-5).unwrap();
        assert!(est.abs() < 1e-6, "divergence {est}");
    }

    #[test]
    fn divergence_detects_symmetric_self_loop() {
        // one player, two actions, symmetric loop [[0,1],[1,0]]; the analytic
        // trace of the transformed Jacobian is -2 x1 x2
        let g = PolymatrixGame::new(
            vec![2],
            vec![],
            vec![SelfLoop {
                i: PlayerId(0),
                a_ii: Matrix::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            }],
            vec![1.0],
        )
        .unwrap();
        let z = ZState::new(vec![vec![0.0, 0.3]]).unwrap();
        let x = softmax(&[0.0, 0.3]);
        let analytic = -2.0 * x[0] * x[1];
        let est = divergence_estimate(&g, &z, 1e-5).unwrap();
        assert!(est.abs() > 1e-2);
        assert!((est - analytic).abs() < 1e-6, "estimate {est} vs analytic {analytic}");
    }

    #[test]
    fn divergence_rejects_bad_step() {
        let g = rps_game();
        let z = to_z(&StrategyProfile::uniform(&g)).unwrap();
        assert!(divergence_estimate(&g, &z, 0.0).is_err());
        assert!(divergence_estimate(&g, &z, 1e-2).is_err());
    }
}
