//! Polymatrix game data model: the game graph, payoff evaluation, structural
//! validation, and the rescaled-zero-sum verification check.
//!
//! A game lives on an undirected graph. Each edge carries a bimatrix game (one
//! payoff matrix per orientation), each self-loop an antisymmetric matrix a
//! player plays against itself, and each player a positive rescaling weight
//! `eta`. The game is rescaled zero-sum when the eta-weighted utilities sum to
//! zero at every strategy profile.

use crate::matrix::Matrix;
use thiserror::Error;

/// Absolute tolerance for the self-loop antisymmetry check. Matrices are
/// user-supplied constants, not computed quantities, so this is tight.
pub const ANTISYMMETRY_TOL: f64 = 1e-12;
/// Tolerance on per-player probability sums in a [`StrategyProfile`].
pub const SIMPLEX_SUM_TOL: f64 = 1e-10;
/// Residual threshold below which [`PolymatrixGame::verify_rescaled_zero_sum`]
/// reports the game as rescaled zero-sum.
pub const RESCALED_ZERO_SUM_TOL: f64 = 1e-9;

/// Index of a node in the game graph.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlayerId(pub usize);

impl std::fmt::Display for PlayerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "player {}", self.0)
    }
}

/// Bimatrix game on the edge between two distinct players. `a_ij` pays player
/// `i` (shape `n_i x n_j`), `a_ji` pays player `j` (shape `n_j x n_i`).
#[derive(Clone, Debug)]
pub struct EdgeGame {
    pub i: PlayerId,
    pub j: PlayerId,
    pub a_ij: Matrix,
    pub a_ji: Matrix,
}

/// A game a player plays against itself; required antisymmetric for the
/// rescaled-zero-sum class.
#[derive(Clone, Debug)]
pub struct SelfLoop {
    pub i: PlayerId,
    pub a_ii: Matrix,
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("{0} is out of range for a {1}-player game")]
    PlayerOutOfRange(PlayerId, usize),
    #[error("edge ({0}, {1}) declared more than once")]
    DuplicateEdge(PlayerId, PlayerId),
    #[error("self-loop on {0} declared more than once")]
    DuplicateSelfLoop(PlayerId),
    #[error("edge ({i}, {j}) endpoints coincide; self-play games go in self_loops")]
    EdgeIsLoop { i: PlayerId, j: PlayerId },
    #[error("edge ({i}, {j}): matrix {which} is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    EdgeShape { i: PlayerId, j: PlayerId, which: &'static str, rows: usize, cols: usize, got_rows: usize, got_cols: usize },
    #[error("self-loop on {i}: matrix is {got_rows}x{got_cols}, expected {n}x{n}")]
    LoopShape { i: PlayerId, n: usize, got_rows: usize, got_cols: usize },
    #[error("eta has {got} entries, expected one per player ({expected})")]
    EtaLength { expected: usize, got: usize },
    #[error("player {player} declares {count} actions; every player needs at least one")]
    EmptyActionSet { player: usize, count: usize },
    #[error("profile has {got} players, game has {expected}")]
    ProfilePlayers { expected: usize, got: usize },
    #[error("profile for {player} has {got} entries, expected {expected}")]
    ProfileShape { player: PlayerId, expected: usize, got: usize },
    #[error("strategy for {player} is not on the simplex: {reason}")]
    NotOnSimplex { player: PlayerId, reason: String },
    #[error("game fails validation: {0}")]
    InvalidGame(String),
}

/// One failed invariant, reported as data by [`PolymatrixGame::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Self-loop matrix is not antisymmetric within [`ANTISYMMETRY_TOL`].
    SelfLoopNotAntisymmetric { player: PlayerId, residual: f64 },
    /// An edge or self-loop matrix contains a NaN or infinity.
    NonFiniteMatrix { i: PlayerId, j: PlayerId },
    /// eta entry is not strictly positive and finite.
    NonPositiveEta { player: PlayerId, value: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::SelfLoopNotAntisymmetric { player, residual } => {
                write!(f, "self-loop on {player} is not antisymmetric (residual {residual:.3e})")
            }
            Violation::NonFiniteMatrix { i, j } if i == j => {
                write!(f, "self-loop on {i} has a non-finite entry")
            }
            Violation::NonFiniteMatrix { i, j } => {
                write!(f, "edge ({i}, {j}) has a non-finite entry")
            }
            Violation::NonPositiveEta { player, value } => {
                write!(f, "eta for {player} must be positive and finite, got {value}")
            }
        }
    }
}

/// Outcome of the rescaled-zero-sum verification scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroSumCheck {
    /// True when `residual <= RESCALED_ZERO_SUM_TOL`.
    pub rescaled_zero_sum: bool,
    /// Largest absolute deviation found by the scan.
    pub residual: f64,
}

/// An N-player game on a graph with bimatrix edge games, antisymmetric
/// self-loops, and per-player rescaling weights.
///
/// Games are immutable after construction and safe to share across threads;
/// every operation is a pure function of its inputs. Edges are stored once per
/// unordered pair with both oriented matrices; absent edges contribute zero
/// payoff.
#[derive(Clone, Debug)]
pub struct PolymatrixGame {
    action_counts: Vec<usize>,
    edges: Vec<EdgeGame>,
    self_loops: Vec<SelfLoop>,
    eta: Vec<f64>,
    offsets: Vec<usize>,
}

impl PolymatrixGame {
    /// Builds a game, rejecting structural defects (bad indices, shape
    /// mismatches, duplicate edges). Value-level defects such as a symmetric
    /// self-loop are *not* rejected here; [`Self::validate`] reports them.
    pub fn new(
        action_counts: Vec<usize>,
        edges: Vec<EdgeGame>,
        self_loops: Vec<SelfLoop>,
        eta: Vec<f64>,
    ) -> Result<Self, GameError> {
        let n_players = action_counts.len();
        for (p, &c) in action_counts.iter().enumerate() {
            if c == 0 {
                return Err(GameError::EmptyActionSet { player: p, count: c });
            }
        }
        if eta.len() != n_players {
            return Err(GameError::EtaLength { expected: n_players, got: eta.len() });
        }
        let mut seen_pairs = std::collections::HashSet::new();
        for e in &edges {
            for p in [e.i, e.j] {
                if p.0 >= n_players {
                    return Err(GameError::PlayerOutOfRange(p, n_players));
                }
            }
            if e.i == e.j {
                return Err(GameError::EdgeIsLoop { i: e.i, j: e.j });
            }
            let key = (e.i.0.min(e.j.0), e.i.0.max(e.j.0));
            if !seen_pairs.insert(key) {
                return Err(GameError::DuplicateEdge(e.i, e.j));
            }
            let (ni, nj) = (action_counts[e.i.0], action_counts[e.j.0]);
            if e.a_ij.rows() != ni || e.a_ij.cols() != nj {
                return Err(GameError::EdgeShape {
                    i: e.i, j: e.j, which: "A_ij",
                    rows: ni, cols: nj, got_rows: e.a_ij.rows(), got_cols: e.a_ij.cols(),
                });
            }
            if e.a_ji.rows() != nj || e.a_ji.cols() != ni {
                return Err(GameError::EdgeShape {
                    i: e.i, j: e.j, which: "A_ji",
                    rows: nj, cols: ni, got_rows: e.a_ji.rows(), got_cols: e.a_ji.cols(),
                });
            }
        }
        let mut seen_loops = std::collections::HashSet::new();
        for l in &self_loops {
            if l.i.0 >= n_players {
                return Err(GameError::PlayerOutOfRange(l.i, n_players));
            }
            if !seen_loops.insert(l.i.0) {
                return Err(GameError::DuplicateSelfLoop(l.i));
            }
            let n = action_counts[l.i.0];
            if l.a_ii.rows() != n || l.a_ii.cols() != n {
                return Err(GameError::LoopShape {
                    i: l.i, n, got_rows: l.a_ii.rows(), got_cols: l.a_ii.cols(),
                });
            }
        }
        let mut offsets = Vec::with_capacity(n_players + 1);
        let mut acc = 0;
        for &c in &action_counts {
            offsets.push(acc);
            acc += c;
        }
        offsets.push(acc);
        Ok(PolymatrixGame { action_counts, edges, self_loops, eta, offsets })
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn actions(&self, i: PlayerId) -> usize {
        self.action_counts[i.0]
    }

    pub fn edges(&self) -> &[EdgeGame] {
        &self.edges
    }

    pub fn self_loops(&self) -> &[SelfLoop] {
        &self.self_loops
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// Start index of each player's block in a flattened state vector, plus
    /// the total dimension as a final sentinel.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn dimension(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Checks the value-level invariants and returns every violation found.
    /// An empty list means the game is well-formed. Violations are data, not
    /// failures; constructing a defective game is allowed so that defects can
    /// be probed (e.g. the symmetric-self-loop divergence control).
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (p, &e) in self.eta.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                out.push(Violation::NonPositiveEta { player: PlayerId(p), value: e });
            }
        }
        for e in &self.edges {
            if !e.a_ij.is_finite() || !e.a_ji.is_finite() {
                out.push(Violation::NonFiniteMatrix { i: e.i, j: e.j });
            }
        }
        for l in &self.self_loops {
            if !l.a_ii.is_finite() {
                out.push(Violation::NonFiniteMatrix { i: l.i, j: l.i });
            } else {
                let residual = l.a_ii.antisymmetry_residual();
                if residual > ANTISYMMETRY_TOL {
                    out.push(Violation::SelfLoopNotAntisymmetric { player: l.i, residual });
                }
            }
        }
        out
    }

    fn require_valid(&self) -> Result<(), GameError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            Err(GameError::InvalidGame(msg))
        }
    }

    pub(crate) fn check_profile(&self, x: &StrategyProfile) -> Result<(), GameError> {
        if x.num_players() != self.num_players() {
            return Err(GameError::ProfilePlayers { expected: self.num_players(), got: x.num_players() });
        }
        for p in 0..self.num_players() {
            if x.player(PlayerId(p)).len() != self.action_counts[p] {
                return Err(GameError::ProfileShape {
                    player: PlayerId(p),
                    expected: self.action_counts[p],
                    got: x.player(PlayerId(p)).len(),
                });
            }
        }
        Ok(())
    }

    /// Fills `out` with every player's action utilities at the flattened
    /// profile `x`: block `i` holds `sum_j (A^{ij} x_j) + A^{ii} x_i`.
    pub(crate) fn accumulate_action_utilities(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for e in &self.edges {
            let (oi, ni) = (self.offsets[e.i.0], self.action_counts[e.i.0]);
            let (oj, nj) = (self.offsets[e.j.0], self.action_counts[e.j.0]);
            e.a_ij.matvec_acc(&x[oj..oj + nj], &mut out[oi..oi + ni]);
            e.a_ji.matvec_acc(&x[oi..oi + ni], &mut out[oj..oj + nj]);
        }
        for l in &self.self_loops {
            let (oi, ni) = (self.offsets[l.i.0], self.action_counts[l.i.0]);
            l.a_ii.matvec_acc(&x[oi..oi + ni], &mut out[oi..oi + ni]);
        }
    }

    /// Utility of pure action `alpha` for player `i` against the rest of the
    /// profile, `u_{i,alpha}(x)`, for every `alpha` at once. The self-loop
    /// term is included. Satisfies `dot(x_i, action_utilities) == utility`.
    pub fn action_utilities(&self, x: &StrategyProfile, i: PlayerId) -> Result<Vec<f64>, GameError> {
        self.check_profile(x)?;
        if i.0 >= self.num_players() {
            return Err(GameError::PlayerOutOfRange(i, self.num_players()));
        }
        let flat = x.flatten();
        let mut all = vec![0.0; self.dimension()];
        self.accumulate_action_utilities(&flat, &mut all);
        Ok(all[self.offsets[i.0]..self.offsets[i.0 + 1]].to_vec())
    }

    /// Expected payoff of player `i` at profile `x`: the sum over incident
    /// edges of `x_i^T A^{ij} x_j`, plus the self-loop quadratic form (which
    /// vanishes for antisymmetric self-loops).
    pub fn utility(&self, x: &StrategyProfile, i: PlayerId) -> Result<f64, GameError> {
        let a = self.action_utilities(x, i)?;
        Ok(dot(x.player(i), &a))
    }

    /// eta-weighted sum of utilities at `x`; zero at every profile iff the
    /// game is rescaled zero-sum.
    pub fn rescaled_utility_sum(&self, x: &StrategyProfile) -> Result<f64, GameError> {
        self.check_profile(x)?;
        let flat = x.flatten();
        let mut all = vec![0.0; self.dimension()];
        self.accumulate_action_utilities(&flat, &mut all);
        let mut total = 0.0;
        for p in 0..self.num_players() {
            let (o, n) = (self.offsets[p], self.action_counts[p]);
            total += self.eta[p] * dot(&flat[o..o + n], &all[o..o + n]);
        }
        Ok(total)
    }

    /// Decides whether the eta-weighted utilities sum to zero over the whole
    /// strategy space, in polynomial time.
    ///
    /// For each player `i` and ordered action pair `(alpha, beta)` the scan
    /// maximizes `W(beta, x_-i) - W(alpha, x_-i)` over opponent profiles,
    /// where `W` is the eta-weighted welfare. The difference is linear in
    /// each neighbor's strategy, so the maximum splits across neighbors and
    /// is attained at pure strategies; per neighbor `j` it is the largest
    /// coordinate of a row difference of `M^{ij} = eta_i A^{ij} + eta_j
    /// (A^{ji})^T`. Antisymmetric self-loops contribute identically zero and
    /// are excluded. The scan also checks `W` at the all-first-actions pure
    /// profile, which anchors constant-sum to zero-sum. The reported residual
    /// is the largest absolute deviation found anywhere.
    pub fn verify_rescaled_zero_sum(&self) -> Result<ZeroSumCheck, GameError> {
        self.require_valid()?;

        // Anchor: every player plays action 1. Self-loops have zero diagonal.
        let mut anchor = 0.0;
        for e in &self.edges {
            anchor += self.eta[e.i.0] * e.a_ij.get(0, 0) + self.eta[e.j.0] * e.a_ji.get(0, 0);
        }
        let mut residual = anchor.abs();

        for e in &self.edges {
            // Scan the pair scores from both endpoints of each edge.
            for &(i, j, a_fwd, a_bwd) in &[(e.i, e.j, &e.a_ij, &e.a_ji), (e.j, e.i, &e.a_ji, &e.a_ij)] {
                let ni = self.action_counts[i.0];
                let nj = self.action_counts[j.0];
                // M[alpha][k] = eta_i A^{ij}[alpha][k] + eta_j A^{ji}[k][alpha]
                let mut m = Matrix::zeros(ni, nj);
                for alpha in 0..ni {
                    for k in 0..nj {
                        m.set(alpha, k, self.eta[i.0] * a_fwd.get(alpha, k) + self.eta[j.0] * a_bwd.get(k, alpha));
                    }
                }
                for alpha in 0..ni {
                    for beta in 0..ni {
                        if alpha == beta {
                            continue;
                        }
                        let mut best = f64::NEG_INFINITY;
                        for k in 0..nj {
                            best = best.max(m.get(beta, k) - m.get(alpha, k));
                        }
                        residual = residual.max(best);
                    }
                }
            }
        }
        Ok(ZeroSumCheck { rescaled_zero_sum: residual <= RESCALED_ZERO_SUM_TOL, residual })
    }
}

/// One mixed strategy per player; the state of every dynamic in this crate.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyProfile {
    strategies: Vec<Vec<f64>>,
}

impl StrategyProfile {
    /// Builds a profile, checking each vector lies on the probability simplex
    /// (entries nonnegative, sum within [`SIMPLEX_SUM_TOL`] of one).
    pub fn new(strategies: Vec<Vec<f64>>) -> Result<Self, GameError> {
        for (p, s) in strategies.iter().enumerate() {
            if s.is_empty() {
                return Err(GameError::NotOnSimplex { player: PlayerId(p), reason: "empty vector".into() });
            }
            if let Some(v) = s.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(GameError::NotOnSimplex {
                    player: PlayerId(p),
                    reason: format!("entry {v} is negative or non-finite"),
                });
            }
            let sum: f64 = s.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
                return Err(GameError::NotOnSimplex { player: PlayerId(p), reason: format!("entries sum to {sum}") });
            }
        }
        Ok(StrategyProfile { strategies })
    }

    /// The fully mixed profile for `game`.
    pub fn uniform(game: &PolymatrixGame) -> Self {
        StrategyProfile {
            strategies: game.action_counts().iter().map(|&n| vec![1.0 / n as f64; n]).collect(),
        }
    }

    /// Splits a flattened state by the per-player action counts in `layout`.
    pub fn from_flat(layout: &[usize], flat: &[f64]) -> Result<Self, GameError> {
        let total: usize = layout.iter().sum();
        if flat.len() != total {
            return Err(GameError::ProfilePlayers { expected: total, got: flat.len() });
        }
        let mut strategies = Vec::with_capacity(layout.len());
        let mut o = 0;
        for &n in layout {
            strategies.push(flat[o..o + n].to_vec());
            o += n;
        }
        StrategyProfile::new(strategies)
    }

    pub fn num_players(&self) -> usize {
        self.strategies.len()
    }

    pub fn player(&self, i: PlayerId) -> &[f64] {
        &self.strategies[i.0]
    }

    pub fn players(&self) -> &[Vec<f64>] {
        &self.strategies
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.strategies.iter().flatten().copied().collect()
    }

    pub fn min_coordinate(&self) -> f64 {
        self.strategies.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when every coordinate is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.min_coordinate() > 0.0
    }

    /// Largest coordinate-wise distance to another profile.
    pub fn sup_distance(&self, other: &StrategyProfile) -> f64 {
        let mut d: f64 = 0.0;
        for (a, b) in self.strategies.iter().flatten().zip(other.strategies.iter().flatten()) {
            d = d.max((a - b).abs());
        }
        d
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
