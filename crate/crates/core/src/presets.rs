//! Preset game constructors: the reduced generalized-RPS game, chains of
//! alternating population/environment nodes, and butterfly clusters.

use crate::game::{EdgeGame, GameError, PlayerId, PolymatrixGame, SelfLoop};
use crate::matrix::Matrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("generalized RPS needs at least 3 actions, got {0}")]
    TooFewActions(usize),
    #[error("coupling weight mu must be positive and finite, got {0}")]
    BadMu(f64),
    #[error("chain needs at least one coupling weight")]
    EmptyChain,
    #[error("butterfly needs at least one cluster")]
    NoClusters,
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("preset failed its own rescaled-zero-sum check (residual {0:.3e})")]
    NotRescaledZeroSum(f64),
}

/// The n x n circulant generalized rock-paper-scissors matrix: each action
/// beats its predecessor (+1) and loses to its successor (-1), cyclically.
pub fn generalized_rps_matrix(n: usize) -> Matrix {
    assert!(n >= 3, "generalized RPS matrix needs n >= 3");
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        p.set(i, (i + 1) % n, -1.0);
        p.set(i, (i + n - 1) % n, 1.0);
    }
    p
}

fn check_mu(mu: f64) -> Result<(), PresetError> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(PresetError::BadMu(mu))
    }
}

fn verified(game: PolymatrixGame) -> Result<PolymatrixGame, PresetError> {
    let check = game.verify_rescaled_zero_sum()?;
    if check.rescaled_zero_sum {
        Ok(game)
    } else {
        Err(PresetError::NotRescaledZeroSum(check.residual))
    }
}

/// Two-player game equivalent to the time-evolving generalized RPS system:
/// population player 0 with self-loop `P` and payoff `mu*I` against the
/// environment, environment player 1 with payoff `-I`, eta = (1, mu).
pub fn build_generalized_rps_reduced(n: usize, mu: f64) -> Result<PolymatrixGame, PresetError> {
    if n < 3 {
        return Err(PresetError::TooFewActions(n));
    }
    check_mu(mu)?;
    let game = PolymatrixGame::new(
        vec![n, n],
        vec![EdgeGame {
            i: PlayerId(0),
            j: PlayerId(1),
            a_ij: Matrix::scaled_identity(n, mu),
            a_ji: Matrix::scaled_identity(n, -1.0),
        }],
        vec![SelfLoop { i: PlayerId(0), a_ii: generalized_rps_matrix(n) }],
        vec![1.0, mu],
    )?;
    verified(game)
}

/// Line graph of `mus.len() + 1` players alternating population nodes (RPS
/// self-loop) and environment nodes (no self-loop), starting and ending with
/// populations when the length is odd. The edge between nodes m and m+1
/// carries `(mu_m * I, -I)`: the left node is paid `mu_m * I`, the right node
/// `-I`. The weights eta are the cumulative products `eta_1 = 1`,
/// `eta_{m+1} = eta_m * mu_m`, which make the game rescaled zero-sum; the
/// construction verifies this numerically rather than trusting it.
pub fn build_chain(mus: &[f64], n: usize) -> Result<PolymatrixGame, PresetError> {
    if mus.is_empty() {
        return Err(PresetError::EmptyChain);
    }
    if n < 3 {
        return Err(PresetError::TooFewActions(n));
    }
    for &mu in mus {
        check_mu(mu)?;
    }
    let players = mus.len() + 1;
    let mut edges = Vec::with_capacity(mus.len());
    let mut eta = vec![1.0];
    for (m, &mu) in mus.iter().enumerate() {
        edges.push(EdgeGame {
            i: PlayerId(m),
            j: PlayerId(m + 1),
            a_ij: Matrix::scaled_identity(n, mu),
            a_ji: Matrix::scaled_identity(n, -1.0),
        });
        eta.push(eta[m] * mu);
    }
    // Population nodes sit at even positions along the chain.
    let self_loops = (0..players)
        .step_by(2)
        .map(|p| SelfLoop { i: PlayerId(p), a_ii: generalized_rps_matrix(n) })
        .collect();
    let game = PolymatrixGame::new(vec![n; players], edges, self_loops, eta)?;
    verified(game)
}

/// Clusters of RPS population nodes attached to shared environment hubs by
/// `(I, -I)` edge pairs; pairwise zero-sum, so every eta is 1.
///
/// One cluster is the 9-player butterfly: two hubs, three exclusive
/// populations each, and one bridge population connected to both. With
/// `n_clusters > 1` the clusters close into a ring: each cluster contributes
/// one hub, two exclusive populations, and a bridge population shared with
/// the next cluster's hub, so every hub still sees four populations
/// (4 * n_clusters players in total).
pub fn build_butterfly(n_clusters: usize) -> Result<PolymatrixGame, PresetError> {
    if n_clusters == 0 {
        return Err(PresetError::NoClusters);
    }
    let n = 3;
    // (population, environment) connections; populations are indexed before
    // environments so reduced-system and butterfly layouts agree.
    let (n_pop, n_env, links) = if n_clusters == 1 {
        let links = vec![(0, 0), (1, 0), (2, 0), (3, 0), (3, 1), (4, 1), (5, 1), (6, 1)];
        (7, 2, links)
    } else {
        let c = n_clusters;
        let mut links = Vec::with_capacity(4 * c);
        for k in 0..c {
            let exclusive = (3 * k, 3 * k + 1);
            let bridge = 3 * k + 2;
            links.push((exclusive.0, k));
            links.push((exclusive.1, k));
            links.push((bridge, k));
            links.push((bridge, (k + 1) % c));
        }
        (3 * c, c, links)
    };
    let players = n_pop + n_env;
    let edges = links
        .into_iter()
        .map(|(p, e)| EdgeGame {
            i: PlayerId(p),
            j: PlayerId(n_pop + e),
            a_ij: Matrix::identity(n),
            a_ji: Matrix::scaled_identity(n, -1.0),
        })
        .collect();
    let self_loops = (0..n_pop)
        .map(|p| SelfLoop { i: PlayerId(p), a_ii: generalized_rps_matrix(n) })
        .collect();
    let game = PolymatrixGame::new(vec![n; players], edges, self_loops, vec![1.0; players])?;
    verified(game)
}
