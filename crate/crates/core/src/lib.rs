//! Replicator dynamics on rescaled zero-sum polymatrix games.
//!
//! The crate models games on graphs whose edges carry bimatrix games and
//! whose self-loops are antisymmetric, reduces coupled population/environment
//! flows to such games, integrates replicator dynamics in strategy and
//! log-ratio coordinates, computes Nash equilibria by linear programming, and
//! turns trajectories into conservation, time-average, regret, recurrence,
//! and section diagnostics.
//!
//! Everything operates on immutable values; all operations are pure
//! functions of their inputs and safe to run concurrently over shared games
//! and trajectories.

pub mod analysis;
pub mod dynamics;
pub mod equilibrium;
pub mod game;
pub mod io;
pub mod matrix;
pub mod presets;
pub mod reduction;

pub use game::{PlayerId, PolymatrixGame, StrategyProfile};
