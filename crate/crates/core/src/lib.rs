//! Balanced two-colour Pólya urns.
//!
//! An urn holds `X_n` red and `Y_n` white balls. At each step a ball is drawn
//! uniformly, returned, and `a` red plus `b` white balls are added if it was
//! red, `c` red plus `d` white otherwise, with `a + b = c + d = S`.
//!
//! * [`model`]: validated models, regimes, exact single-path states.
//! * [`sim`] and [`rng`]: reproducible integer simulation.
//! * [`formulas`]: closed forms for `sigma_n`, `w_n`, `E[U_n]`, limit
//!   covariances and the moments of the large-urn limit `W`.
//! * [`martingale`]: the martingales and their quadratic variation.
//! * [`engine`]: parallel replication with mergeable statistics.
//! * [`oracle`]: exact enumeration of all draw sequences for small `n`.
//! * [`verify`]: statistical checks of the limit theorems.

pub mod engine;
pub mod formulas;
pub mod gamma;
pub mod martingale;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod verify;

pub use model::{ModelError, Regime, Trajectory, UrnModel, UrnState};
pub use rng::RandomStream;
