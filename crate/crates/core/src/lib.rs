//! Distributed binary hypothesis testing over random networks with the
//! running-consensus detector.
//!
//! Every sensor keeps a decision variable that it averages with its current
//! neighbours and then updates with its newest log-likelihood-ratio share:
//!
//! ```text
//! x(k+1) = k/(k+1) W(k) x(k) + 1/(k+1) eta(k+1),     x(1) = eta(1)
//! ```
//!
//! and decides `H1` when `x_i(k) > 0`. The crate provides
//!
//! * [`gaussian`]: `Q(t)`, `log Q(t)`, seeded random streams, multivariate
//!   normal sampling and symmetric eigenvalue helpers;
//! * [`observation`]: the Gaussian two-hypothesis model and its derived
//!   statistics (LLR moments, Chernoff information, `S^eta`, `K`);
//! * [`network`]: supergraphs, random averaging matrices (switching fusion
//!   and link-failure Metropolis) and the spectral summary `r`;
//! * [`detectors`]: the running-consensus recursion, its closed form and the
//!   centralized / no-cooperation baselines;
//! * [`theory`]: exact switching-fusion error probability, decay rates,
//!   optimality thresholds and bounds for generic networks;
//! * [`montecarlo`]: parallel, bit-reproducible Monte Carlo error curves and
//!   decay-rate fitting;
//! * [`cli`]: the `graph-gen`, `theory`, `simulate` and `sweep` commands.

pub mod cli;
pub mod detectors;
pub mod error;
pub mod gaussian;
pub mod montecarlo;
pub mod network;
pub mod observation;
pub mod theory;

pub use error::{Error, Result};
pub use gaussian::RngSeed;
